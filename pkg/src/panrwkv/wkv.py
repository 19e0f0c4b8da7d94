"""Bidirectional WKV attention kernels and the sharing/moment cache.

The kernel computes, per channel, a positivity-normalized weighted mean of the
value sequence where off-diagonal weights decay exponentially with token
distance and the diagonal gets a learned self-bonus:

    wkv_t = ( sum_{i != t} exp(-(|t-i|-1) * w / T + k_i) * v_i
                  + exp(u + k_t) * v_t )
            / ( sum_{i != t} exp(-(|t-i|-1) * w / T + k_i)
                  + exp(u + k_t) )

``bi_wkv_reference`` evaluates this directly in O(T^2); ``bi_wkv_linear``
produces the same values in O(T) via forward/backward decay accumulators kept
in log-domain form. Because every weight is positive and the weights
normalize, each output entry is a convex combination of that channel's values
and therefore lies inside their [min, max] hull.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .tensor_ops import as_tensor

# Count of fresh kernel evaluations since the last reset; lets tests and the
# self-check suite assert that the share path really skips recomputation.
_EVAL_COUNT = 0

# Debug fault hook for the self-check fault-injection mode. "wkv-decay-sign"
# flips the decay sign inside the numerator accumulator only, which breaks
# the numerator/denominator weight match and pushes outputs out of the value
# hull. (Flipping the sign in both accumulators would leave the weights
# normalized and the hull intact, so it would not be observable.)
_FAULT: str | None = None


def kernel_eval_count() -> int:
    return _EVAL_COUNT


def reset_kernel_eval_count() -> None:
    global _EVAL_COUNT
    _EVAL_COUNT = 0


def set_debug_fault(kind: str | None) -> None:
    """Install a named computation fault (None clears). Test hook only."""
    global _FAULT
    if kind not in (None, "wkv-decay-sign"):
        raise ValueError(f"unknown fault kind: {kind!r}")
    _FAULT = kind


@dataclass(frozen=True)
class WkvParams:
    """Per-channel decay/bonus parameters for the WKV kernel.

    w: per-channel decay rate, must be non-negative (callers that learn the
       decay store a raw value and pass exp(raw) here).
    u: per-channel self-bonus, unconstrained.
    t_norm: token count dividing the decay exponent.
    """

    w: np.ndarray
    u: np.ndarray
    t_norm: int = 1

    def __post_init__(self):
        w = as_tensor(self.w)
        u = as_tensor(self.u)
        if w.shape != u.shape or w.ndim != 1:
            raise ValueError(f"w {w.shape} and u {u.shape} must be equal 1-D shapes")
        if not np.all(np.isfinite(w)) or not np.all(np.isfinite(u)):
            raise ValueError("WkvParams entries must be finite")
        if np.any(w < 0):
            raise ValueError("decay w must be non-negative elementwise")
        if self.t_norm < 1:
            raise ValueError(f"t_norm must be >= 1, got {self.t_norm}")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "u", u)


@dataclass
class WkvCache:
    """Single-forward cache realizing WKV sharing within a layer group.

    ``wkv`` holds the group's last computed kernel output; ``payload`` is an
    opaque slot for whatever the caller must snapshot alongside it (the
    mixers store the token layout there). ``alpha`` is the momentum used to
    blend across group boundaries, clamped to [0, 1]. The counters record the
    schedule actually executed, for instrumented assertions.
    """

    alpha: float = 0.5
    group_index: int = -1
    wkv: np.ndarray | None = None
    payload: object = None
    fresh_evals: int = 0
    shares: int = 0
    moments: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            warnings.warn(
                f"momentum alpha={self.alpha} outside [0, 1]; clamping",
                stacklevel=2,
            )
            self.alpha = min(max(self.alpha, 0.0), 1.0)

    def store(self, wkv: np.ndarray, payload: object = None, group_index: int = -1) -> None:
        self.wkv = wkv
        self.payload = payload
        self.group_index = group_index
        self.fresh_evals += 1


def _check_kv(k: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    k = as_tensor(k)
    v = as_tensor(v)
    if k.shape != v.shape or k.ndim != 2:
        raise ValueError(f"K {k.shape} and V {v.shape} must be equal (T, C) shapes")
    if k.shape[0] == 0:
        raise ValueError("empty sequence: T must be >= 1")
    return k, v


def bi_wkv_reference(k: np.ndarray, v: np.ndarray, params: WkvParams, block: int = 512) -> np.ndarray:
    """Direct O(T^2) evaluation, processed in row blocks with per-row max
    subtraction so extreme k values cannot overflow."""
    global _EVAL_COUNT
    k, v = _check_kv(k, v)
    t_len, c = k.shape
    if params.w.shape[0] != c:
        raise ValueError(f"params have {params.w.shape[0]} channels, K has {c}")
    lam = params.w / float(params.t_norm)  # (C,)
    idx = np.arange(t_len)
    out = np.empty((t_len, c))
    for start in range(0, t_len, block):
        ts = idx[start : start + block]
        dist = np.abs(ts[:, None] - idx[None, :]).astype(np.float64)  # (b, T)
        expo = -(dist - 1.0)[:, :, None] * lam[None, None, :] + k[None, :, :]
        expo[np.arange(len(ts)), ts, :] = params.u + k[ts]
        m = expo.max(axis=1, keepdims=True)
        wgt = np.exp(expo - m)  # (b, T, C)
        num = np.einsum("btc,tc->bc", wgt, v)
        den = wgt.sum(axis=1)
        out[ts] = num / den
    _EVAL_COUNT += 1
    return out


def _directional_states(k: np.ndarray, v: np.ndarray, lam: np.ndarray, lam_num: np.ndarray):
    """Forward-scan accumulators: for each position t, the log-scaled sums of
    exp(k_i - (t-i-1)*lam) and exp(k_i - (t-i-1)*lam_num) * v_i over i < t.

    Returns (m_den, acc_den, m_num, acc_num_v) each of shape (T, C); the
    represented sums are acc * exp(m). lam_num differs from lam only under
    the decay-sign fault.
    """
    t_len, c = k.shape
    m_den = np.empty((t_len, c))
    acc_den = np.empty((t_len, c))
    m_num = np.empty((t_len, c))
    acc_num = np.empty((t_len, c))
    md = np.full(c, -np.inf)
    ad = np.zeros(c)
    mn = np.full(c, -np.inf)
    an = np.zeros((c,))
    anv = np.zeros((c,))
    # acc_num tracks the value-weighted sums per channel; stored row-wise.
    accv = np.zeros(c)
    for t in range(t_len):
        m_den[t] = md
        acc_den[t] = ad
        m_num[t] = mn
        acc_num[t] = accv
        kt = k[t]
        md2 = np.maximum(md - lam, kt)
        ad = ad * np.exp(md - lam - md2) + np.exp(kt - md2)
        md = md2
        mn2 = np.maximum(mn - lam_num, kt)
        scale = np.exp(mn - lam_num - mn2)
        fresh = np.exp(kt - mn2)
        accv = accv * scale + fresh * v[t]
        mn = mn2
    del an, anv
    return m_den, acc_den, m_num, acc_num


def bi_wkv_linear(k: np.ndarray, v: np.ndarray, params: WkvParams) -> np.ndarray:
    """O(T) evaluation via forward and backward decay accumulators.

    Matches ``bi_wkv_reference`` to tight relative error for any finite
    inputs; all exponential sums are kept as (max, mantissa) pairs so the
    combination step never overflows.
    """
    global _EVAL_COUNT
    k, v = _check_kv(k, v)
    t_len, c = k.shape
    if params.w.shape[0] != c:
        raise ValueError(f"params have {params.w.shape[0]} channels, K has {c}")
    lam = params.w / float(params.t_norm)
    lam_num = -lam if _FAULT == "wkv-decay-sign" else lam

    fwd = _directional_states(k, v, lam, lam_num)
    bwd = tuple(s[::-1] for s in _directional_states(k[::-1], v[::-1], lam, lam_num))
    m_den_f, acc_den_f, m_num_f, acc_num_f = fwd
    m_den_b, acc_den_b, m_num_b, acc_num_b = bwd

    self_expo = params.u + k  # (T, C)
    m_all = np.maximum.reduce([m_den_f, m_den_b, m_num_f, m_num_b, self_expo])
    den = (
        acc_den_f * np.exp(m_den_f - m_all)
        + acc_den_b * np.exp(m_den_b - m_all)
        + np.exp(self_expo - m_all)
    )
    num = (
        acc_num_f * np.exp(m_num_f - m_all)
        + acc_num_b * np.exp(m_num_b - m_all)
        + v * np.exp(self_expo - m_all)
    )
    _EVAL_COUNT += 1
    return num / den


def re_wkv(
    k2d: np.ndarray,
    v2d: np.ndarray,
    params: WkvParams,
    iterations: int,
) -> np.ndarray:
    """Alternating-axis repeated scan over a 2-D token grid.

    Odd iterations flatten row-major (horizontal scan), even iterations
    column-major (vertical scan); each iteration runs ``bi_wkv_linear`` on
    the flattened sequence and its output becomes the next value grid. Keys
    are re-flattened along the matching axis but never updated.
    """
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    k2d = as_tensor(k2d)
    v2d = as_tensor(v2d)
    if k2d.shape != v2d.shape or k2d.ndim != 3:
        raise ValueError(f"K {k2d.shape} and V {v2d.shape} must be equal (H, W, C)")
    h, w, c = k2d.shape
    v_cur = v2d
    for it in range(1, iterations + 1):
        if it % 2 == 1:
            k_seq = k2d.reshape(h * w, c)
            out = bi_wkv_linear(k_seq, v_cur.reshape(h * w, c), params)
            v_cur = out.reshape(h, w, c)
        else:
            k_seq = k2d.transpose(1, 0, 2).reshape(h * w, c)
            v_seq = v_cur.transpose(1, 0, 2).reshape(h * w, c)
            out = bi_wkv_linear(k_seq, v_seq, params)
            v_cur = out.reshape(w, h, c).transpose(1, 0, 2)
    return as_tensor(v_cur)


def wkv_share(cache: WkvCache) -> np.ndarray:
    """Return the group's cached wkv without touching the kernel."""
    if cache.wkv is None:
        raise RuntimeError("wkv_share on an empty cache: no wkv computed yet")
    cache.shares += 1
    return cache.wkv


def wkv_moment(prev: np.ndarray, half: np.ndarray, alpha: float) -> np.ndarray:
    """Convex blend ``alpha * prev + (1 - alpha) * half`` across groups."""
    prev = as_tensor(prev)
    half = as_tensor(half)
    if prev.shape != half.shape:
        raise ValueError(f"moment shapes differ: {prev.shape} vs {half.shape}")
    if not 0.0 <= alpha <= 1.0:
        warnings.warn(f"momentum alpha={alpha} outside [0, 1]; clamping", stacklevel=2)
        alpha = min(max(alpha, 0.0), 1.0)
    return alpha * prev + (1.0 - alpha) * half
