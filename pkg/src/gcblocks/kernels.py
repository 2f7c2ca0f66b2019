"""Dense position-wise kernels the blocks are composed from.

Every function here is pure: no shared mutable state, identical inputs give
bit-identical outputs.  Reductions rely on numpy's fixed reduction order, so
results are reproducible run to run; any parallel caller must preserve that.
"""

import math

import numpy as np

from .types import (
    DimensionError,
    FeatureMap,
    InvariantError,
    LayerNormParams,
    LinearWeight,
    NumericError,
    check_finite,
)

WEIGHT_SUM_TOL = 1e-6


def linear_map(w: LinearWeight, x: FeatureMap) -> FeatureMap:
    """Apply ``w`` to every position: ``out[:, j] = w.data @ x[:, j]``."""
    if w.in_channels != x.channels:
        raise DimensionError(
            f"weight expects {w.in_channels} input channels, feature map has {x.channels}"
        )
    with np.errstate(over="ignore", invalid="ignore"):
        out = w.data @ x.data
    check_finite("linear_map result", out)
    return x.with_data(out)


def linear_vec(w: LinearWeight, v: np.ndarray) -> np.ndarray:
    """Apply ``w`` to a single channel vector."""
    v = np.asarray(v)
    if v.ndim != 1 or v.shape[0] != w.in_channels:
        raise DimensionError(
            f"weight expects a length-{w.in_channels} vector, got shape {v.shape}"
        )
    out = w.data @ v
    check_finite("linear_vec result", out)
    return out


def softmax_positions(logits: np.ndarray) -> np.ndarray:
    """Stable softmax over a vector of position logits (max-subtracted)."""
    logits = np.asarray(logits)
    if logits.ndim != 1 or logits.shape[0] < 1:
        raise DimensionError(f"logits must be a non-empty vector, got shape {logits.shape}")
    check_finite("logits", logits)
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax for pairwise attention logits."""
    logits = np.asarray(logits)
    if logits.ndim != 2:
        raise DimensionError(f"pairwise logits must be 2-D, got shape {logits.shape}")
    check_finite("logits", logits)
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def layer_norm(v: np.ndarray, p: LayerNormParams) -> np.ndarray:
    """Normalize ``v`` to zero mean / unit population variance, then affine."""
    v = np.asarray(v)
    if v.ndim != 1 or v.shape[0] != p.dim:
        raise DimensionError(f"layer_norm expects a length-{p.dim} vector, got shape {v.shape}")
    mu = v.mean()
    var = np.mean((v - mu) ** 2)
    vhat = (v - mu) / np.sqrt(var + p.epsilon)
    return p.gamma * vhat + p.beta


def global_avg_pool(x: FeatureMap) -> np.ndarray:
    """Mean over positions per channel.

    Delegates to :func:`global_attention_pool` with uniform weights so the
    two pooling routes agree bit-for-bit.
    """
    alpha = np.full(x.positions, 1.0 / x.positions, dtype=x.dtype)
    return global_attention_pool(x, alpha)


def global_attention_pool(x: FeatureMap, alpha: np.ndarray) -> np.ndarray:
    """Weighted sum over positions: ``out[c] = sum_j alpha[j] * x[c, j]``."""
    alpha = np.asarray(alpha)
    if alpha.ndim != 1 or alpha.shape[0] != x.positions:
        raise DimensionError(
            f"alpha must have length {x.positions}, got shape {alpha.shape}"
        )
    check_finite("alpha", alpha)
    if np.any(alpha < 0):
        raise InvariantError("attention weights must be nonnegative")
    total = float(alpha.sum())
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        raise InvariantError(f"attention weights must sum to 1, got {total!r}")
    return x.data @ alpha


def fuse_add(x: FeatureMap, context: np.ndarray) -> FeatureMap:
    """Broadcast-add a channel vector to every position."""
    context = np.asarray(context)
    if context.ndim != 1 or context.shape[0] != x.channels:
        raise DimensionError(
            f"context must have length {x.channels}, got shape {context.shape}"
        )
    return x.with_data(x.data + context[:, None])


def fuse_scale(x: FeatureMap, gate: np.ndarray) -> FeatureMap:
    """Rescale every position by a channel gate."""
    gate = np.asarray(gate)
    if gate.ndim != 1 or gate.shape[0] != x.channels:
        raise DimensionError(f"gate must have length {x.channels}, got shape {gate.shape}")
    return x.with_data(x.data * gate[:, None])


def relu(v: np.ndarray) -> np.ndarray:
    return np.maximum(v, 0)


def sigmoid(v: np.ndarray) -> np.ndarray:
    # Split by sign so exp never overflows.
    v = np.asarray(v)
    if not np.issubdtype(v.dtype, np.floating):
        v = v.astype(np.float64)
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def finite_diff_gradient(f, theta: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function, one coordinate at a time.

    The effective step is recomputed from the rounded perturbed coordinate and
    the quotient is taken in extended precision, which keeps the oracle's own
    roundoff below the discretization error for the step sizes used here.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 1:
        raise DimensionError(f"theta must be a vector, got shape {theta.shape}")
    if not h > 0:
        raise InvariantError(f"step must be positive, got {h}")
    grad = np.empty_like(theta)
    for k in range(theta.shape[0]):
        orig = theta[k]
        hi = orig + h
        lo = orig - h
        theta[k] = hi
        f_hi = float(f(theta))
        theta[k] = lo
        f_lo = float(f(theta))
        theta[k] = orig
        if not (math.isfinite(f_hi) and math.isfinite(f_lo)):
            raise NumericError(f"function evaluated non-finite near coordinate {k}")
        span = np.longdouble(hi) - np.longdouble(lo)
        grad[k] = float((np.longdouble(f_hi) - np.longdouble(f_lo)) / span)
    return grad


def max_relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Largest absolute deviation, scaled by the larger magnitude of the pair.

    Per-coordinate ratios blow up on entries that are incidentally tiny, so
    the deviation is measured against the max-norm of the compared values.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(b), initial=0.0), 1e-300)
    return float(np.max(np.abs(a - b), initial=0.0) / scale)
