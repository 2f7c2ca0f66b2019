"""Distance analysis over per-position vector families.

For a block run on a feature map, three families are measured: the input
columns, the output-before-fusion columns, and the attention weights of each
query position.  The headline statistic is the mean distance over all
ordered position pairs (self-pairs included, contributing zero).

Cosine distances use the half-gap form ``|u/|u| - v/|v||^2 / 4``, which is
algebraically ``(1 - cos)/2`` but returns exactly zero for bit-identical
vectors; that exactness is what makes query-independence measurable rather
than merely small.  Divergences use the natural log, so ``ln 2`` is the
maximum.
"""

import math
from dataclasses import dataclass

import numpy as np

from .blocks import BlockOutput, BlockParams, BlockSpec, block_forward
from .types import DimensionError, FeatureMap, InvariantError, UndefinedCosineError

PROB_SUM_TOL = 1e-6

METRICS = ("cosine", "jsd")
FAMILIES = ("input", "output", "att")


@dataclass(frozen=True)
class DistanceReport:
    """One averaged pairwise distance for one (metric, family) cell."""

    metric: str
    family: str
    value: float
    n_positions: int
    variant: str
    note: str = ""

    def __post_init__(self):
        if self.metric not in METRICS:
            raise InvariantError(f"unknown metric {self.metric!r}")
        if self.family not in FAMILIES:
            raise InvariantError(f"unknown family {self.family!r}")
        if not self.value >= 0:
            raise InvariantError(f"distance must be nonnegative, got {self.value}")
        if self.metric == "cosine" and self.value > 1:
            raise InvariantError(f"cosine distance must be <= 1, got {self.value}")


def cosine_distance(u: np.ndarray, v: np.ndarray) -> float:
    """Half the cosine gap, in ``[0, 1]``: 0 aligned, 0.5 orthogonal, 1 opposed."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise DimensionError(f"expected equal-length vectors, got {u.shape} and {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise UndefinedCosineError("cosine distance undefined for a zero vector")
    gap = u / nu - v / nv
    return float(min(max(float(gap @ gap) / 4.0, 0.0), 1.0))


def jsd(p: np.ndarray, q: np.ndarray) -> float:
    """Jensen-Shannon divergence between two probability vectors (natural
    log, ``0 * log 0 = 0``).  Symmetric and bounded by ``ln 2``; roundoff
    that would dip below the mathematical floor of zero is clamped."""
    p = _check_probability("p", p)
    q = _check_probability("q", q)
    if p.shape != q.shape:
        raise DimensionError(f"shape mismatch: {p.shape} vs {q.shape}")
    m = p + q
    with np.errstate(divide="ignore", invalid="ignore"):
        p_term = np.where(p > 0, p * np.log(np.where(p > 0, 2.0 * p / m, 1.0)), 0.0)
        q_term = np.where(q > 0, q * np.log(np.where(q > 0, 2.0 * q / m, 1.0)), 0.0)
    return max(0.5 * float(np.sum(p_term + q_term)), 0.0)


def _check_probability(name: str, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"{name} must be a vector, got shape {v.shape}")
    if np.any(v < 0):
        raise InvariantError(f"{name} must be nonnegative")
    total = float(v.sum())
    if abs(total - 1.0) > PROB_SUM_TOL:
        raise InvariantError(f"{name} must sum to 1, got {total!r}")
    return v


_METRIC_FNS = {"cosine": cosine_distance, "jsd": jsd}


def avg_pairwise_distance(vectors, metric) -> float:
    """Mean distance over all ordered pairs, self-pairs included.

    The pair sum is accumulated with ``math.fsum`` so the result does not
    depend on the order the vectors are supplied in.
    """
    fn = _METRIC_FNS[metric] if isinstance(metric, str) else metric
    vs = [np.asarray(v) for v in vectors]
    n = len(vs)
    if n < 1:
        raise DimensionError("need at least one vector")
    # Symmetric metrics: each unordered pair appears twice in the double sum.
    terms = (fn(vs[i], vs[j]) for i in range(n) for j in range(i + 1, n))
    return math.fsum(2.0 * d for d in terms) / (n * n)


def analyze_block(
    x: FeatureMap, spec: BlockSpec, params: BlockParams
) -> list[DistanceReport]:
    """Run the block and report averaged pairwise distances per family.

    Cosine is reported for all families; divergence only for attention
    weights that are probability rows (raw dot/concat scores get no
    divergence cell, and average pooling produces no attention family).
    """
    out: BlockOutput = block_forward(x, spec, params)
    variant = f"{spec.kind}/{spec.variant}" if spec.kind == "nl" else spec.kind
    n = x.positions

    input_vecs = [x.data[:, j] for j in range(n)]
    if out.delta is not None:
        output_vecs = [out.delta[:, j] for j in range(n)]
    else:
        diff = out.z.data - x.data
        output_vecs = [diff[:, j] for j in range(n)]

    att_vecs = None
    att_note = ""
    if out.attention is not None:
        if out.attention.ndim == 2:
            att_vecs = [out.attention[i, :] for i in range(n)]
        else:
            att_vecs = [out.attention] * n
            att_note = "attention shared by all query positions; zero by construction"

    reports = [
        DistanceReport("cosine", "input", avg_pairwise_distance(input_vecs, "cosine"), n, variant),
        DistanceReport("cosine", "output", avg_pairwise_distance(output_vecs, "cosine"), n, variant),
    ]
    if att_vecs is not None:
        reports.append(
            DistanceReport(
                "cosine", "att", avg_pairwise_distance(att_vecs, "cosine"), n, variant, att_note
            )
        )
        if out.attention_normalized:
            reports.append(
                DistanceReport(
                    "jsd", "att", avg_pairwise_distance(att_vecs, "jsd"), n, variant, att_note
                )
            )
    return reports
