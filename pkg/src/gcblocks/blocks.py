"""The block family: non-local, simplified non-local, squeeze-excitation,
global-context, and the generic three-step pipeline they all instantiate.

Every block follows the same scheme: pool the positions into one context
vector (uniformly or by learned attention), transform it channel-wise, then
fuse it back into every position (broadcast add or channel-wise rescale).
The full non-local block is the exception: it pools with a separate
attention row per query position.

All forwards are pure; parameters are immutable after construction.
"""

from dataclasses import dataclass

import numpy as np

from .kernels import (
    fuse_add,
    fuse_scale,
    global_attention_pool,
    global_avg_pool,
    layer_norm,
    linear_map,
    linear_vec,
    relu,
    sigmoid,
    softmax_positions,
    softmax_rows,
)
from .types import FeatureMap, LayerNormParams, LinearWeight, SpecError

KINDS = ("nl", "snl", "snl_factored", "se", "gc", "framework")
NL_VARIANTS = ("gaussian", "e_gaussian", "dot", "concat")
POOLINGS = ("avg", "att")
FUSIONS = ("add", "scale")
POSITIONS = ("after_add", "after_1x1")


@dataclass(frozen=True)
class BlockSpec:
    """Which block to build and at what size.

    ``ratio`` is the bottleneck reduction factor (hidden width ``channels //
    ratio``); ``nl_inner_channels`` is the projection width of the non-local
    block (defaults to half the channels); ``position`` records where the
    block sits inside a residual unit and only matters to the cost model.
    """

    kind: str
    channels: int
    variant: str | None = None
    ratio: int = 16
    pooling: str | None = None
    fusion: str | None = None
    position: str = "after_1x1"
    nl_inner_channels: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown block kind {self.kind!r}, expected one of {KINDS}")
        if self.channels < 1:
            raise SpecError(f"channels must be positive, got {self.channels}")
        if self.ratio < 1:
            raise SpecError(f"ratio must be positive, got {self.ratio}")
        if self.position not in POSITIONS:
            raise SpecError(f"unknown position {self.position!r}")
        if self.kind == "nl":
            if self.variant not in NL_VARIANTS:
                raise SpecError(
                    f"nl blocks need a variant from {NL_VARIANTS}, got {self.variant!r}"
                )
            if self.inner_channels < 1:
                raise SpecError("nl inner width must be at least 1")
        elif self.variant is not None:
            raise SpecError(f"variant is only valid for nl blocks, got kind {self.kind!r}")
        if self.kind == "framework":
            if self.pooling not in POOLINGS or self.fusion not in FUSIONS:
                raise SpecError(
                    "framework blocks need pooling in {avg, att} and fusion in {add, scale}"
                )
        else:
            implied_pool, implied_fuse = _IMPLIED[self.kind]
            if self.pooling not in (None, implied_pool):
                raise SpecError(f"{self.kind} blocks always use {implied_pool} pooling")
            if self.fusion not in (None, implied_fuse):
                raise SpecError(f"{self.kind} blocks always use {implied_fuse} fusion")
        if self.kind in ("se", "gc", "framework") and self.hidden_channels < 1:
            raise SpecError(
                f"bottleneck width {self.channels}//{self.ratio} must be at least 1"
            )

    @property
    def hidden_channels(self) -> int:
        return self.channels // self.ratio

    @property
    def inner_channels(self) -> int:
        if self.nl_inner_channels is not None:
            return self.nl_inner_channels
        return self.channels // 2

    @property
    def effective_pooling(self) -> str:
        return self.pooling if self.kind == "framework" else _IMPLIED[self.kind][0]

    @property
    def effective_fusion(self) -> str:
        return self.fusion if self.kind == "framework" else _IMPLIED[self.kind][1]


# the pooling/fusion pair each non-framework kind is hard-wired to ("att"
# for nl means one attention row per query position).
_IMPLIED = {
    "nl": ("att", "add"),
    "snl": ("att", "add"),
    "snl_factored": ("att", "add"),
    "se": ("avg", "scale"),
    "gc": ("att", "add"),
}


@dataclass(frozen=True)
class BlockParams:
    """Weights for one block, named by role rather than by block flavour.

    ``query``/``key``/``value``/``out`` belong to the non-local family
    (``key`` doubles as the 1-channel attention scorer of the global blocks);
    ``down``/``up`` are the two bottleneck projections; ``ln`` the layer norm
    between them (additive-fusion blocks only).
    """

    query: LinearWeight | None = None
    key: LinearWeight | None = None
    value: LinearWeight | None = None
    out: LinearWeight | None = None
    down: LinearWeight | None = None
    up: LinearWeight | None = None
    ln: LayerNormParams | None = None

    def astype(self, dtype) -> "BlockParams":
        def conv(w):
            return None if w is None else w.astype(dtype)

        return BlockParams(
            query=conv(self.query),
            key=conv(self.key),
            value=conv(self.value),
            out=conv(self.out),
            down=conv(self.down),
            up=conv(self.up),
            ln=None if self.ln is None else self.ln.astype(dtype),
        )


@dataclass(frozen=True)
class BlockOutput:
    """Forward result.

    ``attention`` is the pairwise ``(N_p, N_p)`` matrix for non-local blocks
    and the shared length-``N_p`` weight vector for attention-pooled global
    blocks (absent under average pooling).  ``attention_normalized`` says
    whether those weights are probability rows (dot/concat scores are kept
    raw).  ``context`` is the pooled global vector where one exists; for the
    simplified non-local block it is the value-transformed pool, i.e. the
    term actually added to every position.  ``delta`` is the output before
    fusion (``z - x``) for additive blocks; columns alias one shared vector
    for the query-independent blocks.
    """

    z: FeatureMap
    attention: np.ndarray | None = None
    attention_normalized: bool = False
    context: np.ndarray | None = None
    delta: np.ndarray | None = None


def param_shapes(spec: BlockSpec) -> dict[str, tuple[int, int]]:
    """Expected weight shapes for a spec, in canonical construction order."""
    c = spec.channels
    shapes: dict[str, tuple[int, int]] = {}
    if spec.kind == "nl":
        inner = spec.inner_channels
        if spec.variant in ("e_gaussian", "dot"):
            shapes["query"] = (inner, c)
            shapes["key"] = (inner, c)
        elif spec.variant == "concat":
            shapes["query"] = (1, 2 * c)
        shapes["value"] = (inner, c)
        shapes["out"] = (c, inner)
    elif spec.kind in ("snl", "snl_factored"):
        shapes["key"] = (1, c)
        shapes["value"] = (c, c)
    elif spec.kind == "se":
        shapes["down"] = (spec.hidden_channels, c)
        shapes["up"] = (c, spec.hidden_channels)
    else:  # gc, framework
        if spec.effective_pooling == "att":
            shapes["key"] = (1, c)
        shapes["down"] = (spec.hidden_channels, c)
        shapes["up"] = (c, spec.hidden_channels)
    return shapes


def _final_stage(spec: BlockSpec) -> str | None:
    """Name of the projection zeroed at init so add-fusion blocks start as
    identities; scale-fusion blocks have no such stage."""
    if spec.effective_fusion != "add":
        return None
    if spec.kind == "nl":
        return "out"
    if spec.kind in ("snl", "snl_factored"):
        return "value"
    return "up"


def _needs_ln(spec: BlockSpec) -> bool:
    return spec.kind in ("gc", "framework") and spec.effective_fusion == "add"


def init_params(spec: BlockSpec, seed: int) -> BlockParams:
    """Deterministic insertion-ready weights.

    The final projection of every additive block is zeroed, so a freshly
    built block is an exact identity on its input; everything else is drawn
    uniform in ``[-1/sqrt(fan_in), +1/sqrt(fan_in)]``.
    """
    return _build_params(spec, seed, identity_start=True)


def random_params(spec: BlockSpec, seed: int) -> BlockParams:
    """Fully random weights for verification runs (equivalence, gradient and
    statistics checks), where a zeroed final stage would make every check
    vacuous.  Layer-norm gains/shifts are randomized too."""
    return _build_params(spec, seed, identity_start=False)


def _build_params(spec: BlockSpec, seed: int, identity_start: bool) -> BlockParams:
    rng = np.random.default_rng(seed)
    zero_name = _final_stage(spec) if identity_start else None
    fields: dict[str, object] = {}
    for name, (rows, cols) in param_shapes(spec).items():
        bound = 1.0 / np.sqrt(cols)
        data = rng.uniform(-bound, bound, size=(rows, cols))
        if name == zero_name:
            data = np.zeros((rows, cols))
        fields[name] = LinearWeight(data)
    if _needs_ln(spec):
        dim = spec.hidden_channels
        if identity_start:
            fields["ln"] = LayerNormParams.identity(dim)
        else:
            gamma = rng.uniform(0.5, 1.5, size=dim)
            beta = rng.uniform(-0.5, 0.5, size=dim)
            fields["ln"] = LayerNormParams(gamma, beta)
    return BlockParams(**fields)


def _require(p: BlockParams, names: tuple[str, ...], kind: str) -> None:
    missing = [n for n in names if getattr(p, n) is None]
    if missing:
        raise SpecError(f"{kind} forward needs params {missing}, got None")


def nl_forward(x: FeatureMap, p: BlockParams, variant: str) -> BlockOutput:
    """Full non-local block: one attention row per query position.

    ``z[:, i] = x[:, i] + out(sum_j att[i, j] * value(x)[:, j])`` where the
    pairwise weights ``att`` depend on the variant: softmaxed raw or
    embedded inner products (gaussian / e_gaussian), or inner products and
    rectified joint projections scaled by the position count (dot / concat,
    left unnormalized).
    """
    n = x.positions
    if variant == "gaussian":
        _require(p, ("value", "out"), "nl/gaussian")
        att = softmax_rows(x.data.T @ x.data)
        normalized = True
    elif variant == "e_gaussian":
        _require(p, ("query", "key", "value", "out"), "nl/e_gaussian")
        q = linear_map(p.query, x).data
        k = linear_map(p.key, x).data
        att = softmax_rows(q.T @ k)
        normalized = True
    elif variant == "dot":
        _require(p, ("query", "key", "value", "out"), "nl/dot")
        q = linear_map(p.query, x).data
        k = linear_map(p.key, x).data
        att = (q.T @ k) / n
        normalized = False
    elif variant == "concat":
        _require(p, ("query", "value", "out"), "nl/concat")
        c = x.channels
        left = p.query.data[0, :c] @ x.data  # per-query contribution
        right = p.query.data[0, c:] @ x.data  # per-position contribution
        att = relu(left[:, None] + right[None, :]) / n
        normalized = False
    else:
        raise SpecError(f"unknown nl variant {variant!r}")
    v = linear_map(p.value, x)
    aggregated = v.with_data(v.data @ att.T)  # column i: sum_j att[i, j] v[:, j]
    delta = linear_map(p.out, aggregated)
    z = x.with_data(x.data + delta.data)
    return BlockOutput(
        z=z,
        attention=att,
        attention_normalized=normalized,
        context=None,
        delta=delta.data,
    )


def snl_forward(x: FeatureMap, p: BlockParams) -> BlockOutput:
    """Simplified non-local block, literal form: the value transform is
    applied at every position before attention pooling (O(N_p * C^2))."""
    _require(p, ("key", "value"), "snl")
    alpha = softmax_positions(linear_map(p.key, x).data[0])
    values = linear_map(p.value, x)
    context = global_attention_pool(values, alpha)
    z = fuse_add(x, context)
    return BlockOutput(
        z=z,
        attention=alpha,
        attention_normalized=True,
        context=context,
        delta=_shared_delta(context, x.positions),
    )


def snl_factored_forward(x: FeatureMap, p: BlockParams) -> BlockOutput:
    """Simplified non-local block with the value transform distributed out of
    the pooling sum: pool first, transform once (O(C^2), independent of
    N_p).  Agrees with :func:`snl_forward` up to float reassociation."""
    _require(p, ("key", "value"), "snl_factored")
    alpha = softmax_positions(linear_map(p.key, x).data[0])
    pooled = global_attention_pool(x, alpha)
    context = linear_vec(p.value, pooled)
    z = fuse_add(x, context)
    return BlockOutput(
        z=z,
        attention=alpha,
        attention_normalized=True,
        context=context,
        delta=_shared_delta(context, x.positions),
    )


def se_forward(x: FeatureMap, p: BlockParams) -> BlockOutput:
    """Squeeze-excitation block: average pool, bottleneck ending in a
    sigmoid, channel-wise rescale."""
    _require(p, ("down", "up"), "se")
    squeezed = global_avg_pool(x)
    gate = sigmoid(linear_vec(p.up, relu(linear_vec(p.down, squeezed))))
    z = fuse_scale(x, gate)
    return BlockOutput(z=z, context=squeezed)


def gc_forward(x: FeatureMap, p: BlockParams) -> BlockOutput:
    """Global context block: attention pooling, layer-normed bottleneck,
    broadcast addition."""
    _require(p, ("key", "down", "up", "ln"), "gc")
    alpha = softmax_positions(linear_map(p.key, x).data[0])
    context = global_attention_pool(x, alpha)
    term = linear_vec(p.up, relu(layer_norm(linear_vec(p.down, context), p.ln)))
    z = fuse_add(x, term)
    return BlockOutput(
        z=z,
        attention=alpha,
        attention_normalized=True,
        context=context,
        delta=_shared_delta(term, x.positions),
    )


def framework_forward(x: FeatureMap, spec: BlockSpec, p: BlockParams) -> BlockOutput:
    """Generic three-step pipeline with pluggable pooling and fusion.

    Additive fusion transforms through the layer-normed bottleneck (as the
    global context block); scale fusion through the sigmoid bottleneck (as
    squeeze-excitation).  ``{att, add}`` therefore reproduces ``gc_forward``
    and ``{avg, scale}`` reproduces ``se_forward``, bit for bit.
    """
    if spec.kind != "framework":
        raise SpecError(f"framework_forward needs a framework spec, got {spec.kind!r}")
    if spec.pooling == "att":
        _require(p, ("key",), "framework")
        alpha = softmax_positions(linear_map(p.key, x).data[0])
        context = global_attention_pool(x, alpha)
    else:
        alpha = None
        context = global_avg_pool(x)
    _require(p, ("down", "up"), "framework")
    if spec.fusion == "add":
        _require(p, ("ln",), "framework/add")
        term = linear_vec(p.up, relu(layer_norm(linear_vec(p.down, context), p.ln)))
        z = fuse_add(x, term)
        delta = _shared_delta(term, x.positions)
    else:
        gate = sigmoid(linear_vec(p.up, relu(linear_vec(p.down, context))))
        z = fuse_scale(x, gate)
        delta = None
    return BlockOutput(
        z=z,
        attention=alpha,
        attention_normalized=alpha is not None,
        context=context,
        delta=delta,
    )


def block_forward(x: FeatureMap, spec: BlockSpec, p: BlockParams) -> BlockOutput:
    """Dispatch to the matching forward for ``spec.kind``."""
    if spec.kind == "nl":
        return nl_forward(x, p, spec.variant)
    if spec.kind == "snl":
        return snl_forward(x, p)
    if spec.kind == "snl_factored":
        return snl_factored_forward(x, p)
    if spec.kind == "se":
        return se_forward(x, p)
    if spec.kind == "gc":
        return gc_forward(x, p)
    return framework_forward(x, spec, p)


def _shared_delta(term: np.ndarray, positions: int) -> np.ndarray:
    # Broadcast view: every column is the same bits, which is exactly the
    # query-independence the statistics module measures.
    return np.broadcast_to(term[:, None], (term.shape[0], positions))
