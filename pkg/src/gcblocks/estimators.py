"""Scikit-learn style wrappers around the block family.

Each block is a stateless transform of a channel-major feature map, so it
fits the estimator protocol naturally: ``fit`` reads the channel count off
the data and materializes deterministic weights from ``random_state``;
``transform`` runs the forward pass and returns an array of the same shape.
``get_params``/``set_params``/``clone`` come from ``BaseEstimator``, so the
blocks compose with pipelines and parameter search.

Accepted inputs: a :class:`~gcblocks.types.FeatureMap`, a 2-D ``(C, N_p)``
array, or a 3-D/4-D ``(C, H, W)`` / ``(C, T, H, W)`` grid.  Arrays come
back as arrays of the input shape, feature maps as feature maps.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .backward import block_backward
from .blocks import (
    BlockOutput,
    BlockSpec,
    block_forward,
    init_params,
    random_params,
)
from .types import DimensionError, FeatureMap, SpecError


def as_feature_map(X) -> FeatureMap:
    """Validate and convert estimator input to a channel-major feature map."""
    if isinstance(X, FeatureMap):
        return X
    arr = np.asarray(X)
    if arr.ndim == 2:
        return FeatureMap(arr, height=arr.shape[1], width=1)
    if arr.ndim in (3, 4):
        return FeatureMap.from_grid(arr)
    raise DimensionError(
        f"expected a FeatureMap or a 2-D/3-D/4-D array, got shape {arr.shape}"
    )


def _like_input(X, fmap: FeatureMap):
    if isinstance(X, FeatureMap):
        return fmap
    if np.asarray(X).ndim == 2:
        return fmap.data
    return fmap.to_grid()


class _ContextBlock(TransformerMixin, BaseEstimator):
    """Shared fit/transform plumbing; subclasses define the block spec."""

    def _make_spec(self, channels: int) -> BlockSpec:  # pragma: no cover
        raise NotImplementedError

    def fit(self, X, y=None):
        """Size the block to ``X`` and materialize weights.

        ``weight_init='residual'`` zeroes the final projection of additive
        blocks, making the freshly fitted block an exact identity;
        ``'random'`` draws every weight (the verification setting).
        """
        fmap = as_feature_map(X)
        if self.weight_init not in ("residual", "random"):
            raise SpecError(
                f"weight_init must be 'residual' or 'random', got {self.weight_init!r}"
            )
        self.n_features_in_ = fmap.channels
        self.spec_ = self._make_spec(fmap.channels)
        builder = init_params if self.weight_init == "residual" else random_params
        self.params_ = builder(self.spec_, self.random_state)
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        fmap = as_feature_map(X)
        if fmap.channels != self.n_features_in_:
            raise DimensionError(
                f"fitted for {self.n_features_in_} channels, got {fmap.channels}"
            )
        return _like_input(X, block_forward(fmap, self.spec_, self.params_).z)

    def forward(self, X) -> BlockOutput:
        """Full forward result: output map, attention, context, pre-fusion term."""
        check_is_fitted(self, "params_")
        return block_forward(as_feature_map(X), self.spec_, self.params_)

    def backward(self, X, upstream):
        """Analytic gradients of ``sum(upstream * z)`` w.r.t. input and weights."""
        check_is_fitted(self, "params_")
        return block_backward(
            as_feature_map(X), self.spec_, self.params_, as_feature_map(upstream)
        )


class NonLocalBlock(_ContextBlock):
    """Pairwise self-attention block with one attention row per position.

    Parameters
    ----------
    variant : {'gaussian', 'e_gaussian', 'dot', 'concat'}
        How pairwise weights are scored.
    inner_channels : int or None
        Projection width; half the input channels when None.
    weight_init : {'residual', 'random'}
    random_state : int
    """

    def __init__(self, variant="e_gaussian", inner_channels=None,
                 weight_init="residual", random_state=0):
        self.variant = variant
        self.inner_channels = inner_channels
        self.weight_init = weight_init
        self.random_state = random_state

    def _make_spec(self, channels):
        return BlockSpec(
            "nl",
            channels=channels,
            variant=self.variant,
            nl_inner_channels=self.inner_channels,
        )


class SimplifiedNonLocalBlock(_ContextBlock):
    """Query-independent non-local block: one shared attention pooling.

    ``factored=True`` applies the value transform once to the pooled vector
    (cost independent of the number of positions) instead of at every
    position; both orders agree to float precision.
    """

    def __init__(self, factored=True, weight_init="residual", random_state=0):
        self.factored = factored
        self.weight_init = weight_init
        self.random_state = random_state

    def _make_spec(self, channels):
        return BlockSpec("snl_factored" if self.factored else "snl", channels=channels)


class SqueezeExcitationBlock(_ContextBlock):
    """Average pool, sigmoid-bottleneck gate, channel-wise rescale."""

    def __init__(self, ratio=16, weight_init="residual", random_state=0):
        self.ratio = ratio
        self.weight_init = weight_init
        self.random_state = random_state

    def _make_spec(self, channels):
        return BlockSpec("se", channels=channels, ratio=self.ratio)


class GlobalContextBlock(_ContextBlock):
    """Attention pooling, layer-normed bottleneck, broadcast addition."""

    def __init__(self, ratio=16, weight_init="residual", random_state=0):
        self.ratio = ratio
        self.weight_init = weight_init
        self.random_state = random_state

    def _make_spec(self, channels):
        return BlockSpec("gc", channels=channels, ratio=self.ratio)


class ContextFrameworkBlock(_ContextBlock):
    """The generic three-step pipeline with pluggable pooling and fusion.

    ``pooling='att', fusion='add'`` reproduces :class:`GlobalContextBlock`
    bit for bit; ``pooling='avg', fusion='scale'`` reproduces
    :class:`SqueezeExcitationBlock`.
    """

    def __init__(self, pooling="att", fusion="add", ratio=16,
                 weight_init="residual", random_state=0):
        self.pooling = pooling
        self.fusion = fusion
        self.ratio = ratio
        self.weight_init = weight_init
        self.random_state = random_state

    def _make_spec(self, channels):
        return BlockSpec(
            "framework",
            channels=channels,
            ratio=self.ratio,
            pooling=self.pooling,
            fusion=self.fusion,
        )
