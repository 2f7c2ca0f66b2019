"""Core data types: feature maps, linear weights, layer-norm parameters.

A feature map is stored channel-major as a dense ``(C, N_p)`` matrix, where
``N_p`` is the number of spatial(-temporal) positions (``H*W`` for images,
``H*W*T`` for clips).  All types validate their invariants on construction;
every operation in :mod:`gcblocks.kernels` returns freshly validated values.
"""

from dataclasses import dataclass

import numpy as np


class GCBlocksError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(GCBlocksError, ValueError):
    """Shapes or metadata are inconsistent."""


class NumericError(GCBlocksError, ArithmeticError):
    """A value or result is non-finite."""


class InvariantError(GCBlocksError, ValueError):
    """A documented invariant (e.g. weights summing to one) is violated."""


class SpecError(GCBlocksError, ValueError):
    """A block specification is invalid or incomplete."""


class FormatError(GCBlocksError, ValueError):
    """A file or config does not match its documented format."""


class UndefinedCosineError(InvariantError):
    """Cosine distance requested for a zero vector."""


def check_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite entries")


def as_float_array(name: str, values, dtype=np.float64) -> np.ndarray:
    arr = np.asarray(values, dtype=dtype)
    check_finite(name, arr)
    return arr


@dataclass(frozen=True)
class FeatureMap:
    """Dense activation tensor, channel-major: ``data[c, j]`` is channel ``c``
    at position ``j``.  Positions enumerate the spatial grid row-major
    (``j = (t*H + h)*W + w`` when a temporal axis is present).
    """

    data: np.ndarray
    height: int
    width: int
    frames: int | None = None

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise DimensionError(f"feature map data must be 2-D, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise DimensionError(f"feature map must be non-empty, got shape {data.shape}")
        check_finite("feature map data", data)
        expected = self.height * self.width * (self.frames or 1)
        if self.height < 1 or self.width < 1 or (self.frames is not None and self.frames < 1):
            raise DimensionError("spatial metadata must be positive")
        if expected != data.shape[1]:
            raise DimensionError(
                f"spatial metadata {self.grid_shape} implies {expected} positions, "
                f"data has {data.shape[1]}"
            )
        object.__setattr__(self, "data", data)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def positions(self) -> int:
        return self.data.shape[1]

    @property
    def grid_shape(self) -> tuple[int, ...]:
        if self.frames is None:
            return (self.height, self.width)
        return (self.frames, self.height, self.width)

    @property
    def dtype(self):
        return self.data.dtype

    @classmethod
    def from_grid(cls, grid) -> "FeatureMap":
        """Build from a ``(C, H, W)`` or ``(C, T, H, W)`` array."""
        arr = np.asarray(grid)
        if arr.ndim == 3:
            c, h, w = arr.shape
            return cls(arr.reshape(c, h * w), height=h, width=w)
        if arr.ndim == 4:
            c, t, h, w = arr.shape
            return cls(arr.reshape(c, t * h * w), height=h, width=w, frames=t)
        raise DimensionError(f"expected a 3-D or 4-D grid, got shape {arr.shape}")

    def to_grid(self) -> np.ndarray:
        return self.data.reshape((self.channels,) + self.grid_shape)

    def with_data(self, data: np.ndarray) -> "FeatureMap":
        """Same spatial metadata, new channel contents (shape may change in C only)."""
        return FeatureMap(data, height=self.height, width=self.width, frames=self.frames)

    def astype(self, dtype) -> "FeatureMap":
        return self.with_data(self.data.astype(dtype))


@dataclass(frozen=True)
class LinearWeight:
    """Bias-free linear map between channel spaces (a 1x1 convolution applied
    position-wise is exactly this matrix acting on each column)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise DimensionError(f"weight must be 2-D, got shape {data.shape}")
        check_finite("weight", data)
        object.__setattr__(self, "data", data)

    @property
    def out_channels(self) -> int:
        return self.data.shape[0]

    @property
    def in_channels(self) -> int:
        return self.data.shape[1]

    def astype(self, dtype) -> "LinearWeight":
        return LinearWeight(self.data.astype(dtype))


@dataclass(frozen=True)
class LayerNormParams:
    """Affine layer-norm parameters over a vector of width ``dim``."""

    gamma: np.ndarray
    beta: np.ndarray
    epsilon: float = 1e-5

    def __post_init__(self):
        gamma = np.asarray(self.gamma)
        beta = np.asarray(self.beta)
        if gamma.ndim != 1 or beta.ndim != 1 or gamma.shape != beta.shape:
            raise DimensionError(
                f"gamma/beta must be equal-length vectors, got {gamma.shape} and {beta.shape}"
            )
        check_finite("gamma", gamma)
        check_finite("beta", beta)
        if not self.epsilon > 0:
            raise InvariantError(f"epsilon must be positive, got {self.epsilon}")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "beta", beta)

    @property
    def dim(self) -> int:
        return self.gamma.shape[0]

    @classmethod
    def identity(cls, dim: int, epsilon: float = 1e-5, dtype=np.float64) -> "LayerNormParams":
        return cls(np.ones(dim, dtype=dtype), np.zeros(dim, dtype=dtype), epsilon)

    def astype(self, dtype) -> "LayerNormParams":
        return LayerNormParams(self.gamma.astype(dtype), self.beta.astype(dtype), self.epsilon)
