"""Shared data types, the alpha controller and seeded randomness.

Feature grids are stored frame-major, then row-major spatial, then channel,
i.e. as a ``(T, H, W, d)`` float64 array.  Masks are ``(T, H, W)`` arrays
holding exactly 0.0 or 1.0 and broadcast over channels.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class PhysAttnError(Exception):
    """Base class for all library errors."""


class ShapeError(PhysAttnError, ValueError):
    """Incompatible shapes; ``dimension`` names the offending axis."""

    def __init__(self, message: str, dimension: str | None = None):
        super().__init__(message)
        self.dimension = dimension


class DomainError(PhysAttnError, ValueError):
    """An argument lies outside the domain of an operation."""


class NumericOverflowError(PhysAttnError, ArithmeticError):
    """A computation produced non-finite values."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FeatureSequence:
    """T frames of ``(H, W, d)`` feature grids."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 4:
            raise ShapeError(f"expected a (T, H, W, d) array, got ndim={arr.ndim}", "ndim")
        if min(arr.shape) < 1:
            raise ShapeError(f"all dimensions must be >= 1, got {arr.shape}", "shape")
        if not np.all(np.isfinite(arr)):
            raise NumericOverflowError("feature sequence contains non-finite values")
        object.__setattr__(self, "data", _frozen(arr))

    @classmethod
    def from_vectors(cls, vectors) -> "FeatureSequence":
        """Build an H=W=1 sequence from a ``(T,)`` or ``(T, d)`` array."""
        arr = np.asarray(vectors, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise ShapeError(f"expected (T,) or (T, d), got ndim={arr.ndim}", "ndim")
        return cls(arr[:, None, None, :])

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def H(self) -> int:
        return self.data.shape[1]

    @property
    def W(self) -> int:
        return self.data.shape[2]

    @property
    def d(self) -> int:
        return self.data.shape[3]

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    def vectors(self) -> np.ndarray:
        """Each frame flattened to one vector, shape ``(T, H*W*d)``."""
        return self.data.reshape(self.T, -1)

    def __repr__(self):
        return f"FeatureSequence(T={self.T}, H={self.H}, W={self.W}, d={self.d})"


@dataclass(frozen=True, eq=False)
class MaskSequence:
    """T binary ``(H, W)`` masks."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise ShapeError(f"expected a (T, H, W) array, got ndim={arr.ndim}", "ndim")
        if min(arr.shape) < 1:
            raise ShapeError(f"all dimensions must be >= 1, got {arr.shape}", "shape")
        if not np.all((arr == 0.0) | (arr == 1.0)):
            raise DomainError("mask values must be exactly 0 or 1 (non-binary mask)")
        object.__setattr__(self, "data", _frozen(arr))

    @classmethod
    def ones_like(cls, features: FeatureSequence) -> "MaskSequence":
        return cls(np.ones(features.shape[:3]))

    @classmethod
    def from_flags(cls, flags) -> "MaskSequence":
        """Per-frame scalar flags for an H=W=1 sequence."""
        return cls(np.asarray(flags, dtype=np.float64).reshape(-1, 1, 1))

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def expanded(self) -> np.ndarray:
        """``(T, H, W, 1)`` view for broadcasting against features."""
        return self.data[..., None]

    def __repr__(self):
        return f"MaskSequence(T={self.data.shape[0]}, H={self.data.shape[1]}, W={self.data.shape[2]})"


def validate_pair(features: FeatureSequence, masks: MaskSequence) -> None:
    """Raise unless ``masks`` can gate ``features``.

    Masks are validated binary on construction, but arrays may be swapped in
    by callers, so binarity and finiteness are re-checked here.
    """
    if features.T != masks.T:
        raise ShapeError(
            f"frame-count mismatch: features have T={features.T}, masks have T={masks.T}", "T"
        )
    if features.H != masks.shape[1]:
        raise ShapeError(f"height mismatch: features H={features.H}, masks H={masks.shape[1]}", "H")
    if features.W != masks.shape[2]:
        raise ShapeError(f"width mismatch: features W={features.W}, masks W={masks.shape[2]}", "W")
    if not np.all((masks.data == 0.0) | (masks.data == 1.0)):
        raise DomainError("non-binary mask value")
    if not np.all(np.isfinite(features.data)):
        raise NumericOverflowError("non-finite feature value")


# -- alpha controller -------------------------------------------------------

@dataclass(frozen=True)
class BaseConstants:
    c_heat: float = 2.0
    c_id: float = 1.0
    c_s: float = 0.1
    c_b: float = 0.1

    def __post_init__(self):
        for name in ("c_heat", "c_id", "c_s", "c_b"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise DomainError(f"{name} must be a finite nonnegative real, got {value}")


@dataclass(frozen=True)
class ControlParams:
    """alpha together with the quantities it controls.

    Only ``alpha`` and the base constants are stored; the derived values are
    properties so they can never drift out of sync.
    """

    alpha: float
    constants: BaseConstants = field(default_factory=BaseConstants)

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise DomainError(f"alpha must lie in [0, 1], got {self.alpha}")

    @property
    def nu(self) -> float:
        return self.constants.c_heat * self.alpha

    @property
    def lambda_id(self) -> float:
        return min(self.constants.c_id * self.alpha, 1.0)

    @property
    def sigma_s(self) -> float:
        return self.constants.c_s * (1.0 - self.alpha)

    @property
    def sigma_b(self) -> float:
        return self.constants.c_b * self.alpha

    @property
    def noise_enabled(self) -> bool:
        return self.sigma_s > 0 or self.sigma_b > 0


def derive_params(alpha: float, constants: BaseConstants | None = None, **kwargs) -> ControlParams:
    """Map the trade-off knob alpha to diffusion, injection and noise strengths.

    Keyword arguments ``c_heat``, ``c_id``, ``c_s`` and ``c_b`` may be given
    instead of a :class:`BaseConstants`.
    """
    if constants is None:
        constants = BaseConstants(**kwargs)
    elif kwargs:
        raise TypeError("pass either constants or keyword constants, not both")
    alpha = float(alpha)
    if not np.isfinite(alpha) or not (0.0 <= alpha <= 1.0):
        raise DomainError(f"alpha must lie in [0, 1], got {alpha}")
    return ControlParams(alpha, constants)


@dataclass(frozen=True)
class OperatorSchedule:
    """Number of virtual-time iterations and their step size."""

    n_iters: int = 10
    dtau: float = 0.1

    def __post_init__(self):
        if int(self.n_iters) != self.n_iters or self.n_iters < 1:
            raise DomainError(f"n_iters must be a positive integer, got {self.n_iters}")
        if not np.isfinite(self.dtau) or self.dtau <= 0:
            raise DomainError(f"dtau must be positive, got {self.dtau}")


# -- randomness -------------------------------------------------------------

@dataclass(frozen=True)
class RngHandle:
    """Seed plus stream label naming an independent random stream.

    Samples come from numpy's Philox4x64 counter-based generator keyed by
    the first 128 bits of ``blake2b(f"{seed}/{stream}")``.  A handle holds
    no mutable state: every call to :meth:`generator` restarts the stream,
    and distinct draws are obtained by forking child streams.
    """

    seed: int
    stream: str = ""

    def __post_init__(self):
        if not (0 <= int(self.seed) < 2**64):
            raise DomainError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    def key(self) -> int:
        digest = hashlib.blake2b(f"{int(self.seed)}/{self.stream}".encode(), digest_size=16).digest()
        return int.from_bytes(digest, "little")

    def fork(self, label) -> "RngHandle":
        return RngHandle(self.seed, f"{self.stream}/{label}" if self.stream else str(label))

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.key()))

    def normal(self, shape: int | Sequence[int]) -> np.ndarray:
        return self.generator().standard_normal(shape)


def energy(features: FeatureSequence) -> float:
    """Sum over frames of the squared distance to the framewise mean."""
    s = features.data
    return float(np.sum((s - s.mean(axis=0, keepdims=True)) ** 2))
