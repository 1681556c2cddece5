"""Subject masks from windowed saliency maps and Otsu's method."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import DomainError, MaskSequence

DEFAULT_BINS = 256
DEFAULT_WINDOW = 5


@dataclass(frozen=True, eq=False)
class AttentionMapStack:
    """Recent saliency maps for one frame, oldest first."""

    maps: tuple

    def __post_init__(self):
        maps = tuple(np.asarray(m, dtype=np.float64) for m in self.maps)
        if not maps:
            raise DomainError("attention window is empty")
        shape = maps[0].shape
        if len(shape) != 2:
            raise DomainError(f"saliency maps must be 2-D, got shape {shape}")
        for m in maps:
            if m.shape != shape:
                raise DomainError(f"saliency maps disagree in shape: {m.shape} vs {shape}")
            if not np.all(np.isfinite(m)) or np.any(m < 0):
                raise DomainError("saliency values must be finite and nonnegative")
        object.__setattr__(self, "maps", maps)

    def push(self, new_map, window: int = DEFAULT_WINDOW) -> "AttentionMapStack":
        """Append a map, keeping at most ``window`` of the newest."""
        return AttentionMapStack((self.maps + (new_map,))[-window:])


def aggregate_window(stack: AttentionMapStack | Sequence) -> np.ndarray:
    if not isinstance(stack, AttentionMapStack):
        stack = AttentionMapStack(tuple(stack))
    return np.mean(np.stack(stack.maps), axis=0)


def _histogram(values: np.ndarray, bins: int):
    vmin, vmax = values.min(), values.max()
    edges = np.linspace(vmin, vmax, bins + 1)
    # right-closed bins (e_k, e_{k+1}] so that "class 0 at edge e_k" is exactly values <= e_k
    idx = np.clip(np.searchsorted(edges, values, side="left") - 1, 0, bins - 1)
    counts = np.bincount(idx, minlength=bins).astype(np.float64)
    sums = np.bincount(idx, weights=values, minlength=bins)
    return edges, counts, sums


def between_class_variance(values, bins: int = DEFAULT_BINS) -> tuple[np.ndarray, np.ndarray]:
    """Between-class variance for every interior bin edge.

    Returns ``(edges[1:bins], variance)``.  Class means use the exact values
    falling in each bin rather than bin centres.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    edges, counts, sums = _histogram(values, bins)
    n = counts.sum()
    n0 = np.cumsum(counts)[:-1]
    s0 = np.cumsum(sums)[:-1]
    n1 = n - n0
    s1 = sums.sum() - s0
    with np.errstate(divide="ignore", invalid="ignore"):
        mu0 = s0 / n0
        mu1 = s1 / n1
        var = (n0 / n) * (n1 / n) * (mu0 - mu1) ** 2
    var = np.where((n0 > 0) & (n1 > 0), var, 0.0)
    return edges[1:bins], var


def otsu_threshold(values, bins: int = DEFAULT_BINS) -> float:
    """Bin edge maximising the between-class variance (lowest edge on ties).

    A constant input returns its value, which :func:`binarize` maps to an
    all-background mask.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise DomainError("cannot threshold an empty grid")
    if not np.all(np.isfinite(values)):
        raise DomainError("saliency grid contains non-finite values")
    if int(bins) != bins or bins < 2:
        raise DomainError(f"bins must be an integer >= 2, got {bins}")
    vmin, vmax = values.min(), values.max()
    if vmin == vmax:
        return float(vmin)
    edges, var = between_class_variance(values, int(bins))
    return float(edges[int(np.argmax(var))])


def binarize(values, threshold: float) -> np.ndarray:
    """1 where strictly above the threshold, else 0."""
    return (np.asarray(values, dtype=np.float64) > threshold).astype(np.float64)


def resize_mask(mask, target: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbour resample; output cell (i, j) reads source (i*H//H', j*W//W')."""
    mask = np.asarray(mask, dtype=np.float64)
    h2, w2 = target
    if h2 < 1 or w2 < 1:
        raise DomainError(f"target size must be >= 1, got {target}")
    h, w = mask.shape
    rows = (np.arange(h2) * h) // h2
    cols = (np.arange(w2) * w) // w2
    return mask[np.ix_(rows, cols)]


def masks_from_stacks(
    stacks: Sequence[AttentionMapStack],
    target: tuple[int, int] | None = None,
    bins: int = DEFAULT_BINS,
) -> MaskSequence:
    """Otsu mask per frame, optionally resampled to the feature grid."""
    out = []
    for stack in stacks:
        sal = aggregate_window(stack)
        m = binarize(sal, otsu_threshold(sal, bins))
        if target is not None and m.shape != tuple(target):
            m = resize_mask(m, target)
        out.append(m)
    return MaskSequence(np.stack(out))


def iou(a, b) -> float:
    a = np.asarray(a) > 0.5
    b = np.asarray(b) > 0.5
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)
