"""Per-frame scaled dot-product attention with split query / key-value sources."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    ControlParams,
    DomainError,
    FeatureSequence,
    MaskSequence,
    NumericOverflowError,
    RngHandle,
    ShapeError,
    validate_pair,
)


@dataclass(frozen=True, eq=False)
class IdBank:
    """Reference frame grids, one per sampling step."""

    entries: tuple

    def __post_init__(self):
        entries = tuple(np.asarray(e, dtype=np.float64) for e in self.entries)
        if not entries:
            raise DomainError("ID bank needs at least one entry")
        shape = entries[0].shape
        if len(shape) != 3:
            raise ShapeError(f"bank entries must be (H, W, d) grids, got {shape}", "ndim")
        for e in entries:
            if e.shape != shape:
                raise ShapeError(f"bank entries disagree in shape: {e.shape} vs {shape}", "shape")
            if not np.all(np.isfinite(e)):
                raise NumericOverflowError("ID bank entry contains non-finite values")
        object.__setattr__(self, "entries", entries)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, step: int) -> np.ndarray:
        return self.entries[step]


@dataclass(frozen=True, eq=False)
class ProjectionSet:
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    scale: float | None = None

    def __post_init__(self):
        mats = [np.asarray(m, dtype=np.float64) for m in (self.w_q, self.w_k, self.w_v)]
        d = mats[0].shape[0]
        for m in mats:
            if m.shape != (d, d):
                raise ShapeError(f"projections must all be {d}x{d}, got {m.shape}", "d")
            if not np.all(np.isfinite(m)):
                raise NumericOverflowError("projection matrix contains non-finite values")
        object.__setattr__(self, "w_q", mats[0])
        object.__setattr__(self, "w_k", mats[1])
        object.__setattr__(self, "w_v", mats[2])
        scale = 1.0 / np.sqrt(d) if self.scale is None else float(self.scale)
        if not scale > 0:
            raise DomainError(f"scale must be positive, got {scale}")
        object.__setattr__(self, "scale", scale)

    @property
    def d(self) -> int:
        return self.w_q.shape[0]

    @classmethod
    def identity(cls, d: int) -> "ProjectionSet":
        eye = np.eye(d)
        return cls(eye, eye, eye)

    @classmethod
    def random_orthogonal(cls, d: int, rng: RngHandle, tied_qk: bool = True) -> "ProjectionSet":
        """Seeded Haar-random orthogonal projections.

        With ``tied_qk`` the key projection equals the query projection, so
        logits reduce to scaled feature similarity.
        """

        def ortho(handle):
            q, r = np.linalg.qr(handle.normal((d, d)))
            return q * np.sign(np.diag(r))

        w_q = ortho(rng.fork("q"))
        w_k = w_q if tied_qk else ortho(rng.fork("k"))
        return cls(w_q, w_k, ortho(rng.fork("v")))


def inject_identity(
    state: FeatureSequence, bank_entry, masks: MaskSequence, params: ControlParams
) -> FeatureSequence:
    """Blend the bank entry into masked positions with weight lambda_id."""
    validate_pair(state, masks)
    bank_entry = np.asarray(bank_entry, dtype=np.float64)
    if bank_entry.shape != state.shape[1:]:
        raise ShapeError(f"bank entry shape {bank_entry.shape} differs from frame shape {state.shape[1:]}", "frame")
    lam = params.lambda_id
    s = state.data
    injected = (1.0 - lam) * s + lam * bank_entry[None]
    m = masks.expanded()
    return FeatureSequence(m * injected + (1.0 - m) * s)


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def _tokens(seq: FeatureSequence) -> np.ndarray:
    return seq.data.reshape(seq.T, seq.H * seq.W, seq.d)


def attention_weights(q_source: FeatureSequence, kv_source: FeatureSequence, proj: ProjectionSet) -> np.ndarray:
    """Row-stochastic ``(T, N, N)`` attention matrices, N = H*W tokens."""
    if q_source.shape != kv_source.shape:
        raise ShapeError(f"query source {q_source.shape} and key/value source {kv_source.shape} differ", "shape")
    if q_source.d != proj.d:
        raise ShapeError(f"features have d={q_source.d}, projections are {proj.d}x{proj.d}", "d")
    q = _tokens(q_source) @ proj.w_q
    k = _tokens(kv_source) @ proj.w_k
    with np.errstate(over="ignore", invalid="ignore"):
        logits = proj.scale * (q @ np.swapaxes(k, 1, 2))
    if not np.all(np.isfinite(logits)):
        raise NumericOverflowError("attention logits are non-finite")
    return softmax(logits)


def disentangled_attention(q_source: FeatureSequence, kv_source: FeatureSequence, proj: ProjectionSet) -> FeatureSequence:
    """softmax(scale * Q K^T) V per frame, queries from ``q_source``, keys/values from ``kv_source``.

    The result lives in value space (``kv_source @ w_v``).
    """
    weights = attention_weights(q_source, kv_source, proj)
    v = _tokens(kv_source) @ proj.w_v
    out = weights @ v
    return FeatureSequence(out.reshape(q_source.shape))


def self_attention(state: FeatureSequence, proj: ProjectionSet) -> FeatureSequence:
    return disentangled_attention(state, state, proj)
