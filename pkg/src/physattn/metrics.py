"""Sequence-level coherence and dynamism scores.

All metrics flatten each frame to one vector and use open (non-periodic)
boundaries along the frame axis.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .core import DomainError, FeatureSequence


@dataclass(frozen=True)
class MetricConfig:
    gamma_r: float = 0.1
    gamma_d: float = 0.1
    p: float = 4.0

    def __post_init__(self):
        if not (self.gamma_r > 0 and self.gamma_d > 0):
            raise DomainError("gamma_r and gamma_d must be positive")
        if not self.p >= 1:
            raise DomainError(f"p must be >= 1, got {self.p}")


class Scores(NamedTuple):
    R_hat: float
    D_hat: float
    S: float


@dataclass(frozen=True)
class MetricReport:
    R: float
    D: float
    R_hat: float
    D_hat: float
    S: float
    adjacent_cosine: float | None
    T: int

    def to_dict(self) -> dict:
        return asdict(self)


CSV_COLUMNS = ("run_id", "alpha", "prior", "T", "R", "D", "R_hat", "D_hat", "S", "adjacent_cosine", "seed")


def _vectors(f) -> np.ndarray:
    if isinstance(f, FeatureSequence):
        return f.vectors()
    arr = np.asarray(f, dtype=np.float64)
    if arr.ndim == 0:
        raise DomainError("expected a sequence of frames, got a scalar")
    return arr.reshape(arr.shape[0], int(np.prod(arr.shape[1:])))


def temporal_regularity(f) -> float:
    """Mean L2 norm of interior second differences (T-2 terms)."""
    v = _vectors(f)
    if v.shape[0] < 3:
        raise DomainError(f"temporal regularity needs T >= 3, got T={v.shape[0]}")
    second = v[2:] - 2.0 * v[1:-1] + v[:-2]
    return float(np.mean(np.linalg.norm(second, axis=1)))


def first_order_variation(f) -> float:
    v = _vectors(f)
    if v.shape[0] < 2:
        raise DomainError(f"first-order variation needs T >= 2, got T={v.shape[0]}")
    return float(np.mean(np.linalg.norm(v[1:] - v[:-1], axis=1)))


def storytelling_quality(R: float, D: float, cfg: MetricConfig = MetricConfig()) -> Scores:
    """Bounded scores and their power-mean soft-min (exponent -p).

    S is defined as 0 when the dynamism score is 0.
    """
    if R < 0 or D < 0:
        raise DomainError("R and D must be nonnegative")
    r_hat = math.exp(-cfg.gamma_r * R)
    d_hat = -math.expm1(-cfg.gamma_d * D)
    lo, hi = min(r_hat, d_hat), max(r_hat, d_hat)
    if lo <= 0.0:
        return Scores(r_hat, d_hat, 0.0)
    # ((a^-p + b^-p)/2)^(-1/p) factored around the minimum to avoid overflow
    ratio = (lo / hi) ** cfg.p
    s = lo * ((1.0 + ratio) / 2.0) ** (-1.0 / cfg.p)
    return Scores(r_hat, d_hat, s)


def adjacent_similarity(f) -> float:
    v = _vectors(f)
    if v.shape[0] < 2:
        raise DomainError(f"adjacent similarity needs T >= 2, got T={v.shape[0]}")
    norms = np.linalg.norm(v, axis=1)
    if np.any(norms == 0):
        raise DomainError(f"zero-norm frame at index {int(np.argmin(norms))}")
    cos = np.sum(v[1:] * v[:-1], axis=1) / (norms[1:] * norms[:-1])
    return float(np.mean(np.clip(cos, -1.0, 1.0)))


def evaluate(f, cfg: MetricConfig = MetricConfig(), cosine: bool = True) -> MetricReport:
    v = _vectors(f)
    R = temporal_regularity(v)
    D = first_order_variation(v)
    scores = storytelling_quality(R, D, cfg)
    cos = adjacent_similarity(v) if cosine else None
    return MetricReport(R, D, scores.R_hat, scores.D_hat, scores.S, cos, v.shape[0])


def format_number(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


def report_row(report: MetricReport | None, *, run_id: str, alpha: float, prior: str, seed: int, T: int | None = None) -> dict:
    row = {"run_id": run_id, "alpha": format_number(alpha), "prior": prior, "seed": str(seed)}
    if report is None:
        row.update({k: "" for k in ("R", "D", "R_hat", "D_hat", "S", "adjacent_cosine")})
        row["T"] = "" if T is None else str(T)
    else:
        row.update(
            T=str(report.T),
            R=format_number(report.R),
            D=format_number(report.D),
            R_hat=format_number(report.R_hat),
            D_hat=format_number(report.D_hat),
            S=format_number(report.S),
            adjacent_cosine=format_number(report.adjacent_cosine),
        )
    return row


def rows_to_csv(rows, columns=CSV_COLUMNS) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\r\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: row.get(k, "") for k in columns})
    return buf.getvalue()
