"""Physics operator: temporal priors over the frame axis.

Frames are treated as a periodic 1-D lattice and each prior advances the
whole sequence through virtual time with an explicit update.  With
``insulated=True`` neighbours outside the mask are replaced by the current
frame (zero-flux boundary) and the deterministic part of the update is
multiplied by the current mask, so positions outside the subject never
receive subject information.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import (
    ControlParams,
    DomainError,
    FeatureSequence,
    MaskSequence,
    NumericOverflowError,
    OperatorSchedule,
    RngHandle,
    validate_pair,
)


class PriorKind(str, enum.Enum):
    IDENTITY = "ori"
    BURGERS = "burgers"
    WAVE = "wave"
    CONSERVATION = "conservation"
    ELASTICITY = "elasticity"
    HEAT = "heat"

    @property
    def two_level(self) -> bool:
        return self in (PriorKind.WAVE, PriorKind.ELASTICITY)


class FluxKind(str, enum.Enum):
    LINEAR = "linear"
    QUADRATIC = "quadratic"


@dataclass(frozen=True)
class PriorSpec:
    """Which update rule to run and its constants.

    ``wave_c``/``elastic_c`` left as ``None`` default to ``dtau * nu`` so the
    second-order priors are controlled by alpha like the heat prior.
    """

    kind: PriorKind = PriorKind.HEAT
    wave_c: float | None = None
    elastic_c: float | None = None
    flux: FluxKind = FluxKind.LINEAR
    flux_speed: float = 1.0
    insulated: bool = True

    def __post_init__(self):
        object.__setattr__(self, "kind", PriorKind(self.kind))
        object.__setattr__(self, "flux", FluxKind(self.flux))
        for name in ("wave_c", "elastic_c"):
            value = getattr(self, name)
            if value is not None and (not np.isfinite(value) or value < 0):
                raise DomainError(f"{name} must be a finite nonnegative real, got {value}")
        if not np.isfinite(self.flux_speed):
            raise DomainError(f"flux_speed must be finite, got {self.flux_speed}")

    def stiffness(self, params: ControlParams, schedule: OperatorSchedule) -> float:
        """The C (or C_e) of the two-level rules."""
        explicit = self.wave_c if self.kind is PriorKind.WAVE else self.elastic_c
        if explicit is not None:
            return explicit
        return schedule.dtau * params.nu

    def flux_fn(self, s: np.ndarray) -> np.ndarray:
        if self.flux is FluxKind.LINEAR:
            return self.flux_speed * s
        return 0.5 * s * s


ALL_PRIORS = tuple(PriorKind)


# -- stencil pieces ---------------------------------------------------------

def _shift(a: np.ndarray, k: int) -> np.ndarray:
    """Periodic shift along frames: ``_shift(a, -1)[t] == a[t + 1]``."""
    if k == -1:
        return np.concatenate((a[1:], a[:1]))
    return np.concatenate((a[-1:], a[:-1]))


def _neighbours(s: np.ndarray, m: np.ndarray | None) -> tuple[np.ndarray, np.ndarray]:
    """Effective (s'_{t+1}, s'_{t-1}) for every frame at once."""
    s_next = _shift(s, -1)
    s_prev = _shift(s, 1)
    if m is None:
        return s_next, s_prev
    m_next = _shift(m, -1)
    m_prev = _shift(m, 1)
    return m_next * s_next + (1.0 - m_next) * s, m_prev * s_prev + (1.0 - m_prev) * s


def effective_neighbor(features: FeatureSequence, masks: MaskSequence, t: int, direction: int) -> np.ndarray:
    """Neighbour of frame ``t`` in ``direction`` (+1/-1), replaced by frame ``t`` where masked out.

    Frame indexing wraps around.
    """
    validate_pair(features, masks)
    if direction not in (1, -1):
        raise DomainError(f"direction must be +1 or -1, got {direction}")
    T = features.T
    t = int(t) % T
    u = (t + direction) % T
    m = masks.data[u][..., None]
    return m * features.data[u] + (1.0 - m) * features.data[t]


def insulated_laplacian(features: FeatureSequence, masks: MaskSequence, t: int, gated: bool = False) -> np.ndarray:
    """Second difference over the frame axis at frame ``t`` with insulated neighbours.

    ``gated=True`` additionally multiplies by the frame's own mask.
    """
    s_t = features.data[int(t) % features.T]
    lap = effective_neighbor(features, masks, t, 1) - 2.0 * s_t + effective_neighbor(features, masks, t, -1)
    if gated:
        lap = masks.data[int(t) % features.T][..., None] * lap
    return lap


@dataclass(frozen=True, eq=False)
class NoiseField:
    sigma: np.ndarray  # (T, H, W)

    def expanded(self) -> np.ndarray:
        return self.sigma[..., None]


def build_noise_field(masks: MaskSequence, params: ControlParams) -> NoiseField:
    m = masks.data
    return NoiseField(m * params.sigma_s + (1.0 - m) * params.sigma_b)


# -- time stepping ----------------------------------------------------------

def _deterministic_update(kind, s, s_old, m, spec, params, schedule):
    """The increment s^{k+1} - s^k before gating and noise."""
    dtau = schedule.dtau
    if kind is PriorKind.IDENTITY:
        return None
    sp, sm = _neighbours(s, m)
    if kind is PriorKind.HEAT:
        return dtau * params.nu * (sp - 2.0 * s + sm)
    if kind is PriorKind.BURGERS:
        return -dtau * s * (sp - sm) / 2.0
    if kind is PriorKind.CONSERVATION:
        return -dtau * (spec.flux_fn(sp) - spec.flux_fn(sm)) / 2.0
    # wave / elasticity: s^{k+1} = 2 s^k - s^{k-1} + C lap
    c = spec.stiffness(params, schedule)
    return (s - s_old) + c * (sp - 2.0 * s + sm)


def _advance(state, prev_state, masks, spec, params, schedule, eps, iteration):
    s = state.data
    m = masks.expanded() if spec.insulated else None
    with np.errstate(over="ignore", invalid="ignore"):
        delta = _deterministic_update(
            spec.kind, s, None if prev_state is None else prev_state.data, m, spec, params, schedule
        )
        if delta is None:
            new = s.copy()
        else:
            if m is not None:
                delta = m * delta
            new = s + delta
        if eps is not None:
            sigma = build_noise_field(masks, params).expanded()
            new = new + np.sqrt(2.0 * schedule.dtau) * sigma * eps
    if not np.all(np.isfinite(new)):
        raise NumericOverflowError(f"{spec.kind.value} prior produced non-finite values at iteration {iteration}")
    return FeatureSequence(new)


def _check_step_inputs(state, prev_state, masks, spec, params, rng):
    validate_pair(state, masks)
    kind = spec.kind
    if kind.two_level:
        if prev_state is None:
            raise DomainError(f"{kind.value} prior needs the previous time level (prev_state)")
        if prev_state.shape != state.shape:
            raise DomainError(f"prev_state shape {prev_state.shape} differs from state {state.shape}")
    if params.noise_enabled and rng is None:
        raise DomainError("noise is enabled (sigma_s or sigma_b > 0) but no rng was given")


def step_prior(
    state: FeatureSequence,
    prev_state: FeatureSequence | None,
    masks: MaskSequence,
    spec: PriorSpec,
    params: ControlParams,
    schedule: OperatorSchedule,
    rng: RngHandle | None = None,
    *,
    iteration: int = 0,
) -> tuple[FeatureSequence, FeatureSequence]:
    """Advance one virtual-time step; returns ``(new_state, state)``.

    Wave and Elasticity need ``prev_state`` (the previous time level).  When
    either noise amplitude is positive, ``rng`` supplies the standard-normal
    draws and ``sqrt(2 dtau) * sigma_t * eps`` is added after the
    deterministic term, whatever the prior.
    """
    _check_step_inputs(state, prev_state, masks, spec, params, rng)
    eps = rng.normal(state.shape) if params.noise_enabled else None
    return _advance(state, prev_state, masks, spec, params, schedule, eps, iteration), state


def run_physics_operator(
    state: FeatureSequence,
    masks: MaskSequence,
    spec: PriorSpec,
    params: ControlParams,
    schedule: OperatorSchedule,
    rng: RngHandle | None = None,
) -> FeatureSequence:
    """Apply ``schedule.n_iters`` steps of the prior.

    The previous time level starts equal to ``state`` (zero initial
    velocity).  With noise enabled, one ``(n_iters, T, H, W, d)`` block is
    drawn from ``rng`` and iteration k uses slice k.
    """
    _check_step_inputs(state, state, masks, spec, params, rng)
    n = schedule.n_iters
    eps = rng.normal((n,) + state.shape) if params.noise_enabled else None
    current, previous = state, state
    for k in range(n):
        current, previous = (
            _advance(current, previous, masks, spec, params, schedule, None if eps is None else eps[k], k),
            current,
        )
    return current
