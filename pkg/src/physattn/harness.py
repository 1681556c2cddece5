"""Desk-scale sampling loop with a synthetic denoiser.

The loop mirrors one sampling step of the real pipeline:

1. collect a saliency map per frame and keep a recent window,
2. threshold the window average with Otsu to get the subject masks,
3. smooth the current states with the physics operator (queries),
4. blend the ID bank into masked positions (keys and values),
5. run per-frame attention and a residual mix back into the states,
6. contract toward the scenario target and add annealed noise.

The "target" plays the role of what an unmodified model would converge to:
a fixed identity plus per-frame action offsets plus identity drift, so
coherence interventions show up as a smoother subject trajectory.
"""

from __future__ import annotations

import dataclasses
import functools
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .attention import IdBank, ProjectionSet, disentangled_attention, inject_identity
from .core import (
    BaseConstants,
    ControlParams,
    DomainError,
    FeatureSequence,
    MaskSequence,
    NumericOverflowError,
    OperatorSchedule,
    RngHandle,
    derive_params,
)
from .masking import DEFAULT_BINS, AttentionMapStack, iou, masks_from_stacks
from .metrics import MetricConfig, MetricReport, evaluate
from .priors import ALL_PRIORS, PriorKind, PriorSpec, run_physics_operator


@dataclass(frozen=True)
class StoryScenario:
    """Synthetic story: one character over T frames.

    ``subject_region`` is ``(row0, row1, col0, col1)`` (half-open) on the
    feature grid, either one rectangle for all frames or one per frame.
    Identity, action offsets and drift are drawn from ``seed`` unless
    ``identity_vector`` is given explicitly.
    """

    T: int = 8
    H: int = 4
    W: int = 4
    d: int = 16
    identity_scale: float = 4.0
    identity_vector: tuple | None = None
    action_amplitude: float = 6.0
    scene_amplitude: float = 4.0
    drift_amplitude: float = 3.0
    subject_region: tuple = (1, 3, 1, 4)
    saliency_snr: float = 5.0
    saliency_upsample: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.T < 3:
            raise DomainError(f"scenarios need T >= 3 for the metrics, got T={self.T}")
        if min(self.H, self.W, self.d) < 1:
            raise DomainError("H, W and d must be >= 1")
        if self.drift_amplitude < 0 or self.action_amplitude < 0 or self.scene_amplitude < 0:
            raise DomainError("amplitudes must be nonnegative")
        if self.saliency_upsample < 1:
            raise DomainError("saliency_upsample must be >= 1")
        regions = self.regions()
        if len(regions) != self.T:
            raise DomainError(f"got {len(regions)} subject regions for T={self.T} frames")
        for r0, r1, c0, c1 in regions:
            r0, r1 = max(r0, 0), min(r1, self.H)
            c0, c1 = max(c0, 0), min(c1, self.W)
            if r1 <= r0 or c1 <= c0:
                raise DomainError(f"subject region {(r0, r1, c0, c1)} is empty on a {self.H}x{self.W} grid")
        if self.identity_vector is not None and len(self.identity_vector) != self.d:
            raise DomainError(f"identity_vector has {len(self.identity_vector)} entries, d={self.d}")

    def regions(self) -> list[tuple[int, int, int, int]]:
        reg = self.subject_region
        if len(reg) == 4 and all(isinstance(v, (int, np.integer)) for v in reg):
            return [tuple(int(v) for v in reg)] * self.T
        return [tuple(int(v) for v in r) for r in reg]

    def with_seed(self, seed: int) -> "StoryScenario":
        return dataclasses.replace(self, seed=int(seed))

    @property
    def rng(self) -> RngHandle:
        return RngHandle(self.seed)


@dataclass(frozen=True)
class DenoiserConfig:
    """Synthetic stand-in for the network plus scheduler.

    ``eta`` is the contraction rate toward the target, ``attn_mix`` the
    residual weight of the attention output, and ``noise`` the per-element
    noise at the first step, annealed linearly to ``noise / L``.
    """

    eta: float = 0.2
    attn_mix: float = 0.5
    noise: float = 0.5
    init_scale: float = 1.0
    window: int = 5
    bins: int = DEFAULT_BINS

    def __post_init__(self):
        if not (0 < self.eta <= 1):
            raise DomainError(f"eta must lie in (0, 1], got {self.eta}")
        if not (0 <= self.attn_mix <= 1):
            raise DomainError(f"attn_mix must lie in [0, 1], got {self.attn_mix}")
        if self.noise < 0 or self.init_scale < 0:
            raise DomainError("noise amplitudes must be nonnegative")
        if self.window < 1:
            raise DomainError("window must be >= 1")


@dataclass
class SynthesizedStory:
    target: FeatureSequence
    stacks: list
    bank: IdBank
    truth: MaskSequence


@dataclass
class RunRecord:
    scenario_seed: int
    alpha: float
    prior: str
    steps: list = field(default_factory=list)
    final: MetricReport | None = None
    background_change: float | None = None
    status: str = "ok"
    message: str = ""
    mask_iou: float | None = None
    final_features: FeatureSequence | None = None
    seconds: float = 0.0

    @property
    def diverged(self) -> bool:
        return self.status == "diverged"


def ground_truth_masks(scenario: StoryScenario, scale: int = 1) -> MaskSequence:
    masks = np.zeros((scenario.T, scenario.H * scale, scenario.W * scale))
    for t, (r0, r1, c0, c1) in enumerate(scenario.regions()):
        masks[t, max(r0, 0) * scale : min(r1, scenario.H) * scale, max(c0, 0) * scale : min(c1, scenario.W) * scale] = 1.0
    return MaskSequence(masks)


def identity_vector(scenario: StoryScenario) -> np.ndarray:
    if scenario.identity_vector is not None:
        return np.asarray(scenario.identity_vector, dtype=np.float64)
    return scenario.identity_scale * scenario.rng.fork("identity").normal(scenario.d)


def action_offsets(scenario: StoryScenario) -> np.ndarray:
    """Per-frame offsets: a smooth pose cycle on the subject, a new scene vector per frame elsewhere."""
    T, d = scenario.T, scenario.d
    rng = scenario.rng.fork("actions")
    basis = rng.fork("pose").normal((2, d)) / np.sqrt(2.0)
    phase = 2.0 * np.pi * np.arange(T) / T
    pose = scenario.action_amplitude * (np.cos(phase)[:, None] * basis[0] + np.sin(phase)[:, None] * basis[1])
    scenes = scenario.scene_amplitude * rng.fork("scene").normal((T, d))
    truth = ground_truth_masks(scenario).expanded()
    return truth * pose[:, None, None, :] + (1.0 - truth) * scenes[:, None, None, :]


def drift(scenario: StoryScenario) -> np.ndarray:
    """Per-frame identity drift vectors, shape (T, d)."""
    return scenario.drift_amplitude * scenario.rng.fork("drift").normal((scenario.T, scenario.d))


def saliency_maps(scenario: StoryScenario, step: int) -> list[np.ndarray]:
    """One nonnegative saliency map per frame at ``saliency_upsample`` times the feature resolution."""
    up = scenario.saliency_upsample
    truth = ground_truth_masks(scenario, up).data
    noise = scenario.rng.fork("saliency").fork(step).normal(truth.shape)
    return list(np.abs(scenario.saliency_snr * truth + noise))


def synthesize_scenario(scenario: StoryScenario, steps: int = 1) -> SynthesizedStory:
    """Target features, an initial saliency window, an ID bank of ``steps`` entries and the true masks."""
    ident = identity_vector(scenario)
    truth = ground_truth_masks(scenario)
    m = truth.expanded()
    subject = ident[None, :] + drift(scenario)
    target = m * subject[:, None, None, :] + action_offsets(scenario)
    stacks = [AttentionMapStack((sal,)) for sal in saliency_maps(scenario, 0)]
    grid = np.broadcast_to(ident, (scenario.H, scenario.W, scenario.d))
    bank = IdBank(tuple(grid for _ in range(max(int(steps), 1))))
    return SynthesizedStory(FeatureSequence(target), stacks, bank, truth)


def subject_means(features: FeatureSequence, masks: MaskSequence) -> FeatureSequence:
    """Mean feature vector over each frame's masked positions (whole frame if the mask is empty)."""
    s = features.data
    out = np.empty((features.T, features.d))
    for t in range(features.T):
        sel = masks.data[t] > 0.5
        out[t] = s[t][sel].mean(axis=0) if sel.any() else s[t].reshape(-1, features.d).mean(axis=0)
    return FeatureSequence.from_vectors(out)


@functools.lru_cache(maxsize=256)
def mask_schedule(scenario: StoryScenario, L: int, window: int, bins: int) -> tuple[tuple, tuple]:
    """Otsu masks for every sampling step and their IoU with the true region.

    Saliency does not depend on the evolving features, so arms that share a
    scenario seed share masks; the result is cached.
    """
    truth = ground_truth_masks(scenario)
    stacks = [AttentionMapStack((sal,)) for sal in saliency_maps(scenario, 0)]
    masks, ious = [], []
    for i in range(L):
        if i > 0:
            stacks = [st.push(m, window) for st, m in zip(stacks, saliency_maps(scenario, i))]
        m = masks_from_stacks(stacks, (scenario.H, scenario.W), bins)
        masks.append(m)
        ious.append(float(np.mean([iou(a, b) for a, b in zip(m.data, truth.data)])))
    return tuple(masks), tuple(ious)


def default_projections(scenario: StoryScenario) -> ProjectionSet:
    return ProjectionSet.random_orthogonal(scenario.d, scenario.rng.fork("projections"))


def run_algorithm1(
    scenario: StoryScenario,
    params: ControlParams,
    spec: PriorSpec,
    schedule: OperatorSchedule,
    L: int,
    proj: ProjectionSet | None = None,
    *,
    metrics: MetricConfig = MetricConfig(),
    denoiser: DenoiserConfig = DenoiserConfig(),
    intervene: bool = True,
) -> RunRecord:
    """Run the L-step sampling loop; ``intervene=False`` gives the plain self-attention baseline.

    Raises :class:`NumericOverflowError` if the state stops being finite.
    """
    if L < 1:
        raise DomainError(f"L must be >= 1, got {L}")
    started = time.perf_counter()
    story = synthesize_scenario(scenario, L)
    if proj is None:
        proj = default_projections(scenario)
    target = story.target.data
    root = scenario.rng
    truth = story.truth
    background = 1.0 - truth.expanded()
    bg_count = background.sum() * scenario.d

    x = denoiser.init_scale * root.fork("init").normal(target.shape)
    mask_steps, ious = mask_schedule(scenario, L, denoiser.window, denoiser.bins)
    record = RunRecord(scenario.seed, params.alpha, spec.kind.value)
    changes = []
    for i, level in enumerate(range(L, 0, -1)):
        masks = mask_steps[i]
        state = FeatureSequence(x)
        if intervene:
            phys = run_physics_operator(state, masks, spec, params, schedule, root.fork("physics").fork(level))
            ident = inject_identity(state, story.bank[L - level], masks, params)
        else:
            phys = ident = state
        with np.errstate(over="ignore", invalid="ignore"):
            attended = disentangled_attention(phys, ident, proj).data @ proj.w_v.T
            h = (1.0 - denoiser.attn_mix) * phys.data + denoiser.attn_mix * attended
            x_new = h + denoiser.eta * (target - h)
            if denoiser.noise > 0:
                x_new = x_new + denoiser.noise * (level / L) * root.fork("denoiser").fork(level).normal(x.shape)
        if not np.all(np.isfinite(x_new)):
            raise NumericOverflowError(f"state became non-finite at sampling step {i} ({spec.kind.value} prior)")
        if bg_count > 0:
            changes.append(float(np.sum(np.abs(x_new - x) * background) / bg_count))
        x = x_new
        with np.errstate(over="ignore", invalid="ignore"):
            report = evaluate(subject_means(FeatureSequence(x), masks), metrics, cosine=False)
        if not (np.isfinite(report.R) and np.isfinite(report.D)):
            raise NumericOverflowError(f"metrics overflowed at sampling step {i} ({spec.kind.value} prior)")
        record.steps.append(report)

    final = FeatureSequence(x)
    record.final_features = final
    record.final = evaluate(subject_means(final, masks), metrics, cosine=_nonzero_frames(final, masks))
    record.background_change = float(np.mean(changes)) if changes else None
    record.mask_iou = float(np.mean(ious))
    record.seconds = time.perf_counter() - started
    return record


def _nonzero_frames(features, masks) -> bool:
    return bool(np.all(np.linalg.norm(subject_means(features, masks).vectors(), axis=1) > 0))


def run_guarded(scenario, params, spec, schedule, L, proj=None, **kwargs) -> RunRecord:
    """Like :func:`run_algorithm1` but records divergence instead of raising."""
    try:
        return run_algorithm1(scenario, params, spec, schedule, L, proj, **kwargs)
    except NumericOverflowError as exc:
        return RunRecord(scenario.seed, params.alpha, spec.kind.value, status="diverged", message=str(exc))


def _map(fn, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def ablation_priors(
    scenario: StoryScenario,
    params: ControlParams,
    schedule: OperatorSchedule,
    L: int,
    *,
    seeds: Iterable[int] | None = None,
    base_spec: PriorSpec = PriorSpec(),
    kinds: Sequence[PriorKind] = ALL_PRIORS,
    workers: int = 1,
    **kwargs,
) -> list[RunRecord]:
    """One run per (prior, seed), priors in ALL_PRIORS order, seeds in the given order."""
    seeds = [scenario.seed] if seeds is None else list(seeds)
    jobs = [(dataclasses.replace(base_spec, kind=kind), seed) for kind in kinds for seed in seeds]
    return _map(
        lambda job: run_guarded(scenario.with_seed(job[1]), params, job[0], schedule, L, **kwargs), jobs, workers
    )


def sweep_alpha(
    scenario: StoryScenario,
    alphas: Sequence[float],
    spec: PriorSpec,
    schedule: OperatorSchedule,
    L: int,
    *,
    constants: BaseConstants = BaseConstants(),
    seeds: Iterable[int] | None = None,
    workers: int = 1,
    **kwargs,
) -> list[RunRecord]:
    """One run per (alpha, seed), alphas in the given order."""
    params = [derive_params(a, constants) for a in alphas]
    seeds = [scenario.seed] if seeds is None else list(seeds)
    jobs = [(p, seed) for p in params for seed in seeds]
    return _map(lambda job: run_guarded(scenario.with_seed(job[1]), job[0], spec, schedule, L, **kwargs), jobs, workers)


def summarize(records: Sequence[RunRecord], key) -> dict:
    """Mean R, D, S, background change per group among non-diverged runs."""
    groups: dict = {}
    for rec in records:
        groups.setdefault(key(rec), []).append(rec)
    out = {}
    for k, recs in groups.items():
        ok = [r for r in recs if not r.diverged]
        entry = {"runs": len(recs), "diverged": len(recs) - len(ok)}
        if ok:
            entry.update(
                R=float(np.mean([r.final.R for r in ok])),
                D=float(np.mean([r.final.D for r in ok])),
                S=float(np.mean([r.final.S for r in ok])),
                background_change=float(np.mean([r.background_change for r in ok])),
            )
        out[k] = entry
    return out
