"""Targeted universal perturbation: iterative aggregation with periodic projection.

A single vector r is grown by solving, for each working-set point the
model does not yet send to the target class, a minimal targeted
perturbation of the point as currently perturbed, and adding it to r.
Every k-th processed point within a pass (and at every pass end) r is
clamped back onto the eta-ball.  The loop stops once the measured
success rate on the working set reaches 1 - delta, or the pass budget
runs out (best-effort result, converged=False).
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import arrayio
from .attacks import AttackConfig, materialize, minimal_targeted, project_linf
from .data import LabeledDataset
from .errors import ConfigError, InfeasibleAttackError, PreconditionError
from .nn import ClassifierModel, predict
from .rng import substream

log = logging.getLogger(__name__)


@dataclass
class TupConfig:
    target: int
    eta: float = 0.8
    delta: float = 0.1
    k: int | None = None            # None means k = |X|
    max_passes: int = 10
    solver: AttackConfig = field(
        # Budget ceiling 1.0 spans the whole pixel range; a coarser bisection
        # than the solver default is enough here because the projection step,
        # not per-point minimality, dominates the quality of r.
        default_factory=lambda: AttackConfig(epsilon=1.0, max_iters=30, bisect_tol=0.01)
    )
    seed: int = 0
    apply_projection: bool = True

    def __post_init__(self):
        if not (0.0 < self.delta <= 1.0):
            raise ConfigError(f"delta must lie in (0, 1], got {self.delta}")
        if self.eta <= 0:
            raise ConfigError(f"eta must be > 0, got {self.eta}")
        if self.k is not None and self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.max_passes < 1:
            raise ConfigError(f"max_passes must be >= 1, got {self.max_passes}")


@dataclass
class PassStats:
    solves: int
    infeasible: int
    projections: int
    success_after: float


@dataclass
class TupResult:
    r: np.ndarray
    final_success_on_X: float
    passes_used: int
    success_trace: list[float]      # success before pass 1, then after each pass
    pass_stats: list[PassStats]
    converged: bool
    config: TupConfig

    @property
    def projections_total(self) -> int:
        return sum(p.projections for p in self.pass_stats)


def success_rate(model: ClassifierModel, dataset: LabeledDataset, r: np.ndarray,
                 target: int, clip_to_valid: bool = True) -> float:
    """Fraction of the set whose perturbed images are classified as the target."""
    if len(dataset) == 0:
        raise PreconditionError("dataset must be nonempty")
    preds = predict(model, materialize(dataset.images + r, clip_to_valid))
    return float(np.mean(preds == target))


def compute_tup(model: ClassifierModel, dataset: LabeledDataset, cfg: TupConfig) -> TupResult:
    """Run the aggregation loop; deterministic for fixed (model, dataset, cfg).

    The loop is inherently sequential: each inner solve depends on the
    current r, so per-point work must not be parallelized across the
    aggregation order.  Success measurement at pass boundaries is batched.
    """
    if len(dataset) == 0:
        raise PreconditionError("working set must be nonempty")
    clip = cfg.solver.clip_to_valid
    k = cfg.k if cfg.k is not None else len(dataset)
    images = dataset.images

    initial_preds = predict(model, images)
    n_pre_target = int(np.sum(initial_preds == cfg.target))
    if n_pre_target:
        warnings.warn(
            f"{n_pre_target} of {len(dataset)} working-set points are already "
            f"classified as target {cfg.target}",
            stacklevel=2,
        )

    r = np.zeros(model.input_shape, dtype=model.dtype)
    succ = success_rate(model, dataset, r, cfg.target, clip)
    trace = [succ]
    stats: list[PassStats] = []
    passes = 0
    while succ < 1.0 - cfg.delta and passes < cfg.max_passes:
        order = substream(cfg.seed, f"tup/shuffle/{passes}").permutation(len(dataset))
        solves = infeasible = projections = 0
        for pos, idx in enumerate(order, start=1):
            x_pert = materialize(images[idx] + r, clip)
            if int(predict(model, x_pert[None])[0]) == cfg.target:
                continue
            try:
                inner = minimal_targeted(model, x_pert, cfg.target, cfg.solver)
            except InfeasibleAttackError:
                infeasible += 1
                continue
            r = r + inner.delta
            solves += 1
            # mid-pass clamp per the update rule; the final position is
            # covered by the unconditional pass-end clamp below
            if cfg.apply_projection and pos % k == 0 and pos != len(dataset):
                r = project_linf(r, cfg.eta)
                projections += 1
        if cfg.apply_projection:
            r = project_linf(r, cfg.eta)
            projections += 1
        passes += 1
        succ = success_rate(model, dataset, r, cfg.target, clip)
        trace.append(succ)
        stats.append(PassStats(solves, infeasible, projections, succ))
        log.info(
            "pass %d: success %.3f (%d solves, %d infeasible, %d projections)",
            passes, succ, solves, infeasible, projections,
        )
    converged = succ >= 1.0 - cfg.delta
    if not converged:
        log.warning("pass budget exhausted at success %.3f (target %.3f)",
                    succ, 1.0 - cfg.delta)
    return TupResult(
        r=r,
        final_success_on_X=trace[-1],
        passes_used=passes,
        success_trace=trace,
        pass_stats=stats,
        converged=converged,
        config=cfg,
    )


PERTURBATION_KIND = "perturbation"


def save_tup(result: TupResult, path, model_hash: str = "") -> None:
    """Persist r in the array container plus a JSON sidecar of run metadata."""
    cfg = result.config
    arrayio.save(path, {"r": result.r}, PERTURBATION_KIND, {"target": cfg.target})
    sidecar = {
        "target": cfg.target,
        "eta": cfg.eta,
        "delta": cfg.delta,
        "k": cfg.k,
        "seed": cfg.seed,
        "apply_projection": cfg.apply_projection,
        "model_hash": model_hash,
        "converged": result.converged,
        "passes_used": result.passes_used,
        "final_success_on_X": result.final_success_on_X,
        "success_trace": result.success_trace,
    }
    with open(str(path) + ".json", "w", encoding="utf-8") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
        f.write("\n")


def load_tup(path) -> tuple[np.ndarray, dict]:
    """Load a saved perturbation; returns (r, sidecar metadata or {})."""
    arrays, _, manifest = arrayio.load(path)
    meta = {}
    try:
        with open(str(path) + ".json", "r", encoding="utf-8") as f:
            meta = json.load(f)
    except FileNotFoundError:
        meta = dict(manifest.get("meta", {}))
    return arrays["r"], meta


def save_perturbation(delta: np.ndarray, path, meta: dict | None = None) -> None:
    """Persist a bare perturbation (e.g. from the untargeted baseline)."""
    arrayio.save(path, {"r": delta}, PERTURBATION_KIND, meta or {})


def load_perturbation(path) -> np.ndarray:
    arrays, _, _ = arrayio.load(path)
    return arrays["r"]
