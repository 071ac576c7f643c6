"""Sequential Bayesian optimization over a bounded search space.

Minimizes a black-box objective with a GP surrogate and Expected
Improvement, evaluated on seeded low-discrepancy candidates plus a local
refinement pattern around the incumbent.  All randomness is derived from
the state's seed, so a run is exactly reproducible.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, IO, Iterable

import numpy as np
from scipy.stats import norm, qmc

from . import gp
from .eggmodel import UncookableError
from .params import PARAM_NAMES, EggParameters, from_dict

logger = logging.getLogger(__name__)

N_CANDIDATES_LOG2 = 12           # 4096 acquisition candidates
N_INITIAL = 3                    # space-filling points before the model kicks in
UNCOOKABLE_FALLBACK_PENALTY = 1e6


class InfeasiblePointError(ValueError):
    pass


@dataclass(frozen=True)
class Dimension:
    name: str
    lower: float
    upper: float
    fixed_value: float | None = None

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"{self.name}: lower bound must be below upper bound")
        if self.fixed_value is not None and not (
            self.lower <= self.fixed_value <= self.upper
        ):
            raise ValueError(f"{self.name}: fixed value outside bounds")


@dataclass(frozen=True)
class SearchSpace:
    dimensions: tuple[Dimension, ...]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.dimensions)

    @property
    def bounds(self) -> tuple[tuple[float, float], ...]:
        return tuple((d.lower, d.upper) for d in self.dimensions)

    @property
    def free_indices(self) -> tuple[int, ...]:
        return tuple(i for i, d in enumerate(self.dimensions) if d.fixed_value is None)

    def fixed_template(self) -> np.ndarray:
        """Vector with fixed values filled in and NaN in free slots."""
        return np.array(
            [d.fixed_value if d.fixed_value is not None else np.nan for d in self.dimensions]
        )

    def validate_point(self, x: np.ndarray, atol: float = 1e-9) -> None:
        x = np.asarray(x, dtype=float)
        if x.shape != (len(self.dimensions),):
            raise InfeasiblePointError(f"expected {len(self.dimensions)} coordinates")
        for i, d in enumerate(self.dimensions):
            if not (d.lower - atol <= x[i] <= d.upper + atol):
                raise InfeasiblePointError(
                    f"{d.name}={x[i]:g} outside [{d.lower:g}, {d.upper:g}]"
                )
            if d.fixed_value is not None and abs(x[i] - d.fixed_value) > atol:
                raise InfeasiblePointError(
                    f"{d.name} is fixed at {d.fixed_value:g}, got {x[i]:g}"
                )


def egg_search_space(
    fixed: dict[str, float] | None = None,
    bounds: dict[str, tuple[float, float]] | None = None,
) -> SearchSpace:
    """Search space over the six egg parameters in canonical field order."""
    from .params import BOUNDS

    fixed = fixed or {}
    bounds = bounds or {}
    dims = []
    for name in PARAM_NAMES:
        lo, hi = bounds.get(name, BOUNDS[name])
        dims.append(Dimension(name, lo, hi, fixed.get(name)))
    return SearchSpace(tuple(dims))


def params_from_vector(space: SearchSpace, x: np.ndarray) -> EggParameters:
    if space.names != PARAM_NAMES:
        raise ValueError("search space does not cover the egg parameters")
    return from_dict(dict(zip(space.names, (float(v) for v in x))))


@dataclass(frozen=True)
class BoState:
    space: SearchSpace
    observations: tuple[tuple[tuple[float, ...], float], ...] = ()
    model: gp.GpModel | None = None
    rng_seed: int = 0

    @property
    def iteration(self) -> int:
        return len(self.observations)

    @property
    def incumbent(self) -> tuple[tuple[float, ...], float] | None:
        if not self.observations:
            return None
        return min(self.observations, key=lambda ob: ob[1])


@dataclass(frozen=True)
class Recommendation:
    values: EggParameters
    predicted_objective: gp.Posterior


def _noise_floor(y: np.ndarray) -> float:
    return 1e-6 * max(float(np.var(y)), 1e-6)


def observe(state: BoState, x: Iterable[float], y: float) -> BoState:
    """Record one evaluation and refit the surrogate."""
    xv = np.asarray(list(x), dtype=float)
    state.space.validate_point(xv)
    if not math.isfinite(y):
        raise InfeasiblePointError(f"objective value must be finite, got {y!r}")
    observations = state.observations + ((tuple(float(v) for v in xv), float(y)),)
    model = state.model
    if len(observations) >= 2:
        xs = np.array([ob[0] for ob in observations])
        ys = np.array([ob[1] for ob in observations])
        model = gp.fit(xs, ys, state.space.bounds, noise_floor=_noise_floor(ys))
    return replace(state, observations=observations, model=model)


def _sobol(seed_parts: tuple[int, ...], d: int) -> qmc.Sobol:
    rng = np.random.default_rng(np.random.SeedSequence(seed_parts))
    return qmc.Sobol(d=d, scramble=True, seed=rng)


def _fill_free(space: SearchSpace, unit: np.ndarray) -> np.ndarray:
    """Expand unit-cube samples over the free dims into full vectors."""
    free = space.free_indices
    out = np.tile(space.fixed_template(), (unit.shape[0], 1))
    for j, i in enumerate(free):
        lo, hi = space.dimensions[i].lower, space.dimensions[i].upper
        out[:, i] = lo + unit[:, j] * (hi - lo)
    return out


def _space_filling_point(state: BoState) -> np.ndarray:
    sampler = _sobol((state.rng_seed,), len(state.space.free_indices))
    if state.iteration:
        sampler.fast_forward(state.iteration)
    unit = sampler.random(1)
    return _fill_free(state.space, unit)[0]


def expected_improvement(mu: np.ndarray, std: np.ndarray, best_y: float) -> np.ndarray:
    """EI for minimization; collapses to max(best - mu, 0) at zero variance."""
    imp = best_y - mu
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(std > 0, imp / np.where(std > 0, std, 1.0), 0.0)
        ei = np.where(std > 0, imp * norm.cdf(z) + std * norm.pdf(z), np.maximum(imp, 0.0))
    return ei


def propose(state: BoState) -> np.ndarray:
    """Next point to evaluate; deterministic for a given state."""
    space = state.space
    free = space.free_indices
    if not free:
        logger.info("all dimensions fixed; proposing the single feasible point")
        return space.fixed_template()
    if state.model is None or state.iteration < 2:
        return _space_filling_point(state)

    sampler = _sobol((state.rng_seed, 1 + state.iteration), len(free))
    unit = sampler.random_base2(N_CANDIDATES_LOG2)
    candidates = _fill_free(space, unit)

    incumbent_x, best_y = state.incumbent
    incumbent_x = np.asarray(incumbent_x)
    cloud = _incumbent_cloud(state, incumbent_x)
    local = _local_candidates(space, incumbent_x)
    candidates = np.vstack([candidates, cloud, local])

    mu, std = gp.predict_arrays(state.model, candidates)
    ei = expected_improvement(mu, std, best_y)
    best_idx = int(np.argmax(ei))
    winner = candidates[best_idx]
    best_ei = ei[best_idx]

    for _ in range(2):  # coordinate polish around the current winner
        refined = _local_candidates(space, winner)
        if not refined.size:
            break
        mu_r, std_r = gp.predict_arrays(state.model, refined)
        ei_r = expected_improvement(mu_r, std_r, best_y)
        idx = int(np.argmax(ei_r))
        if ei_r[idx] <= best_ei:
            break
        winner, best_ei = refined[idx], ei_r[idx]
    return winner.copy()


def _incumbent_cloud(state: BoState, center: np.ndarray, n_log2: int = 8) -> np.ndarray:
    """Sobol samples in a box around the incumbent that shrinks over time."""
    space = state.space
    free = space.free_indices
    sampler = _sobol((state.rng_seed, 7919 + state.iteration), len(free))
    unit = sampler.random_base2(n_log2)
    out = np.tile(center, (unit.shape[0], 1))
    half_width = max(0.002, 0.3 * 0.85**state.iteration)
    for j, i in enumerate(free):
        d = space.dimensions[i]
        width = half_width * (d.upper - d.lower)
        lo = max(d.lower, center[i] - width)
        hi = min(d.upper, center[i] + width)
        out[:, i] = lo + unit[:, j] * (hi - lo)
    return out


def _local_candidates(space: SearchSpace, center: np.ndarray) -> np.ndarray:
    rows = []
    for i in space.free_indices:
        lo, hi = space.dimensions[i].lower, space.dimensions[i].upper
        for frac in (0.05, 0.015, 0.004):
            for sign in (1.0, -1.0):
                x = center.copy()
                x[i] = float(np.clip(x[i] + sign * frac * (hi - lo), lo, hi))
                rows.append(x)
    return np.array(rows) if rows else np.empty((0, len(space.dimensions)))


def run(
    objective: Callable[[EggParameters], float],
    space: SearchSpace,
    budget: int,
    seed: int,
) -> tuple[list[tuple[EggParameters, float]], Recommendation]:
    """Optimize the egg objective for `budget` evaluations.

    Uncookable candidates are recorded with a penalty of twice the worst
    observed loss so the surrogate learns to avoid the region.
    """
    if budget < 3:
        raise ValueError("budget must be at least 3")
    state = BoState(space=space, rng_seed=seed)
    trace: list[tuple[EggParameters, float]] = []
    for _ in range(budget):
        if state.iteration < N_INITIAL and state.space.free_indices:
            x = _space_filling_point(state)
        else:
            x = propose(state)
        p = params_from_vector(space, x)
        try:
            y = float(objective(p))
        except UncookableError:
            worst = max((ob[1] for ob in state.observations), default=None)
            y = 2.0 * worst if worst is not None else UNCOOKABLE_FALLBACK_PENALTY
        state = observe(state, x, y)
        trace.append((p, y))

    best_x, best_y = state.incumbent
    posterior = (
        gp.predict(state.model, [best_x])[0]
        if state.model is not None
        else gp.Posterior(best_y, 0.0)
    )
    best = Recommendation(values=params_from_vector(space, np.asarray(best_x)), predicted_objective=posterior)
    return trace, best


def noisy_recommendation(
    true_optimum: EggParameters, noise_spec: dict[str, float]
) -> Recommendation:
    """Apply constant per-parameter offsets to a known optimum."""
    from . import eggmodel
    from .params import PARAM_BY_NAME

    values = true_optimum.as_dict()
    for name, offset in noise_spec.items():
        spec = PARAM_BY_NAME[name]
        shifted = values[name] + offset
        if not (spec.lower <= shifted <= spec.upper):
            raise ValueError(
                f"offset {offset:g} pushes {name} to {shifted:g}, "
                f"outside [{spec.lower:g}, {spec.upper:g}]"
            )
        values[name] = shifted
    rec = from_dict(values)
    try:
        loss = eggmodel.perfect_time_loss(rec)
    except UncookableError:
        loss = float("inf")
    return Recommendation(values=rec, predicted_objective=gp.Posterior(loss, 0.0))


def export_trace(
    trace: list[tuple[EggParameters, float]], sink: IO[str]
) -> None:
    """One JSON object per iteration: {iteration, x, y, incumbent}."""
    incumbent = math.inf
    for i, (p, y) in enumerate(trace):
        incumbent = min(incumbent, y)
        record = {"iteration": i, "x": p.as_dict(), "y": y, "incumbent": incumbent}
        sink.write(json.dumps(record) + "\n")
