"""Rule extraction from a fitted surrogate (tune / no-tune explanations).

Pipeline: sample the search space uniformly, annotate the sample with the
GP posterior, cluster it hierarchically (Ward), keep subtrees whose
predicted means are nearly constant, turn each kept cluster into an
IF-THEN rule (antecedent = per-dimension min/max box, consequent =
mean ± 2 std of the cluster's best row), score rules by coverage /
support / confidence / relevance, and binarize the best rule's
dimensions into Tune and NoTune by their predicted impact.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.hierarchy import linkage

from . import gp
from .bo import Recommendation, SearchSpace
from .params import OBJECTIVE_DECIMALS, PARAM_BY_NAME, quantize, quantize_range

DEFAULT_N_E = 2000
DEFAULT_T_ALPHA = 0.5
DEFAULT_WEIGHTS = (0.25, 0.25, 0.25, 0.25)
MIN_N_E = 50
TUNE_IMPACT_FRACTION = 0.1
IMPACT_GRID_POINTS = 33


class ExplainerConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExplainerConfig:
    n_e: int = DEFAULT_N_E
    t_s: float | None = None          # None: (0.05 * range of mu)^2, set per dataset
    t_alpha: float = DEFAULT_T_ALPHA
    weights: tuple[float, float, float, float] = DEFAULT_WEIGHTS
    seed: int = 0

    def __post_init__(self):
        if self.n_e < MIN_N_E:
            raise ExplainerConfigError(
                f"n_e must be at least {MIN_N_E} (clusters degenerate below that)"
            )
        if any(w < 0 for w in self.weights):
            raise ExplainerConfigError("weights must be non-negative")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ExplainerConfigError("weights must sum to 1")
        if self.t_s is not None and self.t_s <= 0:
            raise ExplainerConfigError("t_s must be positive")


@dataclass(frozen=True)
class ExplanationDataset:
    inputs: np.ndarray   # (n_e, d) natural units
    mu: np.ndarray       # (n_e,)
    sigma: np.ndarray    # (n_e,)

    def __post_init__(self):
        if not (len(self.inputs) == len(self.mu) == len(self.sigma)):
            raise ValueError("inputs, mu and sigma must have equal row counts")

    @property
    def n_rows(self) -> int:
        return self.inputs.shape[0]


@dataclass(frozen=True)
class LinkageTree:
    merges: np.ndarray       # scipy linkage matrix, (n-1, 4)
    n_leaves: int


@dataclass(frozen=True)
class ClusterSet:
    clusters: tuple[tuple[int, ...], ...]   # disjoint row-index groups
    node_ids: tuple[int, ...]               # accepted tree nodes (audit)
    merge_heights: tuple[float, ...]        # heights of accepted nodes (audit)
    t_s: float


@dataclass(frozen=True)
class Rule:
    antecedent: tuple[tuple[float, float], ...]  # per input dimension
    consequent: tuple[float, float]
    coverage: float = 0.0
    support: float = 0.0
    confidence: float = 0.0
    relevance: float = 0.0
    interestingness: float = 0.0
    cluster_rows: tuple[int, ...] = field(default=(), repr=False)


@dataclass(frozen=True)
class TuneDecision:
    """Per-parameter Tune ranges (display precision) and the 95% objective bounds."""

    tune: dict[str, tuple[float, float]]
    no_tune: tuple[str, ...]
    objective_interval: tuple[float, float]
    converged: bool = False

    def is_tuned(self, name: str) -> bool:
        return name in self.tune


@dataclass(frozen=True)
class ExplanationResult:
    decision: TuneDecision
    rules: tuple[Rule, ...]
    impacts: dict[str, float]
    fallback_used: bool


def generate_dataset(
    model: gp.GpModel, space: SearchSpace, n_e: int, seed: int
) -> ExplanationDataset:
    """Uniform i.i.d. sample of the space annotated with the GP posterior."""
    if n_e < MIN_N_E:
        raise ExplainerConfigError(f"n_e must be at least {MIN_N_E}, got {n_e}")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xE66)))
    cols = []
    for dim in space.dimensions:
        if dim.fixed_value is not None:
            cols.append(np.full(n_e, dim.fixed_value))
        else:
            cols.append(rng.uniform(dim.lower, dim.upper, size=n_e))
    inputs = np.column_stack(cols)
    mu, sigma = gp.predict_arrays(model, inputs)
    return ExplanationDataset(inputs=inputs, mu=mu, sigma=sigma)


def _normalized_matrix(dataset: ExplanationDataset) -> np.ndarray:
    """Min-max per column of [inputs ; mu ; sigma]; constant columns become 0."""
    raw = np.column_stack([dataset.inputs, dataset.mu, dataset.sigma])
    lo = raw.min(axis=0)
    span = raw.max(axis=0) - lo
    span[span == 0.0] = 1.0
    return (raw - lo) / span


def cluster(dataset: ExplanationDataset) -> LinkageTree:
    """Agglomerative Ward linkage over the column-normalized dataset rows."""
    if dataset.n_rows < 2:
        raise ValueError("clustering needs at least 2 rows")
    merges = linkage(_normalized_matrix(dataset), method="ward")
    return LinkageTree(merges=merges, n_leaves=dataset.n_rows)


def variance_prune(tree: LinkageTree, dataset: ExplanationDataset, t_s: float) -> ClusterSet:
    """Split the tree top-down until every kept node has Var(mu) <= t_s."""
    if not t_s >= 0.0:
        raise ValueError("t_s must be non-negative")
    n = tree.n_leaves
    mu = dataset.mu

    # leaves of every internal node, computed once, bottom-up
    members: list[np.ndarray] = [np.array([i]) for i in range(n)]
    heights = {}
    for k, (a, b, height, _) in enumerate(tree.merges):
        members.append(np.concatenate([members[int(a)], members[int(b)]]))
        heights[n + k] = float(height)

    def node_var(node: int) -> float:
        return float(np.var(mu[members[node]])) if node >= n else 0.0

    accepted: list[int] = []
    root = n + len(tree.merges) - 1 if n > 1 else 0
    stack = [root]
    while stack:
        node = stack.pop()
        if node < n or node_var(node) <= t_s:
            accepted.append(node)
        else:
            a, b = tree.merges[node - n, 0], tree.merges[node - n, 1]
            stack.extend((int(b), int(a)))

    accepted.sort(key=lambda nd: int(members[nd][0]))  # stable, row-ordered
    return ClusterSet(
        clusters=tuple(tuple(int(i) for i in sorted(members[nd])) for nd in accepted),
        node_ids=tuple(accepted),
        merge_heights=tuple(heights.get(nd, 0.0) for nd in accepted),
        t_s=t_s,
    )


def construct_rules(dataset: ExplanationDataset, clusters: ClusterSet) -> list[Rule]:
    """One unscored rule per cluster.

    The consequent comes from the cluster row with the lowest predicted
    mean (optimization is minimization): [mu* - 2 sigma*, mu* + 2 sigma*].
    """
    if not clusters.clusters:
        raise ValueError("no clusters to build rules from")
    rules = []
    for rows in clusters.clusters:
        idx = np.asarray(rows)
        box = tuple(
            (float(col.min()), float(col.max())) for col in dataset.inputs[idx].T
        )
        best = idx[int(np.argmin(dataset.mu[idx]))]
        mu_star, sigma_star = float(dataset.mu[best]), float(dataset.sigma[best])
        rules.append(
            Rule(
                antecedent=box,
                consequent=(mu_star - 2.0 * sigma_star, mu_star + 2.0 * sigma_star),
                cluster_rows=tuple(int(i) for i in idx),
            )
        )
    return rules


def _inside_box(inputs: np.ndarray, box: tuple[tuple[float, float], ...]) -> np.ndarray:
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    return np.all((inputs >= lo) & (inputs <= hi), axis=1)


def score_rules(
    rules: list[Rule],
    dataset: ExplanationDataset,
    model: gp.GpModel,
    weights: tuple[float, float, float, float] = DEFAULT_WEIGHTS,
) -> list[Rule]:
    """Attach coverage, support, confidence, relevance and their weighted sum."""
    if any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > 1e-9:
        raise ExplainerConfigError("weights must be non-negative and sum to 1")
    w1, w2, w3, w4 = weights
    n = dataset.n_rows
    y_best = float(dataset.mu.min())
    scored = []
    for rule in rules:
        in_box = _inside_box(dataset.inputs, rule.antecedent)
        matched = in_box & (dataset.mu >= rule.consequent[0]) & (dataset.mu <= rule.consequent[1])
        covr = float(np.count_nonzero(in_box)) / n
        supp = float(np.count_nonzero(matched)) / n
        con = supp / covr if covr > 0 else 0.0
        if np.any(matched):
            mu_m, sg_m = dataset.mu[matched], dataset.sigma[matched]
            with np.errstate(divide="ignore", invalid="ignore"):
                lk = np.where(
                    sg_m > 0,
                    np.exp(-((mu_m - y_best) ** 2) / (2.0 * np.where(sg_m > 0, sg_m, 1.0) ** 2)),
                    (mu_m == y_best).astype(float),
                )
            rel = float(np.max(lk))
        else:
            rel = 0.0
        alpha = w1 * covr + w2 * supp + w3 * con + w4 * rel
        scored.append(
            Rule(
                antecedent=rule.antecedent,
                consequent=rule.consequent,
                coverage=covr,
                support=supp,
                confidence=con,
                relevance=rel,
                interestingness=alpha,
                cluster_rows=rule.cluster_rows,
            )
        )
    return scored


def filter_rules(rules: list[Rule], t_alpha: float) -> list[Rule]:
    """Rules with interestingness >= t_alpha, best first; total tie-breaks."""
    kept = [r for r in rules if r.interestingness >= t_alpha]
    return sorted(kept, key=lambda r: (-r.interestingness, -r.support, r.antecedent))


def _decimals_for(name: str) -> int:
    spec = PARAM_BY_NAME.get(name)
    return spec.decimals if spec is not None else 4


def binarize_tune(
    best_rule: Rule,
    rec: Recommendation | np.ndarray,
    space: SearchSpace,
    model: gp.GpModel,
) -> tuple[TuneDecision, dict[str, float]]:
    """Partition parameters into Tune / NoTune by predicted impact.

    For each free dimension, the impact is how much the posterior mean at
    the recommendation could drop by moving that coordinate alone across
    the rule's antecedent range.  Dimensions with at least 10% of the top
    impact (and a non-degenerate range) are worth tuning.
    """
    rec_vec = (
        np.array(rec.values.as_tuple()) if isinstance(rec, Recommendation) else np.asarray(rec, dtype=float)
    )
    space.validate_point(rec_vec)
    mu_rec = gp.predict_arrays(model, rec_vec[None, :])[0][0]

    names = space.names
    impacts: dict[str, float] = {}
    degenerate: set[str] = set()
    for i, dim in enumerate(space.dimensions):
        if dim.fixed_value is not None:
            impacts[names[i]] = 0.0
            continue
        lo, hi = best_rule.antecedent[i]
        if hi - lo <= 1e-12:
            degenerate.add(names[i])
            impacts[names[i]] = 0.0
            continue
        grid = np.tile(rec_vec, (IMPACT_GRID_POINTS, 1))
        grid[:, i] = np.linspace(lo, hi, IMPACT_GRID_POINTS)
        mu_grid, _ = gp.predict_arrays(model, grid)
        impacts[names[i]] = max(0.0, float(mu_rec - mu_grid.min()))

    max_impact = max(impacts.values(), default=0.0)
    converged = max_impact <= 0.0
    tune: dict[str, tuple[float, float]] = {}
    no_tune: list[str] = []
    for i, dim in enumerate(space.dimensions):
        name = names[i]
        is_tunable = (
            dim.fixed_value is None
            and not converged
            and name not in degenerate
            and impacts[name] >= TUNE_IMPACT_FRACTION * max_impact
        )
        if is_tunable:
            lo, hi = best_rule.antecedent[i]
            spec = PARAM_BY_NAME.get(name)
            if spec is not None:
                tune[name] = quantize_range(lo, hi, spec)
            else:
                d = _decimals_for(name)
                tune[name] = (quantize(lo, d, "floor"), quantize(hi, d, "ceil"))
        else:
            no_tune.append(name)

    interval = (
        quantize(best_rule.consequent[0], OBJECTIVE_DECIMALS, "floor"),
        quantize(best_rule.consequent[1], OBJECTIVE_DECIMALS, "ceil"),
    )
    decision = TuneDecision(
        tune=tune, no_tune=tuple(no_tune), objective_interval=interval, converged=converged
    )
    return decision, impacts


def effective_t_s(dataset: ExplanationDataset, t_s: float | None) -> float:
    if t_s is not None:
        return t_s
    mu_range = float(dataset.mu.max() - dataset.mu.min())
    return (0.05 * mu_range) ** 2 if mu_range > 0 else 1e-12


def explain(
    model: gp.GpModel,
    space: SearchSpace,
    rec: Recommendation | np.ndarray,
    config: ExplainerConfig = ExplainerConfig(),
) -> ExplanationResult:
    """End-to-end pipeline; deterministic for a given config seed."""
    dataset = generate_dataset(model, space, config.n_e, config.seed)
    tree = cluster(dataset)
    clusters = variance_prune(tree, dataset, effective_t_s(dataset, config.t_s))
    rules = score_rules(construct_rules(dataset, clusters), dataset, model, config.weights)
    kept = filter_rules(rules, config.t_alpha)
    fallback = not kept
    if fallback:
        kept = filter_rules(rules, -np.inf)  # fall back to the best unfiltered rule
    decision, impacts = binarize_tune(kept[0], rec, space, model)
    return ExplanationResult(
        decision=decision, rules=tuple(kept), impacts=impacts, fallback_used=fallback
    )


def rules_to_json(rules: list[Rule] | tuple[Rule, ...], space: SearchSpace) -> list[dict]:
    """Schema: {antecedent: {name: [lo, hi]}, consequent, covr, supp, con, rel, alpha}."""
    return [
        {
            "antecedent": {
                name: [rule.antecedent[i][0], rule.antecedent[i][1]]
                for i, name in enumerate(space.names)
            },
            "consequent": [rule.consequent[0], rule.consequent[1]],
            "covr": rule.coverage,
            "supp": rule.support,
            "con": rule.confidence,
            "rel": rule.relevance,
            "alpha": rule.interestingness,
        }
        for rule in rules
    ]
