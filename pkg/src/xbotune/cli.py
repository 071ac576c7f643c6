"""Command-line tool: cook, explain, simulate, sensitivity, serve, scenarios-validate."""
from __future__ import annotations

import csv
import io
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import bo, eggmodel, gp, harness, render, tntrules
from .config import load_config
from .params import PARAMS, EggParameters, from_dict
from .service import GRADE_LABELS

EXIT_OK = 0
EXIT_NOT_PERFECT = 1
EXIT_ERROR = 2


def _param_options(fn):
    for spec in reversed(PARAMS):
        flag = "--" + spec.name.replace("_", "-")
        if spec.name == "lambda":
            flag = "--lambda"
        fn = click.option(flag, spec.field, type=float, required=True)(fn)
    return fn


def _parse_seed_range(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(text)]


def _load_scenarios(path: str | None) -> list[harness.Scenario]:
    if path:
        return harness.load_scenarios(path)
    return harness.default_scenarios()


@click.group()
def main() -> None:
    """Explainable-BO tuning workbench for the egg-cooker benchmark."""


@main.command()
@_param_options
@click.option("--json", "as_json", is_flag=True, help="emit JSON instead of text")
def cook(as_json: bool, **fields: float) -> None:
    """Cook once: print the cooking time and its feedback grade."""
    try:
        # bounds errors surface from the model itself (altitude domain,
        # uncookable physics); the game-style bound checks live in the harness
        t = eggmodel.cooking_time_s(EggParameters(**fields))
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_ERROR)
    grade = eggmodel.classify_feedback(t)
    if as_json:
        click.echo(json.dumps({"cook_time_s": t, "grade": GRADE_LABELS[grade]}))
    else:
        click.echo(f"{t:.1f} s, {GRADE_LABELS[grade]}")
    sys.exit(EXIT_OK if grade is eggmodel.FeedbackGrade.PERFECT else EXIT_NOT_PERFECT)


@main.command()
@_param_options
@click.option("--fraction", type=float, default=0.10, show_default=True)
@click.option("--json", "as_json", is_flag=True)
@click.option("--figure", type=click.Path(dir_okay=False), default=None,
              help="also draw the ranked bars to this image file")
def sensitivity(as_json: bool, fraction: float, figure: str | None, **fields: float) -> None:
    """Rank parameters by their relative effect on the cooking time."""
    try:
        report = eggmodel.sensitivity_analysis(EggParameters(**fields), fraction)
    except (eggmodel.UncookableError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_ERROR)
    if as_json:
        click.echo(json.dumps({
            "fraction": report.fraction,
            "base_time_s": report.base_time_s,
            "entries": [
                {"name": e.name, "effect": e.effect if e.defined else None}
                for e in report.entries
            ],
        }))
    else:
        click.echo(f"{'parameter':<12} {'relative effect':>15}")
        for e in report.entries:
            shown = f"{e.effect:15.6f}" if e.defined else f"{'undefined':>15}"
            click.echo(f"{e.name:<12} {shown}")
    if figure:
        from .figures import save_sensitivity_figure

        save_sensitivity_figure(report, figure)
        click.echo(f"figure written to {figure}", err=True)


def _scenario_observations(
    sc: harness.Scenario, budget: int, seed: int
) -> tuple[bo.SearchSpace, list[tuple[EggParameters, float]], bo.Recommendation]:
    space = bo.egg_search_space(fixed=sc.fixed, bounds=sc.bounds)
    trace, _ = bo.run(eggmodel.perfect_time_loss, space, budget=budget, seed=seed)
    # explanations answer "what should I change from the table I was shown",
    # so the reference point is the scenario's (noisy) recommendation
    try:
        loss = eggmodel.perfect_time_loss(sc.recommended)
    except eggmodel.UncookableError:
        loss = float("inf")
    rec = bo.Recommendation(sc.recommended, gp.Posterior(loss, 0.0))
    return space, trace, rec


def _file_observations(
    path: str,
) -> tuple[bo.SearchSpace, list[tuple[EggParameters, float]], bo.Recommendation]:
    trace = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            trace.append((from_dict(row["x"]), float(row["y"])))
    space = bo.egg_search_space()
    if not trace:
        raise ValueError("observation file is empty")
    best_p, best_y = min(trace, key=lambda ob: ob[1])
    best = bo.Recommendation(values=best_p, predicted_objective=gp.Posterior(best_y, 0.0))
    return space, trace, best


@main.command()
@click.option("--scenario", "scenario_id", default=None, help="scenario id to explain")
@click.option("--observations", "obs_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="JSONL observations {x: {...}, y} instead of a BO run")
@click.option("--scenarios", "scenario_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="scenario file (default: shipped fixture)")
@click.option("--format", "fmt", type=click.Choice(["rules", "visual", "language", "json"]),
              default="rules", show_default=True)
@click.option("--budget", type=int, default=30, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--n-e", type=int, default=tntrules.DEFAULT_N_E, show_default=True)
@click.option("--t-s", type=float, default=None)
@click.option("--t-alpha", type=float, default=tntrules.DEFAULT_T_ALPHA, show_default=True)
@click.option("--weights", type=str, default=None, help="four comma-separated weights")
@click.option("--figure", type=click.Path(dir_okay=False), default=None,
              help="also draw the visual explanation to this image file")
def explain(
    scenario_id: str | None,
    obs_path: str | None,
    scenario_path: str | None,
    fmt: str,
    budget: int,
    seed: int,
    n_e: int,
    t_s: float | None,
    t_alpha: float,
    weights: str | None,
    figure: str | None,
) -> None:
    """Fit a surrogate to observations of a scenario and explain it."""
    try:
        if (scenario_id is None) == (obs_path is None):
            raise ValueError("pass exactly one of --scenario or --observations")
        if obs_path:
            space, trace, best = _file_observations(obs_path)
        else:
            scenarios = {sc.id: sc for sc in _load_scenarios(scenario_path)}
            if scenario_id not in scenarios:
                raise ValueError(f"unknown scenario {scenario_id!r}")
            space, trace, best = _scenario_observations(scenarios[scenario_id], budget, seed)
        if len(trace) < 5:
            raise ValueError(
                "need at least 5 observations; run the optimizer first (--budget)"
            )
        w = tntrules.DEFAULT_WEIGHTS
        if weights:
            parts = tuple(float(v) for v in weights.split(","))
            if len(parts) != 4:
                raise ValueError("--weights needs exactly four values")
            w = parts
        xs = np.array([p.as_tuple() for p, _ in trace])
        ys = np.array([y for _, y in trace])
        model = gp.fit(xs, ys, space.bounds, noise_floor=1e-6 * max(float(np.var(ys)), 1e-6))
        cfg = tntrules.ExplainerConfig(n_e=n_e, t_s=t_s, t_alpha=t_alpha, weights=w, seed=seed)
        result = tntrules.explain(model, space, best, cfg)
    except (ValueError, gp.GpFitError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_ERROR)

    d, impacts = result.decision, result.impacts
    if fmt == "rules":
        click.echo(render.render_rules(d))
    elif fmt == "language":
        click.echo(render.render_language(d))
    elif fmt == "visual":
        click.echo(json.dumps(render.visual_to_json(render.render_visual(d, impacts))))
    else:
        click.echo(json.dumps({
            "decision": {
                "tune": {k: list(v) for k, v in d.tune.items()},
                "no_tune": list(d.no_tune),
                "objective_interval": list(d.objective_interval),
                "converged": d.converged,
            },
            "impacts": impacts,
            "fallback_used": result.fallback_used,
            "rules": tntrules.rules_to_json(result.rules, space),
        }))
    if result.fallback_used:
        click.echo("warning: no rule cleared t_alpha; best unfiltered rule used", err=True)
    if figure:
        from .figures import save_visual_figure

        save_visual_figure(render.render_visual(d, impacts), figure)
        click.echo(f"figure written to {figure}", err=True)


SIM_FIELDS = (
    "seed", "policy", "condition",
    "success_rate_training", "success_rate_baseline", "success_rate_treatment",
    "mean_retries_treatment", "adherence_fraction",
)


def simulation_rows(
    policy: harness.AgentPolicy,
    condition: str,
    seeds: list[int],
    scenarios: list[harness.Scenario],
) -> list[dict]:
    rows = []
    for seed in seeds:
        m = harness.run_agent(policy, condition, seed, scenarios)
        rows.append({
            "seed": seed,
            "policy": policy.kind.value,
            "condition": condition,
            "success_rate_training": m.success_rate.get("training", 0.0),
            "success_rate_baseline": m.success_rate.get("baseline", 0.0),
            "success_rate_treatment": m.success_rate.get("treatment", 0.0),
            "mean_retries_treatment": m.mean_retries.get("treatment"),
            "adherence_fraction": m.adherence_fraction,
        })
    return rows


def _aggregate_row(rows: list[dict]) -> dict:
    def mean_of(key):
        vals = [r[key] for r in rows if r[key] is not None]
        return sum(vals) / len(vals) if vals else None

    out = {"seed": "aggregate", "policy": rows[0]["policy"], "condition": rows[0]["condition"]}
    for key in SIM_FIELDS[3:]:
        out[key] = mean_of(key)
    return out


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SIM_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if row[k] is None else row[k]) for k in SIM_FIELDS})
    return buf.getvalue()


@main.command()
@click.option("--policy", "policy_name",
              type=click.Choice([k.value for k in harness.PolicyKind]), required=True)
@click.option("--seeds", default="0..49", show_default=True, help="N or LO..HI inclusive")
@click.option("--condition", type=click.Choice(["rules", "visual", "language"]),
              default="rules", show_default=True)
@click.option("--scenarios", "scenario_path", type=click.Path(exists=True, dir_okay=False),
              default=None)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="write the CSV here instead of stdout")
@click.option("--figure", type=click.Path(dir_okay=False), default=None,
              help="also draw a success-rate summary to this image file")
def simulate(
    policy_name: str,
    seeds: str,
    condition: str,
    scenario_path: str | None,
    out_path: str | None,
    figure: str | None,
) -> None:
    """Run a scripted agent over a seed range; emit per-seed and aggregate CSV."""
    try:
        seed_list = _parse_seed_range(seeds)
        scenario_list = _load_scenarios(scenario_path)
    except (ValueError, harness.ScenarioError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_ERROR)
    policy = harness.AgentPolicy(harness.PolicyKind(policy_name), seed=seed_list[0])
    rows = simulation_rows(policy, condition, seed_list, scenario_list)
    text = rows_to_csv(rows + [_aggregate_row(rows)])
    if out_path:
        Path(out_path).write_text(text)
        click.echo(f"csv written to {out_path}", err=True)
    else:
        click.echo(text, nl=False)
    if figure:
        from .figures import save_simulation_figure

        save_simulation_figure(rows, figure)
        click.echo(f"figure written to {figure}", err=True)


@main.command("scenarios-validate")
@click.argument("path", type=click.Path(exists=True, dir_okay=False), required=False)
def scenarios_validate(path: str | None) -> None:
    """Validate a scenario file against all invariants."""
    try:
        scenarios = _load_scenarios(path)
    except harness.ScenarioError as exc:
        click.echo(f"invalid: {exc}", err=True)
        sys.exit(EXIT_ERROR)
    for sc in scenarios:
        t = eggmodel.cooking_time_s(sc.optimal)
        training = " (training)" if sc.is_training else ""
        click.echo(f"{sc.id}: ok, optimal cooks to {t:.1f} s{training}")
    click.echo(f"{len(scenarios)} scenarios valid")


@main.command()
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.option("--scenarios", "scenario_path", type=click.Path(exists=True, dir_okay=False),
              default=None)
@click.option("--log-dir", default=None)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="JSON config file (overrides flags and env)")
def serve(host, port, scenario_path, log_dir, config_path) -> None:
    """Run the HTTP session service."""
    from .service import serve as run_service

    try:
        cfg = load_config(config_path, flags={
            "host": host, "port": port, "scenario_path": scenario_path, "log_dir": log_dir,
        })
        run_service(cfg)
    except (ValueError, OSError) as exc:  # bad config/scenarios, port in use
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_ERROR)


if __name__ == "__main__":
    main()
