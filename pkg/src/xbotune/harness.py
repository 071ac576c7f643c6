"""The tuning study as a replayable engine.

Seven scenario fixtures, sessions with a fixed block structure (one
training egg, three without explanation, three with), five trials per
egg with an adjust-before-cook gate, per-scenario explanations, outcome
metrics, scripted agents, and an append-only JSON-lines event log per
session that can be replayed into an identical session.
"""
from __future__ import annotations

import enum
import json
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable

import numpy as np

from . import render
from .eggmodel import (
    DEFAULT_BANDS,
    FeedbackBands,
    FeedbackGrade,
    UncookableError,
    classify_feedback,
    cooking_time_s,
    perfect_time_loss,
)
from .params import (
    OBJECTIVE_DECIMALS,
    PARAM_BY_NAME,
    PARAM_NAMES,
    EggParameters,
    from_dict,
    quantize,
    quantize_range,
)
from .tntrules import TuneDecision

TRIALS_PER_EGG = 5
BLOCK_SIZE = 3
EXPLANATION_HALF_WIDTH = 0.1   # tune-range half width as a fraction of bound width
# (lower, upper) half-width scale factors tried until the joint midpoint
# submission is not a perfect egg (the explanation must not hand over the answer)
ASYMMETRY_CANDIDATES = (
    (0.35, 1.0), (1.0, 0.35), (0.5, 1.0), (1.0, 0.5), (0.25, 1.0), (1.0, 0.25), (1.0, 1.0),
)


class ScenarioError(ValueError):
    pass


class TrialRejected(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class Block(enum.Enum):
    TRAINING = "training"
    BASELINE = "baseline"
    TREATMENT = "treatment"


@dataclass(frozen=True)
class Scenario:
    id: str
    egg_type: str
    is_training: bool
    bounds: dict[str, tuple[float, float]]
    fixed: dict[str, float]
    recommended: EggParameters
    optimal: EggParameters
    bands: FeedbackBands = DEFAULT_BANDS

    def tunable_names(self) -> tuple[str, ...]:
        return tuple(n for n in PARAM_NAMES if n not in self.fixed)

    def arrow_names(self) -> tuple[str, ...]:
        """Parameters whose recommendation is a noisy offset from the optimum."""
        rd, od = self.recommended.as_dict(), self.optimal.as_dict()
        return tuple(n for n in PARAM_NAMES if rd[n] != od[n])


def validate_scenario(sc: Scenario) -> None:
    rd, od = sc.recommended.as_dict(), sc.optimal.as_dict()
    for name in PARAM_NAMES:
        if name not in sc.bounds:
            raise ScenarioError(f"scenario {sc.id}: missing bounds for {name}")
        lo, hi = sc.bounds[name]
        if not lo < hi:
            raise ScenarioError(f"scenario {sc.id}: empty bounds for {name}")
        for label, value in (("recommended", rd[name]), ("optimal", od[name])):
            if not (lo <= value <= hi):
                raise ScenarioError(
                    f"scenario {sc.id}: {label} {name}={value:g} outside bounds"
                )
    for name, value in sc.fixed.items():
        if name not in PARAM_NAMES:
            raise ScenarioError(f"scenario {sc.id}: unknown fixed parameter {name}")
        if rd[name] != value or od[name] != value:
            raise ScenarioError(
                f"scenario {sc.id}: fixed parameter {name} differs between "
                "fixed value, recommended and optimal"
            )
    try:
        grade = classify_feedback(cooking_time_s(sc.optimal), sc.bands)
    except (UncookableError, ValueError) as exc:
        raise ScenarioError(f"scenario {sc.id}: optimal is uncookable: {exc}") from exc
    if grade is not FeedbackGrade.PERFECT:
        raise ScenarioError(
            f"scenario {sc.id}: optimal cooks to {cooking_time_s(sc.optimal):.1f} s "
            f"({grade.value}), expected perfect"
        )


def load_scenarios(source: str | Path | IO[str]) -> list[Scenario]:
    """Load and validate a scenario file (JSON array)."""
    if hasattr(source, "read"):
        raw = json.load(source)
    else:
        raw = json.loads(Path(source).read_text())
    scenarios = []
    for entry in raw:
        try:
            sc = Scenario(
                id=entry["id"],
                egg_type=entry["egg_type"],
                is_training=bool(entry["is_training"]),
                bounds={k: (float(v[0]), float(v[1])) for k, v in entry["bounds"].items()},
                fixed={k: float(v) for k, v in entry.get("fixed", {}).items()},
                recommended=from_dict(entry["recommended"]),
                optimal=from_dict(entry["optimal"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"scenario {entry.get('id', '?')}: {exc}") from exc
        validate_scenario(sc)
        scenarios.append(sc)
    ids = [sc.id for sc in scenarios]
    if len(set(ids)) != len(ids):
        raise ScenarioError("duplicate scenario ids")
    return scenarios


def default_scenarios() -> list[Scenario]:
    """The seven shipped study scenarios."""
    from importlib.resources import files

    with files("xbotune.data").joinpath("table2.json").open() as fh:
        return load_scenarios(fh)


# --------------------------------------------------------------------------
# Explanation construction for study scenarios


def _midpoint_submission(
    sc: Scenario, ranges: dict[str, tuple[float, float]]
) -> EggParameters:
    values = sc.recommended.as_dict()
    for name, (lo, hi) in ranges.items():
        values[name] = 0.5 * (lo + hi)
    return from_dict(values)


def _build_ranges(sc: Scenario, scale: tuple[float, float]) -> dict[str, tuple[float, float]]:
    ranges = {}
    for name in sc.arrow_names():
        spec = PARAM_BY_NAME[name]
        lo_b, hi_b = sc.bounds[name]
        w = EXPLANATION_HALF_WIDTH * (hi_b - lo_b)
        opt = sc.optimal.as_dict()[name]
        lo, hi = quantize_range(opt - scale[0] * w, opt + scale[1] * w, spec)
        lo, hi = max(lo, lo_b), min(hi, hi_b)
        ranges[name] = (lo, hi)
    return ranges


def scenario_decision(sc: Scenario) -> tuple[TuneDecision, dict[str, float]]:
    """Tune/no-tune decision shown for a study scenario.

    Tune set: the noisy (arrow) parameters, with a range around the hidden
    optimum.  The range asymmetry is chosen so that submitting all range
    midpoints does not produce a perfect egg.
    """
    chosen = None
    for scale in ASYMMETRY_CANDIDATES:
        ranges = _build_ranges(sc, scale)
        opt = sc.optimal.as_dict()
        if any(abs(0.5 * (lo + hi) - opt[n]) < 10 ** -PARAM_BY_NAME[n].decimals * 0.5
               for n, (lo, hi) in ranges.items()):
            continue
        if chosen is None:
            chosen = ranges
        try:
            grade = classify_feedback(
                cooking_time_s(_midpoint_submission(sc, ranges)), sc.bands
            )
        except (UncookableError, ValueError):
            grade = None
        if grade is not FeedbackGrade.PERFECT:
            chosen = ranges
            break
    if chosen is None:  # every asymmetry centred on the optimum; take the widest
        chosen = _build_ranges(sc, ASYMMETRY_CANDIDATES[-1])

    no_tune = tuple(n for n in PARAM_NAMES if n not in chosen)
    impacts = _scenario_impacts(sc, chosen)
    interval = _objective_interval(sc, chosen)
    decision = TuneDecision(tune=chosen, no_tune=no_tune, objective_interval=interval)
    return decision, impacts


def _scenario_impacts(sc: Scenario, ranges: dict[str, tuple[float, float]]) -> dict[str, float]:
    """Seconds of loss incurred by leaving one tuned parameter at its noisy value."""
    try:
        base = perfect_time_loss(sc.optimal)
    except UncookableError:
        base = float("inf")
    impacts = {n: 0.0 for n in PARAM_NAMES}
    rd = sc.recommended.as_dict()
    for name in ranges:
        candidate = sc.optimal.replace(**{name: rd[name]})
        try:
            impacts[name] = max(0.0, perfect_time_loss(candidate) - base)
        except UncookableError:
            impacts[name] = 1e3
    return impacts


def _objective_interval(sc: Scenario, ranges: dict[str, tuple[float, float]]) -> tuple[float, float]:
    """Loss range over the corners of the tune box (others at the recommendation)."""
    losses = [perfect_time_loss(sc.optimal)]
    names = list(ranges)
    for mask in range(2 ** len(names)):
        values = sc.recommended.as_dict()
        for b, name in enumerate(names):
            values[name] = ranges[name][(mask >> b) & 1]
        try:
            losses.append(perfect_time_loss(from_dict(values)))
        except UncookableError:
            continue
    return (
        quantize(min(losses), OBJECTIVE_DECIMALS, "floor"),
        quantize(max(losses), OBJECTIVE_DECIMALS, "ceil"),
    )


# --------------------------------------------------------------------------
# Sessions


class EggStatus(enum.Enum):
    PENDING = "pending"
    ACTIVE = "active"
    SUCCESS = "success"
    FAILURE = "failure"


class SessionStatus(enum.Enum):
    IN_PROGRESS = "in_progress"
    COMPLETED = "completed"


@dataclass(frozen=True)
class TrialRecord:
    scenario_id: str
    trial_index: int                       # 1-based
    submitted: EggParameters
    cook_time_s: float
    grade: FeedbackGrade
    timestamp: float
    within_explanation_range: bool


@dataclass
class EggState:
    scenario_id: str
    block: Block
    status: EggStatus = EggStatus.PENDING
    trials: list[TrialRecord] = field(default_factory=list)
    difficulty: int | None = None

    @property
    def trials_used(self) -> int:
        return len(self.trials)


@dataclass
class Session:
    id: str
    condition: render.Format
    seed: int
    scenarios: dict[str, Scenario]
    eggs: list[EggState]
    status: SessionStatus = SessionStatus.IN_PROGRESS
    events: list[dict] = field(default_factory=list)
    pending_difficulty: str | None = None
    _decisions: dict[str, tuple[TuneDecision, dict[str, float]]] = field(default_factory=dict)
    _explanations: dict[str, render.RenderedExplanation] = field(default_factory=dict)

    @property
    def current_egg(self) -> EggState | None:
        for egg in self.eggs:
            if egg.status in (EggStatus.PENDING, EggStatus.ACTIVE):
                return egg
        return None

    def egg(self, scenario_id: str) -> EggState:
        for egg in self.eggs:
            if egg.scenario_id == scenario_id:
                return egg
        raise KeyError(f"scenario {scenario_id} not part of this session")

    def emit(self, event: str, payload: dict, ts: float | None = None) -> dict:
        record = {
            "ts": time.time() if ts is None else ts,
            "session_id": self.id,
            "event": event,
            "payload": payload,
        }
        self.events.append(record)
        return record

    def decision_for(self, scenario_id: str) -> tuple[TuneDecision, dict[str, float]]:
        if scenario_id not in self._decisions:
            self._decisions[scenario_id] = scenario_decision(self.scenarios[scenario_id])
        return self._decisions[scenario_id]


def start_session(
    condition: render.Format | str,
    seed: int,
    scenarios: Iterable[Scenario],
    session_id: str | None = None,
) -> Session:
    """Assign eggs to blocks: training first, then a seeded 3/3 split."""
    condition = render.Format(condition) if isinstance(condition, str) else condition
    if condition not in (render.Format.RULES, render.Format.VISUAL, render.Format.LANGUAGE):
        raise ValueError("condition must be rules, visual or language")
    scenario_list = list(scenarios)
    training = [sc for sc in scenario_list if sc.is_training]
    others = [sc for sc in scenario_list if not sc.is_training]
    if len(training) != 1 or len(others) < 2 * BLOCK_SIZE:
        raise ValueError(
            f"need exactly one training scenario and at least {2 * BLOCK_SIZE} others"
        )
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x5E55)))
    order = rng.permutation(len(others))
    picked = [others[i] for i in order[: 2 * BLOCK_SIZE]]
    eggs = [EggState(training[0].id, Block.TRAINING)]
    eggs += [EggState(sc.id, Block.BASELINE) for sc in picked[:BLOCK_SIZE]]
    eggs += [EggState(sc.id, Block.TREATMENT) for sc in picked[BLOCK_SIZE:]]
    session = Session(
        id=session_id or uuid.uuid4().hex,
        condition=condition,
        seed=seed,
        scenarios={sc.id: sc for sc in scenario_list},
        eggs=eggs,
    )
    session.emit(
        "session_started",
        {
            "condition": condition.value,
            "seed": seed,
            "assignment": [
                {"scenario_id": egg.scenario_id, "block": egg.block.value}
                for egg in eggs
            ],
        },
    )
    return session


def _within_explanation(
    session: Session, sc: Scenario, proposed: EggParameters
) -> bool:
    decision, _ = session.decision_for(sc.id)
    pd, rd = proposed.as_dict(), sc.recommended.as_dict()
    for name in sc.tunable_names():
        if name in decision.tune:
            lo, hi = decision.tune[name]
            if not (lo <= pd[name] <= hi):
                return False
        elif pd[name] != rd[name]:
            return False
    return True


def submit_trial(
    session: Session, scenario_id: str, proposed: EggParameters
) -> tuple[FeedbackGrade, TrialRecord]:
    """Cook once: validates the gate rules, grades, and advances the session."""
    if session.status is not SessionStatus.IN_PROGRESS:
        raise TrialRejected("session_completed", "session is already complete")
    egg = session.egg(scenario_id)
    current = session.current_egg
    if current is None or current.scenario_id != scenario_id:
        raise TrialRejected(
            "not_current", f"scenario {scenario_id} is not the active egg"
        )
    if egg.trials_used >= TRIALS_PER_EGG:
        raise TrialRejected("trials_exhausted", "all five trials have been used")
    sc = session.scenarios[scenario_id]
    pd, rd = proposed.as_dict(), sc.recommended.as_dict()
    for name, value in sc.fixed.items():
        if pd[name] != value:
            raise TrialRejected(
                "fixed_parameter", f"{name} is fixed at {value:g} and cannot change"
            )
    for name in PARAM_NAMES:
        lo, hi = sc.bounds[name]
        if not (lo <= pd[name] <= hi):
            raise TrialRejected(
                "out_of_bounds", f"{name}={pd[name]:g} outside [{lo:g}, {hi:g}]"
            )
    if all(pd[name] == rd[name] for name in sc.tunable_names()):
        raise TrialRejected(
            "no_adjustment", "adjust at least one tunable parameter before cooking"
        )

    egg.status = EggStatus.ACTIVE
    try:
        t = cooking_time_s(proposed)
        grade = classify_feedback(t, sc.bands)
    except UncookableError as exc:
        # within-bounds but physically uncookable: grade by failure direction
        if "yolk target" in str(exc):
            t, grade = float("inf"), FeedbackGrade.OVERCOOKED
        else:
            t, grade = 0.0, FeedbackGrade.UNDERCOOKED
    record = TrialRecord(
        scenario_id=scenario_id,
        trial_index=egg.trials_used + 1,
        submitted=proposed,
        cook_time_s=t,
        grade=grade,
        timestamp=time.time(),
        within_explanation_range=_within_explanation(session, sc, proposed),
    )
    egg.trials.append(record)
    session.emit(
        "trial_submitted",
        {
            "scenario_id": scenario_id,
            "trial_index": record.trial_index,
            "params": proposed.as_dict(),
            "within_range": record.within_explanation_range,
        },
        ts=record.timestamp,
    )
    session.emit(
        "feedback_issued",
        {"scenario_id": scenario_id, "grade": grade.value, "cook_time_s": t},
        ts=record.timestamp,
    )
    if grade is FeedbackGrade.PERFECT:
        egg.status = EggStatus.SUCCESS
    elif egg.trials_used >= TRIALS_PER_EGG:
        egg.status = EggStatus.FAILURE
    if egg.status in (EggStatus.SUCCESS, EggStatus.FAILURE):
        session.pending_difficulty = scenario_id
        session.emit(
            "egg_completed",
            {
                "scenario_id": scenario_id,
                "success": egg.status is EggStatus.SUCCESS,
                "trials_used": egg.trials_used,
            },
        )
        if session.current_egg is None:
            session.status = SessionStatus.COMPLETED
            session.emit("session_completed", {})
    return grade, record


def get_explanation(session: Session, scenario_id: str) -> render.RenderedExplanation:
    """Rendered explanation for a treatment egg; format None elsewhere."""
    egg = session.egg(scenario_id)
    if egg.block is not Block.TREATMENT:
        return render.RenderedExplanation(render.Format.NONE, None)
    if scenario_id not in session._explanations:
        decision, impacts = session.decision_for(scenario_id)
        session._explanations[scenario_id] = render.render(
            decision, impacts, session.condition
        )
        session.emit(
            "explanation_served",
            {"scenario_id": scenario_id, "format": session.condition.value},
        )
    return session._explanations[scenario_id]


def record_difficulty(session: Session, scenario_id: str, rating: int) -> None:
    if isinstance(rating, bool) or not (isinstance(rating, int) and 1 <= rating <= 7):
        raise ValueError("difficulty rating must be an integer in 1..7")
    egg = session.egg(scenario_id)
    egg.difficulty = rating
    if session.pending_difficulty == scenario_id:
        session.pending_difficulty = None
    session.emit("difficulty_rated", {"scenario_id": scenario_id, "rating": rating})


# --------------------------------------------------------------------------
# Metrics


@dataclass(frozen=True)
class SessionMetrics:
    success_rate: dict[str, float]              # per block name
    trials_to_success: dict[str, int | None]    # per scenario; None = failed
    mean_retries: dict[str, float | None]       # per block, successful eggs only
    adherence_fraction: float | None            # successful treatment eggs
    partial: bool

    def as_dict(self) -> dict:
        return {
            "success_rate": self.success_rate,
            "trials_to_success": self.trials_to_success,
            "mean_retries": self.mean_retries,
            "adherence_fraction": self.adherence_fraction,
            "partial": self.partial,
        }


def session_metrics(session: Session) -> SessionMetrics:
    """Per-block success rates, retries to success, adherence fraction."""
    partial = session.status is not SessionStatus.COMPLETED
    success_rate: dict[str, float] = {}
    mean_retries: dict[str, float | None] = {}
    trials_to_success: dict[str, int | None] = {}
    for block in Block:
        eggs = [e for e in session.eggs if e.block is block]
        if not eggs:
            continue
        successes = [e for e in eggs if e.status is EggStatus.SUCCESS]
        success_rate[block.value] = len(successes) / len(eggs)
        retries = [e.trials_used - 1 for e in successes]
        mean_retries[block.value] = sum(retries) / len(retries) if retries else None
    for egg in session.eggs:
        if egg.status is EggStatus.SUCCESS:
            trials_to_success[egg.scenario_id] = egg.trials_used - 1
        elif egg.status is EggStatus.FAILURE:
            trials_to_success[egg.scenario_id] = None

    treatment_successes = [
        e
        for e in session.eggs
        if e.block is Block.TREATMENT and e.status is EggStatus.SUCCESS
    ]
    if treatment_successes:
        adherent = sum(
            all(t.within_explanation_range for t in e.trials)
            for e in treatment_successes
        )
        adherence: float | None = adherent / len(treatment_successes)
    else:
        adherence = None
    return SessionMetrics(
        success_rate=success_rate,
        trials_to_success=trials_to_success,
        mean_retries=mean_retries,
        adherence_fraction=adherence,
        partial=partial,
    )


# --------------------------------------------------------------------------
# Scripted agents


class PolicyKind(enum.Enum):
    EXPLANATION_FOLLOWING = "explanation-following"
    RANGE_UNIFORM = "range-uniform"
    RANDOM = "random"
    MIDPOINT = "midpoint"


@dataclass(frozen=True)
class AgentPolicy:
    kind: PolicyKind
    seed: int = 0


def _policy_submission(
    policy: AgentPolicy,
    rng: np.random.Generator,
    session: Session,
    sc: Scenario,
    egg: EggState,
) -> EggParameters:
    decision = None
    if egg.block is Block.TREATMENT:
        decision, _ = session.decision_for(sc.id)
    kind = policy.kind
    if kind in (PolicyKind.EXPLANATION_FOLLOWING, PolicyKind.MIDPOINT) and decision is None:
        kind = PolicyKind.RANGE_UNIFORM  # nothing to follow outside the treatment block

    values = sc.recommended.as_dict()
    if kind is PolicyKind.EXPLANATION_FOLLOWING:
        for name, (lo, hi) in decision.tune.items():
            values[name] = rng.uniform(lo, hi)
    elif kind is PolicyKind.MIDPOINT:
        for name, (lo, hi) in decision.tune.items():
            values[name] = 0.5 * (lo + hi)
        if all(values[n] == sc.recommended.as_dict()[n] for n in sc.tunable_names()):
            first = next(iter(decision.tune))
            step = 10 ** -PARAM_BY_NAME[first].decimals
            values[first] = min(values[first] + step, sc.bounds[first][1])
    elif kind is PolicyKind.RANGE_UNIFORM:
        for name in sc.tunable_names():
            lo, hi = sc.bounds[name]
            values[name] = rng.uniform(lo, hi)
    elif kind is PolicyKind.RANDOM:
        for name in sc.tunable_names():
            lo, hi = sc.bounds[name]
            width = 0.1 * (hi - lo)
            values[name] = float(
                np.clip(values[name] + rng.uniform(-width, width), lo, hi)
            )
    return from_dict(values)


def run_agent(
    policy: AgentPolicy,
    condition: render.Format | str,
    seed: int,
    scenarios: Iterable[Scenario],
) -> SessionMetrics:
    """Play one whole session with a scripted policy; deterministic per seed."""
    session = start_session(condition, seed, scenarios)
    rng = np.random.default_rng(np.random.SeedSequence((policy.seed, seed, 0xA6E27)))
    attempts = 0
    while session.status is SessionStatus.IN_PROGRESS:
        attempts += 1
        if attempts > 100 * TRIALS_PER_EGG * len(session.eggs):
            raise RuntimeError("agent failed to make progress")
        egg = session.current_egg
        sc = session.scenarios[egg.scenario_id]
        if egg.block is Block.TREATMENT:
            get_explanation(session, sc.id)  # agents read it like humans would
        proposed = _policy_submission(policy, rng, session, sc, egg)
        try:
            submit_trial(session, sc.id, proposed)
        except TrialRejected as exc:
            if exc.code != "no_adjustment":
                raise
            # a zero-probability resample collided with the recommendation
            continue
    return session_metrics(session)


# --------------------------------------------------------------------------
# Persistence: append-only JSON-lines event log, replayable


class SessionLogError(ValueError):
    def __init__(self, message: str, line_number: int | None = None):
        super().__init__(message)
        self.line_number = line_number


def session_log_path(log_dir: str | Path, session_id: str) -> Path:
    return Path(log_dir) / f"{session_id}.jsonl"


def persist(session: Session, log_dir: str | Path) -> Path:
    """Write the session's full event log (one JSON object per line)."""
    path = session_log_path(log_dir, session.id)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".jsonl.tmp")
    with tmp.open("w") as fh:
        for event in session.events:
            fh.write(json.dumps(event) + "\n")
    tmp.replace(path)
    return path


def append_events(session: Session, log_dir: str | Path, start: int) -> int:
    """Append events[start:] to the log; returns the new persisted count."""
    path = session_log_path(log_dir, session.id)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a") as fh:
        for event in session.events[start:]:
            fh.write(json.dumps(event) + "\n")
        fh.flush()
    return len(session.events)


def _parse_log_lines(text: str) -> list[dict]:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    events = []
    for i, line in enumerate(lines):
        try:
            events.append(json.loads(line))
        except json.JSONDecodeError as exc:
            if i == len(lines) - 1:
                break  # torn final write: keep everything before it
            raise SessionLogError(
                f"corrupt event log at line {i + 1}: {exc}", line_number=i + 1
            ) from exc
    return events


def load(
    session_id: str, log_dir: str | Path, scenarios: Iterable[Scenario]
) -> Session:
    """Replay a session's event log; the result equals the live session."""
    path = session_log_path(log_dir, session_id)
    if not path.exists():
        raise SessionLogError(f"no event log for session {session_id}")
    events = _parse_log_lines(path.read_text())
    return replay(session_id, events, scenarios)


def replay(
    session_id: str, events: list[dict], scenarios: Iterable[Scenario]
) -> Session:
    if not events or events[0]["event"] != "session_started":
        raise SessionLogError("event log does not begin with session_started")
    by_id = {sc.id: sc for sc in scenarios}
    head = events[0]["payload"]
    eggs = []
    for slot in head["assignment"]:
        if slot["scenario_id"] not in by_id:
            raise SessionLogError(f"unknown scenario {slot['scenario_id']} in log")
        eggs.append(EggState(slot["scenario_id"], Block(slot["block"])))
    session = Session(
        id=session_id,
        condition=render.Format(head["condition"]),
        seed=int(head["seed"]),
        scenarios=by_id,
        eggs=eggs,
    )
    session.events = list(events)

    pending: dict | None = None
    for event in events[1:]:
        kind, payload = event["event"], event["payload"]
        if kind == "trial_submitted":
            pending = payload
        elif kind == "feedback_issued":
            if pending is None or pending["scenario_id"] != payload["scenario_id"]:
                raise SessionLogError("feedback_issued without a matching trial")
            egg = session.egg(payload["scenario_id"])
            egg.status = EggStatus.ACTIVE
            egg.trials.append(
                TrialRecord(
                    scenario_id=payload["scenario_id"],
                    trial_index=int(pending["trial_index"]),
                    submitted=from_dict(pending["params"]),
                    cook_time_s=float(payload["cook_time_s"]),
                    grade=FeedbackGrade(payload["grade"]),
                    timestamp=float(event["ts"]),
                    within_explanation_range=bool(pending["within_range"]),
                )
            )
            pending = None
        elif kind == "egg_completed":
            egg = session.egg(payload["scenario_id"])
            egg.status = EggStatus.SUCCESS if payload["success"] else EggStatus.FAILURE
            session.pending_difficulty = payload["scenario_id"]
        elif kind == "difficulty_rated":
            egg = session.egg(payload["scenario_id"])
            egg.difficulty = int(payload["rating"])
            if session.pending_difficulty == payload["scenario_id"]:
                session.pending_difficulty = None
        elif kind == "session_completed":
            session.status = SessionStatus.COMPLETED
        elif kind in ("session_started", "explanation_served", "llm_rewrite"):
            pass
        else:
            raise SessionLogError(f"unknown event type {kind!r}")
    return session
