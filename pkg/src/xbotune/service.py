"""HTTP session service for the tuning workbench UI.

Sessions are event-sourced: every mutation appends to a per-session
JSON-lines log, and a restarted service replays the logs back into
identical in-memory sessions.  The hidden optimal values of a scenario
are never serialized to clients.
"""
from __future__ import annotations

import threading
from pathlib import Path

from fastapi import Body, FastAPI, Header, HTTPException, Request
from fastapi.responses import JSONResponse

from . import harness, render
from .config import ServiceConfig
from .eggmodel import FeedbackGrade
from .params import from_dict
from .render import Format, VisualSpec, visual_to_json

GRADE_LABELS = {
    FeedbackGrade.UNDERCOOKED: "Undercooked",
    FeedbackGrade.SLIGHTLY_UNDERCOOKED: "SlightlyUndercooked",
    FeedbackGrade.PERFECT: "Perfect",
    FeedbackGrade.SLIGHTLY_OVERCOOKED: "SlightlyOvercooked",
    FeedbackGrade.OVERCOOKED: "Overcooked",
}


def _error(status: int, code: str, message: str) -> HTTPException:
    return HTTPException(status_code=status, detail={"code": code, "message": message})


def scenario_public_view(sc: harness.Scenario) -> dict:
    """Client-facing scenario: bounds, fixed mask and the noisy recommendation.

    The optimal values stay server-side; leaking them would invalidate runs.
    """
    return {
        "id": sc.id,
        "egg_type": sc.egg_type,
        "is_training": sc.is_training,
        "bounds": {k: list(v) for k, v in sc.bounds.items()},
        "fixed": dict(sc.fixed),
        "recommended": sc.recommended.as_dict(),
    }


def _egg_view(session: harness.Session, egg: harness.EggState) -> dict:
    sc = session.scenarios[egg.scenario_id]
    return {
        "scenario_id": egg.scenario_id,
        "egg_type": sc.egg_type,
        "block": egg.block.value,
        "status": egg.status.value,
        "trials_used": egg.trials_used,
        "trials": [
            {
                "trial_index": t.trial_index,
                "grade": GRADE_LABELS[t.grade],
                "submitted": t.submitted.as_dict(),
            }
            for t in egg.trials
        ],
        "difficulty": egg.difficulty,
    }


def session_view(session: harness.Session) -> dict:
    current = session.current_egg
    return {
        "session_id": session.id,
        "condition": session.condition.value,
        "seed": session.seed,
        "status": session.status.value,
        "eggs": [_egg_view(session, egg) for egg in session.eggs],
        "current_egg": _egg_view(session, current) if current else None,
        "pending_difficulty": session.pending_difficulty,
    }


def explanation_view(explanation: render.RenderedExplanation) -> dict:
    payload = explanation.payload
    if isinstance(payload, VisualSpec):
        payload = visual_to_json(payload)
    return {"format": explanation.format.value, "payload": payload}


class SessionService:
    """In-memory sessions backed by the append-only event logs."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.scenarios = (
            harness.load_scenarios(config.scenario_path)
            if config.scenario_path
            else harness.default_scenarios()
        )
        self.log_dir = Path(config.log_dir)
        self.log_dir.mkdir(parents=True, exist_ok=True)
        self.sessions: dict[str, harness.Session] = {}
        self.persisted: dict[str, int] = {}
        self.idempotency: dict[tuple[str, str], dict] = {}
        self.locks: dict[str, threading.Lock] = {}
        self.global_lock = threading.Lock()
        self.llm_client = None
        if config.llm_endpoint:
            self.llm_client = render.HttpTextClient(config.llm_endpoint, config.llm_key)
        self.rewrites: dict[tuple[str, str], str] = {}
        self._recover()

    def reworded(self, session: harness.Session, scenario_id: str, template: str) -> str:
        """Optionally reword a language explanation; never required to succeed."""
        key = (session.id, scenario_id)
        if key not in self.rewrites:
            result = render.llm_rewrite(template, self.llm_client)
            session.emit(
                "llm_rewrite",
                {
                    "scenario_id": scenario_id,
                    "used_fallback": result.used_fallback,
                    "reason": result.reason,
                },
            )
            self.rewrites[key] = result.text
        return self.rewrites[key]

    def _recover(self) -> None:
        for path in sorted(self.log_dir.glob("*.jsonl")):
            session_id = path.stem
            try:
                session = harness.load(session_id, self.log_dir, self.scenarios)
            except harness.SessionLogError:
                continue
            self.sessions[session_id] = session
            self.persisted[session_id] = len(session.events)
            self._rebuild_idempotency(session)

    def _rebuild_idempotency(self, session: harness.Session) -> None:
        """Rebuild retry responses for keys recorded before a restart."""
        events = session.events
        for i, event in enumerate(events):
            key = event["payload"].get("idempotency_key")
            if not key:
                continue
            if event["event"] == "session_started":
                self.idempotency.setdefault(("sessions", key), session_view(session))
                continue
            if event["event"] != "trial_submitted":
                continue
            payload = event["payload"]
            feedback = next(
                (
                    e["payload"]
                    for e in events[i + 1 :]
                    if e["event"] == "feedback_issued"
                    and e["payload"]["scenario_id"] == payload["scenario_id"]
                ),
                None,
            )
            if feedback is None:
                continue
            grade = FeedbackGrade(feedback["grade"])
            trial_index = int(payload["trial_index"])
            if grade is FeedbackGrade.PERFECT:
                egg_status = "success"
            elif trial_index >= harness.TRIALS_PER_EGG:
                egg_status = "failure"
            else:
                egg_status = "active"
            self.idempotency.setdefault(
                (session.id, key),
                {
                    "grade": GRADE_LABELS[grade],
                    "trial_index": trial_index,
                    "trials_used": trial_index,
                    "egg_status": egg_status,
                    "session_status": session.status.value,
                    "next_egg": None,
                },
            )

    def lock_for(self, session_id: str) -> threading.Lock:
        with self.global_lock:
            return self.locks.setdefault(session_id, threading.Lock())

    def get(self, session_id: str) -> harness.Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise _error(404, "session_not_found", f"no session {session_id}")
        return session

    def flush(self, session: harness.Session) -> None:
        start = self.persisted.get(session.id, 0)
        self.persisted[session.id] = harness.append_events(session, self.log_dir, start)


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    from fastapi.middleware.cors import CORSMiddleware

    service = SessionService(config or ServiceConfig())
    app = FastAPI(title="xbotune session service")
    app.state.service = service
    # the workbench UI is served by any static file server during development
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(HTTPException)
    async def handle_http_error(request: Request, exc: HTTPException):
        detail = exc.detail
        if not isinstance(detail, dict):
            detail = {"code": "error", "message": str(detail)}
        return JSONResponse(status_code=exc.status_code, content=detail)

    @app.get("/scenarios")
    def list_scenarios() -> list[dict]:
        return [scenario_public_view(sc) for sc in service.scenarios]

    @app.post("/sessions", status_code=201)
    def create_session(
        body: dict = Body(...),
        idempotency_key: str | None = Header(default=None, alias="Idempotency-Key"),
    ) -> dict:
        if idempotency_key:
            cached = service.idempotency.get(("sessions", idempotency_key))
            if cached is not None:
                return cached
        try:
            condition = str(body["condition"])
            seed = int(body.get("seed", 0))
        except (KeyError, TypeError, ValueError) as exc:
            raise _error(400, "bad_request", f"invalid session request: {exc}")
        try:
            session = harness.start_session(condition, seed, service.scenarios)
        except ValueError as exc:
            raise _error(400, "bad_request", str(exc))
        if idempotency_key:
            session.events[0]["payload"]["idempotency_key"] = idempotency_key
        with service.global_lock:
            service.sessions[session.id] = session
        service.flush(session)
        response = session_view(session)
        if idempotency_key:
            service.idempotency[("sessions", idempotency_key)] = response
        return response

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str) -> dict:
        return session_view(service.get(session_id))

    @app.post("/sessions/{session_id}/trials")
    def submit_trial(
        session_id: str,
        body: dict = Body(...),
        idempotency_key: str | None = Header(default=None, alias="Idempotency-Key"),
    ) -> dict:
        session = service.get(session_id)
        with service.lock_for(session_id):
            if idempotency_key:
                cached = service.idempotency.get((session_id, idempotency_key))
                if cached is not None:
                    return cached
            current = session.current_egg
            if current is None:
                raise _error(409, "session_completed", "session is already complete")
            values = body.get("values")
            if not isinstance(values, dict):
                raise _error(400, "bad_request", "body must carry a values object")
            merged = session.scenarios[current.scenario_id].recommended.as_dict()
            unknown = set(values) - set(merged)
            if unknown:
                raise _error(400, "bad_request", f"unknown parameters: {sorted(unknown)}")
            try:
                merged.update({k: float(v) for k, v in values.items()})
                proposed = from_dict(merged)
            except (TypeError, ValueError) as exc:
                raise _error(400, "bad_request", f"invalid parameter values: {exc}")
            try:
                grade, record = harness.submit_trial(session, current.scenario_id, proposed)
            except harness.TrialRejected as exc:
                status = 409 if exc.code in ("trials_exhausted", "session_completed") else 400
                raise _error(status, exc.code, str(exc))
            if idempotency_key:
                for event in reversed(session.events):
                    if event["event"] == "trial_submitted":
                        event["payload"]["idempotency_key"] = idempotency_key
                        break
            service.flush(session)
            egg = session.egg(record.scenario_id)
            response = {
                "grade": GRADE_LABELS[grade],
                "trial_index": record.trial_index,
                "trials_used": egg.trials_used,
                "egg_status": egg.status.value,
                "session_status": session.status.value,
                "next_egg": (
                    _egg_view(session, session.current_egg) if session.current_egg else None
                ),
            }
            if idempotency_key:
                service.idempotency[(session_id, idempotency_key)] = response
            return response

    @app.get("/sessions/{session_id}/eggs/current/explanation")
    def current_explanation(session_id: str) -> dict:
        session = service.get(session_id)
        with service.lock_for(session_id):
            current = session.current_egg
            if current is None:
                raise _error(409, "session_completed", "session is already complete")
            explanation = harness.get_explanation(session, current.scenario_id)
            view = explanation_view(explanation)
            if explanation.format is Format.LANGUAGE and service.llm_client is not None:
                view["payload"] = service.reworded(session, current.scenario_id, view["payload"])
            service.flush(session)
            return view

    @app.post("/sessions/{session_id}/eggs/current/difficulty")
    def rate_difficulty(
        session_id: str,
        body: dict = Body(...),
        idempotency_key: str | None = Header(default=None, alias="Idempotency-Key"),
    ) -> dict:
        session = service.get(session_id)
        with service.lock_for(session_id):
            if idempotency_key:
                cached = service.idempotency.get((session_id, idempotency_key))
                if cached is not None:
                    return cached
            target = session.pending_difficulty
            if target is None:
                current = session.current_egg
                if current is None or not current.trials:
                    raise _error(409, "no_egg_to_rate", "no egg awaiting a rating")
                target = current.scenario_id
            try:
                harness.record_difficulty(session, target, body.get("rating"))
            except ValueError as exc:
                raise _error(400, "bad_request", str(exc))
            service.flush(session)
            response = {"scenario_id": target, "rating": body["rating"]}
            if idempotency_key:
                service.idempotency[(session_id, idempotency_key)] = response
            return response

    @app.get("/sessions/{session_id}/metrics")
    def get_metrics(session_id: str) -> dict:
        session = service.get(session_id)
        return harness.session_metrics(session).as_dict()

    return app


def serve(config: ServiceConfig) -> None:
    """Run the HTTP service until interrupted."""
    import uvicorn

    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
