"""Renderers for tune/no-tune decisions: rule text, bar-chart spec, language.

All three formats carry the same information (partition plus tune ranges);
each has an inverse parser so tests can prove nothing is lost.  The
language renderer can optionally be reworded by an external text service,
with strict validation that every name and number survives verbatim.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Protocol

import requests

from .params import OBJECTIVE_DECIMALS, PARAMS, format_value
from .tntrules import TuneDecision

NO_VALUE = "—"
AXIS_LABEL = "impact on cooking outcome if left untuned"
NOTUNE_SENTINEL = 0.05
DEFAULT_LLM_TIMEOUT_S = 10.0

_SYMBOL_TO_NAME = {spec.symbol: spec.name for spec in PARAMS}
_DISPLAY_TO_NAME = {spec.display: spec.name for spec in PARAMS}


class Format(enum.Enum):
    RULES = "rules"
    VISUAL = "visual"
    LANGUAGE = "language"
    NONE = "none"


@dataclass(frozen=True)
class VisualBar:
    name: str
    signed_length: float
    tune_class: str                       # "tune" | "no_tune"
    tune_range: tuple[float, float] | None


@dataclass(frozen=True)
class VisualSpec:
    bars: tuple[VisualBar, ...]           # one per parameter, fixed order
    axis_label: str = AXIS_LABEL


@dataclass(frozen=True)
class RenderedExplanation:
    format: Format
    payload: str | VisualSpec | None


def _fmt(name: str, value: float) -> str:
    spec = next(s for s in PARAMS if s.name == name)
    return format_value(value, spec.decimals)


def render_rules(d: TuneDecision) -> str:
    """`No tune: ..., Tune: name ∈ [lo, hi], ...` plus the objective line."""
    no_tune = [s.symbol for s in PARAMS if s.name in d.no_tune]
    tune = [
        f"{s.symbol} ∈ [{_fmt(s.name, d.tune[s.name][0])}, {_fmt(s.name, d.tune[s.name][1])}]"
        for s in PARAMS
        if s.name in d.tune
    ]
    line1 = (
        f"No tune: {', '.join(no_tune) if no_tune else NO_VALUE}, "
        f"Tune: {', '.join(tune) if tune else NO_VALUE}"
    )
    lo = format_value(d.objective_interval[0], OBJECTIVE_DECIMALS)
    hi = format_value(d.objective_interval[1], OBJECTIVE_DECIMALS)
    line2 = f"Predicted objective: y ∈ [{lo}, {hi}]"
    return line1 + "\n" + line2


_RULES_RE = re.compile(
    r"\ANo tune: (?P<notune>.*?), Tune: (?P<tune>.*)\n"
    r"Predicted objective: y ∈ \[(?P<ylo>[^,\]]+), (?P<yhi>[^,\]]+)\]\Z"
)
_TUNE_CLAUSE_RE = re.compile(r"(?P<sym>\S+) ∈ \[(?P<lo>[^,\]]+), (?P<hi>[^\]]+)\]")


def parse_rules(text: str) -> TuneDecision:
    """Inverse of render_rules."""
    m = _RULES_RE.match(text)
    if not m:
        raise ValueError("text does not match the rule format")
    no_tune = []
    if m["notune"] != NO_VALUE:
        for sym in m["notune"].split(", "):
            no_tune.append(_SYMBOL_TO_NAME[sym])
    tune: dict[str, tuple[float, float]] = {}
    if m["tune"] != NO_VALUE:
        clauses = _TUNE_CLAUSE_RE.findall(m["tune"])
        expected = len(m["tune"].split("], ")) if m["tune"] else 0
        if len(clauses) != expected:
            raise ValueError("malformed tune clause list")
        for sym, lo, hi in clauses:
            tune[_SYMBOL_TO_NAME[sym]] = (float(lo), float(hi))
    return TuneDecision(
        tune=tune,
        no_tune=tuple(no_tune),
        objective_interval=(float(m["ylo"]), float(m["yhi"])),
    )


def render_visual(d: TuneDecision, impacts: dict[str, float]) -> VisualSpec:
    """Bar spec: length 1 for the highest impact, short stubs for no-tune."""
    max_impact = max((impacts.get(s.name, 0.0) for s in PARAMS), default=0.0)
    bars = []
    for spec in PARAMS:
        if spec.name in d.tune and max_impact > 0:
            length = -impacts.get(spec.name, 0.0) / max_impact
            bars.append(VisualBar(spec.name, length, "tune", d.tune[spec.name]))
        else:
            bars.append(VisualBar(spec.name, NOTUNE_SENTINEL, "no_tune", None))
    return VisualSpec(bars=tuple(bars))


def visual_to_json(spec: VisualSpec) -> dict:
    return {
        "bars": [
            {
                "name": b.name,
                "signed_length": b.signed_length,
                "tune_class": b.tune_class,
                "tune_range": list(b.tune_range) if b.tune_range else None,
            }
            for b in spec.bars
        ],
        "axis_label": spec.axis_label,
    }


def decision_from_visual(spec: VisualSpec) -> tuple[dict[str, tuple[float, float]], tuple[str, ...]]:
    """Recover the partition and tune ranges from a bar spec."""
    tune, no_tune = {}, []
    for bar in spec.bars:
        if bar.tune_class == "tune":
            tune[bar.name] = bar.tune_range
        else:
            no_tune.append(bar.name)
    return tune, tuple(no_tune)


def _join(items: list[str]) -> str:
    if len(items) == 1:
        return items[0]
    return ", ".join(items[:-1]) + ", and " + items[-1]


def render_language(d: TuneDecision) -> str:
    """Two-sentence template, names ordered alphabetically by display form."""
    no_tune_specs = sorted(
        (s for s in PARAMS if s.name in d.no_tune), key=lambda s: s.display.lower()
    )
    tune_specs = sorted(
        (s for s in PARAMS if s.name in d.tune), key=lambda s: s.display.lower()
    )
    sentences = []
    if no_tune_specs:
        sentences.append(f"Maintain stability for {_join([s.display for s in no_tune_specs])}.")
    if tune_specs:
        clauses = [
            f"{s.display} between {_fmt(s.name, d.tune[s.name][0])} "
            f"and {_fmt(s.name, d.tune[s.name][1])}"
            for s in tune_specs
        ]
        sentences.append(f"Fine-tune {_join(clauses)} for optimal performance.")
    return " ".join(sentences)


_LANG_STABILITY_RE = re.compile(r"Maintain stability for (?P<names>.+?)\.(?: |$)")
_LANG_TUNE_RE = re.compile(r"Fine-tune (?P<clauses>.+) for optimal performance\.$")
_LANG_CLAUSE_RE = re.compile(r"\A(?P<display>.+?) between (?P<lo>\S+) and (?P<hi>\S+)\Z")


def _split_list(text: str) -> list[str]:
    if ", and " in text:
        head, last = text.rsplit(", and ", 1)
        return head.split(", ") + [last]
    return [text]


def parse_language(text: str) -> tuple[dict[str, tuple[float, float]], tuple[str, ...]]:
    """Recover the partition and tune ranges from the language form."""
    no_tune: list[str] = []
    tune: dict[str, tuple[float, float]] = {}
    m = _LANG_STABILITY_RE.search(text)
    if m:
        for display in _split_list(m["names"]):
            no_tune.append(_DISPLAY_TO_NAME[display])
    m = _LANG_TUNE_RE.search(text)
    if m:
        for clause in _split_list(m["clauses"]):
            cm = _LANG_CLAUSE_RE.match(clause)
            if not cm:
                raise ValueError(f"malformed tune clause: {clause!r}")
            tune[_DISPLAY_TO_NAME[cm["display"]]] = (float(cm["lo"]), float(cm["hi"]))
    return tune, tuple(no_tune)


class TextClient(Protocol):
    def generate(self, prompt: str, facts: dict) -> str: ...


@dataclass
class HttpTextClient:
    """Single-endpoint client: POST {prompt, facts} -> {text}."""

    endpoint: str
    api_key: str | None = None
    timeout_s: float = DEFAULT_LLM_TIMEOUT_S

    def generate(self, prompt: str, facts: dict) -> str:
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        resp = requests.post(
            self.endpoint,
            json={"prompt": prompt, "facts": facts},
            headers=headers,
            timeout=self.timeout_s,
        )
        resp.raise_for_status()
        return str(resp.json()["text"])


REWRITE_PROMPT = (
    "Based on the provided tuning recommendations, generate a textual "
    "explanation in natural language: 1. Clearly identify the parameters "
    'that should not be tuned (stated as "maintain stability"). '
    "2. Highlight the parameters that should be fine-tuned, specifying the "
    "recommended ranges. 3. Use clear and concise language for readability."
)

_NUMBER_RE = re.compile(r"-?\d+(?:\.\d+)?")


@dataclass(frozen=True)
class RewriteResult:
    text: str
    used_fallback: bool
    reason: str | None = None


def llm_rewrite(template_text: str, client: TextClient) -> RewriteResult:
    """Reword the template via an external service, or fall back to it.

    The reply is accepted only if every parameter display name and every
    numeric bound from the template appears verbatim, and the reply
    introduces no other numbers.
    """
    try:
        tune, no_tune = parse_language(template_text)
    except (ValueError, KeyError) as exc:
        return RewriteResult(template_text, True, f"unparseable template: {exc}")
    facts = {
        "tune": {name: list(rng) for name, rng in tune.items()},
        "no_tune": list(no_tune),
    }
    try:
        reply = client.generate(REWRITE_PROMPT + "\n\n" + template_text, facts)
    except Exception as exc:  # network errors, timeouts, bad payloads
        return RewriteResult(template_text, True, f"service error: {exc}")

    mentioned = [s.display for s in PARAMS if s.name in tune or s.name in no_tune]
    for display in mentioned:
        if display not in reply:
            return RewriteResult(template_text, True, f"missing parameter name: {display}")
    template_numbers = set(_NUMBER_RE.findall(template_text))
    reply_numbers = set(_NUMBER_RE.findall(reply))
    if not template_numbers <= reply_numbers:
        missing = sorted(template_numbers - reply_numbers)
        return RewriteResult(template_text, True, f"missing bounds: {missing}")
    if not reply_numbers <= template_numbers:
        extra = sorted(reply_numbers - template_numbers)
        return RewriteResult(template_text, True, f"unexpected numbers: {extra}")
    return RewriteResult(reply, False)


def render(
    d: TuneDecision, impacts: dict[str, float], fmt: Format
) -> RenderedExplanation:
    if fmt is Format.RULES:
        return RenderedExplanation(Format.RULES, render_rules(d))
    if fmt is Format.VISUAL:
        return RenderedExplanation(Format.VISUAL, render_visual(d, impacts))
    if fmt is Format.LANGUAGE:
        return RenderedExplanation(Format.LANGUAGE, render_language(d))
    return RenderedExplanation(Format.NONE, None)
