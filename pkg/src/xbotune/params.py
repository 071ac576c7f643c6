"""Parameter vocabulary for the six-dimensional egg-cooker tuning space.

Everything that needs to agree across the model, the optimizer, the
explainer, the renderers and the wire formats lives here: field order,
bounds, display names and the per-parameter numeric precision used when
ranges are shown to people.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields


@dataclass(frozen=True)
class EggParameters:
    """One point in the tuning space, in natural units."""

    mass_g: float
    lambda_: float
    ywr: float
    t_egg_c: float
    t_yolk_c: float
    altitude_m: float

    def as_dict(self) -> dict[str, float]:
        return {spec.name: getattr(self, spec.field) for spec in PARAMS}

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, spec.field) for spec in PARAMS)

    def replace(self, **by_name: float) -> "EggParameters":
        vals = self.as_dict()
        for name, value in by_name.items():
            if name not in vals:
                raise KeyError(f"unknown parameter {name!r}")
            vals[name] = value
        return from_dict(vals)


@dataclass(frozen=True)
class ParamSpec:
    """Static metadata for one tunable parameter."""

    name: str          # wire/JSON name, e.g. "lambda"
    field: str         # EggParameters attribute, e.g. "lambda_"
    symbol: str        # short symbol used in rule text, e.g. "λ"
    display: str       # long form used in language text, e.g. "lambda (λ)"
    unit: str
    lower: float
    upper: float
    decimals: int      # native display precision


PARAMS: tuple[ParamSpec, ...] = (
    ParamSpec("mass_g", "mass_g", "M", "Mass (M)", "g", 20.0, 300.0, 0),
    ParamSpec("lambda", "lambda_", "λ", "lambda (λ)", "", 25.0, 38.0, 0),
    ParamSpec("ywr", "ywr", "ywr", "yolk-to-white ratio (ywr)", "", 0.4, 1.0, 2),
    ParamSpec("t_egg_c", "t_egg_c", "Tegg", "egg temperature (Tegg)", "°C", 0.0, 35.0, 0),
    ParamSpec("t_yolk_c", "t_yolk_c", "Tyolk", "yolk temperature (Tyolk)", "°C", 60.0, 90.0, 0),
    ParamSpec("altitude_m", "altitude_m", "A", "altitude (A)", "m", 0.0, 10000.0, 0),
)

PARAM_NAMES: tuple[str, ...] = tuple(spec.name for spec in PARAMS)
PARAM_BY_NAME: dict[str, ParamSpec] = {spec.name: spec for spec in PARAMS}
BOUNDS: dict[str, tuple[float, float]] = {spec.name: (spec.lower, spec.upper) for spec in PARAMS}

# Precision of the objective interval (seconds of cooking-time loss) when shown.
OBJECTIVE_DECIMALS = 2

assert tuple(f.name for f in fields(EggParameters)) == tuple(s.field for s in PARAMS)


def from_dict(values: dict[str, float]) -> EggParameters:
    """Build EggParameters from wire-named values ("lambda", not "lambda_")."""
    missing = [s.name for s in PARAMS if s.name not in values]
    if missing:
        raise KeyError(f"missing parameters: {', '.join(missing)}")
    extra = set(values) - set(PARAM_NAMES)
    if extra:
        raise KeyError(f"unknown parameters: {', '.join(sorted(extra))}")
    return EggParameters(**{s.field: float(values[s.name]) for s in PARAMS})


def validate_bounds(p: EggParameters) -> None:
    """Raise ValueError naming the first parameter outside its bounds."""
    for spec in PARAMS:
        v = getattr(p, spec.field)
        if not (spec.lower <= v <= spec.upper):
            raise ValueError(
                f"{spec.name}={v:g} outside bounds [{spec.lower:g}, {spec.upper:g}]"
            )


def format_value(value: float, decimals: int) -> str:
    """Format at fixed precision, then strip trailing zeros ("0.60" -> "0.6")."""
    text = f"{value:.{decimals}f}"
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    if text in ("-0", ""):
        text = "0"
    return text


def quantize(value: float, decimals: int, mode: str = "round") -> float:
    """Round a value to the native precision grid.

    mode "floor"/"ceil" round outward so a quantized range still contains
    the original one.
    """
    scale = 10.0**decimals
    # the 1e-9 slack keeps values already on the grid from snapping outward
    if mode == "floor":
        q = math.floor(value * scale + 1e-9) / scale
    elif mode == "ceil":
        q = math.ceil(value * scale - 1e-9) / scale
    else:
        q = round(value * scale) / scale
    return q + 0.0  # normalize -0.0


def quantize_range(
    lo: float, hi: float, spec: ParamSpec, outward: bool = True
) -> tuple[float, float]:
    """Quantize a range to the parameter's precision, clipped to its bounds."""
    if outward:
        qlo, qhi = quantize(lo, spec.decimals, "floor"), quantize(hi, spec.decimals, "ceil")
    else:
        qlo, qhi = quantize(lo, spec.decimals), quantize(hi, spec.decimals)
    qlo = min(max(qlo, spec.lower), spec.upper)
    qhi = min(max(qhi, spec.lower), spec.upper)
    if qlo > qhi:
        qlo = qhi
    return qlo, qhi
