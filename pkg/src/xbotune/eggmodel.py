"""Physical model of egg cooking.

Cooking time for a uniform spherical egg dropped into boiling water:

    t = lambda * M^(2/3) * ln( ywr * (T_egg - T_water) / (T_yolk - T_water) )

where T_water is the altitude-corrected boiling point of water.  Both
logarithms are natural.  Time feedback is graded against fixed bands
around the soft-boiled interval [260 s, 285 s].
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .params import PARAMS, EggParameters

# Soft-boiled ("perfect") band and its neighbours, in seconds.
UNDER_EDGE_S = 215.0       # 3 min 35 s
PERFECT_LO_S = 260.0       # 4 min 20 s
PERFECT_HI_S = 285.0       # 4 min 45 s
OVER_EDGE_S = 330.0        # 5 min 30 s
TARGET_TIME_S = 0.5 * (PERFECT_LO_S + PERFECT_HI_S)  # 272.5

ALTITUDE_MAX_M = 10000.0


class UncookableError(ValueError):
    """The configuration cannot produce a finite positive cooking time."""

    def __init__(self, condition: str):
        super().__init__(f"uncookable configuration: {condition}")
        self.condition = condition


class FeedbackGrade(enum.Enum):
    UNDERCOOKED = "undercooked"
    SLIGHTLY_UNDERCOOKED = "slightly_undercooked"
    PERFECT = "perfect"
    SLIGHTLY_OVERCOOKED = "slightly_overcooked"
    OVERCOOKED = "overcooked"


@dataclass(frozen=True)
class FeedbackBands:
    """Grade edges in seconds; the perfect band is closed on both sides."""

    under_edge: float = UNDER_EDGE_S
    perfect_lo: float = PERFECT_LO_S
    perfect_hi: float = PERFECT_HI_S
    over_edge: float = OVER_EDGE_S


DEFAULT_BANDS = FeedbackBands()


def boiling_point_c(altitude_m: float) -> float:
    """Boiling temperature of water (°C) at the given altitude (m)."""
    if not (0.0 <= altitude_m <= ALTITUDE_MAX_M):
        raise ValueError(
            f"altitude_m={altitude_m:g} outside [0, {ALTITUDE_MAX_M:g}]"
        )
    pressure = 29.921 * (1.0 - 0.0000068753 * altitude_m) ** 5.2559
    fahrenheit = 49.161 * math.log(pressure) + 44.932
    return (fahrenheit - 32.0) * 5.0 / 9.0


def cooking_time_s(p: EggParameters) -> float:
    """Seconds until the yolk boundary reaches its target temperature."""
    for label, value in (("mass_g", p.mass_g), ("lambda", p.lambda_), ("ywr", p.ywr)):
        if not value > 0:
            raise ValueError(f"{label} must be positive, got {value:g}")
    t_water = boiling_point_c(p.altitude_m)
    if p.t_yolk_c >= t_water:
        raise UncookableError(
            f"yolk target {p.t_yolk_c:g} °C is not below the boiling point "
            f"{t_water:.2f} °C at altitude {p.altitude_m:g} m"
        )
    arg = p.ywr * (p.t_egg_c - t_water) / (p.t_yolk_c - t_water)
    if arg <= 1.0:
        raise UncookableError(
            f"log argument {arg:.4f} must exceed 1 "
            "(egg too warm or yolk target too low for this ywr)"
        )
    return p.lambda_ * p.mass_g ** (2.0 / 3.0) * math.log(arg)


def perfect_time_loss(p: EggParameters) -> float:
    """Distance of the cooking time from the centre of the perfect band."""
    return abs(cooking_time_s(p) - TARGET_TIME_S)


def classify_feedback(t_s: float, bands: FeedbackBands = DEFAULT_BANDS) -> FeedbackGrade:
    """Grade a cooking time.  Total over positive times."""
    if not (t_s > 0.0):
        raise ValueError(f"cooking time must be positive, got {t_s:g}")
    if t_s < bands.under_edge:
        return FeedbackGrade.UNDERCOOKED
    if t_s < bands.perfect_lo:
        return FeedbackGrade.SLIGHTLY_UNDERCOOKED
    if t_s <= bands.perfect_hi:
        return FeedbackGrade.PERFECT
    if t_s <= bands.over_edge:
        return FeedbackGrade.SLIGHTLY_OVERCOOKED
    return FeedbackGrade.OVERCOOKED


@dataclass(frozen=True)
class SensitivityEntry:
    name: str
    effect: float
    defined: bool = True


@dataclass(frozen=True)
class SensitivityReport:
    fraction: float
    base_time_s: float
    entries: tuple[SensitivityEntry, ...]  # sorted by effect, descending

    def ranking(self) -> list[str]:
        return [e.name for e in self.entries]


def sensitivity_analysis(base: EggParameters, fraction: float) -> SensitivityReport:
    """Relative effect of perturbing each parameter by ±fraction of its value.

    effect = mean over both directions of |t_perturbed - t_base| / t_base.
    Perturbed values are evaluated as-is (no clipping to the tuning bounds:
    clipping would break the exact proportionality of time in lambda).  A
    direction whose configuration is uncookable is skipped; if both fail the
    entry is flagged undefined.
    """
    if not (0.0 < fraction <= 0.5):
        raise ValueError(f"fraction must be in (0, 0.5], got {fraction:g}")
    t_base = cooking_time_s(base)
    entries = []
    for spec in PARAMS:
        value = getattr(base, spec.field)
        deltas = []
        for sign in (1.0, -1.0):
            perturbed = value * (1.0 + sign * fraction)
            if spec.name == "altitude_m":
                # boiling_point_c is only defined on [0, max]; clamp there
                perturbed = min(max(perturbed, 0.0), ALTITUDE_MAX_M)
            try:
                t = cooking_time_s(base.replace(**{spec.name: perturbed}))
            except (UncookableError, ValueError):
                continue
            deltas.append(abs(t - t_base) / t_base)
        if deltas:
            entries.append(SensitivityEntry(spec.name, sum(deltas) / len(deltas)))
        else:
            entries.append(SensitivityEntry(spec.name, float("nan"), defined=False))
    entries.sort(key=lambda e: (-(e.effect if e.defined else float("-inf")), e.name))
    return SensitivityReport(fraction=fraction, base_time_s=t_base, entries=tuple(entries))
