from __future__ import annotations

import math

import numpy as np
import pytest

from xbotune import harness
from xbotune.params import EggParameters


def oracle_boiling_point_c(altitude_m: float) -> float:
    """Independent scalar evaluation of the altitude expression (natural log)."""
    return (
        (49.161 * math.log(29.921 * (1.0 - 0.0000068753 * altitude_m) ** 5.2559) + 44.932)
        - 32.0
    ) * 5.0 / 9.0


def oracle_cooking_time_s(
    mass_g: float,
    lambda_: float,
    ywr: float,
    t_egg_c: float,
    t_yolk_c: float,
    altitude_m: float,
) -> float:
    """Independent scalar evaluation of the cooking-time expression."""
    t_water = oracle_boiling_point_c(altitude_m)
    return (
        lambda_
        * mass_g ** (2.0 / 3.0)
        * math.log(ywr * (t_egg_c - t_water) / (t_yolk_c - t_water))
    )


CHICKEN_OPTIMAL = EggParameters(
    mass_g=50, lambda_=27, ywr=0.9, t_egg_c=12, t_yolk_c=63, altitude_m=5
)


@pytest.fixture(scope="session")
def scenarios() -> list[harness.Scenario]:
    return harness.default_scenarios()


@pytest.fixture(scope="session")
def scenario_by_id(scenarios) -> dict[str, harness.Scenario]:
    return {sc.id: sc for sc in scenarios}


@pytest.fixture(scope="session")
def chicken_surrogate(scenario_by_id):
    """GP fit to a pinned 30-iteration optimizer run on the chicken scenario."""
    from xbotune import bo, eggmodel, gp

    sc = scenario_by_id["chicken"]
    space = bo.egg_search_space(fixed=sc.fixed, bounds=sc.bounds)
    trace, _ = bo.run(eggmodel.perfect_time_loss, space, budget=30, seed=11)
    xs = np.array([p.as_tuple() for p, _ in trace])
    ys = np.array([y for _, y in trace])
    model = gp.fit(xs, ys, space.bounds, noise_floor=1e-6 * max(float(np.var(ys)), 1e-6))
    return sc, space, model
