"""
Decision tasks as cost functions over scalar outcomes:

* frost protection (2 actions, temperature in °C)
* heat protection (2 actions, temperature in °C)
* wind power dispatch (11 actions, realized relative power in [0, 1])

plus the outcome transforms that bring raw forecast variables onto the task's
outcome scale (Kelvin to Celsius, 10 m wind speed to relative turbine power).
Every cost is piecewise linear in the outcome and constant beyond its outer knots.
"""
import logging
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, ParamError
from .grid_store import Variable

logger = logging.getLogger(__name__)

# --- CONFIGURATION ---
MAX_COST = 10.0
SAFE_MARGIN_C = 3.0
DEFAULT_STANDBY_COST = 0.02
WIND_POWER_BINS = tuple(k / 10 for k in range(1, 11))
KELVIN_OFFSET = 273.15
TEMPERATURE_DOMAIN = (-KELVIN_OFFSET, np.inf)
POWER_DOMAIN = (0.0, 1.0)

OutcomeTransform = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Action:
    id: int
    label: str
    payload: float = 0.0


@dataclass(frozen=True)
class ActionSpace:
    actions: tuple

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))
        if not self.actions:
            raise ParamError("Action space is empty")
        if [a.id for a in self.actions] != list(range(len(self.actions))):
            raise ParamError("Action ids must be 0..n-1 in order")
        labels = [a.label for a in self.actions]
        if len(set(labels)) != len(labels):
            raise ParamError(f"Action labels must be unique, got {labels}")

    def __len__(self) -> int:
        return len(self.actions)

    def __iter__(self):
        return iter(self.actions)

    def __getitem__(self, action_id: int) -> Action:
        return self.actions[action_id]

    @property
    def labels(self) -> list:
        return [a.label for a in self.actions]


@dataclass(frozen=True)
class PiecewiseLinear:
    """Linear between knots, constant outside them. A single knot is a constant cost."""

    knots: tuple
    values: tuple

    def __post_init__(self):
        knots = tuple(float(k) for k in self.knots)
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)
        if not knots or len(knots) != len(values):
            raise ParamError("Need one cost value per knot")
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise ParamError(f"Knots must increase strictly, got {knots}")
        if not all(np.isfinite(values)) or min(values) < 0:
            raise ParamError(f"Costs must be finite and non-negative, got {values}")

    def __call__(self, y):
        y = np.asarray(y, dtype=np.float64)
        if len(self.knots) == 1:
            return np.full(y.shape, self.values[0])
        return np.interp(y, self.knots, self.values)

    @property
    def is_constant(self) -> bool:
        return len(set(self.values)) == 1

    def scaled(self, factor: float) -> "PiecewiseLinear":
        return PiecewiseLinear(self.knots, tuple(factor * v for v in self.values))


@dataclass(frozen=True)
class CostFunction:
    name: str
    action_space: ActionSpace
    pieces: tuple
    outcome_domain: tuple = (-np.inf, np.inf)

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        if len(self.pieces) != len(self.action_space):
            raise ParamError(f"{self.name}: {len(self.pieces)} cost curves for {len(self.action_space)} actions")

    @property
    def n_actions(self) -> int:
        return len(self.action_space)

    def cost(self, action: int, y):
        return self.pieces[action](y)

    def cost_table(self, y) -> np.ndarray:
        """Costs of every action, stacked on a new leading axis."""
        return np.stack([piece(y) for piece in self.pieces])

    def in_domain(self, y) -> np.ndarray:
        lo, hi = self.outcome_domain
        y = np.asarray(y, dtype=np.float64)
        return (y >= lo) & (y <= hi)

    @property
    def constant_actions(self) -> frozenset:
        return frozenset(a for a, piece in enumerate(self.pieces) if piece.is_constant)

    def scaled(self, factor: float) -> "CostFunction":
        if not factor > 0:
            raise ParamError(f"Cost scale factor must be positive, got {factor}")
        return CostFunction(
            self.name, self.action_space, tuple(p.scaled(factor) for p in self.pieces), self.outcome_domain
        )


# --- Task parameters ---

def _check_cost_ratio(c: float, task: str):
    if not 0.0 < c < 1.0:
        raise ParamError(f"{task}: cost ratio c must lie in (0, 1), got {c}")


@dataclass(frozen=True)
class FrostTaskParams:
    theta: float
    cost_ratio_c: float
    max_cost: float = MAX_COST

    def __post_init__(self):
        _check_cost_ratio(self.cost_ratio_c, "frost")
        if not self.max_cost > 0:
            raise ParamError(f"frost: max cost must be positive, got {self.max_cost}")


@dataclass(frozen=True)
class HeatTaskParams:
    theta: float
    cost_ratio_c: float
    max_cost: float = MAX_COST

    def __post_init__(self):
        _check_cost_ratio(self.cost_ratio_c, "heat")
        if not self.max_cost > 0:
            raise ParamError(f"heat: max cost must be positive, got {self.max_cost}")


@dataclass(frozen=True)
class WindTaskParams:
    u_pen: float
    standby_cost: float = DEFAULT_STANDBY_COST
    power_bins: tuple = field(default=WIND_POWER_BINS)

    def __post_init__(self):
        # at u_pen == 1 every over-promise costs the same as the exact promise
        if not self.u_pen > 1.0:
            raise ParamError(f"wind: u_pen must exceed 1, got {self.u_pen}")
        if not 0.0 < self.standby_cost < 0.1:
            raise ParamError(f"wind: standby cost must lie in (0, 0.1), got {self.standby_cost}")


@dataclass(frozen=True)
class WindTransformParams:
    hub_height_m: float = 120.0
    alpha: float = 0.1
    v_in: float = 3.0
    v_rated: float = 13.0
    v_off: float = 23.0

    def __post_init__(self):
        if not 0.0 < self.v_in < self.v_rated < self.v_off:
            raise ParamError(
                f"Power curve needs 0 < v_in < v_rated < v_off, got {self.v_in}, {self.v_rated}, {self.v_off}"
            )
        if not self.hub_height_m > 0 or self.alpha < 0:
            raise ParamError("Hub height must be positive and the power-law exponent non-negative")


# --- Cost function builders ---

BINARY_ACTIONS = ActionSpace((Action(0, "no_protect"), Action(1, "protect")))


def frost_cost(params: FrostTaskParams) -> CostFunction:
    theta, c, top = params.theta, params.cost_ratio_c, params.max_cost
    knots = (theta, theta + SAFE_MARGIN_C)
    return CostFunction(
        name="frost",
        action_space=BINARY_ACTIONS,
        pieces=(
            PiecewiseLinear(knots, (top * c, 0.0)),
            PiecewiseLinear(knots, (0.0, top * (1.0 - c))),
        ),
        outcome_domain=TEMPERATURE_DOMAIN,
    )


def heat_cost(params: HeatTaskParams) -> CostFunction:
    theta, c, top = params.theta, params.cost_ratio_c, params.max_cost
    knots = (theta - SAFE_MARGIN_C, theta)
    return CostFunction(
        name="heat",
        action_space=BINARY_ACTIONS,
        pieces=(
            PiecewiseLinear(knots, (0.0, top * c)),
            PiecewiseLinear(knots, (top * (1.0 - c), 0.0)),
        ),
        outcome_domain=TEMPERATURE_DOMAIN,
    )


def frost_crossing(params: FrostTaskParams) -> float:
    """Temperature where protecting and not protecting cost the same."""
    return params.theta + SAFE_MARGIN_C * params.cost_ratio_c


def heat_crossing(params: HeatTaskParams) -> float:
    return params.theta - SAFE_MARGIN_C + SAFE_MARGIN_C * params.cost_ratio_c


def wind_cost(params: WindTaskParams) -> CostFunction:
    """
    Off (id 0) costs the standby drain whatever happens. Promising p earns 1 - p less
    than a full promise and every unit of shortfall below p costs u_pen; surplus is curtailed.
    """
    actions = [Action(0, "off", 0.0)]
    pieces = [PiecewiseLinear((0.0,), (params.standby_cost,))]
    for k, p in enumerate(params.power_bins, start=1):
        actions.append(Action(k, f"deliver_{p:.1f}", p))
        pieces.append(PiecewiseLinear((0.0, p), ((1.0 - p) + params.u_pen * p, 1.0 - p)))
    return CostFunction(
        name="wind",
        action_space=ActionSpace(tuple(actions)),
        pieces=tuple(pieces),
        outcome_domain=POWER_DOMAIN,
    )


# --- Outcome transforms ---

def kelvin_to_celsius(values):
    return np.asarray(values, dtype=np.float64) - KELVIN_OFFSET


def wind_speed_to_hub(v10, params: WindTransformParams = WindTransformParams()):
    v10 = np.asarray(v10, dtype=np.float64)
    if np.any(v10 < 0):
        raise DomainError(f"Negative wind speed {float(np.min(v10))} m/s")
    return (v10 * (params.hub_height_m / 10.0) ** params.alpha)[()]


def hub_speed_to_power(v_h, params: WindTransformParams = WindTransformParams()):
    """Cubic power curve: 0 below cut-in, cubic ramp to rated, 1 until cut-off, 0 beyond."""
    v = np.asarray(v_h, dtype=np.float64)
    if np.any(v < 0):
        raise DomainError(f"Negative hub-height wind speed {float(np.min(v))} m/s")
    ramp = (v ** 3 - params.v_in ** 3) / (params.v_rated ** 3 - params.v_in ** 3)
    power = np.select(
        [v < params.v_in, v < params.v_rated, v < params.v_off],
        [0.0, ramp, 1.0],
        default=0.0,
    )
    return power[()]


def wind_power(v10, params: WindTransformParams = WindTransformParams()):
    return hub_speed_to_power(wind_speed_to_hub(v10, params), params)


# --- Task assembly ---

@dataclass(frozen=True)
class DecisionTask:
    cost_fn: CostFunction
    transform: Optional[OutcomeTransform]
    variable: Variable
    params: dict

    @property
    def label(self) -> str:
        return self.cost_fn.name + "(" + ", ".join(f"{k}={v:g}" for k, v in self.params.items()) + ")"


def build_task(
    task: str,
    theta: Optional[float] = None,
    cost_ratio: Optional[float] = None,
    u_pen: Optional[float] = None,
    standby_cost: float = DEFAULT_STANDBY_COST,
    transform_params: Optional[WindTransformParams] = None,
) -> DecisionTask:
    """Cost function plus the transform from the raw forecast variable onto the task's outcome."""
    if task in ("frost", "heat"):
        if theta is None or cost_ratio is None:
            raise ParamError(f"{task}: theta and cost_ratio are required")
        if task == "frost":
            cost_fn = frost_cost(FrostTaskParams(theta=theta, cost_ratio_c=cost_ratio))
        else:
            cost_fn = heat_cost(HeatTaskParams(theta=theta, cost_ratio_c=cost_ratio))
        return DecisionTask(
            cost_fn, kelvin_to_celsius, Variable.TEMPERATURE_2M,
            {"theta": float(theta), "cost_ratio": float(cost_ratio)},
        )
    if task == "wind":
        if u_pen is None:
            raise ParamError("wind: u_pen is required")
        cost_fn = wind_cost(WindTaskParams(u_pen=u_pen, standby_cost=standby_cost))
        return DecisionTask(
            cost_fn, partial(wind_power, params=transform_params or WindTransformParams()),
            Variable.WIND_SPEED_10M,
            {"u_pen": float(u_pen), "standby_cost": float(standby_cost)},
        )
    raise ParamError(f"Unknown task '{task}' (expected frost, heat or wind)")
