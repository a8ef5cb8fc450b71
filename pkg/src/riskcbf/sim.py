"""Closed-loop simulation of an agent avoiding uncertain moving obstacles.

A proportional controller drives the agent to its goal; every step the
active (lowest-barrier) obstacle contributes one affine constraint and
the safety filter minimally modifies the nominal control. Unicycle
agents are controlled through the projected point a distance l ahead of
the body, whose dynamics are the single integrator the filter assumes;
goal arrival is measured at that controlled point.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .barrier import (
    BarrierConfig,
    InfeasibleConstraintError,
    barrier_value,
    constraint,
    min_compose,
    qp_filter,
)
from .field import CostFieldParams
from .risk import RiskSpec, spec_label


def _vec2(value) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (2,):
        raise ValueError(f"expected a 2-vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class SingleIntegrator:
    """Agent with dynamics xdot = u."""

    position: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", _vec2(self.position))

    def controlled_point(self) -> np.ndarray:
        return self.position

    def step(self, u: np.ndarray, dt: float) -> "SingleIntegrator":
        return SingleIntegrator(self.position + dt * u)


@dataclass(frozen=True)
class Unicycle:
    """Unicycle agent controlled via the projected point p = x + l*d(phi).

    The filtered planar control u is mapped to (v, omega) by
    unicycle_transform, under which pdot = u holds exactly.
    """

    position: np.ndarray
    heading: float
    offset_l: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "position", _vec2(self.position))
        if self.offset_l <= 0:
            raise ValueError("offset_l must be positive")

    def controlled_point(self) -> np.ndarray:
        return self.position + self.offset_l * np.array(
            [math.cos(self.heading), math.sin(self.heading)]
        )

    def step(self, u: np.ndarray, dt: float) -> "Unicycle":
        # The transform is a feedback law in the current heading; the
        # heading loop it induces is only stable for steps with
        # |omega| * step <= ~2, so substep the kinematics (the planar
        # control u stays zero-order held over dt).
        n_sub = max(1, math.ceil(float(np.linalg.norm(u)) * dt / (0.1 * self.offset_l)))
        h = dt / n_sub
        pos = self.position
        phi = self.heading
        for _ in range(n_sub):
            v, omega = unicycle_transform(u, phi, self.offset_l)
            pos = pos + h * v * np.array([math.cos(phi), math.sin(phi)])
            phi += h * omega
        return Unicycle(pos, phi, self.offset_l)


AgentModel = Union[SingleIntegrator, Unicycle]


@dataclass(frozen=True)
class ObstacleModel:
    """Obstacle moving in a straight line from start to goal at a fixed
    speed, then resting at the goal."""

    position: np.ndarray
    start: np.ndarray
    goal: np.ndarray
    speed: float

    def __post_init__(self):
        object.__setattr__(self, "position", _vec2(self.position))
        object.__setattr__(self, "start", _vec2(self.start))
        object.__setattr__(self, "goal", _vec2(self.goal))
        if self.speed < 0:
            raise ValueError("speed must be nonnegative")

    @classmethod
    def from_path(cls, start, goal, speed: float) -> "ObstacleModel":
        start = _vec2(start)
        return cls(start.copy(), start, _vec2(goal), float(speed))


def obstacle_velocity(obs: ObstacleModel) -> np.ndarray:
    to_goal = obs.goal - obs.position
    dist = float(np.linalg.norm(to_goal))
    if obs.speed == 0.0 or dist == 0.0:
        return np.zeros(2)
    return obs.speed / dist * to_goal


def step_obstacle(obs: ObstacleModel, dt: float) -> ObstacleModel:
    """Advance the obstacle toward its goal, clamping on arrival."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    to_goal = obs.goal - obs.position
    dist = float(np.linalg.norm(to_goal))
    travel = obs.speed * dt
    if obs.speed == 0.0 or dist == 0.0:
        return obs
    if travel >= dist:
        return replace(obs, position=obs.goal.copy())
    return replace(obs, position=obs.position + travel / dist * to_goal)


def nominal_control(state_point, goal, gain) -> np.ndarray:
    """Proportional control gain * (goal - state) on the controlled point."""
    return np.asarray(gain, dtype=float) * (_vec2(goal) - _vec2(state_point))


def unicycle_transform(u, heading: float, l: float) -> tuple[float, float]:
    """Map a planar projected-point control to unicycle (v, omega).

    Applies [[cos phi, sin phi], [-sin phi / l, cos phi / l]] to u, the
    inverse of the projected-point Jacobian, so pdot = u to first order.
    """
    if l <= 0:
        raise ValueError("l must be positive")
    u = _vec2(u)
    c, s = math.cos(heading), math.sin(heading)
    v = c * u[0] + s * u[1]
    omega = (-s * u[0] + c * u[1]) / l
    return float(v), float(omega)


def default_obstacle_speed(obs_start, obs_goal, agent_start, agent_goal, gain) -> float:
    """Speed making the obstacle traverse its segment on the agent's
    nominal time scale: |obstacle segment| * gain / |agent segment|."""
    seg = float(np.linalg.norm(_vec2(obs_goal) - _vec2(obs_start)))
    agent_seg = float(np.linalg.norm(_vec2(agent_goal) - _vec2(agent_start)))
    if agent_seg == 0.0:
        raise ValueError("agent start and goal coincide")
    return seg * float(np.mean(np.asarray(gain, dtype=float))) / agent_seg


@dataclass(frozen=True)
class Scenario:
    agent: AgentModel
    goal: np.ndarray
    nominal_gain: np.ndarray
    obstacles: tuple[ObstacleModel, ...]
    field: CostFieldParams
    risk: RiskSpec
    barrier: BarrierConfig
    dt: float = 0.02
    t_max: float = 60.0
    goal_tol: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "goal", _vec2(self.goal))
        object.__setattr__(
            self, "nominal_gain", np.asarray(self.nominal_gain, dtype=float)
        )
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_max <= self.dt:
            raise ValueError("t_max must exceed dt")
        if self.goal_tol <= 0:
            raise ValueError("goal_tol must be positive")


@dataclass(frozen=True)
class SimStep:
    t: float
    position: np.ndarray
    heading: float
    point: np.ndarray
    obstacles: np.ndarray
    u_nominal: np.ndarray
    u_filtered: np.ndarray
    h_min: float
    active_index: int
    feasible: bool

    @property
    def delta(self) -> np.ndarray:
        return self.u_nominal - self.u_filtered


@dataclass(frozen=True)
class SimLog:
    label: str
    records: tuple[SimStep, ...]
    reached_goal: bool
    goal_time: Optional[float]
    min_h: float
    total_deviation: float
    max_delta: float
    feasibility_violations: int

    @property
    def steps(self) -> int:
        return len(self.records)

    def to_csv(self, path) -> None:
        n_obs = self.records[0].obstacles.shape[0] if self.records else 0
        cols = ["t", "x", "y", "heading", "px", "py"]
        for k in range(n_obs):
            cols += [f"obs{k}_x", f"obs{k}_y"]
        cols += [
            "unom_x",
            "unom_y",
            "u_x",
            "u_y",
            "delta_x",
            "delta_y",
            "h_min",
            "active_obstacle",
            "feasible",
        ]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(cols) + "\n")
            for rec in self.records:
                row = [rec.t, *rec.position, rec.heading, *rec.point]
                for k in range(n_obs):
                    row += list(rec.obstacles[k])
                delta = rec.delta
                row += [*rec.u_nominal, *rec.u_filtered, *delta, rec.h_min]
                fields = [f"{v:.17g}" for v in row]
                fields.append(str(rec.active_index))
                fields.append("1" if rec.feasible else "0")
                fh.write(",".join(fields) + "\n")

    def summary_dict(self) -> dict:
        return {
            "label": self.label,
            "reached_goal": self.reached_goal,
            "goal_time": self.goal_time,
            "min_h": None if math.isinf(self.min_h) else self.min_h,
            "total_deviation": self.total_deviation,
            "max_delta": self.max_delta,
            "feasibility_violations": self.feasibility_violations,
            "steps": self.steps,
        }

    def to_json(self, path) -> None:
        records = []
        for rec in self.records:
            records.append(
                {
                    "t": rec.t,
                    "position": rec.position.tolist(),
                    "heading": None if math.isnan(rec.heading) else rec.heading,
                    "point": rec.point.tolist(),
                    "obstacles": rec.obstacles.tolist(),
                    "u_nominal": rec.u_nominal.tolist(),
                    "u_filtered": rec.u_filtered.tolist(),
                    "h_min": None if math.isinf(rec.h_min) else rec.h_min,
                    "active_index": rec.active_index,
                    "feasible": rec.feasible,
                }
            )
        payload = {"summary": self.summary_dict(), "records": records}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)
            fh.write("\n")


def run(scenario: Scenario) -> SimLog:
    """Forward-Euler closed loop; logs every step.

    Raises ValueError when the start state is already perceived unsafe.
    Infeasible filter states hold the previous control, are logged, and
    flag the run; the loop still terminates on goal arrival or t_max.
    """
    agent = scenario.agent
    obstacles = list(scenario.obstacles)
    f = np.zeros(2)
    G = np.eye(2)
    u_prev = np.zeros(2)
    records: list[SimStep] = []
    violations = 0
    reached = False
    goal_time: Optional[float] = None
    n_steps = math.ceil(scenario.t_max / scenario.dt)

    for k in range(n_steps + 1):
        t = k * scenario.dt
        point = agent.controlled_point()
        u_nom = nominal_control(point, scenario.goal, scenario.nominal_gain)
        if obstacles:
            h_values = []
            cons = []
            for obs in obstacles:
                xi = obs.position - point
                h_values.append(
                    barrier_value(scenario.risk, scenario.field, scenario.barrier, xi)
                )
                cons.append(
                    constraint(
                        scenario.risk,
                        scenario.field,
                        scenario.barrier,
                        point,
                        obs.position,
                        f,
                        G,
                        obstacle_velocity(obs),
                    )
                )
            h_min, active_con, active_idx = min_compose(h_values, cons)
            if k == 0 and h_min <= 0:
                raise ValueError(
                    f"scenario starts perceived unsafe (h_min = {h_min:g})"
                )
            try:
                u = qp_filter(u_nom, active_con)
                feasible = True
            except InfeasibleConstraintError:
                u = u_prev.copy()
                feasible = False
                violations += 1
        else:
            h_min = math.inf
            active_idx = -1
            u = u_nom.copy()
            feasible = True

        heading = agent.heading if isinstance(agent, Unicycle) else math.nan
        records.append(
            SimStep(
                t=t,
                position=agent.position.copy(),
                heading=heading,
                point=point.copy(),
                obstacles=np.array([o.position for o in obstacles]).reshape(-1, 2),
                u_nominal=u_nom,
                u_filtered=u,
                h_min=h_min,
                active_index=active_idx,
                feasible=feasible,
            )
        )
        if float(np.linalg.norm(point - scenario.goal)) <= scenario.goal_tol:
            reached = True
            goal_time = t
            break
        if k == n_steps:
            break
        agent = agent.step(u, scenario.dt)
        obstacles = [step_obstacle(o, scenario.dt) for o in obstacles]
        u_prev = u

    deltas = [float(np.linalg.norm(r.delta)) for r in records]
    return SimLog(
        label=spec_label(scenario.risk),
        records=tuple(records),
        reached_goal=reached,
        goal_time=goal_time,
        min_h=min((r.h_min for r in records), default=math.inf),
        total_deviation=float(sum(d * scenario.dt for d in deltas)),
        max_delta=max(deltas, default=0.0),
        feasibility_violations=violations,
    )


@dataclass(frozen=True)
class ComparisonRow:
    label: str
    reached_goal: bool
    goal_time: Optional[float]
    min_h: float
    total_deviation: float
    max_delta: float
    feasibility_violations: int
    steps: int


def compare_models(scenario: Scenario, specs) -> list[ComparisonRow]:
    """Run each risk spec on the shared scenario and tabulate summaries."""
    if len(specs) < 2:
        raise ValueError("compare_models needs at least two specs")
    rows = []
    for spec in specs:
        log = run(replace(scenario, risk=spec))
        rows.append(
            ComparisonRow(
                label=log.label,
                reached_goal=log.reached_goal,
                goal_time=log.goal_time,
                min_h=log.min_h,
                total_deviation=log.total_deviation,
                max_delta=log.max_delta,
                feasibility_violations=log.feasibility_violations,
                steps=log.steps,
            )
        )
    return rows


def comparison_to_csv(rows, path) -> None:
    cols = [
        "label",
        "reached_goal",
        "goal_time",
        "min_h",
        "total_deviation",
        "max_delta",
        "feasibility_violations",
        "steps",
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(
                ",".join(
                    [
                        row.label,
                        "1" if row.reached_goal else "0",
                        "" if row.goal_time is None else f"{row.goal_time:.17g}",
                        f"{row.min_h:.17g}",
                        f"{row.total_deviation:.17g}",
                        f"{row.max_delta:.17g}",
                        str(row.feasibility_violations),
                        str(row.steps),
                    ]
                )
                + "\n"
            )


def _heading_towards(start, goal) -> float:
    d = _vec2(goal) - _vec2(start)
    return math.atan2(d[1], d[0])


def single_obstacle_scenario(
    risk: RiskSpec,
    dt: float = 0.02,
    t_max: float = 60.0,
    goal_tol: float = 0.1,
    eta1_gain: float = 1.0,
    m: int = 10,
) -> Scenario:
    """Unicycle agent from (5, 2) to (10, 10) crossing one obstacle that
    moves from (13, 13) to (2, 3); cost constants k1=200, k2=0.01 with
    localization radius 0.5 and rho at the mean cost of that radius."""
    params = CostFieldParams(200.0, 0.01, 0.5, m=m)
    gain = np.array([0.6, 0.6])
    start = np.array([5.0, 2.0])
    goal = np.array([10.0, 10.0])
    obs_start = np.array([13.0, 13.0])
    obs_goal = np.array([2.0, 3.0])
    speed = default_obstacle_speed(obs_start, obs_goal, start, goal, gain)
    return Scenario(
        agent=Unicycle(start, _heading_towards(start, goal), 0.2),
        goal=goal,
        nominal_gain=gain,
        obstacles=(ObstacleModel.from_path(obs_start, obs_goal, speed),),
        field=params,
        risk=risk,
        barrier=BarrierConfig(rho=params.sigma_peak, eta1_gain=eta1_gain),
        dt=dt,
        t_max=t_max,
        goal_tol=goal_tol,
    )


def multi_obstacle_scenario(
    risk: RiskSpec,
    dt: float = 0.02,
    t_max: float = 60.0,
    goal_tol: float = 0.1,
    eta1_gain: float = 1.0,
    m: int = 10,
) -> Scenario:
    """Unicycle agent from (-15, -15) to (15, 15) against three crossing
    obstacles; gain 1.6, localization radius 2.5, same cost constants."""
    params = CostFieldParams(200.0, 0.01, 2.5, m=m)
    gain = np.array([1.6, 1.6])
    start = np.array([-15.0, -15.0])
    goal = np.array([15.0, 15.0])
    paths = [
        ((-17.0, 0.0), (17.0, 0.0)),
        ((0.0, 14.0), (0.0, -14.0)),
        ((10.0, -10.0), (-10.0, 10.0)),
    ]
    obstacles = tuple(
        ObstacleModel.from_path(
            s, g, default_obstacle_speed(s, g, start, goal, gain)
        )
        for s, g in paths
    )
    return Scenario(
        agent=Unicycle(start, _heading_towards(start, goal), 0.2),
        goal=goal,
        nominal_gain=gain,
        obstacles=obstacles,
        field=params,
        risk=risk,
        barrier=BarrierConfig(rho=params.sigma_peak, eta1_gain=eta1_gain),
        dt=dt,
        t_max=t_max,
        goal_tol=goal_tol,
    )
