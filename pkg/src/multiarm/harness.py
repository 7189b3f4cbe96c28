"""Scenario files, a straight-line joint planner, run drivers, and metrics.

A scenario is a JSON document with top-level keys `robots`, `obstacles`,
`tasks`, `params`, `seed` (lengths in meters, angles in radians). Tasks are
planned as straight joint-space segments chained per group (each task starts
at the previous task's goal) and submitted to the execution manager at their
submit times. `run` drives either the asynchronous manager or the serialized
synchronous baseline and reports metrics recomputed purely from the event
log, so emitted numbers are reproducible from the log alone.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .collision import CheckParams, Scene
from .errors import JointLimitViolation, ScenarioInvalid
from .executor import Event, ExecutionManager, ExecStatus, ExecHandle
from .geometry import Capsule, PlacedPrimitive, Sphere, segment_distance, segments_of
from .kinematics import (
    JointSpec,
    JointState,
    LinkGeometry,
    RobotModel,
    placed_segments,
    pose,
    within_limits,
)
from .trajectory import JointTrajectory, states_at, time_grid

CSV_HEADER = [
    "mode",
    "makespan_s",
    "mean_wait_s",
    "backlog_entries",
    "timeout_aborts",
    "collision_halts",
    "pairwise_checks",
    "state_evaluations",
    "overhead_s",
]

FIXTURES = ("disjoint.json", "crossing.json", "timeout.json", "panda_like_shared.json")


@dataclass(frozen=True, eq=False)
class Task:
    group_id: str
    goal: JointState
    submit_time: float = 0.0
    timeout: float | None = None


@dataclass
class RunParams:
    check: CheckParams = field(default_factory=CheckParams)
    tick_length: float = 0.01
    monitor_period: int = 5
    default_timeout: float = 30.0
    check_static: bool = True


@dataclass(eq=False)
class Scenario:
    scene: Scene
    tasks: list[Task]
    seed: int = 0
    params: RunParams = field(default_factory=RunParams)


@dataclass
class Metrics:
    mode: str
    makespan: float
    mean_wait: float
    backlog_entries: int
    timeout_aborts: int
    collision_halts: int
    pairwise_checks: int
    state_evaluations: int
    overhead: float

    def row(self) -> list[str]:
        return [
            self.mode,
            f"{self.makespan:.6f}",
            f"{self.mean_wait:.6f}",
            str(self.backlog_entries),
            str(self.timeout_aborts),
            str(self.collision_halts),
            str(self.pairwise_checks),
            str(self.state_evaluations),
            f"{self.overhead:.6f}",
        ]


@dataclass(eq=False)
class RunResult:
    metrics: Metrics
    events: list[Event]
    lines: list[str]
    trajectories: dict[str, JointTrajectory]
    statuses: dict[str, ExecStatus]
    handles: list[ExecHandle]


def plan_joint_line(
    model: RobotModel, q_start: JointState, q_goal: JointState, traj_id: str | None = None
) -> JointTrajectory:
    """Straight joint-space segment at the binding joint's velocity limit.

    Duration is max_j |goal_j - start_j| / vlim_j; every other joint moves
    proportionally slower. A zero-length move yields a single waypoint.
    """
    for q in (q_start, q_goal):
        if not within_limits(model, q, tol=1e-9):
            raise JointLimitViolation(f"{model.group_id}: endpoint outside joint limits")
    delta = np.abs(q_goal.positions - q_start.positions)
    duration = float(np.max(delta / model.joint_velocity_limits)) if delta.size else 0.0
    if duration == 0.0:
        times = [0.0]
        positions = [q_start.positions]
    else:
        times = [0.0, duration]
        positions = [q_start.positions, q_goal.positions]
    kwargs = {} if traj_id is None else {"id": traj_id}
    return JointTrajectory(group_id=model.group_id, times=times, positions=positions, **kwargs)


def validate_scenario(scenario: Scenario) -> None:
    for i, task in enumerate(scenario.tasks):
        if task.group_id not in scenario.scene.robots:
            raise ScenarioInvalid(f"task {i} references unknown group '{task.group_id}'")
        model = scenario.scene.robots[task.group_id]
        if not within_limits(model, task.goal):
            raise ScenarioInvalid(f"task {i} goal outside joint limits")
        if task.submit_time < 0.0:
            raise ScenarioInvalid(f"task {i} has negative submit_time")
        if task.timeout is not None and task.timeout <= 0.0:
            raise ScenarioInvalid(f"task {i} has non-positive timeout")


def plan_tasks(scenario: Scenario) -> list[JointTrajectory]:
    """Chained straight-line trajectories, one per task, ids t0, t1, ..."""
    cursors = {g: scenario.scene.idle_postures[g] for g in scenario.scene.robots}
    planned = []
    for i, task in enumerate(scenario.tasks):
        model = scenario.scene.robots[task.group_id]
        traj = plan_joint_line(model, cursors[task.group_id], task.goal, traj_id=f"t{i}")
        cursors[task.group_id] = task.goal
        planned.append(traj)
    return planned


def run(scenario: Scenario, mode: str = "async") -> RunResult:
    """Execute a scenario end to end and collect metrics from the event log."""
    if mode not in ("async", "sync"):
        raise ScenarioInvalid(f"mode must be 'async' or 'sync', got '{mode}'")
    validate_scenario(scenario)
    trajectories = plan_tasks(scenario)
    p = scenario.params
    mgr = ExecutionManager(
        scenario.scene,
        params=p.check,
        tick_length=p.tick_length,
        monitor_period=p.monitor_period,
        check_static=p.check_static,
        serialized=(mode == "sync"),
    )
    order = sorted(range(len(scenario.tasks)), key=lambda i: scenario.tasks[i].submit_time)
    handles: list[ExecHandle] = []
    idx = 0
    budget = sum(t.duration for t in trajectories)
    budget += sum(t.timeout or p.default_timeout for t in scenario.tasks)
    budget += max((t.submit_time for t in scenario.tasks), default=0.0) + 1.0
    max_ticks = int(budget / p.tick_length) + 10
    while True:
        while idx < len(order) and scenario.tasks[order[idx]].submit_time <= mgr.clock + 1e-9:
            task = scenario.tasks[order[idx]]
            timeout = task.timeout if task.timeout is not None else p.default_timeout
            handles.append(mgr.submit(trajectories[order[idx]], timeout))
            idx += 1
        if idx == len(order) and mgr.all_terminal():
            break
        if mgr.tick_index >= max_ticks:
            raise RuntimeError("scenario did not quiesce within the tick budget")
        mgr.tick()
    lines = mgr.event_lines()
    statuses = {h.id: mgr.status(h) for h in handles}
    return RunResult(
        metrics=metrics_from_events(lines, mode),
        events=list(mgr.events),
        lines=lines,
        trajectories={t.id: t for t in trajectories},
        statuses=statuses,
        handles=handles,
    )


def parse_event_line(line: str) -> tuple[float, str, str, dict[str, str]]:
    clock_s, kind, traj_id, detail = line.rstrip("\n").split("\t")
    fields = {}
    if detail:
        for part in detail.split(";"):
            key, _, value = part.partition("=")
            fields[key] = value
    return float(clock_s), kind, traj_id, fields


def metrics_from_events(lines, mode: str) -> Metrics:
    """Recompute all metrics purely from event-log lines.

    The per-group execution lower bound (for the overhead column) uses
    admitted-to-completed spans, so everything derives from the log.
    """
    parsed = [parse_event_line(l) if isinstance(l, str) else parse_event_line(l.line()) for l in lines]
    submitted: dict[str, float] = {}
    groups: dict[str, str] = {}
    admitted: dict[str, float] = {}
    completed: dict[str, float] = {}
    backlog_entries = 0
    timeout_aborts = 0
    halt_clocks = set()
    pairwise_checks = 0
    state_evaluations = 0
    for clock, kind, traj_id, fields in parsed:
        if kind == "SUBMITTED":
            submitted.setdefault(traj_id, clock)
            groups[traj_id] = fields["group"]
        elif kind == "ADMITTED":
            admitted.setdefault(traj_id, clock)
        elif kind == "COMPLETED":
            completed[traj_id] = clock
        elif kind == "BACKLOGGED":
            backlog_entries += 1
        elif kind == "TIMEOUT_ABORT":
            timeout_aborts += 1
        elif kind == "COLLISION_HALT":
            halt_clocks.add(clock)
        if "checks" in fields:
            pairwise_checks += int(fields["checks"])
            state_evaluations += int(fields["states"])

    makespan = 0.0
    if submitted and completed:
        makespan = max(completed.values()) - min(submitted.values())
    waits = [admitted[t] - submitted[t] for t in admitted if t in submitted]
    mean_wait = float(np.mean(waits)) if waits else 0.0
    per_group_exec: dict[str, float] = {}
    for t, finish in completed.items():
        if t in admitted:
            g = groups.get(t, "")
            per_group_exec[g] = per_group_exec.get(g, 0.0) + (finish - admitted[t])
    lower_bound = max(per_group_exec.values(), default=0.0)
    return Metrics(
        mode=mode,
        makespan=makespan,
        mean_wait=mean_wait,
        backlog_entries=backlog_entries,
        timeout_aborts=timeout_aborts,
        collision_halts=len(halt_clocks),
        pairwise_checks=pairwise_checks,
        state_evaluations=state_evaluations,
        overhead=makespan - lower_bound,
    )


def write_metrics(metrics, path) -> None:
    """Write one CSV row per Metrics with the fixed header."""
    rows = metrics if isinstance(metrics, (list, tuple)) else [metrics]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for m in rows:
            writer.writerow(m.row())


def write_events(lines, path) -> None:
    with open(path, "w") as fh:
        for line in lines:
            fh.write(line + "\n")


def replay_min_clearance(scenario: Scenario, result: RunResult, factor: int = 10) -> float:
    """Dense post-hoc audit of an executed run.

    Rebuilds every group's actual motion from the event log (admission
    starts, completions, halts, cancellations), samples it at
    tick_length/factor, and returns the minimum cross-robot / robot-static
    clearance over the whole run. Self-collision pairs are not part of this
    audit. Returns +inf for runs with no sampled interaction.
    """
    parsed = [parse_event_line(l) for l in result.lines]
    if not parsed:
        return float("inf")
    end = max(p[0] for p in parsed)
    starts: dict[str, float] = {}
    stops: dict[str, float] = {}
    for clock, kind, traj_id, _ in parsed:
        if kind == "ADMITTED":
            starts[traj_id] = clock
        elif kind in ("COMPLETED", "COLLISION_HALT", "CANCELLED") and traj_id in starts:
            stops[traj_id] = clock

    ts = time_grid(end, scenario.params.tick_length / factor) if end > 0 else np.zeros(1)
    groups = sorted(scenario.scene.robots)
    motions: dict[str, np.ndarray] = {}
    for g in groups:
        q0 = scenario.scene.idle_postures[g].positions
        qs = np.tile(q0, (len(ts), 1))
        segs = sorted(
            (starts[t], stops.get(t, end), t)
            for t in starts
            if result.trajectories[t].group_id == g
        )
        for t_start, t_stop, tid in segs:
            traj = result.trajectories[tid]
            rel = np.clip(ts - t_start, 0.0, max(0.0, t_stop - t_start))
            vals = states_at(traj, rel)
            mask = ts >= t_start
            qs = np.where(mask[:, None], vals, qs)
        motions[g] = qs

    best = float("inf")
    placed = {g: placed_segments(scenario.scene.robots[g], motions[g]) for g in groups}
    for i, gi in enumerate(groups):
        a0, a1, ra = placed[gi]
        for gj in groups[i + 1 :]:
            b0, b1, rb = placed[gj]
            dist = segment_distance(
                a0[:, :, None, :], a1[:, :, None, :], b0[:, None, :, :], b1[:, None, :, :]
            )
            clear = dist - ra[:, None] - rb[None, :]
            best = min(best, float(clear.min()))
        if scenario.scene.static_obstacles:
            s0, s1, sr = segments_of(scenario.scene.static_obstacles)
            dist = segment_distance(
                a0[:, :, None, :], a1[:, :, None, :], s0[None, None, :, :], s1[None, None, :, :]
            )
            clear = dist - ra[:, None] - sr[None, :]
            best = min(best, float(clear.min()))
    return best


# scenario (de)serialization


def _shape_from_dict(d: dict):
    if "capsule" in d:
        c = d["capsule"]
        return Capsule(p0=c["p0"], p1=c["p1"], radius=float(c["radius"]))
    if "sphere" in d:
        s = d["sphere"]
        return Sphere(center=s["center"], radius=float(s["radius"]))
    raise ScenarioInvalid(f"shape must be 'capsule' or 'sphere', got keys {sorted(d)}")


def robot_from_dict(d: dict) -> tuple[RobotModel, JointState]:
    joints = []
    vlimits = []
    for j in d["joints"]:
        joints.append(
            JointSpec.from_xyz_rpy(
                axis=j["axis"],
                xyz=j.get("origin_xyz", (0.0, 0.0, 0.0)),
                rpy=j.get("origin_rpy", (0.0, 0.0, 0.0)),
                limits=j.get("position_limits", (-np.pi, np.pi)),
            )
        )
        vlimits.append(float(j["velocity_limit"]))
    links = [LinkGeometry(frame=int(l["joint"]), shape=_shape_from_dict(l)) for l in d["links"]]
    base = d.get("base_pose", {})
    model = RobotModel(
        group_id=d["group_id"],
        base_pose=pose(base.get("xyz", (0, 0, 0)), base.get("rpy", (0, 0, 0))),
        joints=joints,
        links=links,
        joint_velocity_limits=vlimits,
        allowed_pairs={tuple(p) for p in d.get("allowed_pairs", [])},
    )
    idle = JointState(d["group_id"], d["idle_posture"])
    return model, idle


def scenario_from_dict(data: dict) -> Scenario:
    try:
        robots = {}
        idles = {}
        for rd in data["robots"]:
            model, idle = robot_from_dict(rd)
            robots[model.group_id] = model
            idles[model.group_id] = idle
        obstacles = [
            PlacedPrimitive(shape=_shape_from_dict(od), owner=("static", k))
            for k, od in enumerate(data.get("obstacles", []))
        ]
        scene = Scene(robots=robots, idle_postures=idles, static_obstacles=obstacles)
        tasks = [
            Task(
                group_id=td["group_id"],
                goal=JointState(td["group_id"], td["goal"]),
                submit_time=float(td.get("submit_time", 0.0)),
                timeout=float(td["timeout"]) if "timeout" in td else None,
            )
            for td in data.get("tasks", [])
        ]
        pd = data.get("params", {})
        params = RunParams(
            check=CheckParams(
                dt=float(pd.get("time_step", 0.05)), margin=float(pd.get("margin", 0.02))
            ),
            tick_length=float(pd.get("tick", 0.01)),
            monitor_period=int(pd.get("monitor_period", 5)),
            default_timeout=float(pd.get("default_timeout", 30.0)),
            check_static=bool(pd.get("check_static", True)),
        )
        scenario = Scenario(scene=scene, tasks=tasks, seed=int(data.get("seed", 0)), params=params)
    except ScenarioInvalid:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioInvalid(f"malformed scenario: {exc}") from exc
    validate_scenario(scenario)
    return scenario


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        data = json.load(fh)
    return scenario_from_dict(data)


def fixture_path(name: str) -> Path:
    """Path of one of the shipped scenario files (see FIXTURES)."""
    return Path(str(resources.files("multiarm").joinpath("scenarios", name)))


def with_overrides(
    scenario: Scenario,
    time_step: float | None = None,
    tick: float | None = None,
    margin: float | None = None,
    backlog_timeout: float | None = None,
    monitor_period: int | None = None,
) -> Scenario:
    """Scenario copy with CLI-style parameter overrides applied."""
    p = scenario.params
    check = CheckParams(
        dt=time_step if time_step is not None else p.check.dt,
        margin=margin if margin is not None else p.check.margin,
    )
    params = RunParams(
        check=check,
        tick_length=tick if tick is not None else p.tick_length,
        monitor_period=monitor_period if monitor_period is not None else p.monitor_period,
        default_timeout=backlog_timeout if backlog_timeout is not None else p.default_timeout,
        check_static=p.check_static,
    )
    return Scenario(scene=scenario.scene, tasks=scenario.tasks, seed=scenario.seed, params=params)
