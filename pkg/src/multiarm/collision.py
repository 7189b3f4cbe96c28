"""Time-dependent collision checking for trajectories and composite states.

All checks share one vectorized kernel: place both primitive sets for a batch
of sampled times, AABB-filter pairs at the check margin, and take signed
clearances (segment distance minus radii) for the surviving pairs. A pair
pruned by the broadphase is reported as infinitely clear, which is sound
because pruning guarantees its clearance exceeds the margin.

A configuration is *colliding* when the minimum clearance is <= margin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import JointLimitViolation, MissingGroupState, UnknownGroup
from .geometry import (
    FAR,
    Clearance,
    Owner,
    PlacedPrimitive,
    segment_aabbs,
    segment_distance,
    segments_of,
)
from .kinematics import JointState, RobotModel, placed_segments, within_limits
from .trajectory import JointTrajectory, states_at, time_grid

_LIMIT_SLACK = 1e-9


@dataclass(eq=False)
class Scene:
    """Robot models, their idle postures, and static obstacles."""

    robots: dict[str, RobotModel]
    idle_postures: dict[str, JointState]
    static_obstacles: list[PlacedPrimitive]

    def __post_init__(self):
        if set(self.robots) != set(self.idle_postures):
            raise ValueError("idle_postures must cover exactly the robot groups")
        for g, model in self.robots.items():
            q = self.idle_postures[g]
            if q.positions.shape != (model.n_joints,):
                raise ValueError(f"idle posture for {g} has wrong dimension")
        for prim in self.static_obstacles:
            if prim.owner[0] != "static":
                raise ValueError("static obstacles must be owned by 'static'")


@dataclass(frozen=True, eq=False)
class RunningRecord:
    """A trajectory currently executing, with its absolute start time."""

    trajectory: JointTrajectory
    start_time: float

    def __post_init__(self):
        if self.start_time < 0.0:
            raise ValueError("start_time must be >= 0")


@dataclass(frozen=True)
class CollisionReport:
    colliding: bool
    first_collision_time: float | None
    witness: tuple[Owner, Owner] | None
    min_clearance_seen: float

    @property
    def verdict(self) -> str:
        return "Colliding" if self.colliding else "Clear"


@dataclass(frozen=True)
class CheckParams:
    """Discretization step and clearance threshold for all checks."""

    dt: float = 0.05
    margin: float = 0.02

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be > 0")
        if self.margin < 0.0:
            raise ValueError("margin must be >= 0")


def required_margin(model_a: RobotModel, model_b: RobotModel | None, dt: float) -> float:
    """Smallest margin making discrete checking at step dt conservative.

    With both bodies bounded by their cartesian speed bounds, clearance can
    shrink by at most (v_a + v_b) * dt between samples; requiring
    margin >= 2 * (v_a + v_b) * dt guarantees a clearance that ever reaches
    zero is seen at or below the margin on the sample grid.
    """
    combined = model_a.max_cartesian_speed_bound
    if model_b is not None:
        combined += model_b.max_cartesian_speed_bound
    return 2.0 * combined * dt


class _ClearanceSweep:
    """Accumulates clearance families over a shared time grid."""

    def __init__(self, times: np.ndarray, margin: float):
        self.times = np.asarray(times, dtype=float)
        self.margin = margin
        self._families: list[tuple[np.ndarray, list[tuple[Owner, Owner]]]] = []
        self._min_per_t = np.full(len(self.times), np.inf)

    def add(self, clearances: np.ndarray, pairs: list[tuple[Owner, Owner]]):
        if clearances.shape[-1] == 0:
            return
        clearances = np.broadcast_to(
            clearances, (len(self.times), clearances.shape[-1])
        )
        self._families.append((clearances, pairs))
        self._min_per_t = np.minimum(self._min_per_t, clearances.min(axis=1))

    @property
    def min_clearance(self) -> float:
        return float(self._min_per_t.min()) if len(self.times) else FAR

    def report(self) -> CollisionReport:
        min_seen = self.min_clearance
        hits = np.nonzero(self._min_per_t <= self.margin)[0]
        if hits.size == 0:
            return CollisionReport(False, None, None, min_seen)
        k = int(hits[0])
        target = self._min_per_t[k]
        for clearances, pairs in self._families:
            j = int(np.argmin(clearances[k]))
            if clearances[k, j] == target:
                return CollisionReport(True, float(self.times[k]), pairs[j], min_seen)
        raise AssertionError("unreachable: witness must exist at a colliding sample")


def _cross_clearances(a, owners_a, b, owners_b, margin):
    """Clearances of the full cross product of two placed sets, (T, La*Lb).

    `a` and `b` are (p0, p1, radii) triples with endpoint shapes (Ta, L, 3);
    time axes broadcast (either side may be a single static placement).
    """
    a0, a1, ra = a
    b0, b1, rb = b
    lo_a, hi_a = segment_aabbs(a0, a1, ra, margin / 2.0)
    lo_b, hi_b = segment_aabbs(b0, b1, rb, margin / 2.0)
    mask = np.all(lo_a[:, :, None, :] <= hi_b[:, None, :, :], axis=-1) & np.all(
        lo_b[:, None, :, :] <= hi_a[:, :, None, :], axis=-1
    )
    dist = segment_distance(
        a0[:, :, None, :], a1[:, :, None, :], b0[:, None, :, :], b1[:, None, :, :]
    )
    clear = np.where(mask, dist - ra[:, None] - rb[None, :], np.inf)
    pairs = [(oa, ob) for oa in owners_a for ob in owners_b]
    return clear.reshape(clear.shape[0], -1), pairs


def _self_clearances(placed, owners, index_pairs, margin):
    """Clearances of selected within-set link pairs, (T, len(index_pairs))."""
    p0, p1, radii = placed
    if not index_pairs:
        return np.zeros((p0.shape[0], 0)), []
    ii = [i for i, _ in index_pairs]
    jj = [j for _, j in index_pairs]
    a0, a1, ra = p0[:, ii], p1[:, ii], radii[ii]
    b0, b1, rb = p0[:, jj], p1[:, jj], radii[jj]
    lo_a, hi_a = segment_aabbs(a0, a1, ra, margin / 2.0)
    lo_b, hi_b = segment_aabbs(b0, b1, rb, margin / 2.0)
    mask = np.all(lo_a <= hi_b, axis=-1) & np.all(lo_b <= hi_a, axis=-1)
    dist = segment_distance(a0, a1, b0, b1)
    clear = np.where(mask, dist - ra - rb, np.inf)
    pairs = [(owners[i], owners[j]) for i, j in index_pairs]
    return clear, pairs


def _place_state(model: RobotModel, q: JointState):
    if not within_limits(model, q, tol=_LIMIT_SLACK):
        raise JointLimitViolation(f"{model.group_id}: state outside joint limits")
    return placed_segments(model, q.positions[None, :])


def state_pair_check(
    model_a: RobotModel,
    q_a: JointState,
    model_b: RobotModel,
    q_b: JointState,
    margin: float,
) -> Clearance:
    """Minimum clearance between two robots at fixed configurations.

    Cross-robot pairs only; self-collision exemptions never apply across
    robots. Checking a robot against itself is a contract violation.
    """
    if model_a is model_b or model_a.group_id == model_b.group_id:
        raise ValueError("state_pair_check is cross-robot only")
    placed_a = _place_state(model_a, q_a)
    placed_b = _place_state(model_b, q_b)
    clear, pairs = _cross_clearances(placed_a, model_a.owners(), placed_b, model_b.owners(), margin)
    if clear.shape[1] == 0:
        return Clearance(FAR, None)
    j = int(np.argmin(clear[0]))
    value = float(clear[0, j])
    if np.isinf(value):
        return Clearance(FAR, None)
    return Clearance(value, pairs[j])


def _models_for(models, *group_ids) -> list[RobotModel]:
    out = []
    for g in group_ids:
        try:
            out.append(models[g])
        except KeyError:
            raise UnknownGroup(f"no robot model for group '{g}'") from None
    return out


def trajectory_vs_running(
    candidate: JointTrajectory,
    running: RunningRecord,
    now: float,
    params: CheckParams,
    models: dict[str, RobotModel],
) -> CollisionReport:
    """Check a candidate starting at `now` against one running trajectory.

    Both sides are sampled at the shared step params.dt on the horizon
    covering the candidate and the running trajectory's remaining motion;
    past either end the held final state applies. This also catches the
    candidate's parked end state obstructing the running arm's later motion.
    Times in the report are relative to the candidate start.
    """
    if candidate.group_id == running.trajectory.group_id:
        raise ValueError("a group never runs two trajectories at once; cross-group only")
    model_c, model_r = _models_for(models, candidate.group_id, running.trajectory.group_id)
    offset = now - running.start_time
    if offset < -1e-9:
        raise ValueError("running.start_time must be <= now")
    offset = max(0.0, offset)
    horizon = max(candidate.duration, running.trajectory.duration - offset)
    times = time_grid(max(horizon, 0.0), params.dt)
    placed_c = placed_segments(model_c, states_at(candidate, times))
    placed_r = placed_segments(model_r, states_at(running.trajectory, offset + times))
    sweep = _ClearanceSweep(times, params.margin)
    sweep.add(*_cross_clearances(placed_c, model_c.owners(), placed_r, model_r.owners(), params.margin))
    return sweep.report()


def trajectory_vs_static(
    candidate: JointTrajectory,
    scene: Scene,
    excluded_groups: set[str],
    params: CheckParams,
    models: dict[str, RobotModel] | None = None,
    idle_postures: dict[str, JointState] | None = None,
) -> CollisionReport:
    """Check a candidate against static obstacles and idle (non-excluded) arms.

    `excluded_groups` should hold the candidate's group and every currently
    running group (those are covered by trajectory_vs_running); the
    candidate's own group is always excluded. `idle_postures` overrides the
    scene's initial postures with where the idle arms are parked *now* (they
    move as trajectories complete).
    """
    models = scene.robots if models is None else models
    postures = scene.idle_postures if idle_postures is None else idle_postures
    (model_c,) = _models_for(models, candidate.group_id)
    excluded = set(excluded_groups) | {candidate.group_id}
    times = time_grid(candidate.duration, params.dt)
    placed_c = placed_segments(model_c, states_at(candidate, times))
    sweep = _ClearanceSweep(times, params.margin)
    if scene.static_obstacles:
        s0, s1, sr = segments_of(scene.static_obstacles)
        statics = (s0[None, :, :], s1[None, :, :], sr)
        owners = [p.owner for p in scene.static_obstacles]
        sweep.add(*_cross_clearances(placed_c, model_c.owners(), statics, owners, params.margin))
    for g in sorted(scene.robots):
        if g in excluded:
            continue
        model_i = scene.robots[g]
        placed_i = _place_state(model_i, postures[g])
        sweep.add(*_cross_clearances(placed_c, model_c.owners(), placed_i, model_i.owners(), params.margin))
    return sweep.report()


def composite_state_check(
    states: dict[str, JointState], scene: Scene, margin: float
) -> CollisionReport:
    """One discrete check of the consolidated multi-robot state.

    Covers within-robot pairs not exempted by allowed_pairs, every
    cross-robot pair, and every robot-vs-static pair. Needs exactly one
    state per robot group. first_collision_time is 0.0 when colliding (the
    checked horizon is the single instant).
    """
    missing = set(scene.robots) - set(states)
    if missing:
        raise MissingGroupState(f"missing states for groups: {sorted(missing)}")
    extra = set(states) - set(scene.robots)
    if extra:
        raise UnknownGroup(f"states for unknown groups: {sorted(extra)}")

    groups = sorted(scene.robots)
    placed = {g: _place_state(scene.robots[g], states[g]) for g in groups}
    sweep = _ClearanceSweep(np.zeros(1), margin)
    for g in groups:
        model = scene.robots[g]
        pairs = [
            (i, j)
            for i in range(model.n_links)
            for j in range(i + 1, model.n_links)
            if (i, j) not in model.allowed_pairs
        ]
        sweep.add(*_self_clearances(placed[g], model.owners(), pairs, margin))
    for i, gi in enumerate(groups):
        for gj in groups[i + 1 :]:
            sweep.add(
                *_cross_clearances(
                    placed[gi], scene.robots[gi].owners(), placed[gj], scene.robots[gj].owners(), margin
                )
            )
    if scene.static_obstacles:
        s0, s1, sr = segments_of(scene.static_obstacles)
        statics = (s0[None, :, :], s1[None, :, :], sr)
        owners = [p.owner for p in scene.static_obstacles]
        for g in groups:
            sweep.add(*_cross_clearances(placed[g], scene.robots[g].owners(), statics, owners, margin))
    return sweep.report()
