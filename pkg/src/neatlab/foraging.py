"""The dangerous foraging domain.

One trial puts a robot at the center of a square field with eight food
items of a single type (A or B) scattered uniformly at random; the type is
either edible or poisonous for the whole trial. Each of the 750 timesteps
the robot senses, its network is activated, the three outputs steer it, and
any overlapped items are eaten. Eating starts a 20-step pleasure or pain
signal, which is the only feedback telling the robot whether to keep
foraging this type or avoid it.

A full evaluation is eight trials (two per type/edibility combination) and
fitness is ``f = 32 + e - p`` over the summed eaten counts; the offset is
the largest possible poison count, so fitness is never negative. Perfect
play eats everything edible and exactly one item per poisonous trial,
giving f = 32 + 32 - 4 = 60.

The module-level operations (``sense``, ``apply_outputs``,
``resolve_eating``) are the readable contract and are what
``run_trial_reference`` composes; ``run_trial`` runs the identical loop as
a numba kernel over the phenotype's array plan, and the two are asserted
equal in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .genome import Genome
from .network import SIGMOID_SLOPE, Phenotype
from . import network

TWO_PI = 2.0 * math.pi

FOOD_A = "A"
FOOD_B = "B"

# Input vector layout. Distance sensors are ordered front-left,
# front-centre, front-right, back-left, back-right for each food type.
SENSORS_A = slice(0, 5)
SENSORS_B = slice(5, 10)
IDX_PLEASURE = 10
IDX_PAIN = 11
IDX_BIAS = 12
N_SENSORS = 13

# One trial per line: (food type, edible); composition is fixed at two
# trials per combination in this order.
TRIAL_PLAN = (
    (FOOD_A, True),
    (FOOD_A, True),
    (FOOD_B, True),
    (FOOD_B, True),
    (FOOD_A, False),
    (FOOD_A, False),
    (FOOD_B, False),
    (FOOD_B, False),
)


@dataclass(frozen=True)
class Geometry:
    """Field geometry and kinematics.

    The field is ``field_size`` x ``field_size`` units with the origin at
    its center. ``omega_max`` is exactly 15 degrees per step so that a full
    spin takes an integer number of steps. Distance sensor activations are
    normalized by the field diagonal, the largest possible separation.
    """

    field_size: float = 200.0
    robot_radius: float = 5.0
    food_radius: float = 5.0
    v_max: float = 2.0
    omega_max: float = math.pi / 12.0
    steps: int = 750
    timer_steps: int = 20
    n_items: int = 8

    @property
    def half(self) -> float:
        return self.field_size / 2.0

    @property
    def eat_radius(self) -> float:
        return self.robot_radius + self.food_radius

    @property
    def d_max(self) -> float:
        return math.hypot(self.field_size, self.field_size)


@dataclass
class TrialConfig:
    """One trial's setup: the present food type, its edibility, and the
    seeded item placement."""

    food_type: str
    edible: bool
    placement_seed: int
    items: np.ndarray  # (n_items, 2) positions


@dataclass
class WorldState:
    """Mutable simulation state for one running trial."""

    x: float
    y: float
    heading: float
    eaten: np.ndarray
    pain_timer: int = 0
    pleasure_timer: int = 0
    timestep: int = 0
    e_trial: int = 0
    p_trial: int = 0


@dataclass
class SensorFrame:
    """The thirteen network inputs gathered in one timestep."""

    values: np.ndarray

    @property
    def type_a(self) -> np.ndarray:
        return self.values[SENSORS_A]

    @property
    def type_b(self) -> np.ndarray:
        return self.values[SENSORS_B]

    @property
    def pleasure(self) -> float:
        return float(self.values[IDX_PLEASURE])

    @property
    def pain(self) -> float:
        return float(self.values[IDX_PAIN])

    @property
    def bias(self) -> float:
        return float(self.values[IDX_BIAS])


@dataclass(frozen=True)
class FitnessRecord:
    """Eaten counts over the eight trials; ``f = 32 + e - p``."""

    e: int
    p: int

    def __post_init__(self):
        if self.e < 0 or self.p < 0:
            raise ValueError("eaten counts cannot be negative")

    @property
    def f(self) -> float:
        return 32.0 + self.e - self.p


def derive_seed(*parts: int) -> int:
    """Stable child seed from integer parts (order matters)."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1, np.uint64)[0])


def place_food(placement_seed: int, geometry: Geometry = Geometry()) -> np.ndarray:
    """Uniform item positions over the field interior. Overlaps with each
    other and with the robot start are allowed."""
    rng = np.random.default_rng(placement_seed)
    return rng.uniform(-geometry.half, geometry.half, (geometry.n_items, 2))


def build_trial_set(seed: int, geometry: Geometry = Geometry()) -> list[TrialConfig]:
    """The eight-trial evaluation set with per-trial derived placements."""
    trials = []
    for i, (food_type, edible) in enumerate(TRIAL_PLAN):
        placement_seed = derive_seed(seed, i)
        trials.append(
            TrialConfig(food_type, edible, placement_seed, place_food(placement_seed, geometry))
        )
    return trials


def initial_world(geometry: Geometry = Geometry()) -> WorldState:
    return WorldState(0.0, 0.0, 0.0, np.zeros(geometry.n_items, dtype=np.bool_))


def sense(w: WorldState, t: TrialConfig, geometry: Geometry = Geometry()) -> SensorFrame:
    """Gather the thirteen inputs.

    Each of five robot-relative sectors reports ``1 - d/d_max`` for the
    nearest uneaten item inside it (eaten items are invisible); the five
    sensors of the absent food type read zero. Pleasure and pain read 1
    while their timers run; the bias channel is always 1.
    """
    values = np.zeros(N_SENSORS)
    base = 0 if t.food_type == FOOD_A else 5
    best = [-1.0] * 5
    for k in range(len(t.items)):
        if w.eaten[k]:
            continue
        dx = t.items[k, 0] - w.x
        dy = t.items[k, 1] - w.y
        d = math.hypot(dx, dy)
        s = _sector(math.atan2(dy, dx) - w.heading)
        if best[s] < 0.0 or d < best[s]:
            best[s] = d
    for s in range(5):
        if best[s] >= 0.0:
            a = 1.0 - best[s] / geometry.d_max
            values[base + s] = a if a > 0.0 else 0.0
    values[IDX_PLEASURE] = 1.0 if w.pleasure_timer > 0 else 0.0
    values[IDX_PAIN] = 1.0 if w.pain_timer > 0 else 0.0
    values[IDX_BIAS] = 1.0
    return SensorFrame(values)


def _sector(bearing: float) -> int:
    """Sector slot for a robot-relative bearing.

    Half-open 60/120-degree sectors covering the full circle exactly once:
    front-centre (-30, 30], front-left (30, 90], back-left (90, 180],
    front-right (-90, -30], back-right (-180, -90]. Slots are ordered
    front-left, front-centre, front-right, back-left, back-right.
    """
    b = bearing % TWO_PI
    if b > math.pi:
        b -= TWO_PI
    if b > math.pi / 2.0:
        return 3
    if b > math.pi / 6.0:
        return 0
    if b > -math.pi / 6.0:
        return 1
    if b > -math.pi / 2.0:
        return 2
    return 4


def tick_timers(w: WorldState) -> None:
    """Decrement the pain/pleasure timers; called once per step after
    sensing, so an eat event is sensed for exactly 20 steps."""
    if w.pain_timer > 0:
        w.pain_timer -= 1
    if w.pleasure_timer > 0:
        w.pleasure_timer -= 1


def apply_outputs(w: WorldState, outputs, geometry: Geometry = Geometry()) -> WorldState:
    """Steer by (left rotation, right rotation, forward).

    Rotation is applied before the forward move. Walls are hard: the
    position is clamped to the field and the heading reflects off the wall
    (billiard style), so no boundary point is a resting state for a moving
    robot.
    """
    w.heading += (outputs[0] - outputs[1]) * geometry.omega_max
    w.x += math.cos(w.heading) * outputs[2] * geometry.v_max
    w.y += math.sin(w.heading) * outputs[2] * geometry.v_max
    half = geometry.half
    if w.x > half or w.x < -half:
        w.x = min(half, max(-half, w.x))
        w.heading = math.pi - w.heading
    if w.y > half or w.y < -half:
        w.y = min(half, max(-half, w.y))
        w.heading = -w.heading
    return w


def resolve_eating(w: WorldState, t: TrialConfig, geometry: Geometry = Geometry()) -> WorldState:
    """Mark every overlapped uneaten item eaten and start the matching
    feedback timer. Items can only be eaten once."""
    eat_r2 = geometry.eat_radius * geometry.eat_radius
    for k in range(len(t.items)):
        if w.eaten[k]:
            continue
        dx = t.items[k, 0] - w.x
        dy = t.items[k, 1] - w.y
        if dx * dx + dy * dy <= eat_r2:
            w.eaten[k] = True
            if t.edible:
                w.e_trial += 1
                w.pleasure_timer = geometry.timer_steps
            else:
                w.p_trial += 1
                w.pain_timer = geometry.timer_steps
    return w


def run_trial_reference(p: Phenotype, t: TrialConfig, geometry: Geometry = Geometry()) -> tuple[int, int]:
    """Pure-Python trial loop composed from the module operations.

    Kept as the slow twin of ``run_trial``; the suite asserts both produce
    identical counts.
    """
    p.reset()
    w = initial_world(geometry)
    for _ in range(geometry.steps):
        frame = sense(w, t, geometry)
        tick_timers(w)
        outputs = p.activate(frame.values)
        apply_outputs(w, outputs, geometry)
        resolve_eating(w, t, geometry)
        w.timestep += 1
    return w.e_trial, w.p_trial


@njit(cache=True)
def _trial_kernel(
    eval_order,
    edge_ptr,
    edge_src,
    edge_weight,
    edge_reads_prev,
    output_index,
    n_nodes,
    n_inputs,
    items,
    type_a,
    edible,
    half,
    d_max,
    eat_r2,
    v_max,
    omega_max,
    steps,
    timer_steps,
):
    """Compiled twin of ``run_trial_reference`` (same arithmetic, same
    operation order)."""
    curr = np.zeros(n_nodes)
    prev = np.zeros(n_nodes)
    inputs = np.zeros(n_inputs)
    n_items = items.shape[0]
    eaten = np.zeros(n_items, dtype=np.bool_)
    x = 0.0
    y = 0.0
    heading = 0.0
    pain = 0
    pleasure = 0
    e_trial = 0
    p_trial = 0
    two_pi = 2.0 * math.pi
    base = 0 if type_a else 5

    for _ in range(steps):
        # sense
        for i in range(10):
            inputs[i] = 0.0
        best = np.full(5, -1.0)
        for k in range(n_items):
            if eaten[k]:
                continue
            dx = items[k, 0] - x
            dy = items[k, 1] - y
            d = math.hypot(dx, dy)
            b = (math.atan2(dy, dx) - heading) % two_pi
            if b > math.pi:
                b -= two_pi
            if b > math.pi / 2.0:
                s = 3
            elif b > math.pi / 6.0:
                s = 0
            elif b > -math.pi / 6.0:
                s = 1
            elif b > -math.pi / 2.0:
                s = 2
            else:
                s = 4
            if best[s] < 0.0 or d < best[s]:
                best[s] = d
        for s in range(5):
            if best[s] >= 0.0:
                a = 1.0 - best[s] / d_max
                inputs[base + s] = a if a > 0.0 else 0.0
        inputs[10] = 1.0 if pleasure > 0 else 0.0
        inputs[11] = 1.0 if pain > 0 else 0.0
        inputs[12] = 1.0
        if pain > 0:
            pain -= 1
        if pleasure > 0:
            pleasure -= 1

        # activate
        for i in range(n_inputs):
            curr[i] = inputs[i]
        for oi in range(eval_order.shape[0]):
            total = 0.0
            for ei in range(edge_ptr[oi], edge_ptr[oi + 1]):
                src = edge_src[ei]
                if edge_reads_prev[ei]:
                    total += edge_weight[ei] * prev[src]
                else:
                    total += edge_weight[ei] * curr[src]
            curr[eval_order[oi]] = 1.0 / (1.0 + math.exp(-SIGMOID_SLOPE * total))
        for i in range(n_nodes):
            prev[i] = curr[i]

        # move
        heading += (curr[output_index[0]] - curr[output_index[1]]) * omega_max
        fwd = curr[output_index[2]] * v_max
        x += math.cos(heading) * fwd
        y += math.sin(heading) * fwd
        if x > half or x < -half:
            x = min(half, max(-half, x))
            heading = math.pi - heading
        if y > half or y < -half:
            y = min(half, max(-half, y))
            heading = -heading

        # eat
        for k in range(n_items):
            if eaten[k]:
                continue
            dx = items[k, 0] - x
            dy = items[k, 1] - y
            if dx * dx + dy * dy <= eat_r2:
                eaten[k] = True
                if edible:
                    e_trial += 1
                    pleasure = timer_steps
                else:
                    p_trial += 1
                    pain = timer_steps
    return e_trial, p_trial


def run_trial(p: Phenotype, t: TrialConfig, geometry: Geometry = Geometry()) -> tuple[int, int]:
    """Run one full trial from cleared network state; returns the trial's
    (edible eaten, poisonous eaten)."""
    e_trial, p_trial = _trial_kernel(
        p.eval_order,
        p.edge_ptr,
        p.edge_src,
        p.edge_weight,
        p.edge_reads_prev,
        p.output_index,
        p.n_nodes,
        p.n_inputs,
        np.ascontiguousarray(t.items, dtype=np.float64),
        t.food_type == FOOD_A,
        t.edible,
        geometry.half,
        geometry.d_max,
        geometry.eat_radius * geometry.eat_radius,
        geometry.v_max,
        geometry.omega_max,
        geometry.steps,
        geometry.timer_steps,
    )
    return int(e_trial), int(p_trial)


def evaluate(genome: Genome, trial_set: list[TrialConfig], geometry: Geometry = Geometry()) -> FitnessRecord:
    """Compile once, run every trial from a clean state, sum the counts."""
    p = network.compile(genome)
    e = 0
    pc = 0
    for t in trial_set:
        p.reset()
        te, tp = run_trial(p, t, geometry)
        e += te
        pc += tp
    return FitnessRecord(e, pc)
