import math

import numpy as np
import pytest

from conftest import make_genome, random_genome
from neatlab import foraging, network
from neatlab.foraging import (
    FOOD_A,
    FOOD_B,
    IDX_BIAS,
    IDX_PAIN,
    IDX_PLEASURE,
    FitnessRecord,
    Geometry,
    TrialConfig,
    WorldState,
    apply_outputs,
    build_trial_set,
    evaluate,
    initial_world,
    place_food,
    resolve_eating,
    run_trial,
    run_trial_reference,
    sense,
    tick_timers,
)

GEO = Geometry()


def single_item_trial(x, y, food_type=FOOD_A, edible=True):
    return TrialConfig(food_type, edible, 0, np.array([[float(x), float(y)]]))


def world_for(trial, x=0.0, y=0.0, heading=0.0):
    return WorldState(x, y, heading, np.zeros(len(trial.items), dtype=np.bool_))


# -- fitness record ----------------------------------------------------------

def test_fitness_formula_random_counts():
    rng = np.random.default_rng(40)
    for _ in range(10_000):
        e = int(rng.integers(0, 33))
        p = int(rng.integers(0, 33))
        r = FitnessRecord(e, p)
        assert r.f == 32 + e - p
        assert 0.0 <= r.f <= 64.0


def test_fitness_perfect_play_is_sixty():
    assert FitnessRecord(32, 4).f == 60.0


def test_fitness_extremes():
    assert FitnessRecord(0, 0).f == 32.0
    assert FitnessRecord(0, 32).f == 0.0
    with pytest.raises(ValueError):
        FitnessRecord(-1, 0)


# -- trial construction ------------------------------------------------------

def test_trial_set_composition_and_order():
    for seed in range(100):
        trials = build_trial_set(seed)
        assert [(t.food_type, t.edible) for t in trials] == [
            (FOOD_A, True), (FOOD_A, True), (FOOD_B, True), (FOOD_B, True),
            (FOOD_A, False), (FOOD_A, False), (FOOD_B, False), (FOOD_B, False),
        ]
        assert sum(t.edible for t in trials) == 4
        assert sum(t.food_type == FOOD_A for t in trials) == 4


def test_trial_set_deterministic():
    a = build_trial_set(123)
    b = build_trial_set(123)
    for ta, tb in zip(a, b):
        assert ta.placement_seed == tb.placement_seed
        assert np.array_equal(ta.items, tb.items)
    c = build_trial_set(124)
    assert any(not np.array_equal(ta.items, tc.items) for ta, tc in zip(a, c))


def test_place_food_bounds_and_determinism():
    for seed in range(50):
        items = place_food(seed)
        assert items.shape == (8, 2)
        assert np.all(np.abs(items) <= GEO.half)
    assert np.array_equal(place_food(7), place_food(7))


def test_place_food_mean_near_center():
    # law of large numbers: the empirical mean of 10k seeded placements
    # stays within 2% of the field size from the center
    total = np.zeros(2)
    n = 10_000
    for seed in range(n):
        total += place_food(seed).mean(axis=0)
    mean = total / n
    assert np.all(np.abs(mean) <= 0.02 * GEO.field_size)


# -- sensors -----------------------------------------------------------------

def test_sense_front_centre_half_distance():
    trial = single_item_trial(GEO.d_max / 2.0, 0.0)
    frame = sense(world_for(trial), trial, GEO)
    assert frame.values[1] == pytest.approx(0.5, abs=1e-12)  # front-centre slot
    assert np.count_nonzero(frame.values[:10]) == 1
    assert frame.bias == 1.0


def test_sense_absent_type_reads_zero():
    trial_a = single_item_trial(30.0, 0.0, FOOD_A)
    frame = sense(world_for(trial_a), trial_a, GEO)
    assert np.all(frame.type_b == 0.0)
    assert np.any(frame.type_a > 0.0)
    trial_b = single_item_trial(30.0, 0.0, FOOD_B)
    frame = sense(world_for(trial_b), trial_b, GEO)
    assert np.all(frame.type_a == 0.0)
    assert np.any(frame.type_b > 0.0)


def test_sense_eaten_items_invisible():
    trial = TrialConfig(FOOD_A, True, 0, place_food(3))
    w = world_for(trial)
    w.eaten[:] = True
    frame = sense(w, trial, GEO)
    assert np.all(frame.values[:10] == 0.0)
    assert frame.values[IDX_BIAS] == 1.0


def test_sense_sector_assignment():
    # one item per sector at unit-ish distances around the robot
    cases = [
        (0.0, 1),      # dead ahead -> front-centre
        (math.radians(45), 0),    # front-left
        (math.radians(-45), 2),   # front-right
        (math.radians(135), 3),   # back-left
        (math.radians(-135), 4),  # back-right
    ]
    for angle, slot in cases:
        trial = single_item_trial(50 * math.cos(angle), 50 * math.sin(angle))
        frame = sense(world_for(trial), trial, GEO)
        expected = 1.0 - 50.0 / GEO.d_max
        assert frame.values[slot] == pytest.approx(expected, abs=1e-12), (angle, slot)
        others = [v for i, v in enumerate(frame.values[:10]) if i != slot]
        assert all(v == 0.0 for v in others)


def test_sense_boundary_bearings_covered_once():
    # bearings on sector boundaries fall in exactly one sector
    for deg in (-180.0, -90.0, -30.0, 30.0, 90.0, 180.0, 0.0):
        angle = math.radians(deg)
        trial = single_item_trial(40 * math.cos(angle), 40 * math.sin(angle))
        frame = sense(world_for(trial), trial, GEO)
        assert np.count_nonzero(frame.values[:10]) == 1, deg


def sensor_oracle(w, trial, geo):
    """Independent sensing: rotate item offsets into the robot frame with a
    rotation matrix, classify by the rotated coordinates."""
    values = np.zeros(13)
    base = 0 if trial.food_type == FOOD_A else 5
    cos_h, sin_h = math.cos(-w.heading), math.sin(-w.heading)
    nearest = {}
    for k, (ix, iy) in enumerate(trial.items):
        if w.eaten[k]:
            continue
        dx, dy = ix - w.x, iy - w.y
        rx = dx * cos_h - dy * sin_h
        ry = dx * sin_h + dy * cos_h
        d = math.sqrt(rx * rx + ry * ry)
        ang = math.degrees(math.atan2(ry, rx))
        if -30.0 < ang <= 30.0:
            slot = 1
        elif 30.0 < ang <= 90.0:
            slot = 0
        elif -90.0 < ang <= -30.0:
            slot = 2
        elif 90.0 < ang <= 180.0:
            slot = 3
        else:
            slot = 4
        if slot not in nearest or d < nearest[slot]:
            nearest[slot] = d
    for slot, d in nearest.items():
        values[base + slot] = max(0.0, 1.0 - d / geo.d_max)
    values[IDX_PLEASURE] = 1.0 if w.pleasure_timer > 0 else 0.0
    values[IDX_PAIN] = 1.0 if w.pain_timer > 0 else 0.0
    values[IDX_BIAS] = 1.0
    return values


def test_sense_matches_geometric_oracle_1000_states():
    rng = np.random.default_rng(41)
    for _ in range(1000):
        items = rng.uniform(-GEO.half, GEO.half, (8, 2))
        trial = TrialConfig(FOOD_A if rng.random() < 0.5 else FOOD_B,
                            bool(rng.random() < 0.5), 0, items)
        w = world_for(trial,
                      x=float(rng.uniform(-GEO.half, GEO.half)),
                      y=float(rng.uniform(-GEO.half, GEO.half)),
                      heading=float(rng.uniform(-12, 12)))
        w.eaten[:] = rng.random(8) < 0.3
        w.pain_timer = int(rng.integers(0, 3))
        w.pleasure_timer = int(rng.integers(0, 3))
        got = sense(w, trial, GEO).values
        want = sensor_oracle(w, trial, GEO)
        assert got == pytest.approx(want, abs=1e-9)


# -- movement ----------------------------------------------------------------

def test_apply_outputs_symmetric_rotation_cancels():
    trial = single_item_trial(10, 0)
    w = world_for(trial, heading=0.7)
    apply_outputs(w, [0.4, 0.4, 0.0], GEO)
    assert w.heading == 0.7
    assert (w.x, w.y) == (0.0, 0.0)


def test_apply_outputs_zero_forward_keeps_position():
    trial = single_item_trial(10, 0)
    w = world_for(trial)
    apply_outputs(w, [1.0, 0.0, 0.0], GEO)
    assert (w.x, w.y) == (0.0, 0.0)
    assert w.heading == pytest.approx(GEO.omega_max)


def test_apply_outputs_full_turn_returns_heading():
    # angle accumulation: omega_max is exactly 2*pi/24, so 24 max-rate
    # steps add up to one full turn
    steps = math.ceil(2 * math.pi / GEO.omega_max)
    assert steps == 24
    trial = single_item_trial(10, 0)
    w = world_for(trial)
    for _ in range(steps):
        apply_outputs(w, [1.0, 0.0, 0.0], GEO)
    wrapped = (w.heading + math.pi) % (2 * math.pi) - math.pi
    assert abs(wrapped) <= GEO.omega_max
    assert wrapped == pytest.approx(0.0, abs=1e-9)


def test_apply_outputs_wall_clamps_and_reflects():
    trial = single_item_trial(10, 0)
    w = world_for(trial, x=GEO.half - 1.0)
    apply_outputs(w, [0.5, 0.5, 1.0], GEO)
    assert w.x == GEO.half
    assert w.heading == pytest.approx(math.pi)  # reflected off the x wall
    apply_outputs(w, [0.5, 0.5, 1.0], GEO)
    assert w.x == pytest.approx(GEO.half - GEO.v_max)  # heading now points inward
    w = world_for(trial, y=GEO.half - 1.0, heading=math.pi / 2)
    apply_outputs(w, [0.5, 0.5, 1.0], GEO)
    assert w.y == GEO.half
    assert w.heading == pytest.approx(-math.pi / 2)  # reflected off the y wall


def test_walls_are_never_absorbing():
    # pushing into a corner cannot pin the robot: reflections turn it back
    trial = single_item_trial(0, 0)
    w = world_for(trial, x=GEO.half - 0.5, y=GEO.half - 0.5, heading=math.pi / 4)
    positions = []
    for _ in range(50):
        apply_outputs(w, [0.5, 0.5, 1.0], GEO)
        positions.append((w.x, w.y))
    moves = sum(
        abs(a[0] - b[0]) + abs(a[1] - b[1]) for a, b in zip(positions, positions[1:])
    )
    assert moves > 10.0
    assert all(abs(x) <= GEO.half and abs(y) <= GEO.half for x, y in positions)


def test_forward_speed_is_output_times_vmax():
    trial = single_item_trial(10, 0)
    w = world_for(trial)
    apply_outputs(w, [0.5, 0.5, 0.25], GEO)
    assert w.x == pytest.approx(0.25 * GEO.v_max)
    assert w.y == pytest.approx(0.0)


# -- eating ------------------------------------------------------------------

def test_resolve_eating_far_away_no_change():
    trial = single_item_trial(50, 50)
    w = world_for(trial)
    resolve_eating(w, trial, GEO)
    assert w.e_trial == 0 and w.p_trial == 0
    assert not w.eaten.any()


def test_resolve_eating_two_poisonous_at_once():
    trial = TrialConfig(FOOD_A, False, 0, np.array([[3.0, 0.0], [0.0, 4.0], [90.0, 90.0]]))
    w = world_for(trial)
    resolve_eating(w, trial, GEO)
    assert w.p_trial == 2 and w.e_trial == 0
    assert w.pain_timer == GEO.timer_steps
    assert list(w.eaten) == [True, True, False]


def test_resolve_eating_only_once():
    trial = single_item_trial(2.0, 0.0, edible=True)
    w = world_for(trial)
    resolve_eating(w, trial, GEO)
    assert w.e_trial == 1
    w.pleasure_timer = 0
    resolve_eating(w, trial, GEO)
    assert w.e_trial == 1
    assert w.pleasure_timer == 0


def test_eat_distance_threshold():
    exactly = single_item_trial(GEO.eat_radius, 0.0)
    w = world_for(exactly)
    resolve_eating(w, exactly, GEO)
    assert w.e_trial == 1
    outside = single_item_trial(GEO.eat_radius + 1e-9, 0.0)
    w = world_for(outside)
    resolve_eating(w, outside, GEO)
    assert w.e_trial == 0


# -- timers ------------------------------------------------------------------

def test_timer_reads_one_for_exactly_twenty_sensing_steps():
    trial = single_item_trial(2.0, 0.0, edible=False)
    w = world_for(trial)
    resolve_eating(w, trial, GEO)  # the eat event
    reads = []
    for _ in range(25):
        frame = sense(w, trial, GEO)
        reads.append(frame.pain)
        tick_timers(w)
    assert reads == [1.0] * 20 + [0.0] * 5


def test_timer_retrigger_resets():
    trial = TrialConfig(FOOD_A, False, 0, np.array([[2.0, 0.0], [3.0, 0.0]]))
    w = world_for(trial)
    w.eaten[1] = True  # hold the second item back
    resolve_eating(w, trial, GEO)
    for _ in range(10):
        sense(w, trial, GEO)
        tick_timers(w)
    assert w.pain_timer == 10
    w.eaten[1] = False
    resolve_eating(w, trial, GEO)
    assert w.pain_timer == GEO.timer_steps


# -- trials ------------------------------------------------------------------

def zero_weight_genome():
    specs = [(j * 13 + i, i, 13 + j, 0.0, True, False) for j in range(3) for i in range(13)]
    return make_genome(13, 3, specs)


def straight_line_oracle(trial, geo):
    """Constant outputs (0.5, 0.5, 0.5): heading stays on the x axis, speed
    is 1.0, so the robot ping-pongs along y = 0 between the two walls. An
    item is eaten at the first step whose position comes within the eat
    radius."""
    eaten = [False] * len(trial.items)
    e = p = 0
    x = 0.0
    direction = 1.0
    for step in range(geo.steps):
        x += direction * 0.5 * geo.v_max
        if abs(x) > geo.half:
            x = min(geo.half, max(-geo.half, x))
            direction = -direction
        for k, (ix, iy) in enumerate(trial.items):
            if eaten[k]:
                continue
            if (ix - x) ** 2 + iy ** 2 <= geo.eat_radius ** 2:
                eaten[k] = True
                if trial.edible:
                    e += 1
                else:
                    p += 1
    return e, p


def test_run_trial_straight_line_matches_intersection_oracle():
    g = zero_weight_genome()
    p = network.compile(g)
    hits = 0
    for seed in range(30):
        for edible in (True, False):
            trial = TrialConfig(FOOD_A, edible, seed, place_food(seed))
            expected = straight_line_oracle(trial, GEO)
            got = run_trial(p, trial, GEO)
            assert got == expected, (seed, edible)
            hits += sum(expected)
    assert hits > 0  # the layouts actually intersected the path sometimes


def test_run_trial_counts_bounded_and_deterministic():
    rng = np.random.default_rng(42)
    g = random_genome(rng, n_in=13, n_out=3, max_nodes=20, mutations=10)
    p = network.compile(g)
    trial = TrialConfig(FOOD_A, True, 5, place_food(5))
    first = run_trial(p, trial, GEO)
    again = run_trial(p, trial, GEO)
    assert first == again
    assert 0 <= first[0] <= 8 and first[1] == 0


def test_run_trial_fast_equals_reference():
    rng = np.random.default_rng(43)
    for case in range(12):
        g = random_genome(rng, n_in=13, n_out=3, max_nodes=18, mutations=8)
        phen = network.compile(g)
        trial = TrialConfig(
            FOOD_A if case % 2 else FOOD_B,
            case % 4 < 2,
            case,
            place_food(case),
        )
        fast = run_trial(phen, trial, GEO)
        slow = run_trial_reference(phen, trial, GEO)
        assert fast == slow, f"case {case}"


def test_conservation_every_step():
    rng = np.random.default_rng(44)
    g = random_genome(rng, n_in=13, n_out=3, mutations=6)
    p = network.compile(g)
    trial = TrialConfig(FOOD_A, False, 9, place_food(9))
    p.reset()
    w = initial_world(GEO)
    for _ in range(GEO.steps):
        frame = sense(w, trial, GEO)
        tick_timers(w)
        apply_outputs(w, p.activate(frame.values), GEO)
        resolve_eating(w, trial, GEO)
        w.timestep += 1
        assert w.e_trial + w.p_trial + int((~w.eaten).sum()) == 8
        assert 0 <= w.pain_timer <= 20 and 0 <= w.pleasure_timer <= 20
    assert w.timestep == GEO.steps


def test_trial_isolation_under_reordering():
    rng = np.random.default_rng(45)
    g = random_genome(rng, n_in=13, n_out=3, mutations=8)
    p = network.compile(g)
    trials = build_trial_set(77)
    forward = [run_trial(p, t, GEO) for t in trials]
    backward = [run_trial(p, t, GEO) for t in reversed(trials)]
    assert forward == backward[::-1]


def test_evaluate_sums_trials():
    rng = np.random.default_rng(46)
    g = random_genome(rng, n_in=13, n_out=3, mutations=8)
    trials = build_trial_set(11)
    record = evaluate(g, trials, GEO)
    p = network.compile(g)
    per_trial = [run_trial(p, t, GEO) for t in trials]
    assert record.e == sum(e for e, _ in per_trial)
    assert record.p == sum(pp for _, pp in per_trial)
    assert record.f == 32 + record.e - record.p


def test_evaluate_fitness_bounds_random_genomes():
    rng = np.random.default_rng(47)
    trials = build_trial_set(13)
    for _ in range(10):
        g = random_genome(rng, n_in=13, n_out=3, mutations=6)
        r = evaluate(g, trials, GEO)
        assert 0.0 <= r.f <= 64.0
        assert r.f == 32 + r.e - r.p


def test_evaluate_surfaces_structural_error():
    bad = make_genome(13, 3, [(0, 0, 99, 1.0, True, False)])
    with pytest.raises(ValueError, match="unknown node"):
        evaluate(bad, build_trial_set(1), GEO)
