import math

import numpy as np
import pytest

from shrinkblob import geometry, harness, lattice, swarm
from shrinkblob.swarm import NoConvergenceError, SimState, SwarmConfig

CFG = SwarmConfig()


def lone(x=50, y=50, heading=0.0, size=100, cities=(), seed=0):
    st = SimState(size, size, cities, np.random.default_rng(seed))
    st.add_particle(x, y, heading)
    return st


def square(x0, y0, side):
    return np.array([(x0, y0), (x0 + side, y0), (x0 + side, y0 + side), (x0, y0 + side)])


# ------------------------------------------------------------ config / init

@pytest.mark.parametrize("kw", [dict(sensor_angle=0), dict(rotation_angle=181),
                                dict(sensor_offset=2), dict(init_density=1.5)])
def test_config_invariants(kw):
    with pytest.raises(ValueError):
        SwarmConfig(**kw)


def test_init_full_density_square():
    st = swarm.init_blob(square(50, 50, 100), CFG.replace(init_density=1.0))
    assert st.population == 10201
    st.check_bijection()


def test_init_zero_density():
    with pytest.raises(ValueError, match="empty initialization"):
        swarm.init_blob(square(50, 50, 100), CFG.replace(init_density=0.0))


def test_init_degenerate_hull():
    with pytest.raises(geometry.DegenerateHullError, match="degenerate hull"):
        swarm.init_blob(np.array([(0, 0), (5, 5)]), CFG)


def test_init_headings_and_bounds():
    ds = harness.shipped_datasets()[0]
    st = swarm.init_blob(geometry.convex_hull(ds.xy), CFG, cities=ds.xy,
                         rng=np.random.default_rng(1))
    h = st.heading[:st.n]
    assert ((h >= 0) & (h < 360)).all()
    mask = geometry.hull_cells(geometry.convex_hull(ds.xy), 200, 200)
    assert mask[st.py[:st.n], st.px[:st.n]].all()
    # unconfined by default: the blob is free after initialisation
    assert st.bounds.all()


def test_init_population_band():
    pops = []
    for ds in harness.shipped_datasets():
        st = swarm.init_blob(geometry.convex_hull(ds.xy), CFG, cities=ds.xy,
                             rng=np.random.default_rng(0))
        pops.append(st.population)
    inside = sum(10000 <= p <= 15000 for p in pops)
    assert inside >= 15, pops


def test_init_deterministic():
    h = square(20, 20, 60)
    a = swarm.init_blob(h, CFG, rng=np.random.default_rng(9))
    b = swarm.init_blob(h, CFG, rng=np.random.default_rng(9))
    assert a.snapshot() == b.snapshot()


def test_city_margin():
    with pytest.raises(ValueError):
        SimState(50, 50, [(0, 10)], np.random.default_rng())


# ------------------------------------------------------------ sensory stage

def test_turn_forward_largest():
    assert swarm.turn(5, 3, 2, 10.0, CFG, np.random.default_rng()) == 10.0


def test_turn_towards_right():
    assert swarm.turn(2, 1, 3, 10.0, CFG, np.random.default_rng()) == 70.0


def test_turn_towards_left_wraps():
    assert swarm.turn(2, 3, 1, 10.0, CFG, np.random.default_rng()) == 310.0


def test_turn_tie_draws_direction():
    for seed in range(20):
        u = np.random.default_rng(seed).random()
        h = swarm.turn(1, 4, 4, 100.0, CFG, np.random.default_rng(seed))
        assert h == (160.0 if u < 0.5 else 40.0)


def test_turn_equal_readings_keep():
    assert swarm.turn(3, 3, 3, 45.0, CFG, np.random.default_rng()) == 45.0
    # front ties the left flank and beats the right: falls through to "towards FL"
    assert swarm.turn(3, 3, 1, 45.0, CFG, np.random.default_rng()) == 345.0


def test_sensor_positions():
    st = lone(50, 50, 0.0)
    v = st.field.values
    v[50, 57] = 1.0  # F: 7 ahead along +x
    v[round(50 - 7 * math.sin(math.radians(60))), round(50 + 3.5)] = 2.0  # FL at -60
    v[round(50 + 7 * math.sin(math.radians(60))), round(50 + 3.5)] = 3.0  # FR at +60
    assert swarm.sensor_readings(st, 0, CFG) == (1.0, 2.0, 3.0)


def test_sensor_out_of_bounds_reads_zero():
    st = lone(1, 1, 180.0, size=20)
    st.field.values[:] = 1.0
    f, fl, fr = swarm.sensor_readings(st, 0, CFG)
    assert f == 0.0 and fl == 0.0 and fr == 0.0


def test_sense_turns_towards_fr():
    st = lone(50, 50, 0.0)
    v = st.field.values
    v[round(50 + 7 * math.sin(math.radians(60))), round(50 + 3.5)] = 3.0
    assert swarm.sense(st, 0, CFG) == 60.0
    assert st.heading[0] == 60.0


# ------------------------------------------------------------ motor stage

@pytest.mark.parametrize("cont", [True, False])
def test_move_unobstructed(cont):
    cfg = CFG.replace(continuous_positions=cont)
    st = lone(50, 50, 0.0)
    assert swarm.attempt_move(st, 0, cfg)
    assert (st.px[0], st.py[0]) == (51, 50)
    assert st.field[51, 50] == 5.0 and st.field.total() == 5.0
    assert st.occ.cells[50, 51] == 0 and st.occ.cells[50, 50] == -1
    assert st.moved[0]


def test_move_blocked_by_particle():
    st = lone(50, 50, 0.0, seed=4)
    st.add_particle(51, 50, 0.0)
    u = np.random.default_rng(4).random()
    assert not swarm.attempt_move(st, 0, CFG)
    assert (st.px[0], st.py[0]) == (50, 50)
    assert st.heading[0] == u * 360.0
    assert st.field.total() == 0.0
    assert not st.moved[0]


def test_move_blocked_at_edge():
    st = lone(99, 50, 0.0)
    assert not swarm.attempt_move(st, 0, CFG)
    assert (st.px[0], st.py[0]) == (99, 50)
    assert st.field.total() == 0.0


def test_subcell_move_counts_as_success():
    # real position (49.7, 49.7) sits in cell (50, 50); one step at 45 degrees
    # lands on (50.41, 50.41), still inside that cell
    st = lone(50, 50, 45.0)
    st.fx[0], st.fy[0] = 49.7, 49.7
    assert swarm.attempt_move(st, 0, CFG)
    assert (st.px[0], st.py[0]) == (50, 50)
    assert st.fx[0] == pytest.approx(49.7 + math.sqrt(0.5))
    assert st.field[50, 50] == 5.0 and st.moved[0]


# ------------------------------------------------------------ division / deletion

def test_division_isolated_moved():
    st = lone(50, 50)
    st.moved[0] = 1
    child = swarm.division_test(st, 0, CFG)
    assert child is not None
    assert max(abs(child.x - 50), abs(child.y - 50)) == 1
    assert st.population == 2
    assert not st.moved[0]
    st.check_bijection()


def test_division_needs_movement():
    st = lone(50, 50)
    assert swarm.division_test(st, 0, CFG) is None
    assert st.population == 1


def test_division_crowded_window():
    st = lone(50, 50)
    st.moved[0] = 1
    for k in range(10):
        st.add_particle(46 + k % 9, 46 if k < 9 else 47)
    assert lattice.count_window(st.occ.cells, 50, 50, 4) == 11
    assert swarm.division_test(st, 0, CFG) is None
    assert not st.moved[0]


def test_division_no_room_with_clipped_window():
    # corner particle: its clipped 3x3 neighbourhood holds only 3 cells
    st = lone(0, 0, size=30)
    for x, y in [(1, 0), (0, 1), (1, 1), (3, 3)]:
        st.add_particle(x, y)
    st.moved[0] = 1
    assert lattice.count_window(st.occ.cells, 0, 0, 4) == 5
    assert swarm.division_test(st, 0, CFG) is None
    assert st.population == 5


def test_deletion_saturated_centre():
    st = SimState(40, 40, [], np.random.default_rng(0))
    for y in range(10, 19):
        for x in range(10, 19):
            st.add_particle(x, y)
    centre = int(st.occ.cells[14, 14])
    assert not swarm.deletion_test(st, centre, CFG)
    assert st.population == 80 and st.occ.cells[14, 14] == -1
    st.check_bijection()


def test_deletion_80_survives():
    st = SimState(40, 40, [], np.random.default_rng(0))
    for y in range(10, 19):
        for x in range(10, 19):
            if (x, y) != (10, 10):
                st.add_particle(x, y)
    assert swarm.deletion_test(st, int(st.occ.cells[14, 14]), CFG)
    assert swarm.deletion_test(lone(), 0, CFG)


def test_deletion_sweep_is_sequential():
    # a saturated block loses particles one at a time: later tests see the vacancy
    st = SimState(40, 40, [], np.random.default_rng(0))
    for y in range(10, 19):
        for x in range(10, 19):
            st.add_particle(x, y)
    swarm.deletion_sweep(st, CFG)
    assert st.population == 80
    st.check_bijection()


# ------------------------------------------------------------ halting

def test_halting_examples():
    cities = [(20, 20), (40, 40)]
    st = SimState(60, 60, cities, np.random.default_rng())
    assert swarm.check_halting(st, CFG)
    for k in range(15):
        st.add_particle(18 + k % 5, 18 + k // 5)
    assert not swarm.check_halting(st, CFG)
    assert st.cities[0].uncovered is False and st.cities[1].uncovered is True


def test_halting_fourteen_is_uncovered():
    cities = [(10 + 10 * (k % 5), 10 + 10 * (k // 5)) for k in range(20)]
    st = SimState(60, 60, cities, np.random.default_rng())
    for k in range(14):
        st.add_particle(8 + k % 5, 8 + k // 5)
    assert swarm.check_halting(st, CFG)


def test_insertion_trace_order():
    ds = harness.shipped_datasets()[3]
    st = swarm.init_blob(geometry.convex_hull(ds.xy), CFG, cities=ds.xy,
                         rng=np.random.default_rng(5))
    swarm.advance(st, CFG, 1500)
    trace = st.insertion_trace
    steps = [s for s, _ in trace]
    assert steps == sorted(steps)
    assert {k for _, k in trace} == set(np.flatnonzero(st.status))


# ------------------------------------------------------------ scheduler

def test_step_with_no_particles():
    st = SimState(30, 30, [(10, 10)], np.random.default_rng())
    st.field.values[5, 5] = 9.0
    swarm.step(st, CFG)
    assert st.halted and st.step == 1
    # projection (uncovered) then diffusion
    assert st.field.total() < 9.0 + 9 * 1.275


def small_state(seed, cfg=CFG):
    xy = np.array([(40, 40), (80, 45), (70, 85), (35, 75), (60, 60)])
    return swarm.init_blob(geometry.convex_hull(xy), cfg, 120, 120, cities=xy,
                           rng=np.random.default_rng(seed))


@pytest.mark.parametrize("cont", [True, False])
def test_reference_step_matches_compiled(cont):
    cfg = CFG.replace(continuous_positions=cont)
    a, b = small_state(7, cfg), small_state(7, cfg)
    for _ in range(40):
        swarm.reference_step(a, cfg)
        swarm.advance(b, cfg, 1)
        assert a.snapshot() == b.snapshot()
        if a.halted:
            break


def test_chunked_advance_matches_single_steps():
    a, b = small_state(3), small_state(3)
    swarm.advance(a, CFG, 120)
    for _ in range(120):
        if b.halted:
            break
        swarm.advance(b, CFG, 1)
    assert a.snapshot() == b.snapshot()


def test_invariants_over_run():
    st = small_state(11)
    for _ in range(30):
        swarm.advance(st, CFG, 20)
        st.check_bijection()
        n = st.n
        h = st.heading[:n]
        assert ((h >= 0) & (h < 360)).all()
        assert ((st.px[:n] >= 0) & (st.px[:n] < 120) & (st.py[:n] >= 0) & (st.py[:n] < 120)).all()
        assert (st.field.values >= 0).all()
        # the cell index is always the rounded real position
        assert np.array_equal(np.rint(st.fx[:n]), st.px[:n])
        if st.halted:
            break


def test_determinism():
    a, b = small_state(21), small_state(21)
    swarm.advance(a, CFG, 300)
    swarm.advance(b, CFG, 300)
    assert a.snapshot() == b.snapshot()


def test_run_until_halt_limits():
    st = small_state(2)
    with pytest.raises(NoConvergenceError, match="no convergence") as exc:
        swarm.run_until_halt(st, CFG, max_steps=1)
    assert exc.value.state is st and st.step == 1
    with pytest.raises(ValueError):
        swarm.run_until_halt(st, CFG, max_steps=0)


def test_run_until_halt_on_halted_state():
    st = SimState(30, 30, [(10, 10)], np.random.default_rng())
    st.halted = True
    assert swarm.run_until_halt(st, CFG) is st and st.step == 0


def test_frames_callback_schedule():
    st = small_state(4)
    seen = []
    swarm.run_until_halt(st, CFG, max_steps=20000, frame_every=100,
                         on_frame=lambda s: seen.append(s.step))
    assert seen[-1] == st.step
    assert len(seen) == math.ceil(st.step / 100)
    assert seen[:-1] == list(range(100, 100 * len(seen), 100))
