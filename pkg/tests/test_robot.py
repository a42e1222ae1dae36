import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from softproprio.robot import (
    CRAWL_OBSTRUCTED, CRAWL_UNOBSTRUCTED, RANDOM_ACTION, ChamberState, DomainConfig, P_MAX, apply_wall,
    calibrate_strong_force, generate_episode, kinematics, read_episode, schedule_crawl, schedule_random,
    sensor_model, step_dynamics, write_csv, write_npz,
)
from softproprio.robot.kinematics import (
    LEG_FRAMES, LEG_LENGTH, LEG_NODES, MID_CHAMBER_MARKERS, N_NODES, REST_HEIGHT, body_frame_nodes,
    leg_tip_offset, max_front_reach, rest_front_x,
)
from softproprio.robot.physics import KAPPA_MAX, STRAIN_PER_KAPPA, strain_to_reading
from softproprio.robot.schedules import crawl_cycle

SIM = DomainConfig.sim()
REAL_QUIET = DomainConfig.synthetic_real(0, noise_sigma=0.0)


@pytest.fixture(scope="module")
def crawl_pair():
    f = calibrate_strong_force(75.0)
    obst = generate_episode(CRAWL_OBSTRUCTED, SIM, 3, cycles=4, wall_x=75.0, f_strong=f)
    free = generate_episode(CRAWL_UNOBSTRUCTED, SIM, 3, cycles=4)
    return obst, free


def test_random_schedule_shape_and_range():
    s = schedule_random(0, 300.0)
    assert s.shape == (600, 5)
    assert np.all(s >= 0) and np.all(s <= P_MAX)
    assert abs(s[:, :4].mean() - 15.0) < 0.5
    assert np.array_equal(s, schedule_random(0, 300.0))
    assert not np.array_equal(s, schedule_random(1, 300.0))


def test_crawl_cycle_order():
    c = crawl_cycle()
    on = c > 0
    assert not on[0].any()
    assert on[1].tolist() == [False, False, True, True, False]
    assert on[2].tolist() == [False, False, True, True, True]
    assert on[3].all()
    assert on[4].tolist() == [True, True, False, False, True]
    assert on[5].tolist() == [True, True, False, False, False]
    assert not on[6].any()
    assert schedule_crawl(3).shape == (21, 5)
    with pytest.raises(ValueError):
        schedule_crawl(0)


@pytest.mark.parametrize("strain,reading", [(0.0, 0.0), (1.0, 3.0), (0.1, 0.21), (-0.5, -0.75)])
def test_resistance_law(strain, reading):
    assert strain_to_reading(strain) == pytest.approx(reading, abs=1e-12)


def test_sensor_model_sim_matches_law_and_rejects_nonphysical():
    kappa = np.array([0.01, 0.0, 0.02, 0.005, 0.015])
    assert np.allclose(sensor_model(kappa, SIM), strain_to_reading(STRAIN_PER_KAPPA * kappa), atol=1e-15)
    with pytest.raises(ValueError):
        sensor_model(np.full(5, -1.0 / 15.0), SIM)


def test_real_sensor_needs_rng_when_noisy():
    with pytest.raises(ValueError):
        sensor_model(np.zeros(5), DomainConfig.synthetic_real(0))


@given(st.floats(-0.9, 5.0), st.floats(-0.9, 5.0))
def test_reading_is_monotone_in_strain(a, b):
    if a < b:
        assert strain_to_reading(a) <= strain_to_reading(b)
    if b - a > 1e-9:
        assert strain_to_reading(a) < strain_to_reading(b)


def test_sim_domain_must_be_ideal():
    with pytest.raises(ValueError):
        DomainConfig(gain=(1.1,) * 5)
    with pytest.raises(ValueError):
        DomainConfig(domain="lab")


def test_domain_config_round_trip():
    cfg = DomainConfig.synthetic_real(3)
    assert DomainConfig.from_dict(cfg.to_dict()) == cfg
    g = np.array(cfg.gain)
    o = np.array(cfg.sensor_offset)
    assert np.all((g >= 0.8) & (g <= 1.2)) and np.all((o >= 0.05) & (o <= 0.15))


def test_first_order_lag_reaches_target_after_five_time_constants():
    cfg = DomainConfig(domain="real", tau_up=0.1, tau_down=0.1)
    p = P_MAX.copy()
    state = ChamberState()
    dt = 0.01
    for _ in range(50):  # 0.5 s = 5 tau
        state = step_dynamics(state, p, cfg, dt)
    frac = state.kappa / KAPPA_MAX
    assert np.allclose(frac, 1 - np.exp(-5), atol=1e-12)


def test_sim_state_follows_pressure_instantly():
    state = step_dynamics(ChamberState(), P_MAX / 2, SIM)
    assert np.allclose(state.kappa, KAPPA_MAX / 2)


def loop_area(p, s):
    return 0.5 * abs(np.dot(p, np.roll(s, 1)) - np.dot(s, np.roll(p, 1)))


@pytest.mark.parametrize("cfg,positive", [(SIM, False), (REAL_QUIET, True)])
def test_hysteresis_loop_area(cfg, positive):
    ramp = np.concatenate([np.linspace(0, 1, 200), np.linspace(1, 0, 200)])
    state = ChamberState()
    sensor = []
    for r in ramp:
        state = step_dynamics(state, r * P_MAX, cfg)
        sensor.append(sensor_model(state.effective_kappa(cfg), cfg)[0])
    area = loop_area(ramp, np.array(sensor))
    assert (area > 1e-3) if positive else (area < 1e-12)


def test_flat_rest_pose():
    nodes, markers = kinematics(np.zeros(5))
    assert nodes.shape == (N_NODES, 3) and markers.shape == (13, 3)
    assert np.allclose(nodes[:, 2], REST_HEIGHT)


@pytest.mark.parametrize("kappa", [0.0, 0.004, 0.0123, 0.02])
def test_leg_tip_matches_arc_formula(kappa):
    k = np.zeros(5)
    k[1] = kappa
    nodes = body_frame_nodes(k)
    root = nodes[LEG_NODES]
    tip = nodes[2 * LEG_NODES - 1]
    d, b = LEG_FRAMES[1]
    along, bend = leg_tip_offset(kappa)
    assert np.allclose(tip - root, along * d + bend * b, atol=1e-9)
    if kappa:
        theta = kappa * LEG_LENGTH
        assert along == pytest.approx(np.sin(theta) / kappa)


@settings(max_examples=30)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_left_right_reflection_symmetry(front, rear, body):
    k = np.array([front, front, rear, rear, body]) * KAPPA_MAX
    nodes, _ = kinematics(k)
    left = nodes[0:LEG_NODES]
    right = nodes[LEG_NODES:2 * LEG_NODES]
    assert np.allclose(left * [1, -1, 1], right, atol=1e-9)
    assert np.allclose(nodes[100:, 1], 0, atol=1e-9)


def test_mid_chamber_markers_are_nodes():
    k = np.random.default_rng(0).uniform(0, 1, 5) * KAPPA_MAX
    nodes, markers = kinematics(k)
    for m, n in MID_CHAMBER_MARKERS:
        assert np.array_equal(markers[m], nodes[n])


def test_wall_force_is_linear_in_penetration():
    k = np.array([KAPPA_MAX[0], KAPPA_MAX[1], KAPPA_MAX[2], KAPPA_MAX[3], 0.0])
    reach = max_front_reach()
    for wall in (72.0, 75.0, 80.0):
        clamped, force, collided = apply_wall(k, wall, k_wall=0.5, f_strong=0.1)
        assert force == pytest.approx(0.5 * (reach - wall))
        assert bool(collided) == (force > 0.1)
        assert clamped[0] < k[0] and clamped[1] < k[1]
        assert np.array_equal(clamped[2:], k[2:])


def test_no_wall_no_force():
    k = np.full(5, 0.01)
    clamped, force, collided = apply_wall(k, None)
    assert np.array_equal(clamped, k) and force == 0 and not collided
    clamped, force, _ = apply_wall(np.zeros(5), 75.0)
    assert force == 0 and rest_front_x() < 75.0


def test_contact_lowers_front_sensor(crawl_pair):
    obst, free = crawl_pair
    assert obst.collided.any()
    assert np.all(obst.contact_force[obst.collided] > 0)
    assert obst.sensor[:, :2].max() < free.sensor[:, :2].max()
    assert np.array_equal(obst.pressure, free.pressure)
    assert not free.collided.any() and np.all(free.contact_force == 0)


def test_episode_shapes_and_timing():
    ep = generate_episode(RANDOM_ACTION, SIM, 0, duration_s=300.0)
    assert len(ep) == 3000
    assert ep.sensor.shape == (3000, 5) and ep.nodes.shape == (3000, N_NODES, 3)
    assert ep.markers.shape == (3000, 13, 3)
    assert np.allclose(ep.t[:3], [0.1, 0.2, 0.3])


def test_episode_regeneration_is_bit_identical():
    cfg = DomainConfig.synthetic_real(0)
    a = generate_episode(RANDOM_ACTION, cfg, 4, duration_s=20.0)
    b = generate_episode(RANDOM_ACTION, cfg, 4, duration_s=20.0)
    for f in ("t", "sensor", "pressure", "nodes", "markers", "contact_force", "collided"):
        assert np.array_equal(getattr(a, f), getattr(b, f))


def test_twin_domains_share_pressure():
    a = generate_episode(RANDOM_ACTION, SIM, 8, duration_s=20.0)
    b = generate_episode(RANDOM_ACTION, DomainConfig.synthetic_real(0), 8, duration_s=20.0)
    assert np.array_equal(a.pressure, b.pressure)
    assert np.array_equal(a.nodes.shape, b.nodes.shape)
    assert not np.allclose(a.sensor, b.sensor)


def test_obstructed_crawl_needs_wall():
    with pytest.raises(ValueError):
        generate_episode(CRAWL_OBSTRUCTED, SIM, 0, cycles=1)
    with pytest.raises(ValueError):
        generate_episode("hop", SIM, 0)


@pytest.mark.parametrize("writer,suffix", [(write_npz, ".npz"), (write_csv, ".csv")])
def test_episode_file_round_trip(tmp_path, crawl_pair, writer, suffix):
    ep = crawl_pair[0]
    path = tmp_path / ("ep" + suffix)
    writer(ep, path)
    back = read_episode(path)
    for f in ("t", "sensor", "pressure", "nodes", "markers", "contact_force", "collided"):
        assert np.array_equal(getattr(back, f), getattr(ep, f)), f
    assert back.header() == ep.header()
