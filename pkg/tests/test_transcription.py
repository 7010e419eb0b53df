import numpy as np
import pytest

from ctcs_nmpc.integrators import IntegratorConfig, propagate_segment
from ctcs_nmpc.problem import AugmentedSystem, ConfigurationError
from ctcs_nmpc.transcription import (
    GridConfig,
    HorizonRangeError,
    TrajectoryIterate,
    discretize_segment,
    foh_control,
    linearize_all,
)

from helpers import drag_double_integrator, rich_augmented_system

CFG = IntegratorConfig()


def make_grid(t_start=0.0, horizon=8.0, n=17):
    return GridConfig(t_start=t_start, horizon=horizon, n_nodes=n)


def test_grid_endpoints_and_spacing():
    g = make_grid(t_start=3.0)
    assert g.times[0] == 3.0
    assert g.times[-1] == 11.0
    assert g.dt * (g.n_nodes - 1) == pytest.approx(g.horizon, abs=1e-15)
    assert np.allclose(np.diff(g.times), g.dt, atol=1e-12)


def test_foh_node_and_midpoint_values():
    g = GridConfig(0.0, 2.0, 3)
    controls = np.array([[0.0, 0.0], [4.0, 0.0], [2.0, 2.0]])
    assert np.array_equal(foh_control(0.0, g, controls), controls[0])
    assert np.array_equal(foh_control(1.0, g, controls), controls[1])
    assert np.array_equal(foh_control(2.0, g, controls), controls[2])
    mid = foh_control(0.5, g, controls)
    assert np.allclose(mid, [2.0, 0.0])
    quarter = foh_control(0.25, g, controls)
    assert np.allclose(quarter, [1.0, 0.0])


def test_foh_out_of_range_raises():
    g = GridConfig(0.0, 1.0, 2)
    controls = np.zeros((2, 1))
    with pytest.raises(HorizonRangeError):
        foh_control(-0.5, g, controls)
    with pytest.raises(HorizonRangeError):
        foh_control(1.5, g, controls)


def test_foh_continuity_across_nodes():
    g = make_grid()
    rng = np.random.default_rng(2)
    controls = rng.normal(size=(17, 2))
    for tk in g.times[1:-1]:
        left = foh_control(tk - 1e-10, g, controls)
        right = foh_control(tk + 1e-10, g, controls)
        assert np.allclose(left, right, atol=1e-8)


def test_foh_preserves_norm_ball():
    g = make_grid()
    rng = np.random.default_rng(8)
    u_max = 5.0
    raw = rng.normal(size=(17, 2))
    controls = raw * (u_max * rng.uniform(0, 1, size=(17, 1)) / np.linalg.norm(raw, axis=1, keepdims=True))
    for t in np.linspace(g.times[0], g.times[-1], 1000):
        assert np.linalg.norm(foh_control(t, g, controls)) <= u_max + 1e-12


def test_discretize_zero_dynamics_identity():
    class Zero:
        n_x = 3

        @staticmethod
        def rhs(t, x, u):
            return np.zeros_like(x)

    g = GridConfig(0.0, 1.0, 3)
    Z = TrajectoryIterate(np.arange(9.0).reshape(3, 3), np.zeros((3, 1)))
    out = discretize_segment(0, Z, g, Zero, CFG)
    assert np.array_equal(out, Z.states[0])


def test_discretize_matches_direct_propagation():
    aug = AugmentedSystem(system=drag_double_integrator(0.05))
    g = GridConfig(0.0, 0.5, 2)
    x0 = aug.initial_state(np.zeros(4))
    u = np.array([[1.0, 0.0], [1.0, 0.0]])
    Z = TrajectoryIterate(np.vstack([x0, x0]), u)
    out = discretize_segment(0, Z, g, aug, CFG)
    direct = propagate_segment(aug.rhs, 0.0, 0.5, x0, u[0], u[1], CFG)
    assert np.array_equal(out, direct)


def _rollout(aug, grid, x0, controls):
    states = [x0]
    Z0 = TrajectoryIterate(
        np.tile(x0, (grid.n_nodes, 1)), controls
    )
    for k in range(grid.n_nodes - 1):
        Zk = TrajectoryIterate(
            np.vstack(states + [states[-1]] * (grid.n_nodes - len(states))), controls
        )
        states.append(discretize_segment(k, Zk, grid, aug, CFG))
    return TrajectoryIterate(np.vstack(states), controls)


def test_sequential_rollout_has_zero_defects():
    aug = rich_augmented_system()
    g = GridConfig(0.0, 2.0, 5)
    rng = np.random.default_rng(3)
    controls = rng.normal(size=(5, 2)) * 0.5
    x0 = aug.initial_state(np.array([0.2, -0.1, 0.8, 0.3]))
    Z = _rollout(aug, g, x0, controls)
    for k in range(g.n_nodes - 1):
        pred = discretize_segment(k, Z, g, aug, CFG)
        assert np.max(np.abs(Z.states[k + 1] - pred)) <= 1e-12


def test_linear_system_has_zero_offsets():
    aug = AugmentedSystem(system=drag_double_integrator(0.0))
    g = GridConfig(0.0, 2.0, 5)
    rng = np.random.default_rng(4)
    controls = rng.normal(size=(5, 2))
    states = np.zeros((5, 6))
    states[0] = aug.initial_state(np.array([1.0, -1.0, 0.5, 0.2]))
    Z = TrajectoryIterate(states, controls)
    segs = linearize_all(Z, g, aug, CFG)
    for seg in segs:
        # physical block of the offset vanishes for exactly linear dynamics
        assert np.max(np.abs(seg.offset[:4])) <= 1e-12


def test_offset_identity_holds_exactly():
    aug = rich_augmented_system()
    g = GridConfig(0.0, 2.0, 5)
    rng = np.random.default_rng(9)
    Z = TrajectoryIterate(
        np.concatenate([rng.normal(size=(5, 4)), np.zeros((5, 2))], axis=1),
        rng.normal(size=(5, 2)),
    )
    segs = linearize_all(Z, g, aug, CFG)
    for k, seg in enumerate(segs):
        recon = (
            seg.end_state
            - seg.A @ Z.states[k]
            - seg.B_minus @ Z.controls[k]
            - seg.B_plus @ Z.controls[k + 1]
        )
        assert np.max(np.abs(recon - seg.offset)) <= 1e-12


def test_first_order_taylor_prediction_error():
    aug = rich_augmented_system()
    g = GridConfig(0.0, 0.5, 2)
    x0 = np.concatenate([[0.3, -0.2, 1.0, 0.5], [0.0, 0.0]])
    u0 = np.array([0.4, -0.3])
    u1 = np.array([-0.2, 0.5])
    Z = TrajectoryIterate(np.vstack([x0, x0]), np.vstack([u0, u1]))
    seg = linearize_all(Z, g, aug, CFG)[0]
    rng = np.random.default_rng(12)
    direction = rng.normal(size=10)
    direction /= np.linalg.norm(direction)

    def taylor_error(scale):
        dx, du0, du1 = direction[:6] * scale, direction[6:8] * scale, direction[8:] * scale
        exact = propagate_segment(aug.rhs, 0.0, 0.5, x0 + dx, u0 + du0, u1 + du1, CFG)
        pred = seg.end_state + seg.A @ dx + seg.B_minus @ du0 + seg.B_plus @ du1
        return np.max(np.abs(exact - pred))

    e_small = taylor_error(1e-4)
    e_large = taylor_error(1e-3)
    assert e_small <= 1e-6
    # quadratic remainder: one decade in the perturbation is two in the error
    assert e_large / max(e_small, 1e-300) == pytest.approx(100.0, rel=0.5)


def test_linearize_all_returns_n_minus_1_segments():
    aug = rich_augmented_system()
    g = make_grid()
    Z = TrajectoryIterate(np.zeros((17, 6)), np.zeros((17, 2)))
    segs = linearize_all(Z, g, aug, CFG)
    assert len(segs) == 16


def test_parallel_equals_serial():
    aug = rich_augmented_system()
    g = GridConfig(0.0, 3.0, 7)
    rng = np.random.default_rng(21)
    Z = TrajectoryIterate(
        np.concatenate([rng.normal(size=(7, 4)), np.zeros((7, 2))], axis=1),
        rng.normal(size=(7, 2)),
    )
    serial = linearize_all(Z, g, aug, CFG, parallel=False)
    par = linearize_all(Z, g, aug, CFG, parallel=True)
    for a, b in zip(serial, par):
        assert np.array_equal(a.A, b.A)
        assert np.array_equal(a.B_minus, b.B_minus)
        assert np.array_equal(a.B_plus, b.B_plus)
        assert np.array_equal(a.offset, b.offset)
        assert np.array_equal(a.end_state, b.end_state)


def test_trajectory_iterate_validation():
    with pytest.raises(ConfigurationError):
        TrajectoryIterate(np.zeros((3, 2)), np.zeros((4, 1)))
    with pytest.raises(ConfigurationError):
        TrajectoryIterate(np.full((3, 2), np.nan), np.zeros((3, 1)))
