"""Heat spectral solver, fixed-point integrator, and transport upwind scheme."""
from __future__ import annotations

import math

import numpy as np
import pytest
import scipy.linalg

from ds_stab.closedloop import (
    heat_closed_loop_solve,
    transport_closed_loop_solve,
    vpf_fixed_point_solve,
)
from ds_stab.core import (
    GridFunction,
    ModalVector,
    SpectralDiffusionModel,
    TransportModel,
    contraction_condition_check,
    trapezoid_weights,
    uniform_grid,
)
from ds_stab.semigroups import perturbed_semigroup_apply, transport_semigroup_apply


def _smooth_random_potential(seed: int, scale: float) -> GridFunction:
    rng = np.random.default_rng(seed)
    coef = rng.standard_normal(4)
    zeta = uniform_grid(513)
    vals = sum(c * np.sin((k + 1) * np.pi * zeta) for k, c in enumerate(coef))
    g = GridFunction(scale * vals)
    assert contraction_condition_check(g).ok
    return g


def test_heat_zero_state_stays_zero():
    model = SpectralDiffusionModel(n_modes=8, rho=0.4)
    traj = heat_closed_loop_solve(model, ModalVector(np.zeros(8)), 1.0, dt_out=0.25)
    assert np.all(traj.states == 0.0)
    assert np.all(traj.norms == 0.0)


def test_heat_single_mode_closed_form():
    model = SpectralDiffusionModel(n_modes=4, rho=0.1)
    traj = heat_closed_loop_solve(model, ModalVector.basis(1, 4), 1.0, dt_out=0.1)
    rate = math.pi**2 + 0.1 * math.pi
    expected = np.exp(-rate * traj.times)
    np.testing.assert_allclose(traj.states[:, 0], expected, rtol=1e-12)
    assert abs(traj.states[1, 0] - math.exp(-0.1 * (math.pi**2 + 0.1 * math.pi))) < 1e-14


def test_heat_diag_closed_form_all_modes():
    model = SpectralDiffusionModel(n_modes=16, rho=1.0)
    x0 = ModalVector(np.ones(16) / 4.0)
    traj = heat_closed_loop_solve(model, x0, 2.0, dt_out=0.05)
    alpha = model.alpha
    rates = alpha + 1.0 * np.sqrt(alpha)
    expected = np.exp(-np.outer(traj.times, rates)) / 4.0
    err = np.abs(traj.states - expected) / np.abs(expected).max(axis=1, keepdims=True)
    assert err.max() < 1e-10


def test_heat_matches_dense_exponential_oracle():
    g = _smooth_random_potential(seed=42, scale=0.3)
    model = SpectralDiffusionModel(n_modes=8, rho=0.3, potential=g)
    rng = np.random.default_rng(1)
    x0 = ModalVector(rng.standard_normal(8))
    traj = heat_closed_loop_solve(model, x0, 2.0, dt_out=0.1)
    A = model.closed_loop_matrix()
    for i, t in enumerate(traj.times):
        ref = scipy.linalg.expm(A * t) @ x0.coeffs
        assert np.abs(traj.states[i] - ref).max() <= 1e-8 * max(
            1e-300, np.abs(ref).max()
        ) + 1e-13


def test_heat_norm_monotone_under_contraction():
    for rho in (0.0, 0.3, 1.7):
        model = SpectralDiffusionModel(n_modes=16, rho=rho)
        x0 = ModalVector(np.ones(16) / 4.0)
        traj = heat_closed_loop_solve(model, x0, 2.0, dt_out=0.1)
        assert np.all(np.diff(traj.norms) <= 1e-15)


def test_heat_output_grid_validation():
    model = SpectralDiffusionModel(n_modes=4)
    with pytest.raises(ValueError):
        heat_closed_loop_solve(model, ModalVector.basis(1, 4), 1.0, dt_out=0.3)
    with pytest.raises(ValueError):
        heat_closed_loop_solve(model, ModalVector.basis(1, 4), -1.0)


def test_vpf_zero_gain_returns_open_loop_in_one_pass():
    g = _smooth_random_potential(seed=9, scale=0.2)
    model = SpectralDiffusionModel(n_modes=8, rho=0.0, potential=g)
    x0 = ModalVector(np.ones(8) / math.sqrt(8))
    traj, info = vpf_fixed_point_solve(model, x0, 0.5, n_steps=256, return_info=True)
    assert info["converged"]
    assert info["iterations"] == 1
    for i in (0, 128, 256):
        ref = perturbed_semigroup_apply(model, traj.times[i], x0)
        np.testing.assert_allclose(traj.states[i], ref.coeffs, atol=1e-12)


def test_vpf_matches_spectral_solver():
    model = SpectralDiffusionModel(n_modes=8, rho=0.25)
    x0 = ModalVector(np.ones(8) / math.sqrt(8))
    T, n_steps = 1.0, 2048
    traj = vpf_fixed_point_solve(model, x0, T, n_steps=n_steps)
    ref = heat_closed_loop_solve(model, x0, T, dt_out=T / n_steps)
    assert np.abs(traj.states - ref.states).max() < 1e-6


def test_vpf_contraction_ratio_stays_under_certified_factor():
    from ds_stab.certificates import estimate_admissibility_M

    model = SpectralDiffusionModel(n_modes=16, rho=0.1)
    M = estimate_admissibility_M(SpectralDiffusionModel(n_modes=16), 1.0, p=2.0)
    factor = 0.1 * 1.0 ** (1 / 2.0) * M
    assert factor < 1
    x0 = ModalVector(np.ones(16) / 4.0)
    _, info = vpf_fixed_point_solve(model, x0, 1.0, return_info=True)
    assert info["converged"]
    ratios = info["contraction_ratios"][1:]
    assert ratios, "need at least two iterations to measure a ratio"
    assert max(ratios) <= factor * (1 + 1e-6)


def test_vpf_diverges_outside_contraction_regime():
    model = SpectralDiffusionModel(n_modes=8, rho=5.0)
    x0 = ModalVector(np.ones(8) / math.sqrt(8))
    with pytest.raises(RuntimeError, match="diverging"):
        vpf_fixed_point_solve(model, x0, 1.0, n_steps=512)


def test_transport_zero_state_stays_zero():
    model = TransportModel(n_grid=129, alpha=1.0, epsilon=0.1)
    x0 = GridFunction(np.zeros(129))
    traj = transport_closed_loop_solve(model, x0, 1.0, dt_out=0.25)
    assert np.all(traj.states == 0.0)


def test_transport_open_loop_matches_semigroup_to_first_order():
    model = TransportModel(n_grid=129, alpha=0.8, epsilon=0.0)
    x0 = GridFunction.from_callable(lambda z: np.sin(np.pi * z), n=129)
    traj = transport_closed_loop_solve(model, x0, 0.5, dt_out=0.125)
    w = trapezoid_weights(129)
    dz = 1.0 / 128
    for i, t in enumerate(traj.times):
        ref = transport_semigroup_apply(model, t, x0)
        d = traj.states[i] - ref.values
        assert math.sqrt(float((w * d) @ d)) <= 5 * dz


def test_transport_nilpotent_open_loop():
    model = TransportModel(n_grid=513, alpha=1.0, epsilon=0.0)
    x0 = GridFunction.from_callable(lambda z: np.sin(np.pi * z) * (1 - z))
    traj = transport_closed_loop_solve(model, x0, 2.0, dt_out=0.25)
    late = traj.times >= 1.25
    assert np.abs(traj.states[late]).max() < 1e-12


def test_transport_boundary_constraint_holds_at_outputs():
    model = TransportModel(n_grid=257, alpha=1.0, epsilon=0.05)
    x0 = GridFunction.from_callable(lambda z: np.cos(np.pi * z / 2), n=257)
    traj = transport_closed_loop_solve(model, x0, 0.5, dt_out=0.1)
    for i in range(len(traj.times)):
        state = GridFunction(traj.states[i])
        assert abs(state.values[-1] + model.epsilon * model.psi(state)) < 1e-12


def test_transport_norms_nonincreasing_with_feedback():
    model = TransportModel(n_grid=257, alpha=1.0, epsilon=0.05)
    x0 = GridFunction.from_callable(lambda z: np.cos(np.pi * z / 2), n=257)
    traj = transport_closed_loop_solve(model, x0, 1.5, dt_out=0.125)
    assert np.all(np.diff(traj.norms) <= 1e-12)


def test_transport_internal_step_refinement_consistent():
    model = TransportModel(n_grid=129, alpha=0.5, epsilon=0.1)
    x0 = GridFunction.from_callable(lambda z: z * (1 - z) ** 2, n=129)
    dz = 1.0 / 128
    a = transport_closed_loop_solve(model, x0, 0.5, dt_out=0.25)
    b = transport_closed_loop_solve(model, x0, 0.5, dt_out=0.25, dt_internal=dz / 2)
    assert np.abs(a.states - b.states).max() <= 5 * dz


def test_transport_cfl_and_alignment_validation():
    model = TransportModel(n_grid=129, alpha=1.0, epsilon=0.0)
    x0 = GridFunction.constant(1.0, n=129)
    with pytest.raises(ValueError, match="CFL"):
        transport_closed_loop_solve(model, x0, 1.0, dt_internal=1.0 / 64)
    with pytest.raises(ValueError):
        transport_closed_loop_solve(model, x0, 1.0, dt_out=0.3)


def test_solvers_are_deterministic(tmp_path):
    model = SpectralDiffusionModel(n_modes=16, rho=0.4)
    x0 = ModalVector(np.ones(16) / 4.0)
    a = heat_closed_loop_solve(model, x0, 1.0, dt_out=0.125)
    b = heat_closed_loop_solve(model, x0, 1.0, dt_out=0.125)
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    a.to_csv(pa)
    b.to_csv(pb)
    assert pa.read_bytes() == pb.read_bytes()
