"""Acceptance gate: one test per shipped criterion, at the stated tolerance.

Run with `pytest -v tests/test_acceptance.py` to get one pass/fail line per
criterion. Each test is self-contained and states its tolerance inline; the
two xfail entries record negative controls whose literal trigger condition
is unattainable on contraction trajectories, with a working companion
control right next to them.
"""
from __future__ import annotations

import json
import math
import time

import numpy as np
import pytest

from ds_stab.certificates import (
    check_decomposition,
    compute_theorem2_certificate,
    estimate_admissibility_M,
    estimate_observability_delta,
    search_rho1,
)
from ds_stab.cli import main
from ds_stab.closedloop import heat_closed_loop_solve, transport_closed_loop_solve
from ds_stab.core import (
    GridFunction,
    ModalVector,
    SpectralDiffusionModel,
    TransportModel,
    contraction_condition_check,
    trapezoid_weights,
    uniform_grid,
)
from ds_stab.semigroups import (
    control_apply,
    diag_semigroup_apply,
    perturbed_semigroup_apply,
    yosida_control_apply,
)
from ds_stab.verifier import (
    oracle_expm_compare,
    transport_characteristics_oracle,
    verify_decay,
    verify_lemma1,
)


def test_criterion_01_modal_closed_form_equivalence():
    # bare heat model, N = 16: solver matches c_j(t) = e^{-(a_j + rho sqrt(a_j)) t} c_j(0)
    # with max relative error <= 1e-8 over t in [0, 2], rho in {0, 0.1, 1}; < 1 s
    start = time.perf_counter()
    x0 = ModalVector(np.ones(16) / 4.0)
    worst = 0.0
    for rho in (0.0, 0.1, 1.0):
        model = SpectralDiffusionModel(n_modes=16, rho=rho)
        traj = heat_closed_loop_solve(model, x0, 2.0, dt_out=0.05)
        rates = model.alpha + rho * np.sqrt(model.alpha)
        expected = np.exp(-np.outer(traj.times, rates)) * x0.coeffs
        num = np.linalg.norm(traj.states - expected, axis=1)
        den = np.linalg.norm(expected, axis=1)
        worst = max(worst, float((num / den).max()))
    elapsed = time.perf_counter() - start
    assert worst <= 1e-8
    assert elapsed < 1.0


def test_criterion_02_dense_exponential_oracle():
    # random potential with positive contraction margin, N = 8: solver vs
    # dense matrix-exponential replay <= 1e-8 relative over 20 sample times; < 1 s
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    zeta = uniform_grid(513)
    vals = sum(c * np.sin((k + 1) * np.pi * zeta)
               for k, c in enumerate(rng.standard_normal(5)))
    g = GridFunction(0.4 * vals)
    assert contraction_condition_check(g).margin > 0
    model = SpectralDiffusionModel(n_modes=8, rho=0.3, potential=g)
    x0 = ModalVector(rng.standard_normal(8))
    traj = heat_closed_loop_solve(model, x0, 2.0, dt_out=0.1)
    assert traj.times.size > 20
    report = oracle_expm_compare(model, traj)
    elapsed = time.perf_counter() - start
    assert report["max_rel_err"] <= 1e-8
    assert elapsed < 1.0


def test_criterion_03_commuting_perturbation():
    # constant potential c in {1, 9}: perturbed flow equals e^{ct} S0(t)
    # within 1e-6 relative
    rng = np.random.default_rng(3)
    v = ModalVector(rng.standard_normal(16))
    for c in (1.0, 9.0):
        model = SpectralDiffusionModel(
            n_modes=16, potential=GridFunction.constant(c)
        )
        for t in (0.1, 0.5, 1.0, 2.0):
            got = perturbed_semigroup_apply(model, t, v).coeffs
            want = math.exp(c * t) * diag_semigroup_apply(t, v).coeffs
            scale = float(np.linalg.norm(want))
            assert float(np.linalg.norm(got - want)) <= 1e-6 * scale


def test_criterion_04_observability_floor():
    # diagonal heat model: the estimated observability constant dominates
    # the horizon for T in {0.05, 0.1, 0.5, 1}
    model = SpectralDiffusionModel(n_modes=64)
    for T in (0.05, 0.1, 0.5, 1.0):
        assert estimate_observability_delta(model, T) >= T


def test_criterion_05_certificate_pipeline():
    # estimated M and delta at N = 64, T = 1, p = 2, C = L = 1 give rho1 > 0;
    # the decay verifier passes in full at rho in {0.25, 0.5, 0.9} rho1; < 10 s
    start = time.perf_counter()
    model = SpectralDiffusionModel(n_modes=64)
    M = estimate_admissibility_M(model, 1.0, p=2.0)
    delta = estimate_observability_delta(model, 1.0)
    rho1 = search_rho1(compute_theorem2_certificate, M, delta, 1.0, 2.0,
                       C=1.0, L=1.0)
    assert rho1 is not None and rho1 > 0
    x0 = ModalVector.basis(1, 64)
    for frac in (0.25, 0.5, 0.9):
        rho = frac * rho1
        cert = compute_theorem2_certificate(
            M=M, delta=delta, T=1.0, p=2.0, rho=rho, rho1=rho1
        )
        assert cert.valid
        traj = heat_closed_loop_solve(
            SpectralDiffusionModel(n_modes=64, rho=rho), x0, 6.0, dt_out=0.125
        )
        report = verify_decay(traj, cert)
        assert report.ok
        assert report.envelope_ok and report.envelope_margin >= 1.0
        assert report.ratio_ok and report.max_period_ratio <= cert.C2
        assert report.sigma_ok and report.sigma_measured >= cert.sigma
    assert time.perf_counter() - start < 10.0


def _lemma1_fixture():
    T, n_modes = 0.05, 16
    model = SpectralDiffusionModel(n_modes=n_modes)
    M = estimate_admissibility_M(model, T, p=2.0)
    delta = estimate_observability_delta(model, T)
    rho1 = search_rho1(compute_theorem2_certificate, M, delta, T, 2.0,
                       C=1.0, L=1.0)
    rho = 0.5 * rho1
    x0 = ModalVector(np.ones(n_modes) / 4.0)
    closed = heat_closed_loop_solve(
        SpectralDiffusionModel(n_modes=n_modes, rho=rho), x0, 2 * T, dt_out=T / 16
    )
    open_loop = heat_closed_loop_solve(model, x0, 2 * T, dt_out=T / 16)
    honest = compute_theorem2_certificate(M=M, delta=delta, T=T, p=2.0, rho=rho)
    corrupted = compute_theorem2_certificate(
        M=M / 100.0, delta=delta, T=T, p=2.0, rho=rho
    )
    return closed, open_loop, honest, corrupted


def test_criterion_06_lemma1_bounds():
    # all three one-period bounds hold with slack >= 1 at rho = 0.5 rho1,
    # and the M/100 negative control trips the verifier (on the
    # perturbation-defect bound; see the companion xfail for bound (i))
    closed, open_loop, honest, corrupted = _lemma1_fixture()
    report = verify_lemma1(closed, honest, open_loop)
    assert report.ok
    for value in report.slacks().values():
        assert value >= 1.0
    bad = verify_lemma1(closed, corrupted, open_loop)
    assert not bad.ok
    assert not bad.defect_ok
    assert bad.defect_measured > bad.defect_allowed


@pytest.mark.xfail(
    strict=True,
    reason="the open-loop L^p bound cannot fire on a contraction trajectory:"
    " its measured side never exceeds T^{1/p}|x0|, and shrinking M only moves"
    " the allowance down toward that same ceiling, never below it; the"
    " corrupted constant is caught by the defect bound instead (see"
    " test_criterion_06_lemma1_bounds)",
)
def test_criterion_06_negative_control_fails_bound_i():
    closed, open_loop, _, corrupted = _lemma1_fixture()
    report = verify_lemma1(closed, corrupted, open_loop)
    assert not report.lp_ok


def _transport_compare(n_grid: int):
    model = TransportModel(n_grid=n_grid, alpha=1.0, epsilon=0.05)
    zeta = uniform_grid(n_grid)
    w = trapezoid_weights(n_grid)
    y = np.cos(np.pi * zeta / 2)
    eta = zeta**2
    gamma = -(0.05 * float(w @ y) + y[-1]) / (1 + 0.05 * float(w @ eta))
    x0 = GridFunction(y + gamma * eta)
    traj = transport_closed_loop_solve(model, x0, 0.75, dt_out=0.25)
    oracle = transport_characteristics_oracle(model, x0, traj.times)
    err = 0.0
    for i in range(len(traj.times)):
        d = traj.states[i] - oracle.states[i]
        err = max(err, math.sqrt(float((w * d) @ d)))
    return err, err * (n_grid - 1)


def test_criterion_07_transport_scheme():
    # open loop is nilpotent: zero within 10 dz in sup norm for t >= 1 at
    # n = 513; with feedback the solver agrees with a characteristics
    # reference to first order, constant stable under grid doubling (+-25%)
    model = TransportModel(n_grid=513, alpha=1.0, epsilon=0.0)
    x0 = GridFunction.from_callable(lambda z: np.sin(np.pi * z) * (1 - z))
    traj = transport_closed_loop_solve(model, x0, 2.0, dt_out=0.125)
    dz = 1.0 / 512
    late = traj.times >= 1.0
    assert float(np.abs(traj.states[late]).max()) <= 10 * dz

    err_coarse, c_coarse = _transport_compare(513)
    err_fine, c_fine = _transport_compare(1025)
    assert err_coarse <= c_coarse / 512  # definition check: err = C dz
    ratio = err_coarse / err_fine
    assert 1.5 <= ratio <= 2.5
    assert 0.75 <= c_coarse / c_fine <= 1.25


def test_criterion_08_decomposition_thresholds():
    # alpha = 0.5, f == 1: the dissipativity scan accepts 0.9x the closed-form
    # threshold sqrt(2 alpha)/|f| and returns a counterexample witness at 10x
    passing = check_decomposition(TransportModel(n_grid=257, alpha=0.5, epsilon=0.9))
    assert abs(passing.eps_max - 1.0) < 1e-12
    assert passing.ok
    failing = check_decomposition(TransportModel(n_grid=257, alpha=0.5, epsilon=10.0))
    assert not failing.ok
    assert failing.witness is not None
    assert failing.witness_value > 0


def test_criterion_09_yosida_convergence():
    # v = sum of the first eight modes: the regularized control map converges
    # in the dual-weighted norm, ratio <= 1e-4 at lam = 1e8, decreasing over
    # the lambda grid
    v = ModalVector(np.ones(8))
    bv = control_apply(v)
    den = bv.norm("X-1")
    ratios = []
    for lam in (1e2, 1e4, 1e6, 1e8):
        blv = yosida_control_apply(lam, v)
        ratios.append(ModalVector(blv.coeffs - bv.coeffs).norm("X-1") / den)
    assert all(b < a for a, b in zip(ratios, ratios[1:]))
    assert ratios[-1] <= 1e-4


def test_criterion_10_sweep_determinism(tmp_path, capsys):
    # identical config and seed give byte-identical sweep outputs
    cfg = tmp_path / "sweep.toml"
    cfg.write_text("""
[model]
kind = "heat"
n_modes = 16
rho = 0.0

[sweep]
T = 0.05
rho1_factors = [0.25, 0.5, 0.75]
""", encoding="utf-8")
    blobs = []
    for name in ("run1", "run2"):
        out_dir = tmp_path / name
        assert main(["sweep", "--config", str(cfg), "--out", str(out_dir),
                     "--seed", "0"]) == 0
        capsys.readouterr()
        blobs.append(
            (out_dir / "sweep.csv").read_bytes()
            + (out_dir / "sweep.csv.manifest.json").read_bytes()
        )
    assert blobs[0] == blobs[1]
