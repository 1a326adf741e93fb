import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import stfilm.det_solver as ds
from stfilm.det_solver import (DetParams, absorb_implicit, absorption, det_evolve, det_step,
                               gradient_energy, mobility_reg, solve_cyclic_penta, substeps,
                               transport_matrix)
from stfilm.errors import SolverError
from stfilm.field import Field, mass, norms


def smooth_field(rng, M=64, L=1.0, base=0.5, n_modes=3):
    x = np.arange(M) * L / M
    a = rng.uniform(0, base / (n_modes + 1), n_modes)
    ph = rng.uniform(0, 2 * np.pi, n_modes)
    return Field(base + sum(a[m] * np.cos(2 * np.pi * (m + 1) * x / L + ph[m])
                            for m in range(n_modes)), L)


def test_mobility_examples():
    assert mobility_reg(0.0, 1e-6) == 0.0
    assert mobility_reg(1.0, 0.1) == pytest.approx(0.90909090909090909, rel=1e-15)
    assert mobility_reg(2.0, 1e-14) == pytest.approx(4.0, rel=1e-12)


@given(u=st.floats(-50, 50), eps=st.floats(1e-8, 1.0))
def test_mobility_matches_both_closed_forms(u, eps):
    m = mobility_reg(u, eps)
    assert m >= 0
    if abs(u) > 1e-3:
        assert m == pytest.approx(u**6 / (eps * u**2 + u**4), rel=1e-12)


def test_absorption_examples():
    assert absorption(2.0, 2.0) == -4.0
    assert absorption(0.0, 1.5) == 0.0
    assert absorption(-3.0, 2.0) == 9.0


@given(u=st.floats(-10, 10), dt=st.floats(1e-6, 1.0), r=st.floats(1.0, 4.0))
def test_implicit_absorption_solves_its_equation(u, dt, r):
    y = float(absorb_implicit(np.array([u]), dt, r)[0])
    assert y + dt * abs(y) ** (r - 1) * y == pytest.approx(u, abs=1e-12 * max(1, abs(u)))
    assert abs(y) <= abs(u) and y * u >= 0


def test_constant_data_single_step():
    u = Field.constant(0.7, 1.0, 16)
    out = det_step(u, DetParams(dt=0.01, r=1.0))
    assert np.allclose(out.values, 0.69306930693069307, rtol=1e-14, atol=0)


def test_zero_is_a_fixed_point():
    u = Field.constant(0.0, 1.0, 16)
    assert np.all(det_step(u, DetParams(dt=1e-3, r=2.0)).values == 0.0)


@pytest.mark.parametrize("r, discrete, exact", [
    (1.0, 0.36789783437712370989, math.exp(-1.0)),
    (2.0, 0.50001732778870743879, 0.5),
])
def test_absorption_ode(r, discrete, exact):
    u, recs = det_evolve(Field.constant(1.0, 1.0, 8), 0.0, 1.0, DetParams(dt=1e-4, r=r))
    # equals the implicit Euler recursion (50-digit oracle) and is within 1e-4 of the ODE
    assert np.allclose(u.values, discrete, rtol=1e-12, atol=0)
    assert np.max(np.abs(u.values - exact)) < 1e-4
    assert len(recs) == 10001 and recs[0].t == 0.0 and recs[-1].t == 1.0


@given(seed=st.integers(0, 2**32 - 1), r=st.floats(1.0, 3.0), dt=st.sampled_from([1e-5, 1e-4, 1e-3]))
@settings(max_examples=25, deadline=None)
def test_mass_never_increases(seed, r, dt):
    rng = np.random.default_rng(seed)
    u = smooth_field(rng)
    p = DetParams(dt=dt, r=r)
    for _ in range(3):
        nxt = det_step(u, p)
        assert mass(nxt) <= mass(u) + 1e-12
        u = nxt


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=15, deadline=None)
def test_transport_alone_conserves_mass(seed):
    u0 = smooth_field(np.random.default_rng(seed), M=32)
    u, _ = det_evolve(u0, 0.0, 1e-3, DetParams(dt=1e-4, r=None))
    assert abs(mass(u) - mass(u0)) < 1e-10


def test_transport_flattens_and_dissipates_energy():
    # rate * dt stays small, so the numerical dissipation of implicit Euler is negligible
    u0 = smooth_field(np.random.default_rng(3), M=64, L=4.0)
    _, recs, states = det_evolve(u0, 0.0, 2e-3, DetParams(dt=1e-5, r=2.0), keep_states=True)
    g = np.array([r.dx_l2 for r in recs])
    assert np.all(np.diff(g) <= 1e-6)
    assert g[-1] < g[0]
    for p in (2, 4):
        assert np.all(g**p <= g[0] ** p + 1e-6)
    e = np.array([gradient_energy(s, u0.dx) for s in states])
    assert np.all(np.diff(e) <= 1e-12)
    assert recs[-1].energy_residual <= 1e-3 * (e[0] - e[-1])


def test_energy_residual_vanishes_without_absorption_at_theta_half():
    # Crank-Nicolson transport dissipates exactly the recorded amount
    u0 = smooth_field(np.random.default_rng(5), M=32, L=4.0)
    _, recs = det_evolve(u0, 0.0, 1e-2, DetParams(dt=1e-3, r=None, theta=0.5))
    e0 = gradient_energy(u0.values, u0.dx)
    assert max(r.energy_residual for r in recs) < 1e-10 * e0


@given(M=st.sampled_from([8, 10, 16, 40]), seed=st.integers(0, 2**32 - 1),
       scale=st.floats(1e-3, 1e3))
@settings(max_examples=40, deadline=None)
def test_cyclic_penta_solver_matches_dense(M, seed, scale):
    rng = np.random.default_rng(seed)
    m = rng.uniform(0.01, 2.0, M)
    diags = scale * ds._transport_diagonals(m, 1.0 / M) * 1e-6
    diags[2] += 1.0
    b = rng.normal(size=M)
    A = np.zeros((M, M))
    for o in range(-2, 3):
        for i in range(M):
            A[i, (i + o) % M] += diags[o + 2, i]
    x = solve_cyclic_penta(diags, b)
    assert np.allclose(A @ x, b, atol=1e-10 * max(1, np.abs(b).max()))


def test_transport_matrix_is_flux_form():
    rng = np.random.default_rng(0)
    M, dx = 16, 1 / 16
    m = rng.uniform(0.1, 1, M)
    u = rng.normal(size=M)
    A = transport_matrix(m, dx)
    direct = ds.flux_divergence(ds.transport_flux(u, m, dx), dx)
    assert np.allclose(A @ u, direct, rtol=1e-12, atol=1e-9)
    # columns sum to zero: the operator is a discrete divergence
    assert np.allclose(np.asarray(A.sum(axis=0)).ravel() * dx, 0.0, atol=1e-6)


def test_explicit_part_is_capped_when_theta_below_one():
    u = Field.constant(1.0, 1.0, 16)
    p = DetParams(dt=1e-3, theta=0.5)
    assert ds.stability_cap(u.values, u.dx, p) == pytest.approx(0.5 * u.dx**4 / mobility_reg(1.0, p.eps))
    assert ds.stability_cap(u.values, u.dx, DetParams(dt=1e-3)) == math.inf


def test_step_is_retried_with_smaller_pieces(monkeypatch):
    calls = {"n": 0}
    real = ds.solve_cyclic_penta

    def flaky(diags, b):
        calls["n"] += 1
        if calls["n"] == 1:
            raise SolverError("singular")
        return real(diags, b)

    monkeypatch.setattr(ds, "solve_cyclic_penta", flaky)
    u = Field.constant(1.0, 1.0, 16)
    out = det_step(u, DetParams(dt=0.01, r=1.0))
    assert calls["n"] == 3   # one failure, then two half steps
    assert np.allclose(out.values, 1.0 / 1.005**2)


def test_persistent_failure_raises_with_state(monkeypatch):
    def broken(diags, b):
        raise SolverError("singular")

    monkeypatch.setattr(ds, "solve_cyclic_penta", broken)
    u = Field.constant(1.0, 1.0, 16)
    with pytest.raises(SolverError) as info:
        det_evolve(u, 0.0, 0.01, DetParams(dt=0.01, max_retries=2))
    assert info.value.state == u and info.value.t == pytest.approx(0.01)


def test_parameter_validation():
    for bad in (dict(dt=0), dict(dt=1e-3, eps=0), dict(dt=1e-3, eps=2), dict(dt=1e-3, r=0.5),
                dict(dt=1e-3, theta=0.3)):
        with pytest.raises(ValueError):
            DetParams(**bad)


def test_substeps_divide_interval_exactly():
    assert substeps(0.0, 0.25, 1e-3) == (250, 0.001)
    n, dt = substeps(0.1, 0.4, 0.07)
    assert n == 5 and n * dt == pytest.approx(0.3)
    with pytest.raises(ValueError):
        substeps(1.0, 1.0, 0.1)


def test_constant_data_stays_constant_under_transport():
    u0 = Field.constant(0.3, 2.0, 32)
    u, _ = det_evolve(u0, 0.0, 0.01, DetParams(dt=1e-3, r=None))
    assert np.max(np.abs(u.values - 0.3)) < 1e-14
    assert norms(u)[1] < 1e-12
