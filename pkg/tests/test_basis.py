import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stfilm.basis import (ColoringError, NoiseSpectrum, SpectralBasis, basis_derivative,
                          build_basis, build_noise_spectrum, eval_basis)


def test_constant_mode_on_unit_interval():
    b = build_basis(1.0, 3)
    assert eval_basis(b, 0, 0.3) == pytest.approx(1.0, abs=1e-15)


def test_normalisation_for_unit_frequency():
    b = build_basis(2 * math.pi, 1)
    # mpmath, 50 digits: 1/sqrt(3 pi)
    assert b.coefficient(1) == pytest.approx(0.32573500793527994772, rel=1e-15)
    assert b.coefficient(1) == pytest.approx(1 / math.sqrt(3 * math.pi), rel=1e-15)


@pytest.mark.parametrize("L", [0.5, 1.0, 2 * math.pi, 7.0])
def test_cosine_branch_at_origin(L):
    b = build_basis(L, 5)
    assert eval_basis(b, 5, 0.0) == b.coefficient(5)


def test_simple_zeros():
    b = build_basis(3.0, 2)
    assert eval_basis(b, -2, 0.0) == 0.0
    assert eval_basis(b, 1, 0.75) == pytest.approx(0.0, abs=1e-16)


@pytest.mark.parametrize("L", [1.0, 2.5])
def test_constant_mode_value(L):
    b = build_basis(L, 2)
    assert eval_basis(b, 0, 0.123) == b.coefficient(0) / math.sqrt(2)


def test_high_mode_coefficient_matches_oracle():
    assert build_basis(1.0, 5).coefficient(5) == pytest.approx(0.0014321718228354331469, rel=1e-14)


def test_derivative_examples():
    assert basis_derivative(build_basis(1.0, 3), 3, 1) == (6 * math.pi, -3)
    assert basis_derivative(build_basis(2 * math.pi, 2), 2, 4) == (16.0, 2)
    b = build_basis(1.7, 2)
    for order in (1, 2, 3, 4):
        assert basis_derivative(b, 0, order) == (0.0, 0)


def test_derivative_formulas():
    L, K = 1.3, 6
    b = build_basis(L, K)
    for k in range(1, K + 1):
        w = 2 * math.pi * k / L
        assert b.derivative(k, 1) == (w, -k)
        assert b.derivative(k, 2) == (-(w * w), k)
        assert b.derivative(k, 3) == (-(w * w * w), -k)
        assert b.derivative(-k, 3) == (-((-w) * (-w) * (-w)), k)
        assert b.derivative(k, 4)[0] == pytest.approx(16 * math.pi**4 * k**4 / L**4, rel=1e-14)


def test_derivative_errors():
    b = build_basis(1.0, 2)
    with pytest.raises(ValueError):
        b.derivative(1, 0)
    with pytest.raises(ValueError):
        b.derivative(1, 5)
    with pytest.raises(ValueError):
        b.derivative(3, 1)


@given(L=st.floats(0.1, 20.0), K=st.integers(0, 8), data=st.data())
@settings(max_examples=60, deadline=None)
def test_first_derivative_twice_equals_second(L, K, data):
    b = SpectralBasis(L, K)
    k = data.draw(st.integers(-K, K))
    c1, p1 = b.derivative(k, 1)
    if k == 0:
        assert b.derivative(k, 2) == (0.0, 0)
        return
    c2, p2 = b.derivative(p1, 1)
    assert (c1 * c2, p2) == b.derivative(k, 2)


@given(L=st.floats(0.1, 20.0), K=st.integers(0, 8), data=st.data())
@settings(max_examples=60, deadline=None)
def test_periodicity_is_exact(L, K, data):
    b = SpectralBasis(L, K)
    k = data.draw(st.integers(-K, K))
    assert b.eval(k, 0.0) == b.eval(k, L)


def test_sampled_derivative_matches_finite_difference():
    L, K = 2.0, 3
    b = SpectralBasis(L, K)
    x = np.linspace(0, L, 101)
    h = 1e-6
    d_num = (b.sample(x + h) - b.sample(x - h)) / (2 * h)
    assert np.max(np.abs(d_num - b.sample(x, 1))) < 1e-6 * max(1, np.max(np.abs(b.sample(x, 1))))


def test_h2_orthonormality():
    for L in (1.0, 1.3, 2 * math.pi):
        g = SpectralBasis(L, 8).gram_h2(4096)
        assert np.max(np.abs(g - np.eye(17))) < 1e-8


def test_invalid_basis_parameters():
    with pytest.raises(ValueError):
        build_basis(0.0, 2)
    with pytest.raises(ValueError):
        build_basis(-1.0, 2)
    with pytest.raises(ValueError):
        build_basis(1.0, -1)
    with pytest.raises(ValueError):
        build_basis(1.0, 2).eval(3, 0.0)


def test_spectrum_single_term():
    s = build_noise_spectrum({"kind": "explicit", "values": {0: 0.5}}, 2, {})
    assert s.total == 0.25


def test_spectrum_power_law_sum():
    s = build_noise_spectrum({"kind": "power_law", "a": 1.0, "s": 1.0}, 2)
    assert s.total == pytest.approx(1.7222222222222222222, rel=1e-15)


def test_spectrum_coloring_violation():
    with pytest.raises(ColoringError, match="coloring"):
        build_noise_spectrum({"kind": "power_law", "a": 1.0, "s": 0.4}, 4)
    with pytest.raises(ColoringError):
        build_noise_spectrum({"kind": "power_law", "a": 1.0, "s": 0.5}, 4)


def test_spectrum_rejects_negative_lambda_and_out_of_range_modes():
    with pytest.raises(ValueError):
        build_noise_spectrum({0: -0.1}, 1)
    with pytest.raises(ValueError):
        build_noise_spectrum({3: 0.1}, 1)
    with pytest.raises(ValueError):
        NoiseSpectrum(1, [0, -1, 0], [0, 0, 0])


def test_spectrum_gamma_may_be_negative():
    s = build_noise_spectrum(None, 1, {"-1": -0.2, "1": 0.3})
    assert s.gamma_of(-1) == -0.2 and s.gamma_of(1) == 0.3
    assert s.total == pytest.approx(0.13)
    assert not s.is_zero
    assert NoiseSpectrum.zero(3).is_zero


@given(a=st.floats(0, 5), s=st.floats(0.51, 4), K=st.integers(0, 20))
def test_power_law_total_is_monotone_in_cutoff(a, s, K):
    fam = {"kind": "power_law", "a": a, "s": s}
    t1 = build_noise_spectrum(fam, K).total
    t2 = build_noise_spectrum(fam, K + 1).total
    assert t2 >= t1
    assert np.all(build_noise_spectrum(fam, K).lam >= 0)
