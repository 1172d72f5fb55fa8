import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sllg.battery import operator_identity_violations, random_coeffs
from sllg.errors import ConfigError
from sllg.families import noise_field
from sllg.llg import (GalerkinState, LLGSystem, PhysParams, drift_ito, drift_stratonovich, f1, f2, g,
                      ito_correction)
from sllg.spectral import Domain, GridField, SpectralField

# From scripts/oracles.py: coefficients of u x Lap u and u x (u x Lap u) for
# u = e_0 (1,0,0) + e_1 (0,1,0) on [0, 1].
F1_MODE1_Z = -9.8696044010893598
F2_MODE0_X = -9.8696044010893598
F2_MODE2_X = -6.9788641996388803
F2_MODE1_Y = 9.8696044010893598


def example_field(n):
    dom = Domain.interval(1.0, n)
    c = np.zeros(dom.coeff_shape)
    c[0, 0] = 1.0
    c[1, 1] = 1.0
    return SpectralField(dom, c)


def const_params(dom, vec=(0.0, 0.0, 1.0), lam=(1.0, 1.0, 1.0), **kw):
    return PhysParams(*lam, noise_field(dom, "constant", vec), **kw)


def const_field(dom, vec):
    c = np.zeros(dom.coeff_shape)
    c[(0,) * dom.dim] = np.asarray(vec) * math.sqrt(dom.volume)
    return SpectralField(dom, c)


def test_f1_example():
    out = f1(example_field(4)).coeffs
    assert out[1, 2] == pytest.approx(F1_MODE1_Z, rel=1e-13)
    out[1, 2] = 0
    assert np.max(np.abs(out)) < 1e-12


def test_f2_example():
    out = f2(example_field(4)).coeffs
    assert out[0, 0] == pytest.approx(F2_MODE0_X, rel=1e-13)
    assert out[2, 0] == pytest.approx(F2_MODE2_X, rel=1e-13)
    assert out[1, 1] == pytest.approx(F2_MODE1_Y, rel=1e-13)
    out[[0, 2, 1], [0, 0, 1]] = 0
    assert np.max(np.abs(out)) < 1e-12


def test_f2_truncated_example():
    out = f2(example_field(2)).coeffs
    assert out.shape == (2, 3)
    assert out[0, 0] == pytest.approx(F2_MODE0_X, rel=1e-13)
    assert out[1, 1] == pytest.approx(F2_MODE1_Y, rel=1e-13)


def test_constant_and_single_mode_fields_have_no_exchange_terms():
    dom = Domain.interval(2.0, 6)
    u = const_field(dom, (0.3, 0.4, 0.5))
    assert np.max(np.abs(f1(u).coeffs)) < 1e-14
    assert np.max(np.abs(f2(u).coeffs)) < 1e-14
    c = np.zeros(dom.coeff_shape)
    c[2] = [0.0, 1.5, 0.0]
    assert np.max(np.abs(f1(SpectralField(dom, c)).coeffs)) < 1e-12


def test_g_constant_example():
    dom = Domain.interval(1.0, 3)
    u = const_field(dom, (1.0, 0.0, 0.0))
    out = g(u, const_params(dom)).coeffs
    assert out[0, 1] == pytest.approx(-1.0, abs=1e-14)
    out[0, 1] = 0
    assert np.max(np.abs(out)) < 1e-14


def test_g_vanishes_for_parallel_fields():
    dom = Domain.interval(1.0, 4)
    u = const_field(dom, (0.0, 0.0, 2.0))
    assert np.max(np.abs(g(u, const_params(dom)).coeffs)) < 1e-15


def test_ito_correction_examples():
    dom = Domain.interval(1.0, 3)
    u = const_field(dom, (1.0, 0.0, 0.0))
    out = ito_correction(u, const_params(dom)).coeffs
    assert out[0, 0] == pytest.approx(-0.5, abs=1e-14)
    zero = ito_correction(u, const_params(dom, lam=(1.0, 1.0, 0.0))).coeffs
    assert np.all(zero == 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-5, 5))
def test_ito_correction_is_linear(seed, alpha):
    dom = Domain.interval(1.7, 6)
    rng = np.random.default_rng(seed)
    p = PhysParams(1.0, 1.0, 0.7, GridField(dom, rng.standard_normal(dom.grid_shape)))
    u = SpectralField(dom, rng.standard_normal(dom.coeff_shape))
    lhs = ito_correction(u * alpha, p).coeffs
    rhs = alpha * ito_correction(u, p).coeffs
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * max(1.0, abs(alpha)) * np.max(np.abs(rhs) + 1))


def test_degenerate_drift_is_zero():
    dom = Domain.interval(1.0, 5)
    u = SpectralField(dom, np.random.default_rng(2).standard_normal(dom.coeff_shape))
    p = const_params(dom, lam=(0.0, 0.0, 1.0), allow_degenerate=True)
    assert np.all(drift_stratonovich(u, p).coeffs == 0)


def test_degenerate_lambda2_rejected_without_hook():
    dom = Domain.interval(1.0, 5)
    with pytest.raises(ConfigError) as err:
        const_params(dom, lam=(1.0, 0.0, 1.0))
    assert err.value.key == "physics.lambda2"


def test_drift_is_linear_combination_of_examples():
    u = example_field(4)
    p = const_params(u.domain)
    out = drift_stratonovich(u, p).coeffs
    expected = f1(u).coeffs - f2(u).coeffs
    np.testing.assert_allclose(out, expected, atol=1e-13)
    assert out[1, 2] == pytest.approx(F1_MODE1_Z)
    assert out[0, 0] == pytest.approx(-F2_MODE0_X)


def test_drift_ito_adds_correction():
    dom = Domain.interval(2.0, 6)
    rng = np.random.default_rng(5)
    u = SpectralField(dom, rng.standard_normal(dom.coeff_shape))
    p = PhysParams(0.4, 1.2, 0.8, noise_field(dom, "cosine", amplitude=1.3))
    np.testing.assert_allclose(drift_ito(u, p).coeffs,
                               drift_stratonovich(u, p).coeffs + ito_correction(u, p).coeffs, atol=1e-13)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 14), st.integers(0, 6), st.integers(0, 2 ** 32 - 1), st.booleans())
def test_skew_orthogonality_any_grid(n, extra, seed, two_d):
    """<f1(u),u> = <f2(u),u> = <g(u),u> = 0 for every N >= n, including under-resolved grids."""
    if two_d:
        dom = Domain((1.3, 0.8), (max(1, n // 3), max(1, n // 4)), (max(1, n // 3) + extra, max(1, n // 4) + extra))
    else:
        dom = Domain((2.1,), (n,), (n + extra,))
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((4,) + dom.coeff_shape)
    system = LLGSystem(PhysParams(1.0, 1.0, 1.0, GridField(dom, rng.standard_normal(dom.grid_shape))))
    for op in (system.f1, system.f2, system.g):
        w = op(u)
        scale = np.sqrt(dom.coeff_inner(w, w) * dom.coeff_inner(u, u)) + 1e-300
        assert np.max(np.abs(dom.coeff_inner(w, u)) / scale) <= 1e-12


def test_laplacian_pairings_and_energy_pairing():
    dom = Domain.interval(2.0, 16)
    rng = np.random.default_rng(8)
    v = operator_identity_violations(dom, random_coeffs(dom, 100, rng))
    assert v["f1_laplacian"] <= 1e-10
    assert v["f2_laplacian"] <= 1e-10
    assert v["ito_pairing_excess"] <= 1e-12
    # <drift, Lap u> = lambda2 |u x Lap u|^2
    p = PhysParams(0.7, 1.9, 0.0, noise_field(dom, "constant"))
    system = LLGSystem(p)
    u = random_coeffs(dom, 20, rng)
    lhs = dom.coeff_inner(system.drift_stratonovich(u), dom.laplacian_coeffs(u))
    rhs = 1.9 * system.cross_lap_sq(u)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_g_bound_and_linearity(seed):
    dom = Domain.rectangle((1.0, 1.5), (5, 4))
    rng = np.random.default_rng(seed)
    h = rng.standard_normal(dom.grid_shape)
    system = LLGSystem(PhysParams(1.0, 1.0, 1.0, GridField(dom, h)))
    u, v = rng.standard_normal((2,) + dom.coeff_shape)
    a, b = rng.standard_normal(2)
    np.testing.assert_allclose(system.g(a * u + b * v), a * system.g(u) + b * system.g(v), atol=1e-12 * 50)
    hinf = np.max(np.linalg.norm(h, axis=-1))
    gu = system.g(u)
    assert math.sqrt(dom.coeff_inner(gu, gu)) <= hinf * math.sqrt(dom.coeff_inner(u, u)) * (1 + 1e-12)


# Empirical Lipschitz constants of f1, f2 on the ball of radius 1 in H_n
# (L = 1, pairs with |u - v| small).  The largest ratios over 2000 independent
# random pairs were 82 (n = 4) and 429 (n = 8); the bounds keep a factor 3.
LIPSCHITZ_BOUND = {4: 250.0, 8: 1300.0}


@pytest.mark.parametrize("n", sorted(LIPSCHITZ_BOUND))
def test_local_lipschitz_on_balls(n):
    dom = Domain.interval(1.0, n)
    rng = np.random.default_rng(n)
    system = LLGSystem(PhysParams(1.0, 1.0, 0.0, noise_field(dom, "constant")))
    u = rng.standard_normal((500,) + dom.coeff_shape)
    u /= np.sqrt(dom.coeff_inner(u, u))[:, None, None]
    u *= rng.uniform(0, 1, (500, 1, 1))
    v = u + 1e-3 * rng.standard_normal(u.shape)
    du = np.sqrt(dom.coeff_inner(u - v, u - v))
    for op in (system.f1, system.f2):
        d = op(u) - op(v)
        ratio = np.sqrt(dom.coeff_inner(d, d)) / du
        assert np.max(ratio) <= LIPSCHITZ_BOUND[n]


def test_galerkin_state_validation():
    dom = Domain.interval(1.0, 3)
    with pytest.raises(ConfigError):
        GalerkinState(SpectralField.zeros(dom), -1.0)
    assert GalerkinState(SpectralField.zeros(dom), 0.5).time == 0.5


def test_params_reject_non_finite():
    dom = Domain.interval(1.0, 3)
    with pytest.raises(ConfigError):
        PhysParams(float("nan"), 1.0, 1.0, noise_field(dom, "constant"))
