import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sllg import diagnostics as dg
from sllg.battery import random_coeffs, rotation_params, rotation_u0
from sllg.errors import ConfigError, InsufficientDataError, StatisticalPowerError
from sllg.families import bump_values, initial_datum, noise_field
from sllg.llg import PhysParams
from sllg.sde import RecordingPolicy, SchemeConfig, generate_path, integrate, path_seed
from sllg.spectral import Domain, GridField, SpectralField

# scripts/oracles.py: W^{alpha,q}(0,1) norm of t -> t v with |v| = 1
BESOV_LINEAR_3_8_9 = 0.8121207775057544
BESOV_LINEAR_1_2_2 = 1.1547005383792515


def const_field(dom, vec):
    c = np.zeros(dom.coeff_shape)
    c[(0,) * dom.dim] = np.asarray(vec, dtype=float) * math.sqrt(dom.volume)
    return SpectralField(dom, c)


def winding_run(n=8, T=0.1, dt=1e-3, paths=1, lam=(1.0, 1.0, 1.0), h="cosine", seed=0):
    dom = Domain.interval(2 * math.pi, n)
    p = PhysParams(*lam, noise_field(dom, h, (0.0, 0.6, 0.8)))
    u0 = initial_datum(dom, "winding")
    bp = [generate_path(T, dt, path_seed(seed, i)) for i in range(paths)]
    return dom, p, integrate(u0, p, bp, SchemeConfig("midpoint"))


def test_mean_se():
    m, se = dg.mean_se([1.0, 2.0, 3.0, 4.0])
    assert m == 2.5
    assert se == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
    m, se = dg.mean_se([5.0])
    assert m == 5.0 and math.isnan(se)


def test_observable_series_validation():
    dg.ObservableSeries([0.0, 0.1], [1.0, 2.0])
    with pytest.raises(ConfigError):
        dg.ObservableSeries([0.1, 0.2], [1.0, 2.0])
    with pytest.raises(ConfigError):
        dg.ObservableSeries([0.0, 0.0], [1.0, 2.0])
    with pytest.raises(ConfigError):
        dg.ObservableSeries([0.0], [1.0, 2.0])


def test_sphere_deviation_examples():
    dom = Domain.rectangle((1.5, 2.0), (3, 4))
    assert dg.sphere_deviation(const_field(dom, (0.0, 0.6, 0.8))) == pytest.approx(0.0, abs=1e-13)
    assert dg.sphere_deviation(const_field(dom, (2.0, 0.0, 0.0))) == pytest.approx(9 * 3.0, rel=1e-12)
    assert dg.sphere_deviation(SpectralField.zeros(dom)) == pytest.approx(3.0, rel=1e-12)


def test_energy_balance_deterministic_second_order():
    residuals = []
    for dt in (4e-3, 2e-3, 1e-3):
        dom, p, traj = winding_run(T=0.1, dt=dt, lam=(1.0, 1.0, 0.0))
        rep = dg.energy_balance(traj, p)
        assert np.all(rep.stochastic == 0)
        residuals.append(abs(rep.residual[-1, 0]))
    slopes = np.diff(np.log(residuals)) / np.diff(np.log([4e-3, 2e-3, 1e-3]))
    assert np.all(np.abs(slopes - 2.0) < 0.2)
    assert residuals[-1] < 1e-5


def test_energy_balance_trivial_and_dissipative():
    # constant field: every term vanishes
    dom = Domain.interval(2 * math.pi, 6)
    p = PhysParams(1.0, 1.0, 1.0, noise_field(dom, "cosine"))
    traj = integrate(const_field(dom, (0, 0, 1)), p, [generate_path(0.05, 1e-3, 0)])
    rep = dg.energy_balance(traj, p)
    assert np.max(np.abs(rep.residual)) < 1e-12
    # deterministic flow dissipates energy
    dom, p, traj = winding_run(lam=(1.0, 1.0, 0.0))
    e = dg.energy_balance(traj, p).energy[:, 0]
    assert np.all(np.diff(e) <= 1e-12)
    assert dg.energy_balance(traj, p).vanishing_variant == "indistinguishable"


def test_energy_balance_vanishing_variant_selects_lambda2():
    dom, p, traj = winding_run(lam=(1.0, 0.5, 0.0), dt=5e-4)
    assert dg.energy_balance(traj, p).vanishing_variant == "lambda2"


def test_energy_balance_constant_h_has_no_stochastic_energy_term():
    dom, p, traj = winding_run(h="constant", T=0.05)
    rep = dg.energy_balance(traj, p)
    assert np.max(np.abs(rep.stochastic)) < 1e-10
    np.testing.assert_allclose(rep.residual, rep.residual_ito, atol=1e-10)


def test_energy_balance_needs_dense_snapshots():
    dom = Domain.interval(1.0, 4)
    p = PhysParams(1.0, 1.0, 0.0, noise_field(dom))
    u0 = initial_datum(dom, "winding")
    path = generate_path(0.01, 1e-3, 0)
    with pytest.raises(InsufficientDataError):
        dg.energy_balance(integrate(u0, p, [path], record=RecordingPolicy("observables")), p)
    with pytest.raises(InsufficientDataError):
        dg.energy_balance(integrate(u0, p, [path], record=RecordingPolicy("stride", 5)), p)


def test_apriori_statistics():
    dom, p, traj = winding_run(paths=3, T=0.05)
    stats = dg.apriori_statistics(traj, p)
    assert set(stats) == {"l2_drift", "sup_grad_sq", "int_cross_sq", "int_damping_l65"}
    assert np.all(stats["l2_drift"] < 1e-12)
    assert np.all(stats["sup_grad_sq"] >= 2 * traj.observables["energy"][0] - 1e-14)
    assert np.all(stats["int_cross_sq"] > 0)
    rep = dg.apriori_report(traj, p)
    assert rep.mean["int_cross_sq"] == pytest.approx(np.mean(stats["int_cross_sq"]))
    with pytest.raises(StatisticalPowerError):
        dg.apriori_report(traj.select([0]), p)


def test_besov_constant_path():
    dom = Domain.interval(1.0, 2)
    v = np.zeros(dom.coeff_shape)
    v[0, 0] = 2.0
    t = np.linspace(0.0, 0.5, 21)
    path = np.broadcast_to(v, (21,) + v.shape)
    assert dg.besov_norm(path, t, 0.375, 9.0, dom, "L2coeff") == pytest.approx(2.0 * 0.5 ** (1 / 9), rel=1e-12)


@pytest.mark.parametrize("alpha,q,expected", [(0.375, 9.0, BESOV_LINEAR_3_8_9), (0.5, 2.0, BESOV_LINEAR_1_2_2)])
def test_besov_linear_path_matches_closed_form(alpha, q, expected):
    dom = Domain.interval(1.0, 2)
    v = np.zeros(dom.coeff_shape)
    v[1, 2] = 1.0
    t = np.linspace(0.0, 1.0, 101)
    got = dg.besov_norm(t[:, None, None] * v, t, alpha, q, dom, "L2coeff")
    assert abs(got / expected - 1) < 0.02


def test_besov_batched_shapes_and_spaces():
    dom = Domain.interval(2.0, 4)
    rng = np.random.default_rng(0)
    path = rng.standard_normal((11, 3) + dom.coeff_shape)
    t = np.linspace(0, 1, 11)
    out = dg.besov_norm(path, t, 0.375, 9, dom, "L6/5")
    assert out.shape == (3,)
    single = dg.besov_norm(path[:, 1], t, 0.375, 9, dom, "L6/5")
    assert out[1] == pytest.approx(float(single))
    for space in ("L2", "Hm1"):
        assert np.all(dg.besov_norm(path, t, 0.375, 9, dom, space) > 0)


def test_besov_rejects_bad_parameters():
    dom = Domain.interval(1.0, 2)
    path = np.zeros((3,) + dom.coeff_shape)
    t = np.linspace(0, 1, 3)
    for alpha in (0.0, 1.0, -0.5):
        with pytest.raises(ConfigError):
            dg.besov_norm(path, t, alpha, 9.0, dom)
    for q in (1.0, math.inf, 0.5):
        with pytest.raises(ConfigError):
            dg.besov_norm(path, t, 0.375, q, dom)
    with pytest.raises(InsufficientDataError):
        dg.besov_norm(path[:1], t[:1], 0.375, 9.0, dom)
    with pytest.raises(ConfigError):
        dg.besov_norm(path, t, 0.375, 9.0, dom, "H5")


def bump(dom, direction=(0.0, 1.0, 0.0)):
    fine = Domain(dom.lengths, dom.modes, tuple(16 * m for m in dom.modes))
    return GridField(fine, bump_values(fine, (0.45 * dom.lengths[0],), 0.3 * dom.lengths[0], direction))


def test_weak_form_residual_zero_at_start_and_small_at_end():
    dom, p, traj = winding_run(paths=2)
    phi = bump(dom)
    res = dg.weak_form_residual(traj, p, phi, time_index=0)
    assert np.all(res == 0)
    lhs, rhs = dg.weak_form_terms(traj, p, phi)
    assert np.max(np.abs(lhs[-1])) > 1e-3
    assert np.max(np.abs(lhs[-1] - rhs[-1])) < 1e-3 * np.max(np.abs(lhs[-1]))


def test_weak_form_flipped_precession_sign_fails_to_balance():
    dom, p, traj = winding_run(paths=1, lam=(1.0, 1.0, 0.0))
    phi = bump(dom)
    good = dg.weak_form_residual(traj, p, phi)[0]
    bad = dg.weak_form_residual(traj, p, phi, flip_precession_sign=True)[0]
    assert bad > 100 * good


def test_weak_form_frozen_field():
    dom = Domain.interval(2 * math.pi, 6)
    p = PhysParams(0.0, 0.0, 1.0, noise_field(dom, "constant", (0, 0, 1)), allow_degenerate=True)
    traj = integrate(const_field(dom, (0, 0, 1)), p, [generate_path(0.05, 1e-3, 0)])
    lhs, rhs = dg.weak_form_terms(traj, p, bump(dom, (0.0, 0.0, 1.0)))
    assert np.max(np.abs(lhs)) < 1e-14 and np.max(np.abs(rhs)) < 1e-14


def test_projected_test_function_geometry_mismatch():
    dom = Domain.interval(1.0, 4)
    other = Domain.interval(2.0, 4)
    with pytest.raises(ConfigError):
        dg.projected_test_function(dom, GridField(other, np.ones(other.grid_shape)))


def test_default_probes_are_orthonormal():
    dom = Domain.rectangle((1.0, 2.0), (2, 3))
    probes = dg.default_probes(dom)
    assert len(probes) == 5
    gram = np.array([[dom.coeff_inner(a, b) for b in probes] for a in probes])
    np.testing.assert_allclose(gram, np.eye(5) * dom.coeff_inner(probes[0], probes[0]))
    assert len(dg.default_probes(Domain.interval(1.0, 1), 10)) == 3


def test_ratio_of_means():
    r, se = dg.ratio_of_means([2.0, 4.0, 6.0], [1.0, 2.0, 3.0])
    assert r == 2.0 and se == 0.0
    r, se = dg.ratio_of_means([1.0], [2.0])
    assert r == 0.5 and math.isnan(se)


def test_martingale_needs_enough_paths():
    dom, p, traj = winding_run(paths=3, T=0.01)
    with pytest.raises(StatisticalPowerError):
        dg.martingale_diagnostics(traj, p)
    rep = dg.martingale_diagnostics(traj, p, min_paths=3)
    assert len(rep.probes) == 5 and rep.num_paths == 3
    assert "1/2" in rep.note


def test_martingale_vanishes_without_noise():
    dom, p, traj = winding_run(paths=2, T=0.02, lam=(1.0, 1.0, 0.0))
    samples = dg.martingale_samples(traj, p, dg.default_probes(dom))
    for s in samples:
        assert np.max(np.abs(s.projections)) < 1e-6
        assert np.all(s.qv_predicted == 0)
    rep = dg.martingale_diagnostics(traj, p, min_paths=2)
    assert all(math.isnan(pr.qv_ratio) for pr in rep.probes)


def test_martingale_rotation_recovers_brownian_motion():
    dom = Domain.interval(1.0, 3)
    p = rotation_params(dom)
    paths = [generate_path(0.1, 1e-3, path_seed(3, i)) for i in range(4)]
    traj = integrate(rotation_u0(dom), p, paths)
    probe = np.zeros(dom.coeff_shape)
    probe[0, 1] = -1.0
    s = dg.martingale_samples(traj, p, [probe])[0]
    W = np.stack([q.values() for q in paths], axis=1)
    # <M, g> = int cos W dW ~ W for short times; predicted QV = int cos^2 W dt
    np.testing.assert_allclose(s.projections, W, atol=0.05)
    expected = np.trapezoid(np.cos(W) ** 2, traj.times, axis=0)
    np.testing.assert_allclose(s.qv_predicted[-1], expected, rtol=1e-3)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 2))
def test_green_identities_hold_for_random_fields(seed, dim):
    dom = Domain.interval(2.0, 8) if dim == 1 else Domain.rectangle((1.0, 1.5), (4, 5))
    rng = np.random.default_rng(seed)
    u, v = (SpectralField(dom, c) for c in random_coeffs(dom, 2, rng))
    lhs, rhs1, rhs2, sym = dg.green_identity_terms(u, v)
    scale = max(1.0, abs(lhs))
    assert abs(lhs - rhs1) <= 1e-8 * scale
    assert abs(lhs - rhs2) <= 1e-8 * scale
    assert abs(sym) <= 1e-10 * scale
    assert dg.green_identity_check(u, v) <= 1e-8 * scale


def test_informative_probes_drop_roundoff_predictions():
    assert dg.informative_probes([1.0, 1e-30, 0.5, 0.0]).tolist() == [True, False, True, False]
    assert dg.informative_probes([0.0, 0.0]).tolist() == [False, False]
