import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sllg.battery import rotation_params, rotation_u0
from sllg.errors import BlowUpError, ConfigError, StepFailureError
from sllg.families import initial_datum, noise_field
from sllg.llg import GalerkinState, PhysParams
from sllg.sde import (BrownianPath, RecordingPolicy, SchemeConfig, generate_path, integrate, path_seed,
                      step_heun, step_midpoint)
from sllg.spectral import Domain, SpectralField

# scripts/oracles.py: implicit midpoint step of du = (u x h) dW from (1,0,0), h = e_z, dW = 0.1
CAYLEY_STEP = (0.99501246882793015, -0.099750623441396513, 0.0)


def rotation_setup(n=4):
    dom = Domain.interval(1.0, n)
    return dom, rotation_params(dom), rotation_u0(dom)


def generic_setup(n=6):
    dom = Domain.interval(2 * math.pi, n)
    p = PhysParams(1.0, 1.0, 1.0, noise_field(dom, "cosine"))
    return dom, p, initial_datum(dom, "winding")


def test_path_seed_is_deterministic_and_distinct():
    assert path_seed(7, 3) == path_seed(7, 3)
    seeds = {path_seed(7, i) for i in range(1000)}
    assert len(seeds) == 1000
    assert path_seed(7, 0) != path_seed(8, 0)


def test_generate_path_reproducible():
    a = generate_path(1.0, 0.01, 42)
    b = generate_path(1.0, 0.01, 42)
    assert np.array_equal(a.increments, b.increments)
    assert a.num_steps == 100
    assert a.times()[-1] == pytest.approx(1.0)
    assert a.values()[0] == 0.0 and a.values()[-1] == pytest.approx(a.increments.sum())


def test_increment_variance():
    path = generate_path(1.0, 1e-6, 3)
    var = np.mean(path.increments ** 2)
    assert abs(var / 1e-6 - 1.0) < 0.01
    assert abs(np.mean(path.increments)) < 5 * 1e-3 / math.sqrt(1e6)


def test_refined_path_variance_and_consistency():
    coarse = generate_path(1.0, 1e-3, 11)
    fine = coarse.refined(3)
    assert fine.dt == pytest.approx(1.25e-4)
    assert fine.num_steps == 8000
    back = fine.coarsen(8)
    assert np.max(np.abs(back.increments - coarse.increments)) <= 1e-14
    assert abs(np.var(fine.increments) / fine.dt - 1.0) < 0.05
    # refinement is a deterministic function of the seed
    assert np.array_equal(fine.increments, generate_path(1.0, 1e-3, 11).refined(3).increments)


def test_incoherent_dt_rejected():
    with pytest.raises(ConfigError) as err:
        generate_path(1.0, 0.3, 0)
    assert err.value.key == "time.dt"
    with pytest.raises(ConfigError):
        generate_path(1.0, -0.1, 0)
    with pytest.raises(ConfigError):
        generate_path(1.0, 0.01, 0).coarsen(3)


def test_scheme_and_policy_validation():
    with pytest.raises(ConfigError):
        SchemeConfig("euler")
    with pytest.raises(ConfigError):
        SchemeConfig("midpoint", midpoint_max_iter=0)
    with pytest.raises(ConfigError):
        RecordingPolicy("sometimes")
    with pytest.raises(ConfigError):
        RecordingPolicy("stride", 0)


def test_heun_step_is_second_order_taylor_for_rotation():
    dom, p, u0 = rotation_setup()
    dW = 0.1
    out = step_heun(GalerkinState(u0, 0.0), p, 0.01, dW).u.coeffs[0] / math.sqrt(dom.volume)
    np.testing.assert_allclose(out, [1 - dW ** 2 / 2, -dW, 0.0], atol=1e-15)


def test_midpoint_step_matches_cayley_oracle():
    dom, p, u0 = rotation_setup()
    state = step_midpoint(GalerkinState(u0, 0.0), p, 0.01, 0.1)
    assert state.time == pytest.approx(0.01)
    np.testing.assert_allclose(state.u.coeffs[0] / math.sqrt(dom.volume), CAYLEY_STEP, atol=1e-13)
    assert np.max(np.abs(state.u.coeffs[1:])) <= 1e-15


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([1e-3, 1e-2, 5e-2]))
def test_midpoint_conserves_l2_norm(seed, dt):
    dom, p, u0 = generic_setup()
    traj = integrate(u0, p, [generate_path(0.2, dt, seed)], SchemeConfig("midpoint", 1e-13))
    l2 = traj.observables["l2"][:, 0]
    assert np.max(np.abs(l2 / l2[0] - 1.0)) <= 1e-10


def test_rotation_strong_error_small():
    dom, p, u0 = rotation_setup()
    paths = [generate_path(1.0, 1e-3, path_seed(5, i)) for i in range(20)]
    traj = integrate(u0, p, paths, SchemeConfig("midpoint"), RecordingPolicy("observables"))
    W = np.array([q.values()[-1] for q in paths])
    exact = np.stack([np.cos(W), -np.sin(W), np.zeros_like(W)], axis=1)
    got = traj.final[:, 0, :] / math.sqrt(dom.volume)
    assert np.mean(np.linalg.norm(got - exact, axis=1)) <= 1e-3


def test_heun_and_midpoint_gap_shrinks_with_dt():
    dom, p, u0 = generic_setup()
    fine = generate_path(0.1, 2.5e-4, 9)
    gaps = []
    for factor in (16, 4, 1):
        path = fine.coarsen(factor)
        a = integrate(u0, p, [path], SchemeConfig("heun")).final
        b = integrate(u0, p, [path], SchemeConfig("midpoint")).final
        gaps.append(np.linalg.norm(a - b))
    assert gaps[1] < 0.5 * gaps[0] and gaps[2] < 0.5 * gaps[1]
    assert gaps[2] < 1e-4


def test_batch_composition_does_not_change_paths():
    dom, p, u0 = generic_setup()
    paths = [generate_path(0.05, 1e-3, path_seed(1, i)) for i in range(5)]
    together = integrate(u0, p, paths, SchemeConfig("midpoint"))
    alone = integrate(u0, p, [paths[3]], SchemeConfig("midpoint"))
    assert np.array_equal(together.final[3], alone.final[0])
    assert np.array_equal(together.coeffs[:, 3], alone.coeffs[:, 0])


def test_recording_policies():
    dom, p, u0 = generic_setup()
    path = generate_path(0.01, 1e-3, 2)
    every = integrate(u0, p, [path])
    strided = integrate(u0, p, [path], record=RecordingPolicy("stride", 3))
    obs = integrate(u0, p, [path], record=RecordingPolicy("observables"))
    assert list(every.steps) == list(range(11))
    assert list(strided.steps) == [0, 3, 6, 9, 10]
    assert obs.coeffs is None and obs.observables["energy"].shape == (11, 1)
    assert np.array_equal(strided.coeffs[-1], every.coeffs[-1])
    np.testing.assert_allclose(every.observables["energy"][strided.steps], strided.observables["energy"])


def test_trajectory_select():
    dom, p, u0 = generic_setup()
    paths = [generate_path(0.01, 1e-3, s) for s in range(3)]
    traj = integrate(u0, p, paths)
    sub = traj.select([2, 0])
    assert sub.num_paths == 2
    assert sub.seeds == (2, 0)
    assert np.array_equal(sub.final[0], traj.final[2])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_blow_up_is_recorded_and_others_continue():
    dom, p, u0 = generic_setup()
    big = SpectralField(dom, u0.coeffs * 1e3)
    paths = [generate_path(0.05, 5e-3, s) for s in range(2)]
    u_init = np.stack([u0.coeffs, big.coeffs])
    traj = integrate(u_init, p, paths, SchemeConfig("heun"), on_failure="record")
    assert 1 in traj.failures and 0 not in traj.failures
    assert np.all(np.isnan(traj.final[1]))
    assert np.all(np.isfinite(traj.final[0]))
    assert list(traj.ok_paths()) == [0]
    with pytest.raises(BlowUpError):
        integrate(u_init, p, paths, SchemeConfig("heun"))


def test_midpoint_iteration_limit_raises():
    dom, p, u0 = generic_setup()
    with pytest.raises(StepFailureError):
        step_midpoint(GalerkinState(u0, 0.0), p, 0.05, 0.2, SchemeConfig("midpoint", 1e-16, 1))


def test_integrate_rejects_bad_inputs():
    dom, p, u0 = generic_setup()
    with pytest.raises(ConfigError):
        integrate(u0, p, [])
    with pytest.raises(ConfigError):
        integrate(u0, p, [generate_path(0.1, 1e-2, 0), generate_path(0.1, 5e-3, 0)])
    with pytest.raises(ConfigError):
        integrate(np.zeros((2, 2, 3)), p, [generate_path(0.1, 1e-2, 0)])


def test_brownian_path_dataclass_values():
    path = BrownianPath(0.5, np.array([1.0, -2.0]), seed=0)
    np.testing.assert_allclose(path.values(), [0.0, 1.0, -1.0])
    np.testing.assert_allclose(path.times(), [0.0, 0.5, 1.0])
    assert path.T == 1.0
