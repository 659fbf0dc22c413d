import cmath
import itertools
import math

import numpy as np
import pytest

from wzlri.exceptions import ConfigurationError, DivergenceError, StepFailure
from wzlri.integrators import (SchemeConfig, check_nested, cn_initial_state, run_trajectory,
                               step_expeuler, step_lie, step_relaxed_cn, step_sdlri)
from wzlri.kernels import expeuler_kernel, kernel_oracle, sdlri_kernel
from wzlri.paths import WongZakaiPath, sample_brownian
from wzlri.spectral import TorusField, free_propagate, l2_norm, sobolev_norm, wavenumbers

H = 2.0 ** -12


def random_field(N, seed=0, scale=0.3):
    rng = np.random.default_rng(seed)
    return TorusField(N, scale * (rng.standard_normal(2 * N + 1) + 1j * rng.standard_normal(2 * N + 1)))


def triple_sum_step(u, t_n, tau, wz, lam, phase_factor, kernel_on_output):
    """Direct Fourier-space step with kernels from the quadrature oracle.

    ``kernel_on_output`` selects J(k) (exponential Euler) instead of I(k1^2).
    """
    N = u.N
    db = wz(t_n + tau) - wz(t_n)
    ker = {k: kernel_oracle(wz, t_n, tau, k, phase_factor) for k in range(0, N + 1)}
    out = np.zeros(2 * N + 1, dtype=complex)
    r = range(-N, N + 1)
    for k, k1, k2 in itertools.product(r, r, r):
        k3 = k + k1 - k2
        if abs(k3) > N:
            continue
        w = ker[abs(k)] if kernel_on_output else ker[abs(k1)]
        out[k + N] += w * np.conj(u.mode(k1)) * u.mode(k2) * u.mode(k3)
    k = wavenumbers(N)
    return np.exp(-1j * k * k * db) * (u.coeffs + 1j * lam * out)


@pytest.mark.parametrize("delta,tau,t_n", [(2.0 ** -6, 2.0 ** -3, 0.25), (0.5, 2.0 ** -4, 0.5625)])
def test_sdlri_step_matches_triple_sum(delta, tau, t_n):
    wz = WongZakaiPath(sample_brownian(4, 1.0, H), delta)
    u = random_field(8, seed=1)
    db = wz(t_n + tau) - wz(t_n)
    got = step_sdlri(u, sdlri_kernel(wz, t_n, tau, 8), db, 1.3).coeffs
    ref = triple_sum_step(u, t_n, tau, wz, 1.3, 2, False)
    assert np.max(np.abs(got - ref)) <= 1e-12 * np.max(np.abs(ref))


def test_expeuler_step_matches_triple_sum():
    wz = WongZakaiPath(sample_brownian(5, 1.0, H), 2.0 ** -7)
    u = random_field(8, seed=2)
    t_n, tau = 0.5, 2.0 ** -4
    db = wz(t_n + tau) - wz(t_n)
    got = step_expeuler(u, expeuler_kernel(wz, t_n, tau, 8), db, -0.7).coeffs
    ref = triple_sum_step(u, t_n, tau, wz, -0.7, 1, True)
    assert np.max(np.abs(got - ref)) <= 1e-12 * np.max(np.abs(ref))


def test_plane_wave_closed_forms():
    k0, a, lam, tau, db = 3, 0.4 - 0.2j, 1.0, 2.0 ** -5, 0.0371
    u = TorusField.from_modes(5, {k0: a})
    m = abs(a) ** 2
    wz = WongZakaiPath(sample_brownian(6, 1.0, H), 2.0 ** -8)
    K = sdlri_kernel(wz, 0.0, tau, 5)
    assert step_sdlri(u, K, db, lam).mode(k0) == pytest.approx(
        cmath.exp(-1j * k0 ** 2 * db) * a * (1 + 1j * lam * m * K.at(k0)), abs=1e-15)
    assert step_lie(u, db, tau, lam).mode(k0) == pytest.approx(
        cmath.exp(-1j * k0 ** 2 * db) * cmath.exp(1j * tau * lam * m) * a, abs=1e-15)
    v = step_lie(u, db, tau, lam)
    assert np.allclose(np.delete(v.coeffs, k0 + 5), 0, atol=1e-16)


def test_cn_cayley_multiplier_is_unimodular():
    u = random_field(32, seed=3)
    db = 0.812
    v, _ = step_relaxed_cn(u, cn_initial_state(u), db, 2.0 ** -4, 0.0)
    k = wavenumbers(32).astype(float)
    cay = (1 - 0.5j * db * k * k) / (1 + 0.5j * db * k * k)
    assert np.max(np.abs(np.abs(cay) - 1.0)) <= 4 * np.finfo(float).eps
    assert np.allclose(v.coeffs, cay * u.coeffs, rtol=0, atol=1e-15)
    assert np.max(np.abs(np.abs(v.coeffs) - np.abs(u.coeffs))) <= 1e-15


@pytest.mark.parametrize("scheme", ["sdlri", "lie", "expeuler", "splitstep_ref"])
@pytest.mark.parametrize("delta,tau", [(2.0 ** -8, 2.0 ** -5), (1.0, 2.0 ** -6)])
def test_linear_flow_is_exact(scheme, delta, tau):
    path = sample_brownian(7, 1.0, H)
    u0 = random_field(24, seed=4)
    cfg = SchemeConfig(scheme, 1.0, tau, delta, 24, lam=0.0)
    u = run_trajectory(cfg, path, u0)
    ref = free_propagate(u0, WongZakaiPath(path, delta)(1.0))
    assert np.max(np.abs(u.coeffs - ref.coeffs)) < 1e-13


def test_raw_path_source_linear_flow():
    path = sample_brownian(8, 1.0, H)
    u0 = random_field(16, seed=5)
    cfg = SchemeConfig("lie", 1.0, 2.0 ** -6, 2.0 ** -6, 16, lam=0.0, path_source="raw_brownian")
    u = run_trajectory(cfg, path, u0)
    assert np.max(np.abs(u.coeffs - free_propagate(u0, path.at(1.0)).coeffs)) < 1e-13


def test_relaxed_cn_conserves_mass():
    path = sample_brownian(9, 1.0, H)
    u0 = random_field(32, seed=6, scale=0.02)
    cfg = SchemeConfig("relaxed_cn", 1.0, 2.0 ** -5, 2.0 ** -8, 32, lam=1.0)
    u = run_trajectory(cfg, path, u0)
    assert abs(l2_norm(u) - l2_norm(u0)) < 1e-11


def test_splitstep_reference_equals_lie():
    path = sample_brownian(10, 1.0, H)
    u0 = random_field(16, seed=7)
    a = run_trajectory(SchemeConfig("lie", 1.0, 2.0 ** -6, 2.0 ** -8, 16), path, u0)
    b = run_trajectory(SchemeConfig("splitstep_ref", 1.0, 2.0 ** -6, 2.0 ** -8, 16), path, u0)
    assert np.array_equal(a.coeffs, b.coeffs)


def wiener(f):
    return float(np.sum(np.abs(f.coeffs)))


def test_sdlri_stability_constant():
    """Lipschitz growth per step stays below ``1 + tau C`` with C from the
    coefficient-space estimate ``|lam| ((|w|_A + |z|_A) |w|_A + |z|_A^2)``."""
    wz = WongZakaiPath(sample_brownian(11, 1.0, H), 2.0 ** -10)
    tau, lam, N = 2.0 ** -5, 1.0, 32
    worst = 0.0
    for i in range(20):
        z = random_field(N, seed=100 + i, scale=0.05)
        w = z + random_field(N, seed=200 + i, scale=1e-3)
        t_n = (i % 32) * tau
        K = sdlri_kernel(wz, t_n, tau, N)
        db = wz(t_n + tau) - wz(t_n)
        ratio = l2_norm(step_sdlri(w, K, db, lam) - step_sdlri(z, K, db, lam)) / l2_norm(w - z)
        C_obs = (ratio - 1.0) / tau
        bound = abs(lam) * ((wiener(w) + wiener(z)) * wiener(w) + wiener(z) ** 2)
        assert C_obs <= bound
        worst = max(worst, C_obs / bound)
    # observed constants sit well inside the estimate
    assert worst < 0.5


def test_config_validation():
    with pytest.raises(ConfigurationError):
        SchemeConfig("sdlri", 1.0, 0.3, 0.2, 8).validate()
    with pytest.raises(ConfigurationError):
        SchemeConfig("sdlri", 1.0, 2.0 ** -4, 2.0 ** -4, 8, path_source="raw_brownian").validate()
    with pytest.raises(ConfigurationError):
        SchemeConfig("nope", 1.0, 2.0 ** -4, 2.0 ** -4, 8).validate()
    with pytest.raises(ConfigurationError):
        SchemeConfig("lie", 1.0, 2.0 ** -4, 2.0 ** -4, 8, lam=math.nan).validate()
    with pytest.raises(ConfigurationError):
        check_nested(0.3, 0.2)
    check_nested(2.0 ** -4, 2.0 ** -8)
    check_nested(2.0 ** -8, 2.0 ** -4)
    assert SchemeConfig("lie", 1.0, 2.0 ** -4, 2.0 ** -6, 8).validate(H) == 16
    with pytest.raises(ConfigurationError):
        SchemeConfig("lie", 1.0, 2.0 ** -4, 2.0 ** -14, 8).validate(H)


def test_config_round_trip():
    cfg = SchemeConfig("relaxed_cn", 1.0, 2.0 ** -4, 2.0 ** -6, 8, R=math.inf, lam=-1.0)
    d = cfg.to_dict()
    assert d["R"] == "inf"
    assert SchemeConfig.from_dict(d) == cfg


def test_snapshots_and_bandwidth_checks():
    path = sample_brownian(12, 1.0, H)
    u0 = random_field(8, seed=8)
    final, snaps = run_trajectory(SchemeConfig("sdlri", 1.0, 2.0 ** -4, 2.0 ** -6, 12), path, u0,
                                  snapshot_every=4)
    assert [t for t, _ in snaps] == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert np.array_equal(snaps[-1][1].coeffs, final.coeffs)
    assert final.N == 12
    with pytest.raises(ConfigurationError):
        run_trajectory(SchemeConfig("sdlri", 1.0, 2.0 ** -4, 2.0 ** -6, 4), path, u0)


def test_failures_are_reported():
    path = sample_brownian(13, 1.0, H)
    u0 = random_field(8, seed=9, scale=1.0)
    with pytest.raises(StepFailure) as info:
        run_trajectory(SchemeConfig("relaxed_cn", 1.0, 2.0 ** -2, 2.0 ** -4, 8, cn_max_iter=2),
                       path, u0)
    assert info.value.step == 0 and info.value.residual > 0
    with pytest.raises(DivergenceError):
        run_trajectory(SchemeConfig("expeuler", 1.0, 2.0 ** -2, 2.0 ** -4, 8, lam=1e150), path, u0)


def test_nonlinear_run_is_deterministic():
    path = sample_brownian(14, 1.0, H)
    u0 = random_field(16, seed=10)
    cfg = SchemeConfig("sdlri", 1.0, 2.0 ** -5, 2.0 ** -9, 16)
    a = run_trajectory(cfg, path, u0)
    b = run_trajectory(cfg, path, u0)
    assert np.array_equal(a.coeffs, b.coeffs)
    assert sobolev_norm(a, 1) > 0
