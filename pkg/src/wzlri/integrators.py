"""One-step maps and the trajectory driver.

Schemes
-------
sdlri          resonance-based low-regularity step with exact Wong-Zakai kernels
expeuler       Wong-Zakai exponential Euler
lie            Lie splitting: pointwise nonlinear phase, then exact free flow
relaxed_cn     relaxed Crank-Nicolson, solved by fixed-point iteration
splitstep_ref  Lie splitting used as the fine-step reference solver

All steps act on Galerkin-truncated fields; nonlinear products are computed on
the alias-free padded grid of :func:`wzlri.spectral.dealias_size`.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import ConfigurationError, DivergenceError, StepFailure
from .kernels import KernelTable, expeuler_kernel, sdlri_kernel
from .paths import BrownianPath, WongZakaiPath, grid_ratio, wz_eval
from .spectral import (TorusField, coeffs_to_grid, dealias_size, free_symbol, grid_to_coeffs,
                       resize, wavenumbers)

SCHEMES = ("sdlri", "lie", "expeuler", "relaxed_cn", "splitstep_ref")
PATH_SOURCES = ("wong_zakai", "raw_brownian")
KERNEL_SCHEMES = ("sdlri", "expeuler")


@dataclass
class SchemeConfig:
    scheme: str
    T: float
    tau: float
    delta: float
    N: int
    R: float = math.inf
    lam: float = 1.0
    path_source: str = "wong_zakai"
    cn_tol: float = 1e-12
    cn_max_iter: int = 200

    def validate(self, h_fine: float | None = None) -> int:
        """Check commensurability; return the number of steps ``T / tau``."""
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.path_source not in PATH_SOURCES:
            raise ConfigurationError(f"unknown path source {self.path_source!r}")
        if self.scheme in KERNEL_SCHEMES and self.path_source != "wong_zakai":
            raise ConfigurationError(f"{self.scheme} needs the Wong-Zakai path")
        if not math.isfinite(self.lam):
            raise ConfigurationError("lambda must be finite")
        if self.N < 0:
            raise ConfigurationError("bandwidth must be nonnegative")
        if self.T <= 0 or self.tau <= 0 or self.delta <= 0:
            raise ConfigurationError("T, tau and delta must be positive")
        if self.scheme in KERNEL_SCHEMES:
            check_nested(self.tau, self.delta)
        K = grid_ratio(self.T, self.tau, "T / tau")
        if self.path_source == "wong_zakai":
            grid_ratio(self.T, self.delta, "T / delta")
        if h_fine is not None:
            grid_ratio(self.delta, h_fine, "delta / h_fine")
            grid_ratio(self.tau, h_fine, "tau / h_fine")
        return K

    def to_dict(self) -> dict:
        d = asdict(self)
        d["R"] = "inf" if math.isinf(self.R) else self.R
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SchemeConfig":
        d = dict(d)
        d["R"] = float(d.get("R", math.inf))
        return cls(**d)


def check_nested(tau: float, delta: float) -> None:
    """Require ``delta | tau`` (several knots per step) or ``tau | delta``
    (several steps per knot interval, e.g. the linear-dispersion regime)."""
    if delta <= tau:
        grid_ratio(tau, delta, "tau / delta")
    else:
        grid_ratio(delta, tau, "delta / tau")


@dataclass(frozen=True, eq=False)
class CnState:
    phi_half: np.ndarray  # real relaxation variable on the padded grid


def cn_initial_state(u0: TorusField) -> CnState:
    g = coeffs_to_grid(u0.coeffs, dealias_size(u0.N))
    return CnState(np.abs(g) ** 2)


def _sdlri_coeffs(a, kvals, db, lam, M):
    N = (a.size - 1) // 2
    ubar = np.conj(a[::-1])
    ug = coeffs_to_grid(a, M)
    wg = coeffs_to_grid(kvals * ubar, M)
    nl = grid_to_coeffs(ug * ug * wg, N)
    return free_symbol(N, db) * (a + 1j * lam * nl)


def step_sdlri(u: TorusField, K: KernelTable, db: float, lam: float) -> TorusField:
    """``e^{i db Lap} [u + i lam pi_N(u^2 K(-Lap) conj(u))]``."""
    if K.N != u.N:
        raise ConfigurationError(f"kernel bandwidth {K.N} does not match field bandwidth {u.N}")
    return TorusField(u.N, _sdlri_coeffs(u.coeffs, K.values, db, lam, dealias_size(u.N)))


def _lie_coeffs(a, psi, tau, lam, M):
    N = (a.size - 1) // 2
    g = coeffs_to_grid(a, M)
    g *= np.exp(1j * tau * lam * (g.real ** 2 + g.imag ** 2))
    return free_symbol(N, psi) * grid_to_coeffs(g, N)


def step_lie(u: TorusField, psi: float, tau: float, lam: float) -> TorusField:
    """``e^{i psi Lap} pi_N e^{i tau lam |u|^2} u``."""
    return TorusField(u.N, _lie_coeffs(u.coeffs, psi, tau, lam, dealias_size(u.N)))


def _expeuler_coeffs(a, jvals, psi, lam, M):
    N = (a.size - 1) // 2
    g = coeffs_to_grid(a, M)
    nl = grid_to_coeffs(g * g * np.conj(g), N)
    return free_symbol(N, psi) * (a + 1j * lam * jvals * nl)


def step_expeuler(u: TorusField, J: KernelTable, psi: float, lam: float) -> TorusField:
    """``e^{i psi Lap} [u + i lam J(-Lap) pi_N(|u|^2 u)]``."""
    if J.N != u.N:
        raise ConfigurationError(f"kernel bandwidth {J.N} does not match field bandwidth {u.N}")
    return TorusField(u.N, _expeuler_coeffs(u.coeffs, J.values, psi, lam, dealias_size(u.N)))


def _cn_coeffs(a, phi_old, db, tau, lam, tol, max_iter, M, step=None):
    N = (a.size - 1) // 2
    k = wavenumbers(N).astype(float)
    ga = coeffs_to_grid(a, M)
    phi = 2.0 * (ga.real ** 2 + ga.imag ** 2) - phi_old
    half = 0.5j * db * k * k
    denom = 1.0 + half
    lin = (1.0 - half) * a
    cur = a
    change = math.inf
    for _ in range(max_iter):
        if lam == 0.0:
            nxt = lin / denom
        else:
            prod = coeffs_to_grid(cur + a, M) * phi
            nxt = (lin + 0.5j * tau * lam * grid_to_coeffs(prod, N)) / denom
        change = math.sqrt(float(np.sum(np.abs(nxt - cur) ** 2)))
        cur = nxt
        if change < tol:
            return cur, phi
    raise StepFailure(
        f"relaxed CN fixed point did not converge in {max_iter} iterations (last change {change:.3e})",
        step=step, residual=change)


def step_relaxed_cn(u: TorusField, state: CnState, db: float, tau: float, lam: float,
                    tol: float = 1e-12, max_iter: int = 200) -> tuple[TorusField, CnState]:
    """Relaxed Crank-Nicolson step; returns the new field and relaxation state."""
    coeffs, phi = _cn_coeffs(u.coeffs, state.phi_half, db, tau, lam, tol, max_iter,
                             dealias_size(u.N))
    return TorusField(u.N, coeffs), CnState(phi)


def step_increments(cfg: SchemeConfig, path: BrownianPath, wz: WongZakaiPath | None) -> np.ndarray:
    """Path increments over each step of size ``cfg.tau`` from the configured source."""
    if cfg.path_source == "raw_brownian":
        return path.increments(cfg.tau)
    K = grid_ratio(cfg.T, cfg.tau, "T / tau")
    return np.diff(wz_eval(wz, np.arange(K + 1) * cfg.tau))


def run_trajectory(cfg: SchemeConfig, path: BrownianPath, u0: TorusField,
                   snapshot_every: int | None = None):
    """Advance ``u0`` to ``cfg.T``.

    Returns the final field, or ``(final, snapshots)`` when ``snapshot_every``
    is given; snapshots are ``(t, TorusField)`` pairs including ``t = 0``.
    """
    n_steps = cfg.validate(path.h_fine)
    if abs(path.T - cfg.T) > 1e-12 * cfg.T and path.T < cfg.T:
        raise ConfigurationError(f"path horizon {path.T} shorter than T={cfg.T}")
    if u0.N > cfg.N:
        raise ConfigurationError(f"initial bandwidth {u0.N} exceeds N={cfg.N}")
    a = resize(u0, cfg.N).coeffs
    M = dealias_size(cfg.N)
    wz = WongZakaiPath(path, cfg.delta, cfg.R) if cfg.path_source == "wong_zakai" else None
    incr = step_increments(cfg, path, wz)
    phi = None
    if cfg.scheme == "relaxed_cn":
        g = coeffs_to_grid(a, M)
        phi = g.real ** 2 + g.imag ** 2
    snaps = [(0.0, TorusField(cfg.N, a.copy()))] if snapshot_every else None

    # overflow is detected explicitly below, so silence the floating-point warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_steps):
            t_n = n * cfg.tau
            db = float(incr[n])
            if cfg.scheme == "sdlri":
                kv = sdlri_kernel(wz, t_n, cfg.tau, cfg.N).values
                a = _sdlri_coeffs(a, kv, db, cfg.lam, M)
            elif cfg.scheme == "expeuler":
                jv = expeuler_kernel(wz, t_n, cfg.tau, cfg.N).values
                a = _expeuler_coeffs(a, jv, db, cfg.lam, M)
            elif cfg.scheme in ("lie", "splitstep_ref"):
                a = _lie_coeffs(a, db, cfg.tau, cfg.lam, M)
            else:
                a, phi = _cn_coeffs(a, phi, db, cfg.tau, cfg.lam, cfg.cn_tol, cfg.cn_max_iter,
                                    M, step=n)
            if not np.all(np.isfinite(a)):
                raise DivergenceError(f"non-finite coefficients after step {n}", step=n)
            if snaps is not None and (n + 1) % snapshot_every == 0:
                snaps.append(((n + 1) * cfg.tau, TorusField(cfg.N, a.copy())))

    final = TorusField(cfg.N, a)
    return (final, snaps) if snaps is not None else final
