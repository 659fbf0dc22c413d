"""Per-step oscillatory kernels over the piecewise-linear Wong-Zakai path.

For a step ``[t_n, t_n + tau]`` with path offsets ``psi(s) = B(t_n+s) - B(t_n)``
the schemes need, for every wavenumber ``k``,

    K(k) = int_0^tau exp(i p k^2 psi(s)) ds

with ``p = 2`` (resonance-based scheme) or ``p = 1`` (exponential Euler).
``psi`` is affine between breakpoints (knots inside the step and the step
ends), so a piece of width ``w`` contributes
``w * exp(i p k^2 psi_l) * phi1(i p k^2 (psi_{l+1} - psi_l))`` exactly.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError
from .paths import WongZakaiPath, grid_ratio, wz_eval
from .spectral import phi1


@dataclass(frozen=True, eq=False)
class KernelTable:
    N: int
    values: np.ndarray  # length 2N+1, indexed like TorusField.coeffs
    t_n: float
    tau: float
    delta: float

    def at(self, k: int) -> complex:
        return complex(self.values[k + self.N])


def step_breakpoints(path: WongZakaiPath, t_n: float, tau: float) -> np.ndarray:
    """Offsets in ``[0, tau]`` where the interpolant may change slope.

    These are the knots strictly inside the step plus both endpoints, so the
    step may span many knot intervals (``delta <= tau``) or lie inside a single
    one (``delta > tau``).
    """
    h = path.base.h_fine
    i_n = grid_ratio(t_n, h, "t_n / h_fine")
    n_tau = grid_ratio(tau, h, "tau / h_fine")
    if n_tau <= 0:
        raise ConfigurationError("tau must be positive")
    if i_n + n_tau > path.base.n_steps:
        raise ValueError("step extends beyond the path horizon")
    st = path.stride
    first = -(-i_n // st) * st
    inner = np.arange(first, i_n + n_tau + 1, st)
    idx = np.unique(np.concatenate([[i_n], inner, [i_n + n_tau]]))
    return (idx - i_n) * h


def piecewise_affine_integral(offsets: np.ndarray, widths: np.ndarray, ksq: np.ndarray,
                              phase_factor: int) -> np.ndarray:
    """``int exp(i p ksq psi)`` for ``psi`` affine on pieces of the given widths,
    taking values ``offsets`` at the piece boundaries."""
    a = phase_factor * ksq[:, None]
    start = np.exp(1j * a * offsets[None, :-1])
    slope = phi1(1j * a * np.diff(offsets)[None, :])
    return np.sum(widths[None, :] * start * slope, axis=1)


def _kernel(path, t_n, tau, N, phase_factor):
    sigma = step_breakpoints(path, t_n, tau)
    # phases are differences from t_n, never absolute path values
    offsets = wz_eval(path, t_n + sigma) - wz_eval(path, t_n)
    k = np.arange(N + 1, dtype=float)
    half = piecewise_affine_integral(offsets, np.diff(sigma), k * k, phase_factor)
    values = np.concatenate([half[:0:-1], half])
    return KernelTable(N, values, float(t_n), float(tau), path.delta)


def sdlri_kernel(path: WongZakaiPath, t_n: float, tau: float, N: int) -> KernelTable:
    """``I(k^2) = int_0^tau exp(2 i k^2 psi(s)) ds`` for ``|k| <= N``."""
    return _kernel(path, t_n, tau, N, 2)


def expeuler_kernel(path: WongZakaiPath, t_n: float, tau: float, N: int) -> KernelTable:
    """``J(k) = int_0^tau exp(i k^2 psi(s)) ds`` for ``|k| <= N``."""
    return _kernel(path, t_n, tau, N, 1)


def kernel_oracle(path: WongZakaiPath, t_n: float, tau: float, k: int, phase_factor: int,
                  nodes: int = 32, max_phase: float = 4.0) -> complex:
    """Composite Gauss-Legendre quadrature of the same integral (independent check).

    Each breakpoint piece is split so the phase turns by at most ``max_phase``
    radians per panel; the integrand is sampled only through ``wz_eval``.
    """
    if phase_factor not in (1, 2):
        raise ConfigurationError("phase_factor must be 1 or 2")
    sigma = step_breakpoints(path, t_n, tau)
    psi_b = wz_eval(path, t_n + sigma) - wz_eval(path, t_n)
    x, w = np.polynomial.legendre.leggauss(nodes)
    total = 0j
    for a, b, pa, pb in zip(sigma[:-1], sigma[1:], psi_b[:-1], psi_b[1:]):
        turn = abs(phase_factor * k * k * (pb - pa))
        edges = np.linspace(a, b, int(turn // max_phase) + 2)
        lo, hi = edges[:-1, None], edges[1:, None]
        s = t_n + lo + 0.5 * (hi - lo) * (x[None, :] + 1.0)
        psi = wz_eval(path, np.minimum(s, path.T)) - wz_eval(path, t_n)
        vals = np.exp(1j * phase_factor * k * k * psi)
        total += np.sum(0.5 * (hi - lo) * vals * w[None, :])
    return complex(total)


def dump_kernel_csv(fh, table: KernelTable) -> None:
    writer = csv.writer(fh)
    writer.writerow(["k", "re", "im"])
    for k, v in zip(range(-table.N, table.N + 1), table.values):
        writer.writerow([k, repr(v.real), repr(v.imag)])
