"""Fourier representation of periodic fields on the torus R/2piZ.

A field of bandwidth ``N`` is stored as its ``2N+1`` exponential Fourier
coefficients ``a_k`` (``k = -N..N``), so that ``u(x) = sum_k a_k exp(ikx)``.
Norms use the plain coefficient convention::

    ||u||_{L^2}^2 = sum_k |a_k|^2
    ||u||_{H^s}^2 = sum_k (1 + |k|^{2s}) |a_k|^2

Products are evaluated pseudospectrally on a zero-padded grid large enough
that the Galerkin-truncated cubic term is free of aliasing.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .exceptions import ConfigurationError

PHI1_THRESHOLD = 1e-4


@dataclass(frozen=True, eq=False)
class TorusField:
    """Fourier coefficients of a periodic complex field, index ``k + N``."""

    N: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 1 or c.size != 2 * self.N + 1:
            raise ConfigurationError(
                f"expected {2 * self.N + 1} coefficients for N={self.N}, got shape {c.shape}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, N: int) -> "TorusField":
        return cls(N, np.zeros(2 * N + 1, dtype=complex))

    @classmethod
    def from_modes(cls, N: int, modes: dict) -> "TorusField":
        """Build a field from a ``{k: a_k}`` mapping."""
        c = np.zeros(2 * N + 1, dtype=complex)
        for k, v in modes.items():
            if abs(k) > N:
                raise ConfigurationError(f"mode {k} outside bandwidth {N}")
            c[k + N] = v
        return cls(N, c)

    @property
    def k(self) -> np.ndarray:
        return wavenumbers(self.N)

    def mode(self, k: int) -> complex:
        return complex(self.coeffs[k + self.N]) if abs(k) <= self.N else 0j

    def copy(self) -> "TorusField":
        return TorusField(self.N, self.coeffs.copy())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.coeffs)))

    def __add__(self, other):
        _check_same(self, other)
        return TorusField(self.N, self.coeffs + other.coeffs)

    def __sub__(self, other):
        _check_same(self, other)
        return TorusField(self.N, self.coeffs - other.coeffs)

    def __mul__(self, c):
        return TorusField(self.N, self.coeffs * c)

    __rmul__ = __mul__


def _check_same(f, g):
    if f.N != g.N:
        raise ConfigurationError(f"bandwidth mismatch: {f.N} vs {g.N}")


def wavenumbers(N: int) -> np.ndarray:
    return np.arange(-N, N + 1)


def dealias_size(N: int) -> int:
    """Smallest power of two >= 4N+2; cubic products on this grid are alias-free."""
    M = 1
    while M < 4 * N + 2:
        M *= 2
    return M


# -- array level transforms (used in the hot loops of the integrators) --

def coeffs_to_grid(coeffs: np.ndarray, M: int) -> np.ndarray:
    N = (coeffs.size - 1) // 2
    if M < 2 * N + 1:
        raise ConfigurationError(f"grid size {M} too small for bandwidth {N}")
    buf = np.zeros(M, dtype=complex)
    buf[: N + 1] = coeffs[N:]
    if N:
        buf[-N:] = coeffs[:N]
    return np.fft.ifft(buf) * M


def grid_to_coeffs(values: np.ndarray, N: int) -> np.ndarray:
    M = values.size
    if M < 2 * N + 1:
        raise ConfigurationError(f"grid size {M} too small for bandwidth {N}")
    spec = np.fft.fft(values) / M
    out = np.empty(2 * N + 1, dtype=complex)
    out[N:] = spec[: N + 1]
    if N:
        out[:N] = spec[-N:]
    return out


def to_physical(f: TorusField, M: int) -> np.ndarray:
    """Values ``u(2 pi j / M)``, ``j = 0..M-1``, by zero-padded inverse DFT."""
    return coeffs_to_grid(f.coeffs, M)


def to_spectral(values, N: int) -> TorusField:
    """Forward DFT of grid values keeping ``|k| <= N``."""
    return TorusField(N, grid_to_coeffs(np.asarray(values, dtype=complex), N))


def galerkin_project(f: TorusField, N_cut: int) -> TorusField:
    """Zero all modes with ``|k| > N_cut`` (bandwidth of ``f`` is kept)."""
    if N_cut < 0:
        raise ConfigurationError("projection bandwidth must be nonnegative")
    c = f.coeffs.copy()
    c[np.abs(f.k) > N_cut] = 0.0
    return TorusField(f.N, c)


def resize(f: TorusField, N_new: int) -> TorusField:
    """Re-embed ``f`` at another bandwidth, zero-padding or truncating."""
    c = np.zeros(2 * N_new + 1, dtype=complex)
    m = min(f.N, N_new)
    c[N_new - m: N_new + m + 1] = f.coeffs[f.N - m: f.N + m + 1]
    return TorusField(N_new, c)


def sobolev_weights(N: int, s: float) -> np.ndarray:
    k = np.abs(wavenumbers(N)).astype(float)
    return 1.0 + k ** (2 * s)


def sobolev_norm(f: TorusField, s: float) -> float:
    if s < 0:
        raise ConfigurationError("Sobolev index must be nonnegative")
    return float(np.sqrt(np.sum(sobolev_weights(f.N, s) * np.abs(f.coeffs) ** 2)))


def l2_norm(f: TorusField) -> float:
    return float(np.sqrt(np.sum(np.abs(f.coeffs) ** 2)))


def free_symbol(N: int, b: float) -> np.ndarray:
    """Fourier symbol of exp(i b Laplacian): ``exp(-i k^2 b)``."""
    k = wavenumbers(N).astype(float)
    return np.exp(-1j * k * k * b)


def free_propagate(f: TorusField, b: float) -> TorusField:
    return TorusField(f.N, f.coeffs * free_symbol(f.N, b))


def cubic_coeffs(coeffs: np.ndarray, M: int | None = None) -> np.ndarray:
    N = (coeffs.size - 1) // 2
    M = dealias_size(N) if M is None else M
    u = coeffs_to_grid(coeffs, M)
    return grid_to_coeffs(u * u * np.conj(u), N)


def cubic(f: TorusField) -> TorusField:
    """Galerkin-truncated ``|u|^2 u`` computed without aliasing."""
    return TorusField(f.N, cubic_coeffs(f.coeffs))


Multiplier = Union[Callable[[np.ndarray], np.ndarray], np.ndarray]


def apply_multiplier(f: TorusField, m: Multiplier) -> TorusField:
    """``a_k -> m(k) a_k``; ``m`` is a callable of the wavenumber array or
    an array of length ``2N+1`` indexed like the coefficients."""
    vals = m(f.k) if callable(m) else np.asarray(m)
    vals = np.broadcast_to(vals, f.coeffs.shape)
    return TorusField(f.N, f.coeffs * vals)


def conjugate(f: TorusField) -> TorusField:
    """Coefficients of the pointwise complex conjugate: ``b_k = conj(a_{-k})``."""
    return TorusField(f.N, np.conj(f.coeffs[::-1]))


def _expm1_complex(z):
    # exp(x+iy) - 1 without cancellation for small |z|
    x, y = z.real, z.imag
    return (np.expm1(x) * np.cos(y) - 2.0 * np.sin(0.5 * y) ** 2) + 1j * np.exp(x) * np.sin(y)


def _phi1_series(z):
    # degree-6 Taylor polynomial of (e^z - 1)/z, Horner form
    out = np.full_like(z, 1.0 / 5040.0)
    for d in (720.0, 120.0, 24.0, 6.0, 2.0, 1.0):
        out = out * z + 1.0 / d
    return out


def phi1(z):
    """``(e^z - 1)/z`` with ``phi1(0) = 1``; accepts scalars or arrays."""
    arr = np.asarray(z, dtype=complex)
    small = np.abs(arr) < PHI1_THRESHOLD
    out = np.empty_like(arr)
    out[small] = _phi1_series(arr[small])
    big = ~small
    out[big] = _expm1_complex(arr[big]) / arr[big]
    if np.ndim(z) == 0:
        return complex(out)
    return out
