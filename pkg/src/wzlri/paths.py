"""Brownian sample paths, truncation, and the piecewise-linear Wong-Zakai interpolant.

Every path lives on a uniform fine grid ``t_j = j * h_fine``; all coarser
spacings (Wong-Zakai width, time steps, reference steps) must be integer
multiples of ``h_fine`` so that every solver sees the same realization.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError

DEFAULT_FINE_EXPONENT = 20


def grid_ratio(a: float, b: float, what: str = "spacing") -> int:
    """Return ``a / b`` as an int, raising if it is not (numerically) integral."""
    if b <= 0:
        raise ConfigurationError(f"{what}: divisor must be positive, got {b}")
    q = a / b
    n = int(round(q))
    if abs(q - n) > 1e-9 * max(1.0, abs(q)):
        raise ConfigurationError(f"{what}: {a!r} is not an integer multiple of {b!r}")
    return n


def derive_seed(master_seed: int, index: int) -> int:
    """Deterministic per-sample seed from ``(master_seed, index)``."""
    ss = np.random.SeedSequence([int(master_seed), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    # Philox is counter-based: streams are reproducible and independent per seed
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


@dataclass(frozen=True, eq=False)
class BrownianPath:
    seed: int
    T: float
    h_fine: float
    samples: np.ndarray = field(repr=False)

    @property
    def n_steps(self) -> int:
        return self.samples.size - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) * self.h_fine

    def index(self, t: float) -> int:
        j = grid_ratio(t, self.h_fine, "time")
        if not 0 <= j <= self.n_steps:
            raise ValueError(f"time {t} outside [0, {self.T}]")
        return j

    def at(self, t: float) -> float:
        return float(self.samples[self.index(t)])

    def increments(self, step: float) -> np.ndarray:
        """Increments ``W(t+step) - W(t)`` over the grid ``0, step, ..., T``."""
        stride = grid_ratio(step, self.h_fine, "step")
        grid_ratio(self.T, step, "horizon")
        return np.diff(self.samples[::stride])


def sample_brownian(seed: int, T: float, h_fine: float | None = None) -> BrownianPath:
    """Sample ``W`` at ``j * h_fine``; ``h_fine`` defaults to ``2**-20 * T``."""
    if T <= 0:
        raise ConfigurationError("horizon T must be positive")
    if h_fine is None:
        h_fine = T * 2.0 ** -DEFAULT_FINE_EXPONENT
    if h_fine <= 0:
        raise ConfigurationError("h_fine must be positive")
    n = grid_ratio(T, h_fine, "T / h_fine")
    rng = make_rng(seed)
    w = np.empty(n + 1)
    w[0] = 0.0
    np.cumsum(rng.standard_normal(n) * math.sqrt(h_fine), out=w[1:])
    w.setflags(write=False)
    return BrownianPath(int(seed), float(T), float(h_fine), w)


def truncate_value(w, t, R: float):
    """Clamp ``w`` to ``[-R sqrt(t), R sqrt(t)]``; identity for ``R = inf``."""
    if math.isinf(R):
        return w
    bound = R * np.sqrt(t)
    out = np.clip(w, -bound, bound)
    return float(out) if np.ndim(out) == 0 else out


def min_truncation_level(delta: float, p: float = 2.0) -> float:
    return max(math.sqrt(4 * p * abs(math.log(delta))), p / math.e)


class WongZakaiPath:
    """Piecewise-linear interpolant of the truncated path with knots ``l * delta``."""

    def __init__(self, base: BrownianPath, delta: float, R: float = math.inf):
        if not (R >= 1 or math.isinf(R)):
            raise ConfigurationError(f"truncation level must be >= 1, got {R}")
        self.base = base
        self.delta = float(delta)
        self.R = float(R)
        self.stride = grid_ratio(delta, base.h_fine, "delta / h_fine")
        self.n_knots = grid_ratio(base.T, delta, "T / delta")
        if not math.isinf(R) and delta < 1 and R < min_truncation_level(delta):
            warnings.warn(
                f"R={R} is below max(sqrt(8|ln delta|), 2/e)="
                f"{min_truncation_level(delta):.3f}; the mean-square path bound may not hold",
                stacklevel=2)
        knot_t = np.arange(self.n_knots + 1) * self.delta
        knots = np.asarray(truncate_value(base.samples[:: self.stride], knot_t, self.R), dtype=float)
        knots.setflags(write=False)
        self.knots = knots

    @property
    def T(self) -> float:
        return self.base.T

    def knot_index(self, t: float) -> int:
        return grid_ratio(t, self.delta, "time / delta")

    def __call__(self, t):
        return wz_eval(self, t)


def wz_eval(path: WongZakaiPath, t):
    """Evaluate the Wong-Zakai interpolant at ``t`` (scalar or array)."""
    ta = np.asarray(t, dtype=float)
    if np.any(ta < 0) or np.any(ta > path.T * (1 + 1e-15)):
        raise ValueError(f"time outside [0, {path.T}]")
    q = ta / path.delta
    ell = np.minimum(np.floor(q).astype(np.int64), path.n_knots - 1)
    ell = np.maximum(ell, 0)
    alpha = q - ell
    lo = path.knots[ell]
    hi = path.knots[ell + 1]
    out = lo + alpha * (hi - lo)
    return float(out) if out.ndim == 0 else out


def wz_increment(path: WongZakaiPath, s: float, t: float) -> float:
    if s > t:
        raise ValueError(f"increment needs s <= t, got s={s}, t={t}")
    return wz_eval(path, t) - wz_eval(path, s)


def knot_offsets(path: WongZakaiPath, t_n: float, tau: float) -> np.ndarray:
    """``B(t_n + l delta) - B(t_n)`` for ``l = 0..tau/delta`` (phases anchored at ``t_n``)."""
    i0 = path.knot_index(t_n)
    L = grid_ratio(tau, path.delta, "tau / delta")
    if i0 + L > path.n_knots:
        raise ValueError("step extends beyond the path horizon")
    seg = path.knots[i0: i0 + L + 1]
    return seg - seg[0]


def mc_path_errors(deltas, R: float, t: float, n_samples: int, master_seed: int,
                   T: float = 1.0, h_fine: float = 2.0 ** -12) -> np.ndarray:
    """Root-mean-square ``|B^{delta,R}(t) - B(t)|`` for each delta, reusing every path."""
    if n_samples < 100:
        raise ConfigurationError("n_samples must be at least 100")
    deltas = [float(d) for d in deltas]
    sq = np.zeros(len(deltas))
    for i in range(n_samples):
        base = sample_brownian(derive_seed(master_seed, i), T, h_fine)
        exact = base.at(t)
        for j, d in enumerate(deltas):
            sq[j] += (wz_eval(WongZakaiPath(base, d, R), t) - exact) ** 2
    return np.sqrt(sq / n_samples)


def mc_path_error(delta: float, R: float, t: float, n_samples: int, master_seed: int,
                  T: float = 1.0, h_fine: float = 2.0 ** -12) -> float:
    """Root-mean-square ``|B^{delta,R}(t) - B(t)|`` over independent paths."""
    return float(mc_path_errors([delta], R, t, n_samples, master_seed, T, h_fine)[0])


def mc_increment_rms(delta: float, pairs, n_samples: int, master_seed: int,
                     R: float = math.inf, T: float = 1.0, h_fine: float = 2.0 ** -12) -> np.ndarray:
    """Root-mean-square ``|B^{delta,R}(t) - B^{delta,R}(s)|`` for each ``(s, t)`` pair."""
    pairs = np.asarray(pairs, dtype=float)
    acc = np.zeros(len(pairs))
    for i in range(n_samples):
        wz = WongZakaiPath(sample_brownian(derive_seed(master_seed, i), T, h_fine), delta, R)
        acc += (wz_eval(wz, pairs[:, 1]) - wz_eval(wz, pairs[:, 0])) ** 2
    return np.sqrt(acc / n_samples)


def path_manifest(base: BrownianPath, delta: float | None = None, R: float = math.inf) -> dict:
    return {"seed": base.seed, "T": base.T, "h_fine": base.h_fine,
            "delta": delta, "R": "inf" if math.isinf(R) else R}


def dump_path_csv(fh, base: BrownianPath, wz: WongZakaiPath | None = None) -> None:
    """Write ``t,W`` rows at fine-grid resolution (the interpolant if ``wz`` is given)."""
    t = base.times
    w = base.samples if wz is None else wz_eval(wz, t)
    writer = csv.writer(fh)
    writer.writerow(["t", "W"])
    for ti, wi in zip(t, w):
        writer.writerow([repr(float(ti)), repr(float(wi))])


def dump_path_manifest(fh, base: BrownianPath, delta=None, R=math.inf) -> None:
    json.dump(path_manifest(base, delta, R), fh, indent=2)
