"""Initial data, Monte Carlo / single-path convergence studies, and slope fits.

Every study computes one reference solution per path sample (split-step at
``tau_ref``) and reuses it for all schemes and step sizes. A second reference
at ``2 * tau_ref`` gives the reference self-consistency error; rows whose error
is within ``FLOOR_FACTOR`` of it are excluded from slope fits.
"""
from __future__ import annotations

import csv
import io
import json
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import __version__
from .exceptions import ConfigurationError, DivergenceError, InsufficientDataError, StepFailure
from .integrators import SchemeConfig, check_nested, run_trajectory
from .paths import derive_seed, make_rng, sample_brownian
from .spectral import TorusField, l2_norm, sobolev_norm

FLOOR_FACTOR = 10.0
DESK_N = 128
DESK_SAMPLES = 20
DESK_TAU_REF_EXP = 14
DESK_DELTA = 2.0 ** -12
TARGET_L2 = 0.1
REGULARITY_LABELS = ("H2", "H3", "H4", "Cinf")
CSV_HEADER = ["scheme", "tau", "delta", "N", "s", "M", "error", "seed", "valid"]


@dataclass(frozen=True)
class InitialDataSpec:
    N: int
    label: str = "H2"
    target_norm: float = TARGET_L2
    seed: int = 0
    cinf_rate: float = 2.0

    def __post_init__(self):
        if self.label not in REGULARITY_LABELS:
            raise ConfigurationError(f"unknown regularity label {self.label!r}")
        if not self.target_norm > 0:
            raise ConfigurationError("target norm must be positive")

    @property
    def theta(self) -> float:
        """Algebraic decay exponent; ``inf`` for the exponentially decaying label."""
        if self.label == "Cinf":
            return math.inf
        return int(self.label[1:]) + 0.51


def make_initial_data(spec: InitialDataSpec) -> TorusField:
    """Random coefficients ``<m>^{-theta} U_m``, ``U_m ~ U([0,1] + i[0,1])``,
    rescaled to the target L2 norm."""
    rng = make_rng(spec.seed)
    n = 2 * spec.N + 1
    # draw in the order 0, 1, -1, 2, -2, ... so lower bandwidths see the same modes
    pairs = rng.uniform(0.0, 1.0, (n, 2))
    k = np.arange(-spec.N, spec.N + 1)
    order = np.where(k > 0, 2 * k - 1, -2 * k)
    U = pairs[order, 0] + 1j * pairs[order, 1]
    m = np.abs(k).astype(float)
    if spec.label == "Cinf":
        weight = np.exp(-spec.cinf_rate * m)
    else:
        weight = np.where(m == 0, 1.0, m) ** (-spec.theta)
    f = TorusField(spec.N, weight * U)
    return f * (spec.target_norm / l2_norm(f))


@dataclass
class ErrorRow:
    scheme: str
    tau: float
    delta: float
    N: int
    s: float
    M: int
    error: float
    seed: int
    valid: bool = True


@dataclass
class ErrorTable:
    rows: list = field(default_factory=list)
    ref_error: float = 0.0
    sweep: str = "tau"
    failures: list = field(default_factory=list)

    def sort(self):
        self.rows.sort(key=lambda r: (r.scheme, r.tau, r.delta))
        return self

    def select(self, scheme=None, **fixed):
        out = []
        for r in self.rows:
            if scheme is not None and r.scheme != scheme:
                continue
            if any(getattr(r, k) != v for k, v in fixed.items()):
                continue
            out.append(r)
        return out

    def schemes(self):
        return sorted({r.scheme for r in self.rows})

    def to_csv(self, fh=None) -> str | None:
        buf = io.StringIO() if fh is None else fh
        w = csv.writer(buf)
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([r.scheme, repr(r.tau), repr(r.delta), r.N, repr(r.s), r.M,
                        repr(r.error), r.seed, int(r.valid)])
        return buf.getvalue() if fh is None else None

    @classmethod
    def from_csv(cls, fh, **kw) -> "ErrorTable":
        rows = []
        for d in csv.DictReader(fh):
            rows.append(ErrorRow(d["scheme"], float(d["tau"]), float(d["delta"]), int(d["N"]),
                                 float(d["s"]), int(d["M"]), float(d["error"]), int(d["seed"]),
                                 bool(int(d["valid"]))))
        return cls(rows, **kw)


def fit_slope(table: ErrorTable, scheme: str, variable: str = "tau", floor: bool = True,
              **fixed) -> tuple[float, float]:
    """Least-squares slope of ``log(error)`` against ``log(variable)``.

    Invalid rows, and (with ``floor``) rows within ``FLOOR_FACTOR`` of the
    reference self-error, are dropped. Returns ``(slope, rms residual)``.
    """
    rows = [r for r in table.select(scheme, **fixed)
            if r.valid and math.isfinite(r.error) and r.error > 0]
    if floor and table.ref_error > 0:
        rows = [r for r in rows if r.error >= FLOOR_FACTOR * table.ref_error]
    if len(rows) < 3:
        raise InsufficientDataError(
            f"need >= 3 valid rows to fit {scheme} vs {variable}, have {len(rows)}")
    x = np.log([getattr(r, variable) for r in rows])
    y = np.log([r.error for r in rows])
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((y - (slope * x + icpt)) ** 2)))
    return float(slope), resid


# -- per-sample work ---------------------------------------------------------

@dataclass(frozen=True)
class _Task:
    """Everything one path sample needs; picklable for worker processes."""
    path_seed: int
    runs: tuple  # ((scheme, tau, delta), ...)
    ref_delta: float
    ref_source: str
    N: int
    s: float
    data: InitialDataSpec
    T: float
    tau_ref: float
    h_fine: float | None
    lam: float
    R: float


def _run_sample(task: _Task):
    path = sample_brownian(task.path_seed, task.T, task.h_fine)
    u0 = make_initial_data(task.data)

    def ref_at(tau_ref):
        cfg = SchemeConfig("splitstep_ref", task.T, tau_ref, task.ref_delta, task.N, task.R,
                           task.lam, task.ref_source)
        return run_trajectory(cfg, path, u0)

    ref = ref_at(task.tau_ref)
    ref_self = sobolev_norm(ref - ref_at(2 * task.tau_ref), task.s) ** 2
    out = {}
    for scheme, tau, delta in task.runs:
        cfg = SchemeConfig(scheme, task.T, tau, delta, task.N, task.R, task.lam)
        try:
            u = run_trajectory(cfg, path, u0)
            out[(scheme, tau, delta)] = sobolev_norm(u - ref, task.s) ** 2
        except (StepFailure, DivergenceError) as exc:
            out[(scheme, tau, delta)] = f"{type(exc).__name__}: {exc}"
    return ref_self, out


def _map(tasks, workers):
    if workers and workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_sample, tasks))
    return [_run_sample(t) for t in tasks]


def _aggregate(tasks, results, seed_column, s, N, sweep) -> ErrorTable:
    M = len(tasks)
    runs = tasks[0].runs
    # results are in sample-index order, so the reduction is deterministic
    sums = {key: 0.0 for key in runs}
    bad = {}
    ref_sq = 0.0
    for i, (ref_self, out) in enumerate(results):
        ref_sq += ref_self
        for key in runs:
            v = out[key]
            if isinstance(v, str):
                bad.setdefault(key, []).append((i, v))
            else:
                sums[key] += v
    table = ErrorTable(ref_error=math.sqrt(ref_sq / M), sweep=sweep)
    for key in runs:
        scheme, tau, delta = key
        if key in bad:
            table.rows.append(ErrorRow(scheme, tau, delta, N, s, M, math.nan, seed_column, False))
            table.failures.append({"scheme": scheme, "tau": tau, "delta": delta,
                                   "samples": bad[key]})
        else:
            table.rows.append(ErrorRow(scheme, tau, delta, N, s, M, math.sqrt(sums[key] / M),
                                       seed_column, True))
    return table.sort()


def _check_grid(taus, delta):
    for tau in taus:
        check_nested(tau, delta)


def strong_error_study(schemes, taus, delta: float, N: int, M: int, s: float, master_seed: int,
                       data: InitialDataSpec, *, T: float = 1.0, tau_ref: float | None = None,
                       lam: float = 1.0, R: float = math.inf, h_fine: float | None = None,
                       workers: int = 1) -> ErrorTable:
    """Mean-square ``H^s`` error at ``T`` against the split-step reference on the
    same Wong-Zakai path, over ``M`` paths seeded from ``master_seed``."""
    if M < 2:
        raise ConfigurationError("strong study needs M >= 2 samples")
    return _wz_study(schemes, taus, delta, N, s, data,
                     [derive_seed(master_seed, i) for i in range(M)], master_seed,
                     T=T, tau_ref=tau_ref, lam=lam, R=R, h_fine=h_fine, workers=workers)


def pathwise_study(schemes, taus, delta: float, N: int, seed: int, s: float,
                   data: InitialDataSpec, *, T: float = 1.0, tau_ref: float | None = None,
                   lam: float = 1.0, R: float = math.inf, h_fine: float | None = None) -> ErrorTable:
    """``H^s`` error at ``T`` along the single path with the given seed."""
    return _wz_study(schemes, taus, delta, N, s, data, [seed], seed,
                     T=T, tau_ref=tau_ref, lam=lam, R=R, h_fine=h_fine, workers=1)


def deterministic_study(schemes, taus, N: int, seed: int, s: float, data: InitialDataSpec,
                        *, T: float = 1.0, tau_ref: float | None = None, lam: float = 1.0,
                        h_fine: float | None = None) -> ErrorTable:
    """Linear-dispersion regime: one Wong-Zakai interval spanning ``[0, T]``."""
    return pathwise_study(schemes, taus, T, N, seed, s, data, T=T, tau_ref=tau_ref, lam=lam,
                          h_fine=h_fine)


def _wz_study(schemes, taus, delta, N, s, data, path_seeds, seed_column, *, T, tau_ref, lam, R,
              h_fine, workers):
    taus = sorted(float(t) for t in taus)
    _check_grid(taus, delta)
    tau_ref = T * 2.0 ** -DESK_TAU_REF_EXP if tau_ref is None else tau_ref
    data = replace(data, N=N) if data.N != N else data
    runs = tuple((sc, tau, float(delta)) for sc in schemes for tau in taus)
    tasks = [_Task(ps, runs, float(delta), "wong_zakai", N, s, data, T, tau_ref, h_fine, lam, R)
             for ps in path_seeds]
    return _aggregate(tasks, _map(tasks, workers), seed_column, s, N, "tau")


def delta_study(deltas, taus, N: int, M: int, s: float, master_seed: int, data: InitialDataSpec,
                *, T: float = 1.0, tau_ref: float | None = None, lam: float = 1.0,
                h_fine: float | None = None, workers: int = 1) -> ErrorTable:
    """SDLRI error against the split-step solution driven by the raw Brownian
    path, for every ``(tau, delta)`` with ``delta | tau``."""
    tau_ref = T * 2.0 ** -DESK_TAU_REF_EXP if tau_ref is None else tau_ref
    runs = []
    for tau in sorted(taus):
        for d in sorted(deltas):
            if d <= tau:
                check_nested(tau, d)
                runs.append(("sdlri", float(tau), float(d)))
    if not runs:
        raise ConfigurationError("no (tau, delta) pair with delta dividing tau")
    data = replace(data, N=N) if data.N != N else data
    tasks = [_Task(derive_seed(master_seed, i), tuple(runs), tau_ref, "raw_brownian", N, s, data,
                   T, tau_ref, h_fine, lam, math.inf) for i in range(M)]
    table = _aggregate(tasks, _map(tasks, workers), master_seed, s, N, "delta")
    return table


def study_manifest(kind: str, table: ErrorTable, params: dict, slopes: dict | None = None) -> dict:
    return {
        "study": kind,
        "parameters": params,
        "reference_self_error": table.ref_error,
        "floor_factor": FLOOR_FACTOR,
        "slopes": slopes or {},
        "failures": table.failures,
        "software": {"wzlri": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
    }


def json_safe(o):
    """Recursively replace non-finite floats by strings so the JSON stays standard."""
    if isinstance(o, dict):
        return {str(k): json_safe(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [json_safe(v) for v in o]
    if isinstance(o, (float, np.floating)):
        f = float(o)
        return f if math.isfinite(f) else str(f)
    if isinstance(o, np.integer):
        return int(o)
    return o


def dump_manifest(fh, manifest: dict) -> None:
    json.dump(json_safe(manifest), fh, indent=2, default=_json_default, allow_nan=False)


def _json_default(o):
    if isinstance(o, float) and math.isinf(o):
        return "inf"
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if hasattr(o, "__dataclass_fields__"):
        return asdict(o)
    raise TypeError(f"not serializable: {type(o)}")
