"""Command-line entry point: ``wzlri {paths,simulate,study,check,replay}``.

Exit codes: 0 success, 1 runtime or numerical failure, 2 usage or configuration error.
A ``--config`` file holds ``key = value`` lines using the flag names; flags given
on the command line win over config values.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import math
import re
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .exceptions import ConfigurationError, DivergenceError, InsufficientDataError, StepFailure
from .harness import (InitialDataSpec, delta_study, deterministic_study, fit_slope,
                      json_safe, make_initial_data, pathwise_study, strong_error_study, study_manifest)
from .integrators import SCHEMES, SchemeConfig, run_trajectory
from .paths import (DEFAULT_FINE_EXPONENT, WongZakaiPath, dump_path_csv, path_manifest,
                    sample_brownian)
from .spectral import TorusField, free_propagate, sobolev_norm

log = logging.getLogger("wzlri")

STUDY_DEFAULTS = {
    "deterministic": dict(schemes="sdlri,lie,expeuler,relaxed_cn", tau="2^-4:2^-10", data="Cinf",
                          samples=1),
    "strong": dict(schemes="sdlri,expeuler,relaxed_cn", tau="2^-4:2^-9", delta="2^-12", data="H2",
                   samples=20),
    "pathwise": dict(schemes="sdlri,lie", tau="2^-4:2^-9", delta="2^-12", data="H2", samples=1),
    "delta-sweep": dict(schemes="sdlri", tau="0.1,0.01,0.001", delta="2^-3:2^-12", data="H2",
                        samples=20),
}

_DYADIC = re.compile(r"^\s*2\s*(?:\^|\*\*)\s*(-?\d+)\s*$")


class UsageError(Exception):
    pass


def parse_time(text: str, h_fine: float | None = None) -> float:
    """``2^-12`` / ``2**-12`` are exact; decimals snap to the fine grid (with a warning)."""
    m = _DYADIC.match(str(text))
    if m:
        return 2.0 ** int(m.group(1))
    try:
        val = float(text)
    except ValueError as exc:
        raise UsageError(f"cannot parse time value {text!r}") from exc
    if h_fine is not None:
        snapped = round(val / h_fine) * h_fine
        if snapped != val:
            log.warning("time %s snapped to fine-grid value %r", text, snapped)
        val = snapped
    return val


def snap_dyadic(value: float) -> float:
    """Nearest power of two in the log sense."""
    snapped = 2.0 ** round(math.log2(value))
    if snapped != value:
        log.warning("time %r snapped to dyadic value %r", value, snapped)
    return snapped


def parse_time_list(text: str, h_fine=None) -> list[float]:
    """Comma list, or a dyadic range ``2^-a:2^-b`` covering every power in between."""
    text = str(text).strip()
    if ":" in text:
        lo, hi = (parse_time(p) for p in text.split(":"))
        a, b = sorted((round(math.log2(lo)), round(math.log2(hi))))
        return [2.0 ** e for e in range(b, a - 1, -1)]
    return [parse_time(p, h_fine) for p in text.split(",") if p.strip()]


def parse_R(text) -> float:
    if str(text).strip().lower() in ("inf", "+inf", "infinity"):
        return math.inf
    return float(text)


def read_config(path) -> dict:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, val = (p.strip() for p in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = val
    return out


@dataclass
class RunManifest:
    command: str
    parameters: dict
    seed: int
    version: str = __version__
    timestamp: str = field(default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat())
    outputs: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(json_safe(asdict(self)), indent=2, sort_keys=True, default=str,
                          allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls(**json.loads(text))


def _write_manifest(out: Path, manifest: RunManifest) -> Path:
    mpath = out.with_suffix(".json")
    manifest.outputs = sorted({str(out), *manifest.outputs})
    mpath.write_text(manifest.to_json())
    return mpath


def _resolved(args) -> dict:
    skip = {"func", "config", "out"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _h_fine(args) -> float:
    return parse_time(args.T) * 2.0 ** -args.fine_exp


def _data_spec(args, N) -> InitialDataSpec:
    return InitialDataSpec(N, args.data, float(args.target_norm), int(args.data_seed),
                           float(args.cinf_rate))


# -- commands ----------------------------------------------------------------

def cmd_paths(args) -> int:
    T = parse_time(args.T)
    h = _h_fine(args)
    base = sample_brownian(args.seed, T, h)
    wz = None
    delta = None
    if args.delta is not None:
        delta = parse_time(args.delta, h)
        wz = WongZakaiPath(base, delta, parse_R(args.R))
    out = Path(args.out)
    with out.open("w", newline="") as fh:
        dump_path_csv(fh, base, wz)
    man = RunManifest("paths", _resolved(args), args.seed,
                      extra={"path": path_manifest(base, delta, parse_R(args.R))})
    _write_manifest(out, man)
    return 0


def _simulation_inputs(params: dict):
    T = parse_time(params["T"])
    h = T * 2.0 ** -int(params["fine_exp"])
    cfg = SchemeConfig(params["scheme"], T, parse_time(params["tau"], h),
                       parse_time(params["delta"], h), int(params["N"]), parse_R(params["R"]),
                       float(params["lam"]), params["path_source"])
    data = InitialDataSpec(int(params["N"]), params["data"], float(params["target_norm"]),
                           int(params["data_seed"]), float(params["cinf_rate"]))
    path = sample_brownian(int(params["seed"]), T, h)
    return cfg, path, make_initial_data(data)


def write_field_csv(fh, f: TorusField) -> None:
    w = csv.writer(fh)
    w.writerow(["k", "re", "im"])
    for k, a in zip(range(-f.N, f.N + 1), f.coeffs):
        w.writerow([k, repr(float(a.real)), repr(float(a.imag))])


def read_field_csv(fh) -> TorusField:
    rows = list(csv.DictReader(fh))
    N = max(abs(int(r["k"])) for r in rows)
    c = np.zeros(2 * N + 1, dtype=complex)
    for r in rows:
        c[int(r["k"]) + N] = float(r["re"]) + 1j * float(r["im"])
    return TorusField(N, c)


def cmd_simulate(args) -> int:
    if args.delta is None:
        args.delta = args.tau
    params = _resolved(args)
    cfg, path, u0 = _simulation_inputs(params)
    cfg.validate(path.h_fine)
    final = run_trajectory(cfg, path, u0)
    out = Path(args.out)
    with out.open("w", newline="") as fh:
        write_field_csv(fh, final)
    _write_manifest(out, RunManifest("simulate", params, args.seed,
                                     extra={"config": cfg.to_dict()}))
    print(f"H^1 norm at T: {sobolev_norm(final, 1.0):.16e}")
    return 0


def cmd_check(args) -> int:
    """Compare a simulated field against the exact free flow of its initial data."""
    man = RunManifest.from_json(Path(args.manifest).read_text())
    cfg, path, u0 = _simulation_inputs(man.parameters)
    if cfg.path_source == "raw_brownian":
        total = float(path.samples[-1] if cfg.T == path.T else path.at(cfg.T))
    else:
        total = float(WongZakaiPath(path, cfg.delta, cfg.R)(cfg.T))
    expected = free_propagate(u0, total)
    with open(args.field, newline="") as fh:
        got = read_field_csv(fh)
    dev = float(np.max(np.abs(got.coeffs - expected.coeffs)))
    print(f"max coefficient deviation from free flow: {dev:.3e}")
    return 0 if dev <= args.tol else 1


def _study_params(args) -> dict:
    d = STUDY_DEFAULTS[args.kind]
    for key, val in d.items():
        if getattr(args, key, None) is None:
            setattr(args, key, val)
    return _resolved(args)


def cmd_study(args) -> int:
    params = _study_params(args)
    T = parse_time(args.T)
    h = _h_fine(args)
    N = int(args.N)
    s = float(args.norm_s)
    data = _data_spec(args, N)
    schemes = [x.strip() for x in args.schemes.split(",") if x.strip()]
    bad = [x for x in schemes if x not in SCHEMES]
    if bad:
        raise UsageError(f"unknown scheme(s) {bad}")
    taus = parse_time_list(args.tau, h)
    tau_ref = parse_time(args.tau_ref, h) if args.tau_ref else None
    kw = dict(T=T, tau_ref=tau_ref, lam=float(args.lam), h_fine=h)
    if args.kind == "deterministic":
        table = deterministic_study(schemes, taus, N, args.seed, s, data, **kw)
    elif args.kind == "strong":
        table = strong_error_study(schemes, taus, parse_time(args.delta, h), N, int(args.samples),
                                   s, args.seed, data, R=parse_R(args.R), workers=args.workers,
                                   **kw)
    elif args.kind == "pathwise":
        deltas = parse_time_list(args.delta, h)
        tables = [pathwise_study(schemes, taus, d, N, args.seed, s, data, R=parse_R(args.R), **kw)
                  for d in deltas]
        table = tables[0]
        for t in tables[1:]:
            table.rows.extend(t.rows)
            table.failures.extend(t.failures)
            table.ref_error = max(table.ref_error, t.ref_error)
        table.sort()
    else:
        taus = [snap_dyadic(t) for t in taus]
        table = delta_study(parse_time_list(args.delta, h), taus, N, int(args.samples), s,
                            args.seed, data, workers=args.workers, **kw)

    slopes = {}
    if args.kind == "delta-sweep":
        for tau in sorted({r.tau for r in table.rows}, reverse=True):
            rows = table.select("sdlri", tau=tau)
            errs = " ".join(f"{r.error:.3e}" for r in sorted(rows, key=lambda r: -r.delta))
            print(f"tau={tau:g}: errors (delta decreasing) {errs}")
    else:
        for delta in sorted({r.delta for r in table.rows}, reverse=True):
            for sc in schemes:
                try:
                    slope, resid = fit_slope(table, sc, "tau", delta=delta)
                except InsufficientDataError as exc:
                    print(f"{sc} delta={delta:g}: {exc}")
                    continue
                slopes[f"{sc}@delta={delta!r}"] = {"slope": slope, "residual": resid}
                print(f"{sc} delta={delta:g}: slope {slope:.3f} (rms residual {resid:.3f})")

    out = Path(args.out)
    with out.open("w", newline="") as fh:
        table.to_csv(fh)
    manifest = RunManifest(f"study {args.kind}", params, args.seed,
                           extra=study_manifest(args.kind, table, params, slopes))
    _write_manifest(out, manifest)
    return 1 if table.failures else 0


def cmd_replay(args) -> int:
    man = RunManifest.from_json(Path(args.manifest).read_text())
    ns = argparse.Namespace(**man.parameters)
    ns.out = args.out
    ns.config = None
    cmd = man.command.split()
    handler = {"paths": cmd_paths, "simulate": cmd_simulate, "study": cmd_study}[cmd[0]]
    return handler(ns)


# -- parser ------------------------------------------------------------------

def _common(p, seed_default=1):
    p.add_argument("--config", help="key = value file; command-line flags take precedence")
    p.add_argument("--T", default="1", help="final time")
    p.add_argument("--seed", type=int, default=seed_default, help="path seed / master seed")
    p.add_argument("--fine-exp", dest="fine_exp", type=int, default=DEFAULT_FINE_EXPONENT,
                   help="fine grid spacing is T * 2^-fine_exp")
    p.add_argument("--R", default="inf", help="truncation level (inf disables truncation)")
    p.add_argument("--out", required=True, help="output file (a .json manifest is written next to it)")


def _data_opts(p, data_default=None):
    p.add_argument("--N", type=int, default=128, help="bandwidth")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--data", choices=["H2", "H3", "H4", "Cinf"], default=data_default)
    p.add_argument("--data-seed", dest="data_seed", type=int, default=0)
    p.add_argument("--target-norm", dest="target_norm", type=float, default=0.1)
    p.add_argument("--cinf-rate", dest="cinf_rate", type=float, default=2.0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wzlri", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("paths", help="sample and dump a (Wong-Zakai) Brownian path")
    _common(p)
    p.add_argument("--delta", default=None, help="dump the interpolant with this knot spacing")
    p.set_defaults(func=cmd_paths)

    p = sub.add_parser("simulate", help="run one trajectory and dump the final field")
    _common(p)
    _data_opts(p, "H2")
    p.add_argument("--scheme", choices=SCHEMES, default="sdlri")
    p.add_argument("--tau", default="2^-6")
    p.add_argument("--delta", default=None, help="Wong-Zakai width (defaults to tau)")
    p.add_argument("--path-source", dest="path_source", choices=["wong_zakai", "raw_brownian"],
                   default="wong_zakai")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("study", help="run a convergence study and write an error table")
    p.add_argument("kind", choices=sorted(STUDY_DEFAULTS))
    _common(p)
    _data_opts(p)
    p.add_argument("--schemes", default=None, help="comma-separated scheme list")
    p.add_argument("--scheme", dest="schemes", help=argparse.SUPPRESS)
    p.add_argument("--tau", default=None, help="comma list or dyadic range 2^-a:2^-b")
    p.add_argument("--delta", default=None, help="Wong-Zakai width (list/range for pathwise, delta-sweep)")
    p.add_argument("--tau-ref", dest="tau_ref", default="2^-14")
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--norm-s", dest="norm_s", type=float, default=1.0)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("check", help="compare a simulated field with the exact free flow")
    p.add_argument("--field", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--tol", type=float, default=1e-12)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_replay)
    return ap


def _apply_config(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    cfg = read_config(known.config)
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    cmd = next((a for a in argv if a in sub.choices), None)
    if cmd is None:
        return
    sp = sub.choices[cmd]
    dests = {a.dest for a in sp._actions}
    unknown = sorted(set(cfg) - dests)
    if unknown:
        raise UsageError(f"unknown config keys: {unknown}")
    typed = {}
    for a in sp._actions:
        if a.dest in cfg:
            typed[a.dest] = a.type(cfg[a.dest]) if a.type else cfg[a.dest]
    # config values become defaults, so explicit flags still override them
    for a in sp._actions:
        if a.dest in typed:
            a.required = False
    sp.set_defaults(**typed)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"wzlri: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigurationError) as exc:
        print(f"wzlri: configuration error: {exc}", file=sys.stderr)
        return 2
    except (StepFailure, DivergenceError) as exc:
        print(f"wzlri: numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
