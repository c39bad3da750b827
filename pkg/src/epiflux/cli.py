"""Command-line entry point.

    epiflux run <command> --config model.toml --out DIR [--seed S] [--jobs J]
                          [--dt DT] [--horizon T] [--n N] [--reps R] [--quiet]
    epiflux validate model.toml

Run settings come from flags, then from an optional ``[run]`` table of the config,
then from built-in defaults.  Every run writes its CSV artifacts plus
``manifest.json`` (config digest, seed, version, timestamps, sha256 of every
artifact).  On error the partial artifacts are removed, ``error.json`` is written
and the exit status is 2; a verification that runs but fails exits with 1.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import tomli_w

from . import __version__
from .errors import ConfigError, EpifluxError
from .functionals import TestFunctional
from .gaussian import NoiseKernels, default_functionals, sample_gaussian, write_batch_csv, write_covariance_csv
from .lln import solve_lln, write_lln_csv
from .model import build_model, config_digest, load_config
from .seeding import resolve_jobs
from .simulation import simulate, write_run
from .volterra import fluctuation_moments, solve_fluctuation, write_fluct_csv, write_moments_csv

COMMANDS = ("simulate", "solve-lln", "sample-gaussian", "solve-fclt",
            "verify-lln", "verify-clt", "verify-qv", "verify-coupling")

DEFAULTS = {
    "horizon": 10.0,
    "dt": 0.01,            # LLN grid; also the snapshot spacing
    "fclt_dt": 0.05,       # fluctuation grid
    "seed": 0,
    "n": None,             # command specific, see _default_n
    "reps": 20,
    "times": None,
    "hist_edges": None,
    "N_list": [250, 500, 1000, 2000, 4000],
}


@dataclass
class RunManifest:
    command: str
    config_path: str
    config_digest: str
    model_digest: str
    seed: int
    version: str
    settings: dict
    started: str
    finished: str = ""
    status: str = "running"
    outputs: list = field(default_factory=list)

    def write(self, out_dir: Path) -> Path:
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        return path


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _settings(command, args, raw: dict) -> dict:
    s = dict(DEFAULTS)
    s.update({k: v for k, v in raw.get("run", {}).items()})
    for key in ("seed", "dt", "horizon", "n", "reps"):
        v = getattr(args, key, None)
        if v is not None:
            # --dt refines the fluctuation grid for the Gaussian commands
            s["fclt_dt" if key == "dt" and command in ("sample-gaussian", "solve-fclt") else key] = v
    s["jobs"] = resolve_jobs(args.jobs)
    unknown = set(s) - set(DEFAULTS) - {"jobs"}
    if unknown:
        raise ConfigError(f"unknown [run] keys: {sorted(unknown)}")
    return s


def _default_n(command):
    return {"simulate": 1000, "sample-gaussian": 100, "solve-fclt": 100, "verify-clt": 2000,
            "verify-qv": 2000, "verify-coupling": "500,2000"}.get(command)


def _int_list(v):
    if isinstance(v, str):
        return [int(x) for x in v.replace(" ", "").split(",") if x]
    return [int(x) for x in np.atleast_1d(v)]


def _grid(T, dt):
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * max(1.0, T):
        raise ConfigError(f"horizon {T} is not a multiple of the step {dt}")
    return np.arange(n + 1) * dt


def _sample_times(s, T, dt):
    """Requested times snapped to the fluctuation grid (default: eleven even times)."""
    raw = s["times"] if s["times"] is not None else np.linspace(0.0, T, 11)
    return np.unique(np.round(np.asarray(raw, dtype=float) / dt) * dt)


# ---------------------------------------------------------------- commands


def _cmd_simulate(model, s, out):
    T, dt = s["horizon"], s["dt"]
    N = int(s["n"] or _default_n("simulate"))
    sim = simulate(model, N, T, snapshots=_grid(T, dt), seed=s["seed"], hist_edges=s["hist_edges"])
    return write_run(sim, out), 0


def _cmd_solve_lln(model, s, out):
    sol = solve_lln(model, s["horizon"], s["dt"])
    path = out / "lln.csv"
    write_lln_csv(sol, path)
    return [path], 0


def _fclt_setup(model, s):
    T, dt = s["horizon"], s["fclt_dt"]
    lln = solve_lln(model, T, dt)
    return lln, NoiseKernels(model, lln, default_functionals(model))


def _cmd_sample_gaussian(model, s, out):
    lln, k = _fclt_setup(model, s)
    times = _sample_times(s, s["horizon"], s["fclt_dt"])
    n = int(s["n"] or _default_n("sample-gaussian"))
    batch = sample_gaussian(model, lln, None, grid=times, n=n, seed=s["seed"], kernels=k)
    p1, p2 = out / "gaussian_batch.csv", out / "covariance.csv"
    write_batch_csv(batch, p1)
    write_covariance_csv(k, p2, batch.grid_index)
    return [p1, p2], 0


def _cmd_solve_fclt(model, s, out):
    lln, k = _fclt_setup(model, s)
    n = int(s["n"] or _default_n("solve-fclt"))
    batch = sample_gaussian(model, lln, None, n=n, seed=s["seed"], kernels=k)
    sol = solve_fluctuation(model, lln, batch)
    mom = fluctuation_moments(model, lln, grid=_sample_times(s, s["horizon"], s["fclt_dt"]),
                              n=max(n, 2), seed=s["seed"], kernels=k)
    p1, p2 = out / "fluct.csv", out / "moments.csv"
    write_fluct_csv(sol, p1)
    write_moments_csv(mom, p2)
    return [p1, p2], 0


def _report(rep, out):
    from .verification import write_report
    return write_report(rep, out), (0 if rep.passed else 1)


def _cmd_verify_lln(model, s, out):
    from .verification import lln_convergence
    Ns = _int_list(s["n"]) if s["n"] is not None else _int_list(s["N_list"])
    rep = lln_convergence(model, Ns, int(s["reps"]), s["horizon"], s["seed"], dt=s["dt"], jobs=s["jobs"])
    return _report(rep, out)


def _cmd_verify_clt(model, s, out):
    from .verification import clt_check
    T = s["horizon"]
    times = s["times"] if s["times"] is not None else [T / 4, T / 2, T]
    times = np.round(np.asarray(times, dtype=float) / s["fclt_dt"]) * s["fclt_dt"]
    reps = int(s["reps"]) if s["reps"] >= 100 else 100
    rep = clt_check(model, int(s["n"] or _default_n("verify-clt")), reps, times, s["seed"], T=T,
                    lln_dt=s["dt"], fluct_dt=s["fclt_dt"], jobs=s["jobs"])
    return _report(rep, out)


def _cmd_verify_qv(model, s, out):
    from .verification import qv_study
    rep = qv_study(model, int(s["n"] or _default_n("verify-qv")), s["horizon"], int(s["reps"]), s["seed"],
                   TestFunctional.from_lambda(model), jobs=s["jobs"])
    return _report(rep, out)


def _cmd_verify_coupling(model, s, out):
    from .verification import coupling_check
    Ns = _int_list(s["n"] if s["n"] is not None else _default_n("verify-coupling"))
    rep = coupling_check(model, Ns, int(s["reps"]), s["horizon"], s["seed"], dt=s["dt"], jobs=s["jobs"])
    return _report(rep, out)


HANDLERS = {
    "simulate": _cmd_simulate, "solve-lln": _cmd_solve_lln, "sample-gaussian": _cmd_sample_gaussian,
    "solve-fclt": _cmd_solve_fclt, "verify-lln": _cmd_verify_lln, "verify-clt": _cmd_verify_clt,
    "verify-qv": _cmd_verify_qv, "verify-coupling": _cmd_verify_coupling,
}


def run(command, config_path, out_dir, seed=None, **flags):
    """Programmatic form of ``epiflux run``; returns ``(exit_status, manifest_or_None)``."""
    ns = argparse.Namespace(seed=seed, jobs=flags.get("jobs"), dt=flags.get("dt"),
                            horizon=flags.get("horizon"), n=flags.get("n"), reps=flags.get("reps"))
    return _run(command, config_path, Path(out_dir), ns, quiet=flags.get("quiet", True))


def _run(command, config_path, out: Path, args, quiet=False):
    if command not in HANDLERS:
        raise SystemExit(f"unknown command {command!r}; choose from {', '.join(COMMANDS)}")
    out.mkdir(parents=True, exist_ok=True)
    before = {p for p in out.iterdir()}
    started = _now()
    try:
        raw = load_config(config_path)
        model = build_model(raw)
        s = _settings(command, args, raw)
        raw_clean = {k: v for k, v in raw.items() if not k.startswith("_")}
        man = RunManifest(command, str(config_path), config_digest(raw_clean), model.digest, int(s["seed"]),
                          __version__, {k: v for k, v in s.items() if k != "jobs"}, started)
        paths, status = HANDLERS[command](model, s, out)
    except (EpifluxError, ValueError, OSError) as exc:
        for p in out.iterdir():
            if p not in before and p.is_file():
                p.unlink()
        err = {"command": command, "config": str(config_path), "error": type(exc).__name__,
               "message": str(exc), "time": _now()}
        for attr in ("row", "step", "residual"):
            if getattr(exc, attr, None) is not None:
                err[attr] = getattr(exc, attr)
        (out / "error.json").write_text(json.dumps(err, indent=2, sort_keys=True, default=str) + "\n")
        if not quiet:
            print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2, None
    man.outputs = [{"file": p.name, "sha256": sha256(p), "bytes": p.stat().st_size} for p in paths]
    man.finished = _now()
    man.status = "ok" if status == 0 else "check_failed"
    man.write(out)
    if not quiet:
        summary = out / "summary.txt"
        print(summary.read_text().rstrip() if summary.exists() else
              f"{command}: wrote {', '.join(p.name for p in paths)} to {out}")
    return status, man


def validate(config_path, quiet=False):
    """Build the model without running anything; print the normalized config."""
    model = build_model(config_path)
    if not quiet:
        print(f"OK  digest={model.digest}  kappa_bar={model.kappa_bar:.6g}  lambda_star={model.lambda_star:g}")
        print(tomli_w.dumps(model.config).rstrip())
    return model


def _parser():
    p = argparse.ArgumentParser(prog="epiflux", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"epiflux {__version__}")
    sub = p.add_subparsers(dest="action", required=True)
    r = sub.add_parser("run", help="run a pipeline and write artifacts")
    r.add_argument("command", choices=COMMANDS)
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--jobs", type=int, help="worker processes (default: $EPIFLUX_JOBS or 1)")
    r.add_argument("--dt", type=float)
    r.add_argument("--horizon", type=float)
    r.add_argument("--n", help="population size / replicates; comma list for verify-lln and verify-coupling")
    r.add_argument("--reps", type=int)
    r.add_argument("--quiet", action="store_true")
    v = sub.add_parser("validate", help="check a model config")
    v.add_argument("config")
    v.add_argument("--quiet", action="store_true")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.action == "validate":
        try:
            validate(args.config, args.quiet)
        except EpifluxError as exc:
            extra = f" (row {exc.row})" if getattr(exc, "row", None) is not None else ""
            print(f"{type(exc).__name__}: {exc}{extra}", file=sys.stderr)
            return 2
        return 0
    if args.n is not None and args.command not in ("verify-lln", "verify-coupling"):
        args.n = int(args.n)
    status, _ = _run(args.command, args.config, Path(args.out), args, quiet=args.quiet)
    return status


if __name__ == "__main__":
    sys.exit(main())
