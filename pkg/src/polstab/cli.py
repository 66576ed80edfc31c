"""``polstab`` command line.

    polstab run <config.ini | preset | manifest.json> --out DIR [--seed N]
                [--mode montecarlo|analytic] [--workers N] [--log-detections]
    polstab sweep <scramble-sweep | keyexchange> --out DIR [--seed N] [--workers N]
    polstab validate <config.ini | preset>

Exit codes: 0 success, 2 validation failure, 3 runtime failure.  Every
output directory receives a ``manifest.json`` holding the exact config
text of each run; ``polstab run DIR/manifest.json --out OTHER`` repeats
the runs and reproduces the CSV files byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import tempfile
from dataclasses import replace
from datetime import datetime, timezone
from multiprocessing import Pool
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .config import dump_config, load_config, parse_config
from .engine import pooled_report, run_scenario, write_timeseries
from .errors import ConfigError, ValidationError
from .scenarios import PRESETS, scenario_keyexchange_phases, scenario_scramble_sweep

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3
SWEEP_NAMES = {"scramble-sweep": "scramble_sweep", "scramble_sweep": "scramble_sweep",
               "keyexchange": "keyexchange", "keyexchange_phases": "keyexchange"}
# reference figures for the compensated-scrambling sweep
LOW_RATE_LIMIT_HZ = 4.0     # 16*pi rad/s
HIGH_RATE_HZ = 10.0         # 40*pi rad/s
LOW_RATE_QBER = 0.06
HIGH_RATE_QBER = 0.075


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _resolve(target: str):
    """Config, preset or manifest -> list of ``(config_text, csv_name)``."""
    if target in PRESETS:
        return [(dump_config(PRESETS[target]()), f"{target}.csv")]
    path = Path(target)
    if path.suffix == ".json":
        try:
            manifest = json.loads(path.read_text())
            return [(r["config"], r["output"]) for r in manifest["runs"]]
        except OSError as exc:
            raise ConfigError([f"{path}: cannot read manifest ({exc.strerror})"]) from None
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError([f"{path}: malformed manifest ({exc})"]) from None
    cfg = load_config(path)
    return [(dump_config(cfg), f"{path.stem}.csv")]


def _run_one(job):
    """Worker body: run one config text and write its CSV; returns the points."""
    text, out_path, log_path = job
    cfg = parse_config(text)
    points = run_scenario(cfg, detection_log=log_path)
    write_timeseries(out_path, points)
    return points


def _map(jobs, workers):
    if workers > 1 and len(jobs) > 1:
        with Pool(min(workers, len(jobs))) as pool:
            return pool.map(_run_one, jobs)  # order of jobs, not of completion
    return [_run_one(j) for j in jobs]


def _finalize(cfg_texts, out_dir: Path, command, target, seed, started, outputs, extra=()):
    manifest = {
        "artifact_version": __version__,
        "backend": kernels.BACKEND,
        "command": command,
        "target": str(target),
        "master_seed": seed,
        "started": started,
        "finished": _now(),
        "runs": [{"config": t, "output": o} for t, o in zip(cfg_texts, outputs)],
        "outputs": [str(out_dir / o) for o in list(outputs) + list(extra)],
    }
    _atomic_write(out_dir / "manifest.json", json.dumps(manifest, indent=2) + "\n")


def _phase_table(points):
    rows = []
    for ph in dict.fromkeys(p.phase for p in points):
        vals = np.array([p.qber_total for p in points if p.phase == ph])
        pooled = pooled_report(points, ph)
        rows.append((ph, len(vals), pooled.qber_total, float(np.nanstd(vals))))
    return rows


def _print_phases(points, out=sys.stdout):
    print(f"{'phase':>8} {'points':>6} {'qber_total':>10} {'std':>8}", file=out)
    for ph, n, q, s in _phase_table(points):
        print(f"{ph:>8} {n:>6d} {q:>10.4f} {s:>8.4f}", file=out)


def cmd_run(args) -> int:
    started = _now()
    jobs = _resolve(args.target)
    texts = []
    for text, name in jobs:
        cfg = parse_config(text)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.mode is not None:
            cfg = replace(cfg, mode=args.mode)
        if args.log_detections and cfg.mode != "montecarlo":
            raise ConfigError(["--log-detections needs --mode montecarlo"])
        texts.append(dump_config(cfg))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = [n for _, n in jobs]
    logs = [str(out / (Path(n).stem + "_detections.csv")) if args.log_detections else None
            for n in names]
    results = _map([(t, str(out / n), lg) for t, n, lg in zip(texts, names, logs)], args.workers)
    seed = parse_config(texts[0]).seed
    _finalize(texts, out, "run", args.target, seed, started, names,
              [Path(lg).name for lg in logs if lg])
    for name, points in zip(names, results):
        print(f"{name}: {len(points)} points -> {out / name}")
        _print_phases(points)
    return EXIT_OK


def _sweep_rows(freqs, results):
    rows = []
    for f, points in zip(freqs, results):
        q = np.array([p.qber_opt for p in points])
        mean, std = float(np.mean(q)), float(np.std(q, ddof=1)) if len(q) > 1 else 0.0
        if f <= LOW_RATE_LIMIT_HZ:
            ref, ok = "<6%", mean < LOW_RATE_QBER
        else:
            ref, ok = "<=7.5%", mean <= HIGH_RATE_QBER
        rows.append({"frequency_hz": f, "rotation_rad_s": 4.0 * math.pi * f,
                     "mean_qber_opt": mean, "std_qber_opt": std, "points": len(q),
                     "reference": ref, "check": "pass" if ok else "fail"})
    return rows


def cmd_sweep(args) -> int:
    started = _now()
    kind = SWEEP_NAMES.get(args.preset)
    if kind is None:
        raise ConfigError([f"unknown sweep preset {args.preset!r} "
                           f"(known: scramble-sweep, keyexchange)"])
    seed = 0 if args.seed is None else args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if kind == "scramble_sweep":
        cfgs = scenario_scramble_sweep(seed=seed)
        if args.mode is not None:
            cfgs = [replace(c, mode=args.mode) for c in cfgs]
        names = [f"scramble_{c.scramble_frequency_hz:g}Hz.csv" for c in cfgs]
    else:
        cfgs = [scenario_keyexchange_phases(seed=seed)]
        if args.mode is not None:
            cfgs = [replace(cfgs[0], mode=args.mode)]
        names = ["keyexchange.csv"]
    texts = [dump_config(c) for c in cfgs]
    results = _map([(t, str(out / n), None) for t, n in zip(texts, names)], args.workers)
    if kind == "scramble_sweep":
        rows = _sweep_rows([c.scramble_frequency_hz for c in cfgs], results)
        with open(out / "summary.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
        print(f"{'f_hz':>6} {'rad/s':>8} {'mean_opt':>9} {'std':>8} {'ref':>7} check")
        for r in rows:
            print(f"{r['frequency_hz']:>6g} {r['rotation_rad_s']:>8.2f} {r['mean_qber_opt']:>9.4f} "
                  f"{r['std_qber_opt']:>8.4f} {r['reference']:>7} {r['check']}")
    else:
        with open(out / "summary.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["phase", "points", "qber_total", "std_qber_total"])
            for ph, n, q, s in _phase_table(results[0]):
                w.writerow([ph, n, repr(q), repr(s)])
        _print_phases(results[0])
    _finalize(texts, out, "sweep", args.preset, seed, started, names, ["summary.csv"])
    return EXIT_OK


def cmd_validate(args) -> int:
    if args.target in PRESETS:
        parse_config(dump_config(PRESETS[args.target]()))
    else:
        _resolve(args.target)
    print(f"{args.target}: ok")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="polstab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    workers = dict(type=int, default=os.cpu_count() or 1,
                   help="parallel scenario runs (default: number of processors)")

    r = sub.add_parser("run", help="run a config file, preset or manifest")
    r.add_argument("target")
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--mode", choices=("montecarlo", "analytic"))
    r.add_argument("--workers", **workers)
    r.add_argument("--log-detections", action="store_true",
                   help="write every sifted detection event (Monte Carlo only)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a multi-scenario preset")
    s.add_argument("preset")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--mode", choices=("montecarlo", "analytic"))
    s.add_argument("--workers", **workers)
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("target")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        problems = exc.problems if isinstance(exc, ConfigError) else [str(exc)]
        for line in problems:
            print(f"error: {line}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
