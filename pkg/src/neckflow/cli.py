"""Command-line driver: run, certify, merge, extend, sweep.

Exit codes: 0 success or pass, 1 domain failure, 2 input error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .algebra import classify_gluing, extend_maximal_profile, merge_necks
from .errors import InputError, NeckflowError
from .flow import enclosed_volume, run_pipeline, waist_radius
from .normal import CONDITIONS, certify_normal
from .sphere_mesh import axis_rotation

log = logging.getLogger("neckflow")

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
SERIES_COLUMNS = ("t", "min_r", "max_H", "min_lambda1_over_H")


# ---- run ---------------------------------------------------------------------------

def _candidate_dict(c):
    return {"index": int(c.index), "x": float(c.x), "H": float(c.H), "rhat": float(c.rhat),
            "certificate": None if c.certificate is None else c.certificate.to_dict()}


def _event_dict(ev):
    prof = ev.state.profile
    payload = {"min_r": waist_radius(prof), "step_count": int(ev.state.step_count)}
    if ev.candidates:
        payload["candidates"] = [_candidate_dict(c) for c in ev.candidates]
    if ev.extinction_time is not None:
        payload["extinction_time"] = float(ev.extinction_time)
    if ev.detail:
        payload["detail"] = ev.detail
    return {"time": float(ev.time), "type": ev.kind, "payload": payload}


def run_scenario(scenario: io.Scenario, out_dir, seed=0):
    """Run the pipeline and write report.json, events.jsonl and series.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    res = run_pipeline(scenario.profile, scenario.detection, scenario.flow, scenario.surgery)
    wall = time.perf_counter() - t0
    log.info("%s: pipeline finished in %.2fs", scenario.name, wall)
    events = [_event_dict(ev) for ev in res.events]
    with open(out / "events.jsonl", "w") as fh:
        for e in events:
            fh.write(io.dumps(e, indent=None) + "\n")
    with open(out / "series.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SERIES_COLUMNS)
        for row in res.series:
            w.writerow([repr(float(v)) for v in row])
    comps = []
    for c in res.components:
        p = c.state.profile
        comps.append({"label": c.label, "time": float(c.state.time),
                      "x_range": [float(p.axis_samples[0]), float(p.axis_samples[-1])],
                      "ends": list(p.ends), "volume": float(enclosed_volume(p)),
                      "events": [e.kind for e in c.events]})
    report = {
        "scenario": scenario.name, "seed": seed,
        "parameters": io.scenario_to_dict(scenario),
        "events": events,
        "surgeries": [io.surgery_to_dict(s) for s in res.surgeries],
        "components": comps,
        "certificates": [cand["certificate"] for e in events
                         for cand in e["payload"].get("candidates", []) if cand["certificate"]],
        "diagnostics": list(res.diagnostics),
        "wall_clock": {"total_seconds": wall, "series_rows": len(res.series)},
    }
    io.write_json(out / "report.json", report)
    return report


def cmd_run(args):
    sc = io.load_scenario(args.scenario)
    out = args.out or sc.out or f"out/{sc.name}"
    report = run_scenario(sc, out, args.seed)
    labels = [c["label"] for c in report["components"]]
    print(f"{sc.name}: {len(report['events'])} events, {len(report['surgeries'])} surgeries, "
          f"components {labels} -> {out}")
    return EXIT_OK


# ---- certify / merge / extend -------------------------------------------------------

def _tolerances(args):
    return {k: getattr(args, f"tol_{k}") for k in CONDITIONS if getattr(args, f"tol_{k}") is not None}


def cmd_certify(args):
    neck = io.load_neck(args.neck)
    cert = certify_normal(neck, _tolerances(args))
    out = Path(args.out) if args.out else Path(args.neck).with_suffix(".certificate.json")
    io.write_json(out, io.certificate_to_dict(cert))
    for name, ok in cert.flags.items():
        print(f"{name:9s} {cert.residuals[name]:.3e} <= {cert.tolerances[name]:.1e}  "
              f"{'pass' if ok else 'FAIL'}")
    return EXIT_OK if cert.passed else EXIT_FAIL


def cmd_merge(args):
    n1, n2 = io.load_neck(args.neck1), io.load_neck(args.neck2)
    tol = _tolerances(args)
    if tol:
        n1 = replace(n1, tolerances={**n1.tolerances, **tol})
    merged, F1, F2 = merge_necks(n1, n2, args.delta)
    out = Path(args.out or "merged")
    io.save_neck(out / "merged_neck.json", merged)
    io.write_json(out / "isometries.json", {"F1": F1.to_dict(), "F2": F2.to_dict()})
    print(f"merged length {merged.length:.12g}; F2 shift {F2.z_shift:.12g} flip {F2.z_flip}")
    return EXIT_OK


def cmd_extend(args):
    data = io.read_json(args.profile)
    spec = data.get("profile", data) if isinstance(data, dict) else data
    profile = io._build_profile(spec) if isinstance(spec, dict) else None
    if profile is None:
        raise InputError("extend expects a profile or scenario file")
    twist = None
    if args.reflect:
        twist = np.diag([1.0, 1.0, -1.0])
    elif args.twist_angle:
        twist = axis_rotation([0.0, 0.0, 1.0], args.twist_angle)
    res = extend_maximal_profile(profile, level=args.level, twist=twist)
    out = Path(args.out or "extend")
    io.write_json(out / "maximal.json", io.maximal_to_dict(res))
    label = classify_gluing(res) if res.kind == "Periodic" else "Finite"
    extra = f" period {res.period:.12g}" if res.kind == "Periodic" else \
        f" ends {res.ends[0]:.6g}..{res.ends[1]:.6g}"
    print(f"{res.kind}{extra}; {label}")
    return EXIT_OK


# ---- sweep -------------------------------------------------------------------------

def _sweep_one(job):
    path, out, seed = job
    try:
        sc = io.load_scenario(path)
        run_scenario(sc, Path(out) / sc.name, seed)
        return path, EXIT_OK, ""
    except InputError as exc:
        return path, EXIT_INPUT, str(exc)
    except NeckflowError as exc:
        return path, EXIT_FAIL, str(exc)


def thread_cap(n_jobs):
    env = os.environ.get("NECKFLOW_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError as exc:
            raise InputError("NECKFLOW_THREADS must be an integer") from exc
    return max(1, min(cap, n_jobs))


def cmd_sweep(args):
    out = args.out or "sweep"
    jobs = [(p, out, args.seed) for p in args.scenarios]
    workers = thread_cap(len(jobs))
    if workers == 1:
        results = [_sweep_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_sweep_one, jobs))
    code = EXIT_OK
    for path, rc, msg in results:
        print(f"{path}: {'ok' if rc == 0 else msg}")
        code = max(code, rc)
    return code


# ---- entry point --------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="neckflow", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp):
        sp.add_argument("--out", help="output file or directory")
        sp.add_argument("--seed", type=int, default=0)
        for name in CONDITIONS:
            sp.add_argument(f"--tol-{name}", type=float, default=None, dest=f"tol_{name}")

    r = sub.add_parser("run", help="flow with surgery on a scenario")
    r.add_argument("scenario")
    common(r)
    r.set_defaults(func=cmd_run)
    c = sub.add_parser("certify", help="check the normality conditions of a neck file")
    c.add_argument("neck")
    common(c)
    c.set_defaults(func=cmd_certify)
    m = sub.add_parser("merge", help="merge two overlapping neck files")
    m.add_argument("neck1")
    m.add_argument("neck2")
    m.add_argument("--delta", type=float, default=0.0)
    common(m)
    m.set_defaults(func=cmd_merge)
    e = sub.add_parser("extend", help="maximal extension inside a profile")
    e.add_argument("profile")
    e.add_argument("--level", type=int, default=2)
    e.add_argument("--twist-angle", type=float, default=0.0)
    e.add_argument("--reflect", action="store_true")
    common(e)
    e.set_defaults(func=cmd_extend)
    s = sub.add_parser("sweep", help="run several scenarios in parallel")
    s.add_argument("scenarios", nargs="+")
    common(s)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NeckflowError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
