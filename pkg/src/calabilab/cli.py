"""Command-line entry point: run, analyze, verify, sweep.

``run`` executes one manifest (config + named initial condition) and
writes a trace plus checkpoints; ``analyze`` turns a trace file into a
scale report and plot-ready series files; ``verify`` runs the acceptance
suites and reports one line per criterion; ``sweep`` runs many manifests
in parallel worker processes and aggregates the corpus calibration.

Failures exit nonzero after printing a single machine-readable JSON line
``{"status": "error", "error_class": ..., "message": ...}`` on stdout.
Progress goes to stderr; results and summaries go to stdout as JSON.
"""

import argparse
import concurrent.futures
import glob
import json
import math
import os
import sys

from . import flow, presets, scale, traceio, verify
from .errors import BadParams, CalabiLabError

OUT_ENV = "CALABILAB_OUT"


def _load_manifest(path):
    try:
        with open(path) as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise BadParams(f"unreadable manifest {path}: {exc}") from exc
    if not isinstance(manifest, dict) or "config" not in manifest \
            or "initial" not in manifest:
        raise BadParams("manifest needs 'config' and 'initial' sections")
    cfg_spec = manifest["config"]
    if isinstance(cfg_spec, str):
        base = os.path.dirname(os.path.abspath(path))
        with open(os.path.join(base, cfg_spec)) as fh:
            cfg_spec = json.load(fh)
    try:
        cfg = flow.FlowConfig(**cfg_spec)
    except (TypeError, ValueError) as exc:
        raise BadParams(f"bad config: {exc}") from exc
    return cfg, manifest["initial"], manifest.get("outdir")


def _resolve_outdir(cli_outdir, manifest_outdir):
    out = cli_outdir or manifest_outdir or os.environ.get(OUT_ENV) or "."
    os.makedirs(out, exist_ok=True)
    return out


def _progress(stream, every=500):
    counter = {"n": 0}

    def on_accept(state, res):
        counter["n"] += 1
        if counter["n"] % every == 0:
            stream.write(
                f"  t={state.t:10.4f}  Ca={res.energy_after:.6e}  "
                f"dt={res.dt_used:.3e}\n"
            )
            stream.flush()

    return on_accept


def cmd_run(args):
    cfg, initial, manifest_out = _load_manifest(args.manifest)
    outdir = _resolve_outdir(args.outdir, manifest_out)
    if args.resume:
        ckpt = traceio.read_checkpoint(
            args.resume, expect_backend=cfg.backend,
            expect_resolution=cfg.resolution,
        )
        print(f"resuming from {args.resume} at t={ckpt.state.t:g}",
              file=sys.stderr)
        result = flow.resume(cfg, ckpt, checkpoint_dir=outdir,
                             on_accept=_progress(sys.stderr))
    else:
        state0 = presets.build_initial(cfg.backend, cfg.resolution, initial)
        result = flow.run(cfg, state0, checkpoint_dir=outdir,
                          on_accept=_progress(sys.stderr))
    trace_path = os.path.join(outdir, "run.trace")
    traceio.write_trace(result.trace, trace_path)
    last = result.trace.samples[-1]
    summary = {
        "status": "ok",
        "trace": trace_path,
        "termination": result.trace.termination,
        "reason": result.reason,
        "t_final": result.final_state.t,
        "final_energy": last.calabi_energy,
        "samples": len(result.trace.samples),
    }
    print(json.dumps(summary, sort_keys=True))
    return 0


def _report_dict(rep):
    growth = {
        "anchor": rep.growth.anchor,
        "eps0_max": rep.growth.eps0_max,
        "eps0": rep.growth.eps0,
        "holds": rep.growth.holds,
    }
    rates = None
    if rep.rates is not None:
        rates = {
            "sup_pt": rep.rates.sup_pt,
            "sup_oq": rep.rates.sup_oq,
            "sup_qroot": rep.rates.sup_qroot,
            "sup_q2t": rep.rates.sup_q2t,
            "type1": rep.rates.type1,
            "lam_fit": rep.rates.lam_fit,
            "alpha": rep.rates.alpha,
            "t_sing": rep.rates.t_sing,
        }
    return {
        "curvature_scale": [[t, f] for t, f in rep.f_values],
        "doubling": [
            {"t0": d.t0, "t1": d.t1, "p_integral": d.p_integral}
            for d in rep.doubling
        ],
        "growth": growth,
        "barrier": [
            {"t0": b.t0, "verdict": b.verdict,
             "window_start": b.window_start,
             "first_violation": b.first_violation, "margin": b.margin}
            for b in rep.barrier
        ],
        "rates": rates,
        "meta": rep.meta,
    }


def _write_series(path, pairs):
    with open(path, "w") as fh:
        for t, y in pairs:
            fh.write(f"{t!r} {y!r}\n")


def cmd_analyze(args):
    trace = traceio.read_trace(args.trace)
    rep = scale.analyze_trace(trace, alpha=args.alpha, eps0=args.eps0,
                              t_sing=args.t_sing)
    outdir = _resolve_outdir(args.outdir,
                             os.path.dirname(os.path.abspath(args.trace)))
    stem = os.path.splitext(os.path.basename(args.trace))[0]
    report_path = os.path.join(outdir, f"{stem}.report.json")
    traceio.write_report(_report_dict(rep), report_path)
    series_fields = {
        "calabi_energy": "ca",
        "sup_scalar": "sup_scalar",
        "sup_hess_scalar": "sup_hess",
        "sup_curv": "sup_curv",
    }
    written = [report_path]
    for field, tag in series_fields.items():
        t, y = trace.series(field)
        path = os.path.join(outdir, f"{stem}.{tag}.dat")
        _write_series(path, zip(map(float, t), map(float, y)))
        written.append(path)
    fpath = os.path.join(outdir, f"{stem}.curvature_scale.dat")
    _write_series(fpath, rep.f_values)
    written.append(fpath)
    print(json.dumps({"status": "ok", "report": report_path,
                      "series": written[1:],
                      "doubling_segments": len(rep.doubling)},
                     sort_keys=True))
    return 0


def cmd_verify(args):
    results = verify.run_suite(args.suite, stream=sys.stdout)
    failed = [r for r in results if not r.passed]
    if failed:
        names = ", ".join(f"{r.number} ({r.name})" for r in failed)
        print(f"FAILED criteria: {names}")
        return 1
    print(f"all {len(results)} criteria passed")
    return 0


def _sweep_worker(item):
    manifest_path, outdir = item
    try:
        cfg, initial, _ = _load_manifest(manifest_path)
        state0 = presets.build_initial(cfg.backend, cfg.resolution, initial)
        result = flow.run(cfg, state0, checkpoint_dir=outdir)
        trace_path = os.path.join(outdir, "run.trace")
        traceio.write_trace(result.trace, trace_path)
        try:
            eps0_max = scale.growth_bound_check(result.trace).eps0_max
        except CalabiLabError:
            eps0_max = None
        last = result.trace.samples[-1]
        return {
            "manifest": manifest_path,
            "status": "ok",
            "trace": trace_path,
            "termination": result.trace.termination,
            "final_energy": last.calabi_energy,
            "eps0_max": eps0_max,
        }
    except Exception as exc:  # worker failures must not kill the pool
        return {
            "manifest": manifest_path,
            "status": "error",
            "error_class": type(exc).__name__,
            "message": str(exc),
        }


def cmd_sweep(args):
    manifests = sorted(glob.glob(args.manifests))
    if not manifests:
        raise BadParams(f"no manifests match {args.manifests!r}")
    root = _resolve_outdir(args.outdir, None)
    items = []
    for path in manifests:
        stem = os.path.splitext(os.path.basename(path))[0]
        outdir = os.path.join(root, stem)
        os.makedirs(outdir, exist_ok=True)
        items.append((path, outdir))
    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(args.jobs) as pool:
            summaries = list(pool.map(_sweep_worker, items))
    else:
        summaries = [_sweep_worker(it) for it in items]
    finite = [
        s["eps0_max"] for s in summaries
        if s["status"] == "ok" and s["eps0_max"] is not None
    ]
    corpus = min(finite) if finite else None
    corpus_out = None if corpus is None or math.isinf(corpus) else corpus
    payload = {
        "status": "ok" if all(s["status"] == "ok" for s in summaries)
        else "error",
        "runs": summaries,
        "corpus_eps0_max": corpus_out,
        "corpus_eps0_unbounded": corpus is not None and math.isinf(corpus),
    }
    summary_path = os.path.join(root, "sweep_summary.json")
    with open(summary_path, "w") as fh:
        fh.write(json.dumps(payload, sort_keys=True, indent=1) + "\n")
    print(json.dumps({"status": payload["status"],
                      "summary": summary_path,
                      "runs": len(summaries)}, sort_keys=True))
    return 0 if payload["status"] == "ok" else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="calabilab",
        description="Flow runs, trace analysis and acceptance verification "
                    "for the Calabi-flow laboratory.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one run manifest")
    p_run.add_argument("manifest", help="JSON manifest with config/initial")
    p_run.add_argument("--outdir", default=None,
                       help=f"output directory (default: manifest, then "
                            f"${OUT_ENV}, then cwd)")
    p_run.add_argument("--resume", default=None,
                       help="checkpoint file to resume from")
    p_run.set_defaults(func=cmd_run)

    p_an = sub.add_parser("analyze", help="scale analysis of a trace file")
    p_an.add_argument("trace")
    p_an.add_argument("--alpha", type=float, default=0.5)
    p_an.add_argument("--eps0", type=float, default=None)
    p_an.add_argument("--t-sing", dest="t_sing", type=float, default=None)
    p_an.add_argument("--outdir", default=None)
    p_an.set_defaults(func=cmd_analyze)

    p_ver = sub.add_parser("verify", help="run an acceptance suite")
    p_ver.add_argument("suite", choices=sorted(verify.SUITES))
    p_ver.set_defaults(func=cmd_verify)

    p_sw = sub.add_parser("sweep", help="run many manifests in parallel")
    p_sw.add_argument("manifests", help="glob of manifest files")
    p_sw.add_argument("--jobs", type=int, default=2)
    p_sw.add_argument("--outdir", default=None)
    p_sw.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CalabiLabError as exc:
        print(json.dumps({
            "status": "error",
            "error_class": type(exc).__name__,
            "message": str(exc),
        }, sort_keys=True))
        return 1


if __name__ == "__main__":
    sys.exit(main())
