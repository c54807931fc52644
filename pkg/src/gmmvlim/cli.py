"""Command-line driver: ``gmmvlim simulate | invert | validate``.

Exit codes: 0 success, 1 solver failure, 2 usage or configuration error.
Every command writes only below its ``--out`` directory and finishes by
writing ``manifest.json``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .checks import adjoint_check, greens_fdfd_check, grid_rule_check, mie_check, CheckResult
from .core import SolverOptions, load_config
from .dataset import read_dataset, write_dataset
from .errors import ConfigError, GmmvError, SolverError
from .imaging import (ImageField, export_field, gmmv_image, support_metrics, threshold_support, to_db,
                      write_curve)
from .lsm import lsm_image, rhs_from_operator
from .presets import PRESETS, load_preset, preset_dict
from .sensing import build_sensing_greens, load_operator
from .solver import solve_gmmv_cv, solve_gmmv_sigma
from .synthetic import synthesize

EXIT_OK, EXIT_SOLVER, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def git_hash(data: bytes) -> str:
    """Content hash computed like ``git hash-object``."""
    h = hashlib.sha1(b"blob %d\0" % len(data))
    h.update(data)
    return h.hexdigest()


@contextmanager
def _thread_cap(n):
    if n is None:
        yield
        return
    from threadpoolctl import threadpool_limits
    with threadpool_limits(limits=n):
        yield


class Run:
    """Collects timings and outputs and writes the manifest last."""

    def __init__(self, command, out_dir, args):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest = {"command": command, "version": __version__,
                         "arguments": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
                         "inputs": {}, "timings": {}, "outputs": [], "histories": {}}

    @contextmanager
    def stage(self, name):
        t0 = time.perf_counter()
        yield
        self.manifest["timings"][name] = max(0.0, time.perf_counter() - t0)

    def add_input(self, label, path=None, data: bytes = None):
        if path is not None:
            data = Path(path).read_bytes()
        self.manifest["inputs"][label] = git_hash(data)

    def path(self, name):
        return self.out / name

    def record(self, path):
        path = Path(path)
        self.manifest["outputs"].append({"file": path.name, "hash": git_hash(path.read_bytes())})

    def write_json(self, name, obj):
        p = self.path(name)
        p.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")
        self.record(p)
        return p

    def finish(self):
        p = self.path("manifest.json")
        p.write_text(json.dumps(self.manifest, indent=2, sort_keys=True, default=_jsonable) + "\n")
        return p


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f"not serialisable: {type(x).__name__}")


def _load(args, run=None):
    if args.preset and args.config:
        raise UsageError("give either --preset or --config, not both")
    if args.preset:
        cfg = load_preset(args.preset)
        raw = preset_dict(args.preset)
    elif args.config:
        cfg = load_config(args.config)
        raw = cfg.raw
    else:
        raise UsageError("a configuration is required (--preset NAME or --config FILE)")
    if run is not None:
        run.add_input("config", data=json.dumps(raw, sort_keys=True).encode())
        run.manifest["config"] = raw
    return cfg


def _parse_freqs(text, available):
    """Comma-separated GHz values -> indices into ``available`` (Hz)."""
    idx = []
    for tok in text.split(","):
        f = float(tok) * 1e9
        hit = np.nonzero(np.isclose(available, f, rtol=1e-9, atol=0))[0]
        if hit.size == 0:
            raise UsageError(f"frequency {tok} GHz is not in the dataset "
                             f"({', '.join(f'{v / 1e9:g}' for v in available)} GHz)")
        idx.append(int(hit[0]))
    if len(set(idx)) != len(idx):
        raise UsageError("duplicate frequency in --freqs")
    return sorted(idx)


# --------------------------------------------------------------------------
# commands


def cmd_simulate(args):
    run = Run("simulate", args.out, args)
    cfg = _load(args, run)
    with run.stage("simulate"):
        ds = synthesize(cfg, snr_db=args.snr, seed=args.seed)
    path = write_dataset(ds, run.path("dataset.gmmvds"))
    run.record(path)
    run.write_json("config.json", cfg.raw)
    run.manifest["noise"] = dict(ds.noise)
    run.finish()
    print(f"wrote {path} ({cfg.measurement.n_active() * ds.I} records)")
    return EXIT_OK


def _export_image(run, tag, img: ImageField):
    for name, field, fmt in ((f"{tag}_gamma.csv", img, "csv_grid"),
                             (f"{tag}_gamma_db.csv", to_db(img), "csv_grid"),
                             (f"{tag}_gamma_db.pgm", img, "pgm8")):
        run.record(export_field(field, run.path(name), fmt))


def cmd_invert(args):
    run = Run("invert", args.out, args)
    cfg = _load(args, run)
    run.add_input("dataset", path=args.dataset)
    ds, mconf = read_dataset(args.dataset)
    if args.freqs:
        ds = ds.subset_frequencies(_parse_freqs(args.freqs, ds.frequencies.freqs))
    methods = ("gmmv", "lsm") if args.method == "both" else (args.method,)

    with run.stage("operator"):
        op = build_sensing_greens(cfg.grid, mconf, ds.frequencies, cfg.background)
    truth = cfg.truth() if cfg.scene.shapes else None
    lam_min = float(np.min(ds.frequencies.wavelength)) / math.sqrt(cfg.background.eps_r)
    metrics = {}
    status = EXIT_OK

    if "gmmv" in methods:
        opts = cfg.solver.to_dict()
        if args.delta_n is not None:
            opts["delta_n"] = args.delta_n
        if args.max_iter is not None:
            opts["max_iter"] = args.max_iter
        opts = SolverOptions.from_dict(opts)
        res = None
        with run.stage("gmmv"):
            try:
                if args.sigma is not None:
                    res = solve_gmmv_sigma(op, ds, args.sigma * float(np.linalg.norm(ds.Y[ds.mask("recon")])),
                                           opts)
                else:
                    res = solve_gmmv_cv(op, ds, opts)
            except SolverError as exc:
                print(f"error [{exc.code}]: {exc}", file=sys.stderr)
                res, status = exc.result, EXIT_SOLVER
        if res is not None:
            img = gmmv_image(res.J, cfg.grid)
            _export_image(run, "gmmv", img)
            run.record(write_curve(run.path("gmmv_r_rec.txt"), res.r_rec))
            if res.r_cv.size:
                run.record(write_curve(run.path("gmmv_r_cv.txt"), res.r_cv))
            run.manifest["histories"]["gmmv"] = {
                "status": res.status, "n_iter": res.n_iter, "n_opt": res.n_opt,
                "noise_estimate": res.noise_estimate, "tau": res.tau, "phi": res.phi,
                "certificate": res.certificate, "converged": res.converged}
            if truth is not None and img.values.max() > 0:
                db = to_db(img)
                metrics["gmmv"] = support_metrics(threshold_support(db), truth, db, lam_min).to_dict()

    if "lsm" in methods:
        with run.stage("lsm"):
            gamma = lsm_image(ds, cfg.grid, rhs=rhs_from_operator(op))
        img = ImageField(cfg.grid, gamma, "lsm")
        _export_image(run, "lsm", img)
        if truth is not None:
            db = to_db(img)
            metrics["lsm"] = support_metrics(threshold_support(db), truth, db, lam_min).to_dict()

    if metrics:
        run.write_json("metrics.json", metrics)
    run.finish()
    for tag, m in metrics.items():
        print(f"{tag}: jaccard {m['jaccard']:.3f}, blobs {m['n_blobs']}, "
              f"mean exterior {m['mean_exterior_db']:.1f} dB")
    return status


def cmd_validate(args):
    run = Run("validate", args.out, args) if args.out else None
    cfg = _load(args, run)
    results = [grid_rule_check(cfg.grid, cfg.frequencies)]
    t0 = time.perf_counter()
    if args.operator:
        try:
            op = load_operator(args.operator, cfg.measurement)
            results.append(adjoint_check(op))
        except (GmmvError, OSError, ValueError, KeyError) as exc:
            results.append(CheckResult("adjoint", False, math.inf, 1e-10,
                                       {"error": f"{getattr(exc, 'code', type(exc).__name__)}: {exc}"}))
    else:
        op = build_sensing_greens(cfg.grid, cfg.measurement, cfg.frequencies, cfg.background)
        results.append(adjoint_check(op))
    if results[0].passed:
        results.append(greens_fdfd_check(cfg.grid, cfg.measurement, cfg.frequencies, cfg.background,
                                         max_receivers=args.max_receivers))
        f0 = float(cfg.frequencies.freqs[0])
        results.append(mie_check(f0, delta=min(cfg.grid.delta, cfg.frequencies.wavelength[0] / 15.0)))
    else:
        results.append(CheckResult("greens_vs_fdfd", False, math.nan, 0.05, {"skipped": "grid rule"}))
        results.append(CheckResult("fdfd_vs_series", False, math.nan, 0.03, {"skipped": "grid rule"}))
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    if run is not None:
        run.manifest["timings"]["validate"] = time.perf_counter() - t0
        run.write_json("validation.json", [r.to_dict() for r in results])
        run.finish()
    return EXIT_OK if ok else EXIT_SOLVER


# --------------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="gmmvlim", description="GMMV shape reconstruction toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--threads", type=int, default=None,
                   help="cap on BLAS/LAPACK threads (env GMMV_THREADS)")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def with_config(sp):
        sp.add_argument("--preset", choices=PRESETS)
        sp.add_argument("--config", help="JSON experiment configuration")

    s = sub.add_parser("simulate", help="synthesize a dataset for a scene")
    with_config(s)
    s.add_argument("--out", required=True)
    s.add_argument("--snr", type=float, default=math.inf, help="SNR in dB (default: noiseless)")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("invert", help="reconstruct images from a dataset")
    with_config(s)
    s.add_argument("--dataset", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--method", choices=("gmmv", "lsm", "both"), default="both")
    s.add_argument("--freqs", help="comma-separated subset of frequencies in GHz")
    s.add_argument("--delta-n", type=int, default=None, help="CV patience (default 30)")
    s.add_argument("--max-iter", type=int, default=None)
    s.add_argument("--sigma", type=float, default=None,
                   help="residual target relative to ||Y||; replaces CV stopping")
    s.set_defaults(func=cmd_invert)

    s = sub.add_parser("validate", help="run the numerical self-checks for a configuration")
    with_config(s)
    s.add_argument("--operator", help="sensing-operator cache to check instead of a fresh build")
    s.add_argument("--max-receivers", type=int, default=8)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_validate)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        threads = args.threads
        if threads is None and os.environ.get("GMMV_THREADS"):
            threads = int(os.environ["GMMV_THREADS"])
        if threads is not None and threads < 1:
            raise UsageError("--threads must be at least 1")
        with _thread_cap(threads):
            return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (GmmvError, OSError) as exc:
        print(f"error [{getattr(exc, 'code', 'IO_ERROR')}]: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
