"""``slidingfw`` command line: simulate, reconstruct, evaluate, certify, demo1d.

Exit codes: 0 success, 2 configuration error, 3 frame/kernel dimension
mismatch, 4 some frames failed (the others were still processed).
"""

from __future__ import annotations

import argparse
import csv
import glob
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .certificates import (
    CertificateError,
    check_nondegeneracy,
    closed_form_eta_w_laplace,
    eta_v,
    eta_w,
)
from .config import ConfigError
from .evaluation import aggregate, evaluate_frame
from .frames import FrameFileError, frame_filename, frame_index, read_frames, read_header, write_frames
from .kernels import ContinuousLaplace, DomainError, Gaussian1D
from .kernels.base import ConfigurationError
from .measures import DiscreteMeasure, read_localizations, write_localizations
from .sfw import BlassoProblem, objective, run_sfw, verify_optimality
from .simulation import NoiseConfig, generate_phantom, noisy_frame, partition_activations

log = logging.getLogger("slidingfw")

EXIT_OK, EXIT_CONFIG, EXIT_DIM, EXIT_PARTIAL = 0, 2, 3, 4


class DimensionMismatch(RuntimeError):
    pass


def _clean(obj):
    """JSON-safe copy: NaN/inf -> None, numpy scalars/arrays -> Python."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def _pool_map(fn, items, threads):
    """Ordered map, in a process pool when more than one worker is asked for."""
    workers = threads if threads else (os.cpu_count() or 1)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as ex:
        return list(ex.map(fn, items, chunksize=1))


# -- simulate --------------------------------------------------------------

def _simulate_one(args):
    kernel, m0, noise, seed, frame, K = args
    y, scale = noisy_frame(kernel, m0, noise, seed, frame, K)
    return y, scale


def cmd_simulate(cfg: dict) -> int:
    if cfg["kernel"]["variant"] not in cfgmod.MICROSCOPY:
        raise ConfigError("simulate needs a 3-D microscopy kernel.variant")
    kernel = cfgmod.build_kernel(cfg)
    sim, k = cfg["simulation"], cfg["kernel"]
    seed = cfg["run"]["seed"]
    out = Path(cfg["run"]["out_dir"])
    (out / "frames").mkdir(parents=True, exist_ok=True)

    phantom = generate_phantom(sim["n_total"], seed, radius=sim["radius"],
                               box=(k["b1"], k["b2"], k["b3"]))
    acts = partition_activations(phantom, sim["n_per_frame"], seed)
    noise = NoiseConfig(cfg["noise"]["n_photon"], cfg["noise"]["variance"])
    jobs = [(kernel, a.measure, noise, seed, a.frame, kernel.n_planes) for a in acts]
    results = _pool_map(_simulate_one, jobs, cfg["run"]["threads"])

    files = []
    for a, (y, _) in zip(acts, results):
        name = frame_filename(a.frame)
        write_frames(out / "frames" / name, y)
        files.append(f"frames/{name}")
    with open(out / "ground_truth.csv", "w", newline="") as fh:
        write_localizations(fh, ((a.frame, a.measure) for a in acts), 3)
    # out_dir and threads do not affect the data; leaving them out keeps
    # manifests byte-identical across locations and worker counts
    recorded = {sec: dict(v) for sec, v in cfg.items()}
    recorded["run"] = {"seed": seed}
    _write_json(out / "manifest.json", {
        "config": recorded,
        "seed": seed,
        "rng": "numpy PCG64, SeedSequence([seed, stream, frame])",
        "n_frames": len(acts),
        "observation_size": kernel.size,
        "image_shape": list(kernel.image_shape),
        "scale_factors": [s for _, s in results],
        "frames": files,
    })
    log.info("simulated %d frames into %s", len(acts), out)
    return EXIT_OK


# -- reconstruct -----------------------------------------------------------

def _reconstruct_one(args):
    cfg, kernel, frame, y = args
    lasso, descent = cfgmod.solver_configs(cfg)
    s = cfg["solver"]
    lam = cfgmod.frame_lambda(cfg, kernel, y)
    problem = BlassoProblem(kernel, y, lam, positive=s["positive"], lasso=lasso,
                            descent=descent, grid=s["grid"], stop_tol=s["stop_tol"])
    m, trace = run_sfw(problem, s["max_outer"])
    info = trace.to_dict()
    info.update({"frame": frame, "lam": lam, "objective": objective(problem, m)})
    return frame, m, info


def cmd_reconstruct(cfg: dict, frames_glob: str | None = None) -> int:
    kernel = cfgmod.build_kernel(cfg)
    out = Path(cfg["run"]["out_dir"])
    pattern = frames_glob or str(out / "frames" / "*.bin")
    paths = sorted(glob.glob(pattern))
    if not paths:
        raise ConfigError(f"no frame files match {pattern}")

    errors: list[dict] = []
    jobs = []
    for n, path in enumerate(paths):
        try:
            m_size, _ = read_header(path)
        except (FrameFileError, OSError) as exc:
            errors.append({"file": path, "error": str(exc)})
            continue
        if m_size != kernel.size:
            raise DimensionMismatch(
                f"{path}: frames have {m_size} values, kernel expects {kernel.size}")
        try:
            ys = read_frames(path)
        except (FrameFileError, OSError) as exc:
            errors.append({"file": path, "error": str(exc)})
            continue
        base = frame_index(path, n)
        for j, y in enumerate(ys):
            if not np.all(np.isfinite(y)):
                errors.append({"file": path, "frame": base + j, "error": "non-finite values"})
                continue
            jobs.append((cfg, kernel, base + j, y))

    results = _pool_map(_reconstruct_one, jobs, cfg["run"]["threads"])
    (out / "traces").mkdir(parents=True, exist_ok=True)
    with open(out / "localizations.csv", "w", newline="") as fh:
        write_localizations(fh, ((f, m) for f, m, _ in results), kernel.dim)
    for frame, _, info in results:
        _write_json(out / "traces" / f"frame_{frame:05d}.json", info)
    _write_json(out / "reconstruct_report.json", {
        "frames_processed": [f for f, _, _ in results],
        "errors": errors,
    })
    if errors:
        log.error("%d frame(s) failed, see reconstruct_report.json", len(errors))
        return EXIT_PARTIAL
    return EXIT_OK


# -- evaluate --------------------------------------------------------------

def cmd_evaluate(cfg: dict, est_path: str | None = None, gt_path: str | None = None) -> int:
    out = Path(cfg["run"]["out_dir"])
    est_path = Path(est_path) if est_path else out / "localizations.csv"
    gt_path = Path(gt_path) if gt_path else out / "ground_truth.csv"
    for p in (est_path, gt_path):
        if not p.is_file():
            raise ConfigError(f"localization file not found: {p}")
    with open(est_path) as fh:
        est, d_est = read_localizations(fh)
    with open(gt_path) as fh:
        gt, d_gt = read_localizations(fh)
    if d_est != d_gt:
        raise DimensionMismatch(f"estimates are {d_est}-D, ground truth is {d_gt}-D")
    ev = cfg["evaluation"]
    frames = sorted(set(est) | set(gt))
    scores, rmse_matches, rows = [], [], []
    empty = np.zeros((0, d_gt))
    for f in frames:
        e = est[f].positions if f in est else empty
        g = gt[f].positions if f in gt else empty
        score, _, m_rmse = evaluate_frame(e, g, ev["r_detect"], ev["r_rmse"])
        scores.append(score)
        rmse_matches.append(m_rmse)
        rows.append({"frame": f, **score.to_dict()})
    summary = aggregate(scores, rmse_matches)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "scores.json", {
        "radii": {"detect": ev["r_detect"], "rmse": ev["r_rmse"]},
        "variant": cfg["kernel"]["variant"],
        "n_planes": cfg["kernel"]["n_planes"],
        "per_frame": rows,
        **summary,
    })
    with open(out / "scores.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    pooled = summary["pooled"]
    keys = ["jaccard", "recall", "precision"] + [f"rmse_x{i}" for i in range(1, d_gt + 1)]
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "n_planes", "n_per_frame", "aggregate"] + keys)
        for name in ("pooled", "per_frame_mean"):
            w.writerow([cfg["kernel"]["variant"], cfg["kernel"]["n_planes"],
                        cfg["simulation"]["n_per_frame"], name]
                       + [summary[name][k] for k in keys])
    log.info("pooled Jaccard %.4f over %d frames", pooled["jaccard"], len(frames))
    return EXIT_OK


# -- certify ---------------------------------------------------------------

def cmd_certify(cfg: dict) -> int:
    c = cfg["certify"]
    kernel = cfgmod.build_kernel(cfg)
    out = Path(cfg["run"]["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    if c["kind"] == "eta_w":
        if kernel.dim != 1:
            raise ConfigError("eta_w is only available for 1-D kernels")
        center, order = float(c["center"]), int(c["order"])
        cert = eta_w(kernel, center, order)
        spikes = np.array([[center]])
        default_lo, default_hi = (
            (center / 4, 4 * center) if isinstance(kernel, ContinuousLaplace)
            else (kernel.lower[0], kernel.upper[0]))
        cluster = order
    elif c["kind"] == "eta_v":
        if c["spikes"] is None:
            raise ConfigError("certify.spikes is required for eta_v")
        spikes = np.asarray(c["spikes"], dtype=float).reshape(-1, kernel.dim)
        amps = np.ones(len(spikes)) if c["amplitudes"] is None else np.asarray(c["amplitudes"], float)
        cert = eta_v(kernel, DiscreteMeasure(amps, spikes))
        default_lo, default_hi = kernel.lower, kernel.upper
        cluster = None
    else:
        raise ConfigError("certify.kind must be eta_w or eta_v")

    lo = np.asarray(default_lo if c["lower"] is None else c["lower"], dtype=float).reshape(-1)
    hi = np.asarray(default_hi if c["upper"] is None else c["upper"], dtype=float).reshape(-1)
    dens = c["n_points"]
    dens = [dens] * kernel.dim if isinstance(dens, int) else list(dens)
    axes = [np.linspace(lo[j], hi[j], int(dens[j])) for j in range(kernel.dim)]
    vals = np.asarray(cert.on_grid(axes)).reshape(-1)
    mesh = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)

    closed = None
    if isinstance(kernel, ContinuousLaplace) and c["kind"] == "eta_w":
        closed = closed_form_eta_w_laplace(mesh[:, 0], center, order, kernel.normalized)
    with open(out / "certificate.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        names = ["x"] if kernel.dim == 1 else [f"x{i}" for i in range(1, kernel.dim + 1)]
        w.writerow(names + ["eta"] + (["closed_form"] if closed is not None else []))
        for i, (pt, v) in enumerate(zip(mesh, vals)):
            row = [repr(float(t)) for t in pt] + [repr(float(v))]
            if closed is not None:
                row.append(repr(float(closed[i])))
            w.writerow(row)
    report = check_nondegeneracy(cert, spikes, dens, lower=lo, upper=hi,
                                 exclusion_steps=c["exclusion_steps"], cluster_order=cluster)
    info = report.to_dict()
    info.update({"kind": c["kind"], "condition_number": cert.condition_number,
                 "spike_values": np.atleast_1d(cert(spikes[:, 0] if kernel.dim == 1 else spikes))})
    _write_json(out / "nondegeneracy.json", info)
    return EXIT_OK


# -- demo1d ----------------------------------------------------------------

def cmd_demo1d(cfg: dict) -> int:
    d = cfg["demo"]
    seed = cfg["run"]["seed"]
    out = Path(cfg["run"]["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    kernel = Gaussian1D(d["sigma"], d["n_samples"])
    m0 = DiscreteMeasure(d["amplitudes"], np.asarray(d["positions"], dtype=float)[:, None])
    y0 = kernel.forward(m0)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed])))
    y = y0 + d["noise_level"] * rng.standard_normal(y0.size)
    lasso, descent = cfgmod.solver_configs(cfg)
    problem = BlassoProblem(kernel, y, d["lam"], positive=d["positive"], lasso=lasso,
                            descent=descent, stop_tol=cfg["solver"]["stop_tol"])
    m, trace = run_sfw(problem, cfg["solver"]["max_outer"])
    report = verify_optimality(problem, m)

    with open(out / "observations.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "y0", "y"])
        for row in zip(kernel.samples, y0, y):
            w.writerow([repr(float(v)) for v in row])
    # objective along every inner step: one plateau per outer iteration
    with open(out / "objective_trace.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "outer_iteration", "stage", "objective"])
        step = 0
        w.writerow([step, 0, "initial", repr(trace.initial_objective)])
        for r in trace.records:
            if not r.step:
                continue
            step += 1
            w.writerow([step, r.iteration + 1, "lasso", repr(r.objective_after_lasso)])
            for v in r.descent_history[1:]:
                step += 1
                w.writerow([step, r.iteration + 1, "descent", repr(float(v))])
    with open(out / "certificate_eta_v.csv", "w", newline="") as fh:
        cert = eta_v(kernel, m0)
        xs = np.linspace(0.0, 1.0, 1001)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "eta_v"])
        for x, v in zip(xs, cert(xs)):
            w.writerow([repr(float(x)), repr(float(v))])
    with open(out / "demo_localizations.csv", "w", newline="") as fh:
        write_localizations(fh, [(0, m)], 1)
    _write_json(out / "demo_trace.json", {**trace.to_dict(), "lam": d["lam"], "seed": seed,
                                          "optimality": report.to_dict()})
    log.info("demo1d: %d outer iterations, %s", trace.n_iterations, trace.termination.value)
    return EXIT_OK


# -- entry point -----------------------------------------------------------

def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=default, help="INI config file (JSON values)")
    p.add_argument("--seed", type=int, default=default, help="master seed")
    p.add_argument("--out-dir", default=default, help="output directory")
    p.add_argument("--threads", type=int, default=default, help="worker processes")
    p.add_argument("--dump-config", action="store_true",
                   default=default if suppress else False,
                   help="print the effective config and exit")
    p.add_argument("-v", "--verbose", action="store_true",
                   default=default if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slidingfw", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command")
    sp = {name: sub.add_parser(name) for name in
          ("simulate", "reconstruct", "evaluate", "certify", "demo1d")}
    for p in sp.values():
        _global_flags(p, suppress=True)
    sp["reconstruct"].add_argument("--frames", help="glob of frame files")
    sp["evaluate"].add_argument("--est", help="estimated localizations CSV")
    sp["evaluate"].add_argument("--gt", help="ground-truth localizations CSV")
    return parser


def effective_config(args) -> dict:
    cfg = cfgmod.load(args.config) if args.config else cfgmod.default_config()
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("seed must be non-negative")
        cfg["run"]["seed"] = args.seed
    if args.out_dir is not None:
        cfg["run"]["out_dir"] = args.out_dir
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("threads must be >= 1")
        cfg["run"]["threads"] = args.threads
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = effective_config(args)
        if args.dump_config:
            sys.stdout.write(cfgmod.dumps(cfg))
            return EXIT_OK
        if args.command is None:
            build_parser().print_usage(sys.stderr)
            return EXIT_CONFIG
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "reconstruct":
            return cmd_reconstruct(cfg, args.frames)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.est, args.gt)
        if args.command == "certify":
            return cmd_certify(cfg)
        return cmd_demo1d(cfg)
    except (ConfigError, ConfigurationError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DimensionMismatch as exc:
        print(f"dimension mismatch: {exc}", file=sys.stderr)
        return EXIT_DIM
    except CertificateError as exc:
        print(f"certificate error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
