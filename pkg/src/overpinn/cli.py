"""Command-line interface: derive, oracle, train, eval, compare."""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import expr
from . import model as M
from . import report
from . import training as T
from .autodiff import IndexSet, jet_batch
from .oracle import (FieldSeries, SeriesFormatError, downsample, generate_initial_vorticity,
                     solve_allen_cahn, solve_ns_vorticity)

BUILTIN_SYSTEMS = ("allen_cahn", "navier_stokes")


class CLIError(Exception):
    pass


def _system_file(name: str) -> Path:
    p = Path(name)
    if p.exists():
        return p
    stem = p.name[:-4] if p.name.endswith(".sys") else p.name
    if stem in BUILTIN_SYSTEMS:
        return Path(str(T.system_path(stem)))
    raise CLIError(f"system file not found: {name}")


# derive ------------------------------------------------------------------------

def cmd_derive(args) -> int:
    system = expr.load(_system_file(args.system))
    plan = []
    for var in ("t", "x", "y", "z"):
        for i in getattr(args, f"d{var}", None) or []:
            plan.append((i, var))
    for item in args.diff or []:
        i, _, var = item.partition(":")
        plan.append((int(i), var))
    for i, var in plan:
        if var not in system.variables:
            raise CLIError(f"system has no variable {var!r}")
        if not 0 <= i < len(system.residuals):
            raise CLIError(f"residual index {i} out of range")
    out = expr.derive_auxiliary(system, plan)
    if args.eliminate:
        dirs = [d if d not in ("", "-", "none") else None for d in args.directions.split(",")] \
            if args.directions else None
        if dirs is None:
            raise CLIError("--eliminate requires --directions")
        base = system.with_residuals(system.residuals, system.residual_names)
        res = expr.eliminate(base, args.eliminate.split(","), dirs)
        if res is None:
            print(f"# not eliminable: {args.eliminate}")
            return 1
        e = res.residual
        if args.apply_constraints:
            e = expr.apply_constraints(system, e)
        if args.apply_definitions:
            e = expr.apply_definitions(system, e)
        if args.apply_constraints or args.apply_definitions:
            e = expr.orient(e, system.variables[0])
        print("# alpha = " + ", ".join(str(a) for a in res.alpha))
        out = out.with_residuals(list(out.residuals) + [e], list(out.residual_names) + ["eliminated"])
    sys.stdout.write(out.to_text())
    return 0


# oracle ------------------------------------------------------------------------

def cmd_oracle(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.problem == "allen-cahn":
        series = {"u": solve_allen_cahn(args.n, args.dt, args.t_end, frames=args.frames)}
    else:
        init = generate_initial_vorticity(args.n, args.seed, args.cutoff, args.u_max)
        series = solve_ns_vorticity(init.omega, args.nu, args.dt, args.t_end, frames=args.frames)
        for s in series.values():
            s.metadata.update(seed=args.seed, cutoff=args.cutoff, u_max=args.u_max)
    for name, s in series.items():
        if args.downsample > 1:
            s = downsample(s, args.downsample)
        s.save(out / f"{name}.series")
        print(f"wrote {out / f'{name}.series'} {s.frames.shape}")
    return 0


# train -------------------------------------------------------------------------

def _load_reference(directory, names=("u", "v", "omega")) -> dict:
    d = Path(directory)
    return {n: FieldSeries.load(d / f"{n}.series") for n in names if (d / f"{n}.series").exists()}


def _problem(args, reference: dict):
    if args.problem == "allen-cahn":
        return T.allen_cahn_problem(reference.get("u"), args.hidden_dim, args.hidden_layers,
                                    args.embedding_dim, args.embedding_scale, args.seed)
    for k in ("u", "v", "omega"):
        if k not in reference:
            raise CLIError(f"Navier-Stokes training needs {k}.series in --reference")
    initial = {k: reference[k].frames[0] for k in ("u", "v", "omega")}
    return T.navier_stokes_problem(args.mode, initial, reference, float(reference["omega"].times[-1]),
                                   args.hidden_dim, args.hidden_layers, args.embedding_dim, args.seed)


def cmd_train(args) -> int:
    reference = _load_reference(args.reference) if args.reference else {}
    problem = _problem(args, reference)
    opt = T.OptimizerConfig(args.lr, decay_steps=args.decay_steps, decay_rate=args.decay_rate)
    weights = T.LossWeights(args.lambda_oe, args.lambda_he, args.lambda_ic, args.lambda_bc)
    config = T.TrainConfig(args.mode, weights, args.batch, args.batch, args.batch, args.steps, opt,
                           args.seed, args.eval_every, args.checkpoint_every)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    params, history = T.train(config, problem, out)
    info = {"problem": args.problem, "mode": args.mode, "outputs": list(problem.outputs),
            "seed": args.seed, "train": config.to_dict(), "network": params.config.to_dict(),
            "wall_time": time.perf_counter() - start}
    (out / "run.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")
    if history:
        last = history[-1]
        print(" ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in last.items()))
    return 0


# eval --------------------------------------------------------------------------

def derived_vorticity(params: M.Parameters, outputs, points, chunk: int = 4096) -> np.ndarray:
    """omega = v_x - u_y from first-order jets of the (t, x, y) network."""
    outputs = list(outputs)
    iu, iv = outputs.index("u"), outputs.index("v")
    iset = IndexSet.full(3, 1)
    ix, iy = iset.ids[(0, 1, 0)], iset.ids[(0, 0, 1)]
    parts = []
    for i in range(0, len(points), chunk):
        J = jet_batch(params, points[i:i + chunk], iset)
        parts.append(J[ix, :, iv] - J[iy, :, iu])
    return np.concatenate(parts) if parts else np.zeros(0)


def predict_series(params: M.Parameters, outputs, reference: FieldSeries, chunk: int = 16384) -> FieldSeries:
    name = reference.name
    pts = reference.points()
    if name == "omega" and name not in outputs and {"u", "v"} <= set(outputs):
        pred = derived_vorticity(params, outputs, pts)
    elif name not in outputs:
        raise CLIError(f"network has no output {name!r}")
    else:
        k = list(outputs).index(name)
        pred = np.concatenate([M.forward(params, pts[i:i + chunk])[:, k] for i in range(0, len(pts), chunk)])
    return FieldSeries(name, reference.times, pred.reshape(reference.frames.shape), reference.coords,
                       {"source": "network"})


def cmd_eval(args) -> int:
    refs = [FieldSeries.load(p) for p in args.reference]
    if args.pred:
        preds = {s.name: s for s in (FieldSeries.load(p) for p in args.pred)}
        mode, seed, steps, wall = "prediction", 0, 0, 0.0
    else:
        if args.run:
            run = Path(args.run)
            info = json.loads((run / "run.json").read_text())
            params = M.load(run / "final.bin")
            outputs, mode, seed = info["outputs"], info["mode"], info["seed"]
            steps, wall = info["train"]["steps"], info.get("wall_time", 0.0)
        elif args.checkpoint:
            if not args.outputs:
                raise CLIError("--checkpoint requires --outputs")
            params = M.load(args.checkpoint)
            outputs, mode, seed, steps, wall = args.outputs.split(","), "checkpoint", params.config.seed, 0, 0.0
        else:
            raise CLIError("one of --pred, --run or --checkpoint is required")
        preds = {r.name: predict_series(params, outputs, r) for r in refs}
    finals, frames = {}, {}
    for r in refs:
        if r.name not in preds:
            raise CLIError(f"no prediction for {r.name!r}")
        p = preds[r.name]
        if p.frames.shape != r.frames.shape:
            raise CLIError(f"prediction shape {p.frames.shape} != reference {r.frames.shape} for {r.name}")
        finals[r.name] = report.relative_l2(p.frames, r.frames)
        frames[r.name] = report.slice_errors(p, r, r.times)
        if args.heatmaps:
            hd = Path(args.heatmaps)
            hd.mkdir(parents=True, exist_ok=True)
            for tag, data in (("exact", r.frames), ("pred", p.frames), ("abs_error", np.abs(p.frames - r.frames))):
                img = data if data.ndim == 2 else data[-1]
                report.render_heatmap(img, hd / f"{r.name}_{tag}.pgm")
        print(f"{r.name} rel_l2={finals[r.name]!r}")
    run_id = args.run_id or (Path(args.run).name if args.run else "eval")
    rec = report.MetricsRecord(run_id, mode, seed, finals, frames, list(refs[0].times), wall, steps)
    if args.out:
        report.write_records([rec], args.out)
    return 0


# compare -----------------------------------------------------------------------

def cmd_compare(args) -> int:
    records = [r for p in args.records for r in report.read_records(p)]
    if len(records) < 2:
        raise CLIError("compare needs at least two runs")
    print(f"{'run_id':<24} {'mode':<16} {'seed':>4} {'output':<8} {'final_rel_l2':>14}")
    for r in records:
        for k, v in r.final_rel_l2.items():
            print(f"{r.run_id:<24} {r.mode:<16} {r.seed:>4} {k:<8} {v:>14.6e}")
    if args.slices:
        times = records[0].frame_times
        curves = {}
        for r in records:
            if r.frame_times != times:
                raise CLIError("runs were evaluated at different frame times")
            for k, v in r.frame_rel_l2.items():
                curves[f"{r.run_id}:{k}"] = v
        report.write_slice_csv(args.slices, times, curves)
    return 0


# parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="overpinn", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    d = sub.add_parser("derive", help="differentiate residuals / eliminate fields and print the system")
    d.add_argument("--system", required=True, help="system file or built-in name (allen_cahn, navier_stokes)")
    for v in ("t", "x", "y", "z"):
        d.add_argument(f"--d{v}", type=int, action="append", metavar="INDEX",
                       help=f"append d/d{v} of residual INDEX")
    d.add_argument("--diff", action="append", metavar="INDEX:VAR", help="append d/dVAR of residual INDEX")
    d.add_argument("--eliminate", metavar="FIELDS", help="comma-separated fields to eliminate")
    d.add_argument("--directions", help="one variable per residual, e.g. y,x ('-' for none)")
    d.add_argument("--apply-constraints", action="store_true")
    d.add_argument("--apply-definitions", action="store_true")
    d.set_defaults(func=cmd_derive)

    o = sub.add_parser("oracle", help="run a reference solver and write series files")
    o.add_argument("problem", choices=("allen-cahn", "navier-stokes"))
    o.add_argument("--out", required=True)
    o.add_argument("--n", type=int, default=None, help="grid points per axis")
    o.add_argument("--dt", type=float, default=None)
    o.add_argument("--t-end", type=float, default=None)
    o.add_argument("--frames", type=int, default=None)
    o.add_argument("--downsample", type=int, default=None, help="store every k-th grid point")
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--cutoff", type=int, default=2)
    o.add_argument("--u-max", type=float, default=3.0)
    o.add_argument("--nu", type=float, default=0.01)
    o.set_defaults(func=cmd_oracle)

    t = sub.add_parser("train", help="train a network and write metrics/checkpoints")
    t.add_argument("problem", choices=("allen-cahn", "navier-stokes"))
    t.add_argument("--mode", required=True, choices=T.MODES)
    t.add_argument("--out", required=True)
    t.add_argument("--reference", help="directory with <name>.series files")
    t.add_argument("--steps", type=int, default=1000)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--batch", type=int, default=64)
    t.add_argument("--hidden-dim", type=int, default=None)
    t.add_argument("--hidden-layers", type=int, default=None)
    t.add_argument("--embedding-dim", type=int, default=None)
    t.add_argument("--embedding-scale", type=float, default=1.0)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--decay-steps", type=int, default=2000)
    t.add_argument("--decay-rate", type=float, default=0.9)
    for w in ("oe", "he", "ic", "bc"):
        t.add_argument(f"--lambda-{w}", type=float, default=1.0)
    t.add_argument("--eval-every", type=int, default=1000)
    t.add_argument("--checkpoint-every", type=int, default=0)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="relative L2 of a run or prediction against reference series")
    e.add_argument("--reference", nargs="+", required=True, help="reference .series files")
    e.add_argument("--pred", nargs="+", help="prediction .series files")
    e.add_argument("--run", help="training output directory")
    e.add_argument("--checkpoint", help="checkpoint file (with --outputs)")
    e.add_argument("--outputs", help="comma-separated network output names")
    e.add_argument("--run-id")
    e.add_argument("--out", help="metrics record CSV")
    e.add_argument("--heatmaps", help="directory for exact/pred/abs_error PGM images")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("compare", help="paired table of runs plus slice-error CSV")
    c.add_argument("records", nargs="+", help="metrics record CSVs from eval")
    c.add_argument("--slices", help="write per-frame error curves to this CSV")
    c.set_defaults(func=cmd_compare)
    return ap


DEFAULTS = {
    # solve fine, store coarse: 256 x-points for Allen-Cahn, 64^2 for Navier-Stokes
    ("oracle", "allen-cahn"): {"n": 32768, "dt": 1e-4, "t_end": 1.0, "frames": 101, "downsample": 128},
    ("oracle", "navier-stokes"): {"n": 256, "dt": 1e-3, "t_end": 2.0, "frames": 21, "downsample": 4},
    ("train", "allen-cahn"): {"hidden_dim": 256, "hidden_layers": 4, "embedding_dim": 256},
    ("train", "navier-stokes"): {"hidden_dim": 64, "hidden_layers": 2, "embedding_dim": 64},
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    for k, v in DEFAULTS.get((args.command, getattr(args, "problem", None)), {}).items():
        if getattr(args, k, None) is None:
            setattr(args, k, v)
    try:
        return args.func(args)
    except (CLIError, expr.ParseError, expr.SystemError_, SeriesFormatError, M.CheckpointError,
            FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
