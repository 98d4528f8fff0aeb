"""Command-line entry point: ``vicsample {pretrain,sweep,bench,ricci,verify}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .bench import COMPLEXITY_TABLE, bench_loss_scaling
from .config import ConfigError, ExperimentConfig, dump_config, load_config
from .graph import GraphFormatError
from .nn import save_checkpoint
from .nystrom import verification_suite
from .samplers import forman_ricci
from .train import (build_graph, emit_report, pretrain, sweep, write_joint_heatmap,
                    write_ratio_table, write_sweep_csv)


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    train = {}
    if args.precision:
        train["precision"] = args.precision
    if args.threads is not None:
        train["threads"] = args.threads
    if getattr(args, "epochs", None) is not None:
        train["epochs"] = args.epochs
    updates = {}
    if train:
        updates["train"] = train
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out:
        updates["out"] = args.out
    return cfg.replace(**updates).validate() if updates else cfg.validate()


def cmd_pretrain(args) -> int:
    cfg = _resolve_config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    res = pretrain(cfg)
    emit_report(res.report, out / "report.json")
    save_checkpoint(out / "encoder.npz", {**res.encoder.named(), **res.expander.named()})
    dump_config(cfg, out / "config.ini")
    last = res.report.epochs[-1] if res.report.epochs else None
    print(f"status={res.report.status} epochs={len(res.report.epochs)}"
          + (f" final_loss={last['total']:.6g}" if last else ""))
    if res.report.probe:
        print(f"probe accuracy {100 * res.report.probe['mean']:.2f} ± "
              f"{100 * res.report.probe['std']:.2f}")
    return 0 if res.report.status == "ok" else 1


def cmd_sweep(args) -> int:
    cfg = _resolve_config(args)
    if args.modes:
        cfg = cfg.replace(sampling={"sweep_modes": tuple(args.modes.split(","))}).validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    res = sweep(cfg, workers=args.workers)
    write_sweep_csv([res], out / "sweep.csv")
    for mode in cfg.sampling.sweep_modes:
        if mode in ("node_sampled", "dim_sampled_cov_only", "dim_sampled_all"):
            write_ratio_table([res], mode, out / f"sweep_{mode}.csv")
    if "joint" in cfg.sampling.sweep_modes:
        write_joint_heatmap(res, out / "joint_heatmap.csv")
    for c in res.cells:
        print(f"{c.mode:22s} p={c.node_ratio:<5g} q={c.dim_ratio:<5g} "
              f"acc={c.acc_mean:.4f} ± {c.acc_std:.4f} [{c.status}]")
    return 0


def cmd_bench(args) -> int:
    out = Path(args.out or "out")
    out.mkdir(parents=True, exist_ok=True)
    table = bench_loss_scaling(_ints(args.n), args.d, _ints(args.m), reps=args.reps,
                               dtype=np.float32 if args.precision == "f32" else np.float64,
                               threads=args.threads or 1)
    table.to_csv(out / "scaling.csv")
    for c in table.cells:
        print(f"N={c.n:<7d} M={c.d:<5d} median={c.median_s * 1e3:9.3f} ms "
              f"gather={c.gather_s * 1e3:8.3f} ms buffer={c.buffer_entries} entries")
    for n in sorted({c.n for c in table.cells}):
        for m, r in table.dim_ratios(n):
            print(f"N={n}: time({2 * m})/time({m}) = {r:.2f}")
    for m in sorted({c.d for c in table.cells}):
        for n, r in table.node_ratios(m):
            print(f"M={m}: time(N={2 * n})/time(N={n}) = {r:.2f}")
    print("reference loss costs:", json.dumps(COMPLEXITY_TABLE))
    return 0


def cmd_ricci(args) -> int:
    cfg = _resolve_config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    scores = forman_ricci(build_graph(cfg))
    scores.to_csv(out / "ricci_edges.csv", out / "ricci_nodes.csv")
    print(f"{len(scores.edges)} edges, curvature range "
          f"[{scores.edge_curvature.min():g}, {scores.edge_curvature.max():g}]")
    return 0


def cmd_verify(args) -> int:
    out = Path(args.out or "out")
    out.mkdir(parents=True, exist_ok=True)
    res = verification_suite(seed=args.seed or 0)
    res.pop("trajectory").to_csv(out / "trajectory.csv")
    for k, v in res.items():
        print(f"{k}: {v}")
    ok = (res["nystrom_relative_error"] < 1e-8 and res["fixed_point_passed"]
          and res["rotating_final_offdiag"] < res["rotating_initial_offdiag"])
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vicsample", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI experiment config")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--precision", choices=("f32", "f64"))
        sp.add_argument("--threads", type=int)

    sp = sub.add_parser("pretrain", help="pre-train one configuration and probe it")
    common(sp)
    sp.add_argument("--epochs", type=int)
    sp.set_defaults(func=cmd_pretrain)

    sp = sub.add_parser("sweep", help="grid over sampling ratios")
    common(sp)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--modes", help="comma-separated sweep modes")
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("bench", help="covariance-term scaling benchmark")
    common(sp)
    sp.add_argument("--n", default="10000,20000")
    sp.add_argument("--m", default="128,256,512")
    sp.add_argument("--d", type=int, default=1024, help="full embedding width to sample from")
    sp.add_argument("--reps", type=int, default=20)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("ricci", help="dump Forman curvature CSVs")
    common(sp)
    sp.set_defaults(func=cmd_ricci)

    sp = sub.add_parser("verify", help="block-covariance algebra checks")
    common(sp)
    sp.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, GraphFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
