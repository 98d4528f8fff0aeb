"""Pre-training loop, ratio-grid sweeps and experiment reports."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import os
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_info, threadpool_limits

from . import autodiff as ad
from .config import ExperimentConfig
from .graph import Graph, augment, generate_sbm, load_graph
from .nn import (AdamState, ExpanderParams, GcnEncoderParams, adam_step, encode, expand,
                 normalize_adjacency, sgd_step)
from .objective import (LossBreakdown, covariance_loss, invariance_loss, mode_indices,
                        variance_loss)
from .probe import ProbeResult, evaluate
from .samplers import forman_ricci, make_plan

log = logging.getLogger(__name__)

NODE_MODES = ("node_sampled", "joint")
DIM_MODES = ("dim_sampled_cov_only", "dim_sampled_all", "joint")
# report keys that depend on the machine rather than the computation
NONDETERMINISTIC_KEYS = ("wall_ms", "term_ms", "environment", "elapsed_s")


class ReportFormatError(ValueError):
    pass


@dataclass
class ExperimentReport:
    config: dict
    epochs: list[dict] = field(default_factory=list)
    probe: dict | None = None
    environment: dict = field(default_factory=dict)
    status: str = "ok"
    stopped_early: bool = False
    elapsed_s: float = 0.0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def deterministic_dict(self) -> dict:
        """The report with wall-clock and machine fields removed."""
        return _strip(self.to_dict())

    def loss_trajectory(self) -> np.ndarray:
        return np.array([e["total"] for e in self.epochs])


def _strip(obj):
    if isinstance(obj, dict):
        return {k: _strip(v) for k, v in obj.items() if k not in NONDETERMINISTIC_KEYS}
    if isinstance(obj, list):
        return [_strip(v) for v in obj]
    return obj


def environment_fingerprint(precision: str) -> dict:
    return {
        "precision": precision,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "cpu_count": os.cpu_count(),
        "blas_threads": [i.get("num_threads") for i in threadpool_info()],
    }


def emit_report(report: ExperimentReport, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # repr-exact floats: json writes the shortest round-tripping decimal
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=1, allow_nan=True)
        fh.write("\n")
    epochs_csv = path.with_name(path.stem + "_epochs.csv")
    if report.epochs:
        keys = [k for k in report.epochs[0] if k != "term_ms"]
        with open(epochs_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(keys + ["inv_ms", "var_ms", "cov_ms"])
            for e in report.epochs:
                t = e.get("term_ms", {})
                w.writerow([e[k] for k in keys] + [t.get("inv"), t.get("var"), t.get("cov")])


def load_report(path) -> ExperimentReport:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ReportFormatError(f"{path}: line {exc.lineno} col {exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict) or "config" not in raw:
        raise ReportFormatError(f"{path}: not an experiment report (missing 'config')")
    names = {f.name for f in dataclasses.fields(ExperimentReport)}
    unknown = set(raw) - names
    if unknown:
        raise ReportFormatError(f"{path}: unexpected report fields {sorted(unknown)}")
    return ExperimentReport(**raw)


def build_graph(cfg: ExperimentConfig) -> Graph:
    if cfg.data.kind == "sbm":
        g = generate_sbm(cfg.sbm)
    else:
        g = load_graph(cfg.data.edges, cfg.data.features, cfg.data.labels or None)
    return g.astype(np.float32 if cfg.train.precision == "f32" else np.float64)


@dataclass
class PretrainResult:
    encoder: GcnEncoderParams
    expander: ExpanderParams
    report: ExperimentReport
    graph: Graph


def init_params(cfg: ExperimentConfig, num_features: int, dtype=np.float64):
    m = cfg.model
    enc = GcnEncoderParams.init(num_features, m.hidden_dim, m.rep_dim, seed=cfg.seed)
    exp = ExpanderParams.init(m.rep_dim, m.expander_dim, m.expander_hidden or None, seed=cfg.seed)
    enc = GcnEncoderParams(*(a.astype(dtype) for a in (enc.w1, enc.w2)))
    exp = ExpanderParams(*(a.astype(dtype) for a in (exp.w1, exp.b1, exp.w2, exp.b2)))
    return enc, exp


def _timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return out, (time.perf_counter() - t0) * 1e3


def pretrain(cfg: ExperimentConfig, graph: Graph | None = None) -> PretrainResult:
    """Self-supervised pre-training of the GCN encoder with the VICReg loss.

    Each epoch: augment, encode both views with shared weights, expand,
    draw the epoch's sampling plan, evaluate the loss on the plan, backprop
    and take one optimizer step. The whole graph is always encoded; sampling
    only restricts what the loss sees.
    """
    cfg.validate()
    t_start = time.perf_counter()
    with threadpool_limits(limits=cfg.train.threads or None):
        g = graph if graph is not None else build_graph(cfg)
        dtype = np.float32 if cfg.train.precision == "f32" else np.float64
        g = g.astype(dtype)
        enc, exp = init_params(cfg, g.num_features, dtype)
        params = {**enc.named(), **exp.named()}
        report = ExperimentReport(config=cfg.to_dict(),
                                  environment=environment_fingerprint(cfg.train.precision))

        s, w = cfg.sampling, cfg.loss
        ricci_probs = None
        if s.method == "ricci" and s.mode in NODE_MODES and s.node_ratio < 1:
            ricci_probs = forman_ricci(g).probs
        plan_rng = np.random.default_rng([cfg.seed, 3])
        aug_cfg = dataclasses.replace(cfg.augment, seed=cfg.seed)
        opt = AdamState(lr=cfg.train.lr, weight_decay=cfg.train.weight_decay)

        best, stale = math.inf, 0
        for epoch in range(cfg.train.epochs):
            t0 = time.perf_counter()
            views = augment(g, aug_cfg, epoch)
            tape = ad.GradTape()
            p = {k: tape.param(v, k) for k, v in params.items()}
            enc_p = (p["encoder.w1"], p["encoder.w2"])
            exp_p = (p["expander.w1"], p["expander.b1"], p["expander.w2"], p["expander.b2"])
            zs = []
            for view in (views.view1, views.view2):
                adj = normalize_adjacency(view, dtype=dtype)
                zs.append(expand(encode(view, enc_p, adj), exp_p))
            z1, z2 = zs
            plan = make_plan(
                g.num_nodes, cfg.model.expander_dim,
                node_ratio=s.node_ratio, dim_ratio=s.dim_ratio, method=s.method,
                epoch=epoch, rng=plan_rng, ricci_probs=ricci_probs,
                sample_nodes=s.mode in NODE_MODES, sample_dims=s.mode in DIM_MODES,
            )
            sel = mode_indices(plan, s.mode)
            inv, t_inv = _timed(invariance_loss, z1, z2, *sel["inv"])
            (var1, var2), t_var = _timed(
                lambda: (variance_loss(z1, w.epsilon, *sel["var"]),
                         variance_loss(z2, w.epsilon, *sel["var"])))
            (cov1, cov2), t_cov = _timed(
                lambda: (covariance_loss(z1, *sel["cov"]), covariance_loss(z2, *sel["cov"])))
            total = w.lambda_inv * inv + w.mu_var * (var1 + var2) + w.nu_cov * (cov1 + cov2)
            terms = [float(ad.value(t)) for t in (inv, var1, var2, cov1, cov2)]
            total_v = float(ad.value(total))
            if not math.isfinite(total_v):
                report.status = f"aborted: non-finite loss at epoch {epoch}"
                log.error(report.status)
                break
            grads = tape.backward(total)
            try:
                if cfg.train.optimizer == "adam":
                    params = adam_step(params, grads, opt)
                else:
                    params = sgd_step(params, grads, cfg.train.lr)
            except FloatingPointError as exc:
                report.status = f"aborted: {exc} at epoch {epoch}"
                log.error(report.status)
                break
            nodes, dims = sel["cov"]
            bd = LossBreakdown(*terms, total=total_v,
                               nodes_used=g.num_nodes if nodes is None else len(nodes),
                               dims_used=cfg.model.expander_dim if dims is None else len(dims))
            report.epochs.append({
                "epoch": epoch, **bd.to_dict(),
                "wall_ms": (time.perf_counter() - t0) * 1e3,
                "term_ms": {"inv": t_inv, "var": t_var, "cov": t_cov},
            })
            if cfg.train.patience > 0:
                if total_v < best - cfg.train.min_delta * abs(best) or not math.isfinite(best):
                    best, stale = total_v, 0
                else:
                    stale += 1
                    if stale >= cfg.train.patience:
                        report.stopped_early = True
                        break

        enc = GcnEncoderParams(params["encoder.w1"], params["encoder.w2"])
        exp = ExpanderParams(params["expander.w1"], params["expander.b1"],
                             params["expander.w2"], params["expander.b2"])
        if cfg.probe.enabled and g.labels is not None and report.status == "ok":
            try:
                pr = evaluate(enc, g.astype(np.float64) if dtype != np.float64 else g,
                              n_trials=cfg.probe.trials, seed=cfg.seed, l2=cfg.probe.l2,
                              l2_grid=cfg.probe.l2_grid or None,
                              fractions=(cfg.probe.train_frac, cfg.probe.val_frac,
                                         cfg.probe.test_frac),
                              max_iters=cfg.probe.max_iters)
                report.probe = pr.to_dict()
            except ValueError as exc:
                # keep the trained weights and the loss history
                report.status = f"probe failed: {exc}"
                log.error(report.status)
    report.elapsed_s = time.perf_counter() - t_start
    return PretrainResult(enc, exp, report, g)


@dataclass
class SweepCell:
    mode: str
    method: str
    node_ratio: float
    dim_ratio: float
    status: str
    acc_mean: float = float("nan")
    acc_std: float = float("nan")
    final_loss: float = float("nan")
    cov_ms_mean: float = float("nan")
    epochs_run: int = 0
    report: ExperimentReport | None = None


@dataclass
class SweepResult:
    dataset: str
    cells: list[SweepCell]

    def cell(self, mode, node_ratio=1.0, dim_ratio=1.0) -> SweepCell:
        for c in self.cells:
            if c.mode == mode and c.node_ratio == node_ratio and c.dim_ratio == dim_ratio:
                return c
        raise KeyError((mode, node_ratio, dim_ratio))


def sweep_cells(cfg: ExperimentConfig) -> list[tuple[str, float, float]]:
    """(mode, p, q) combinations; the unsampled baseline comes first."""
    s = cfg.sampling
    cells = [("full", 1.0, 1.0)]
    for mode in s.sweep_modes:
        if mode == "full":
            continue
        if mode == "node_sampled":
            cells += [(mode, p, 1.0) for p in s.node_grid]
        elif mode == "joint":
            cells += [(mode, p, q) for p in s.node_grid for q in s.dim_grid]
        else:
            cells += [(mode, 1.0, q) for q in s.dim_grid]
    return cells


def _run_cell(cfg, graph, mode, p, q) -> SweepCell:
    cell_cfg = cfg.replace(sampling={"mode": mode, "node_ratio": p, "dim_ratio": q})
    try:
        res = pretrain(cell_cfg, graph)
    except Exception as exc:  # keep the sweep going, record the failure
        log.warning("sweep cell %s p=%s q=%s failed: %s", mode, p, q, exc)
        return SweepCell(mode, cfg.sampling.method, p, q, f"error: {exc}")
    rep = res.report
    cell = SweepCell(mode, cfg.sampling.method, p, q, rep.status, report=rep,
                     epochs_run=len(rep.epochs))
    if rep.probe:
        cell.acc_mean, cell.acc_std = rep.probe["mean"], rep.probe["std"]
    if rep.epochs:
        cell.final_loss = rep.epochs[-1]["total"]
        cell.cov_ms_mean = float(np.mean([e["term_ms"]["cov"] for e in rep.epochs]))
    return cell


def sweep(cfg: ExperimentConfig, graph: Graph | None = None, workers: int = 1) -> SweepResult:
    """Pretrain and probe once per grid cell, each from a fresh seeded init.

    Cells whose sampling ratios are all 1 reduce to the full objective and
    reuse the baseline run rather than recomputing it.
    """
    cfg.validate()
    g = graph if graph is not None else build_graph(cfg)
    combos = sweep_cells(cfg)
    results: dict[tuple, SweepCell] = {}
    baseline = _run_cell(cfg, g, "full", 1.0, 1.0)
    results[("full", 1.0, 1.0)] = baseline
    todo = [c for c in combos if not (c[1] == 1.0 and c[2] == 1.0)]
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(workers) as pool:
            for combo, cell in zip(todo, pool.map(lambda c: _run_cell(cfg, g, *c), todo)):
                results[combo] = cell
    else:
        for combo in todo:
            results[combo] = _run_cell(cfg, g, *combo)
    cells = []
    for mode, p, q in combos:
        if (mode, p, q) in results:
            cells.append(results[(mode, p, q)])
        else:
            cells.append(dataclasses.replace(baseline, mode=mode))
    return SweepResult(cfg.data.name, cells)


_SWEEP_FIELDS = ["dataset", "mode", "method", "node_ratio", "dim_ratio", "status",
                 "acc_mean", "acc_std", "final_loss", "cov_ms_mean", "epochs_run"]


def write_sweep_csv(results: list[SweepResult], path):
    """Long format: one row per (dataset, mode, p, q) cell."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_SWEEP_FIELDS)
        for res in results:
            for c in res.cells:
                w.writerow([res.dataset] + [getattr(c, k) for k in _SWEEP_FIELDS[1:]])


def write_ratio_table(results: list[SweepResult], mode: str, path):
    """Rows are ratios, columns are datasets, cells are ``mean ± std`` in percent."""
    ratio_key = "node_ratio" if mode == "node_sampled" else "dim_ratio"
    ratios = sorted({getattr(c, ratio_key) for r in results for c in r.cells if c.mode == mode})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ratio"] + [r.dataset for r in results])
        for ratio in ratios:
            row = [ratio]
            for r in results:
                match = [c for c in r.cells if c.mode == mode and getattr(c, ratio_key) == ratio]
                if match and match[0].status == "ok" and not math.isnan(match[0].acc_mean):
                    c = match[0]
                    row.append(f"{100 * c.acc_mean:.2f} ± {100 * c.acc_std:.2f}")
                else:
                    row.append(match[0].status if match else "")
            w.writerow(row)
    return len(ratios)


def write_joint_heatmap(result: SweepResult, path):
    """Node ratio rows by dimension ratio columns of mean probe accuracy."""
    cells = [c for c in result.cells if c.mode == "joint"]
    ps = sorted({c.node_ratio for c in cells})
    qs = sorted({c.dim_ratio for c in cells})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_ratio\\dim_ratio"] + qs)
        for p in ps:
            row = [p]
            for q in qs:
                c = next(c for c in cells if c.node_ratio == p and c.dim_ratio == q)
                row.append(c.acc_mean)
            w.writerow(row)
    return len(ps) * len(qs)
