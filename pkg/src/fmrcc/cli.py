"""
Command-line front end.

    fmrcc simulate [--config cfg.json] [--seed N] --out DIR
    fmrcc fit DATA.csv [--H 2] [--similarity cosine] [--v 20] ... --out DIR
    fmrcc sweep DATA.csv --grid 0,4,8,12,16,20 [--truth truth.json] ... --out DIR
    fmrcc evaluate DATA.csv MODEL.json --out DIR
    fmrcc clusters MODEL.json --out DIR

Every command writes ``manifest.json`` next to its outputs.  The manifest's
``config`` block can be passed back through ``--config`` to reproduce the run.
Exit status: 0 on success, 1 on runtime failure, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from dataclasses import fields
from importlib import metadata
from pathlib import Path

import numpy as np

from . import io
from .clusters import export_graph, graph_from_z
from .evaluation import crps_all, point_prediction, quantile_residuals, report
from .initialization import InitConfig
from .model import DomainError
from .pipeline import apply_standardization, fit_model, resolve_similarity, standardization_for, sweep
from .simulate import SimConfig, generate
from .solver import FitConfig, FitError

log = logging.getLogger("fmrcc")

FIT_FLAGS = ("gamma", "v", "rho", "max_em", "max_admm", "eps_pri", "eps_dual", "eps_em")


class UsageError(Exception):
    pass


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _load_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {p}")
    try:
        cfg = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{p}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise UsageError(f"{p}: config must be a JSON object")
    # a manifest can be fed back directly
    return cfg.get("config", cfg) if "command" in cfg else cfg


def _require_file(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such file: {p}")
    return p


def _build(cls, d: dict, what: str):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise UsageError(f"unknown {what} field(s): {', '.join(unknown)}")
    try:
        return cls.from_dict(d) if hasattr(cls, "from_dict") else cls(**d)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid {what}: {exc}") from None


class Run:
    """Collects outputs and writes the manifest."""

    def __init__(self, command, args, out):
        self.command = command
        self.argv = sys.argv[1:]
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.inputs = []
        self.outputs = []
        self.config = {}
        self.seed = None
        self.t0 = time.perf_counter()

    def path(self, name) -> Path:
        p = self.out / name
        self.outputs.append(str(p))
        return p

    def manifest(self, status="ok", error=None):
        doc = {
            "command": self.command,
            "argv": self.argv,
            "config": self.config,
            "seed": self.seed,
            "timings": {"total_seconds": round(time.perf_counter() - self.t0, 6)},
            "inputs": self.inputs,
            "outputs": self.outputs,
            "status": status,
            "error": error,
            "version": _version(),
            "python": platform.python_version(),
            "numpy": np.__version__,
        }
        io.write_json(self.out / "manifest.json", doc)


def _fit_settings(args, cfg: dict) -> tuple[int, str, bool, FitConfig, InitConfig]:
    cfg = dict(cfg)
    H = args.H if args.H is not None else cfg.pop("H", 2)
    cfg.pop("H", None)
    sim = args.similarity or cfg.pop("similarity", "cosine")
    cfg.pop("similarity", None)
    standardize = bool(args.standardize or cfg.pop("standardize", False))
    cfg.pop("standardize", None)
    cfg.pop("grid", None)
    init_d = cfg.pop("init", {}) or {}
    for name in FIT_FLAGS:
        val = getattr(args, name, None)
        if val is not None:
            cfg[name] = val
    if args.seed is not None:
        cfg["seed"] = args.seed
    if not isinstance(H, int) or H < 1:
        raise UsageError(f"H must be a positive integer, got {H!r}")
    config = _build(FitConfig, cfg, "fit config")
    init_d.setdefault("seed", config.seed)
    init_cfg = _build(InitConfig, init_d, "init config")
    return H, sim, standardize, config, init_cfg


def _fit_snapshot(H, sim, standardize, config, init_cfg) -> dict:
    return {"H": H, "similarity": sim, "standardize": standardize,
            **config.to_dict(), "init": vars(init_cfg).copy()}


def _prepare(data_path, standardize, sim, run):
    data = io.read_dataset(_require_file(data_path))
    run.inputs.append(str(data_path))
    info = standardization_for(data) if standardize else None
    data = apply_standardization(data, info)
    S = resolve_similarity(sim, data.design)
    return data, info, S


def cmd_simulate(args) -> None:
    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    sim = _build(SimConfig, cfg, "simulation config")
    run = Run("simulate", args, args.out)
    run.config, run.seed = sim.to_dict(), sim.seed
    data, labels, partition = generate(sim)
    io.write_dataset(run.path("data.csv"), data)
    io.write_json(run.path("truth.json"), {
        "params": sim.truth.to_dict(),
        "partition": [[j + 1 for j in block] for block in partition],
        "partition_names": [[data.names[j] for j in block] for block in partition],
    })
    io.write_text(run.path("labels.csv"), "component\n" + "".join(f"{h + 1}\n" for h in labels))
    run.manifest()


def _write_fit(run, data, result, info, config):
    doc = io.model_to_dict(result.params, result.state, data.names, config, info,
                           result.converged, result.iterations_used)
    io.write_json(run.path("model.json"), doc)
    io.write_text(run.path("trace.csv"), io.trace_to_csv(result.trace, result.params.H))


def cmd_fit(args) -> None:
    H, sim, standardize, config, init_cfg = _fit_settings(args, _load_config(args.config))
    run = Run("fit", args, args.out)
    run.config, run.seed = _fit_snapshot(H, sim, standardize, config, init_cfg), config.seed
    data, info, S = _prepare(args.data, standardize, sim, run)
    try:
        result = fit_model(data, S, H, config, init_cfg)
    except FitError as exc:
        io.write_text(run.path("trace_partial.csv"), io.trace_to_csv(exc.trace, H))
        run.manifest("failed", str(exc))
        raise
    _write_fit(run, data, result, info, config)
    run.manifest()


def _parse_grid(text) -> list[float]:
    try:
        grid = [float(t) for t in str(text).replace(" ", "").split(",") if t]
    except ValueError:
        raise UsageError(f"bad --grid {text!r}; expected comma-separated numbers") from None
    if not grid:
        raise UsageError("--grid must contain at least one value")
    return grid


def cmd_sweep(args) -> None:
    cfg = _load_config(args.config)
    grid = _parse_grid(args.grid if args.grid is not None else ",".join(map(str, cfg.get("grid", []))))
    H, sim, standardize, config, init_cfg = _fit_settings(args, cfg)
    run = Run("sweep", args, args.out)
    run.config = {**_fit_snapshot(H, sim, standardize, config, init_cfg), "grid": sorted(grid)}
    run.seed = config.seed
    data, info, S = _prepare(args.data, standardize, sim, run)
    truth = None
    if args.truth:
        doc = json.loads(_require_file(args.truth).read_text(encoding="utf-8"))
        truth = [[j - 1 for j in block] for block in doc["partition"]]
        run.inputs.append(str(args.truth))
    points = sweep(data, S, H, grid, config, init_cfg, truth)
    path_lines = ["v,component,covariate,coefficient"]
    summary = ["v,status,em_iterations,converged" + "".join(f",ccp_{h + 1}" for h in range(H)) + ",error"]
    for pt in points:
        v = io.fmt_float(pt.v)
        if pt.result is None:
            summary.append(f"{v},failed,,," + "," * H + json.dumps(pt.error))
            continue
        B = pt.result.params.coefficients
        for h in range(H):
            for j, name in enumerate(data.names):
                path_lines.append(f"{v},{h + 1},{name},{io.fmt_float(B[j, h])}")
        ccps = "".join(f",{io.fmt_float(c)}" for c in pt.ccp) if pt.ccp is not None else "," * H
        summary.append(f"{v},ok,{pt.result.iterations_used},{str(pt.result.converged).lower()}{ccps},")
    io.write_text(run.path("path.csv"), "\n".join(path_lines) + "\n")
    io.write_text(run.path("sweep.csv"), "\n".join(summary) + "\n")
    failed = [pt.v for pt in points if pt.result is None]
    run.manifest("ok" if not failed else "partial", None if not failed else f"failed at v={failed}")


def cmd_evaluate(args) -> None:
    run = Run("evaluate", args, args.out)
    model = io.read_model(_require_file(args.model))
    data = io.read_dataset(_require_file(args.data))
    run.inputs += [str(args.data), str(args.model)]
    params = model["params"]
    if data.p != params.p:
        raise UsageError(f"dimension mismatch: dataset has p={data.p}, model has p={params.p}")
    data = apply_standardization(data, model.get("standardization"))
    run.config = {"model": str(args.model)}
    rep = report(data, params)
    io.write_json(run.path("metrics.json"), rep.to_dict())
    yhat = point_prediction(data.design, params)
    scores = crps_all(data, params)
    qres = quantile_residuals(data, params)
    lines = ["y,yhat,crps,qresid"]
    lines += [",".join(map(io.fmt_float, row)) for row in zip(data.responses, yhat, scores, qres)]
    io.write_text(run.path("observations.csv"), "\n".join(lines) + "\n")
    run.manifest()


def cmd_clusters(args) -> None:
    run = Run("clusters", args, args.out)
    model = io.read_model(_require_file(args.model))
    run.inputs.append(str(args.model))
    run.config = {"model": str(args.model)}
    graph = graph_from_z(model["state"].z)
    names = model["names"]
    io.write_text(run.path("edges.txt"), export_graph(graph))
    lines = ["component,block,index,covariate"]
    for h, part in enumerate(graph.partitions):
        for b, block in enumerate(part):
            lines += [f"{h + 1},{b + 1},{j + 1},{names[j]}" for j in block]
    io.write_text(run.path("partition.csv"), "\n".join(lines) + "\n")
    run.manifest()


def _add_fit_flags(p):
    p.add_argument("--H", type=int, help="number of mixture components (default 2)")
    p.add_argument("--similarity", help="cosine | constant:<value> | file:<path> (default cosine)")
    p.add_argument("--standardize", action="store_true", default=None,
                   help="center and scale non-binary covariates; stored in the model file")
    p.add_argument("--gamma", type=float, help="ridge weight (default 0.001)")
    p.add_argument("--v", type=float, help="fusion weight (default 0)")
    p.add_argument("--rho", type=float, help="ADMM step parameter (default 1)")
    p.add_argument("--max-em", dest="max_em", type=int, help="EM iteration cap (default 10)")
    p.add_argument("--max-admm", dest="max_admm", type=int, help="ADMM iteration cap (default 100)")
    p.add_argument("--eps-pri", dest="eps_pri", type=float, help="ADMM primal tolerance (default 0.05)")
    p.add_argument("--eps-dual", dest="eps_dual", type=float, help="ADMM dual tolerance (default 0.05)")
    p.add_argument("--eps-em", dest="eps_em", type=float, help="EM tolerance on ||dB||_F (default 0.01)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fmrcc", description="Gamma mixture regression with covariate clustering")
    parser.add_argument("-q", "--quiet", action="store_true", help="only log errors")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file (or a manifest.json from an earlier run)")
        p.add_argument("--seed", type=int, help="random seed")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("simulate", help="draw a synthetic dataset")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a model to a dataset")
    p.add_argument("data")
    common(p)
    _add_fit_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sweep", help="warm-started fits along a grid of v")
    p.add_argument("data")
    p.add_argument("--grid", help="comma-separated v values, e.g. 0,4,8,12,16,20")
    p.add_argument("--truth", help="truth.json from simulate; adds CCP columns")
    common(p)
    _add_fit_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("evaluate", help="metrics and per-observation scores")
    p.add_argument("data")
    p.add_argument("model")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("clusters", help="edge list and partition of a fitted model")
    p.add_argument("model")
    common(p)
    p.set_defaults(func=cmd_clusters)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"fmrcc {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, io.FormatError, DomainError, FitError, ValueError, OSError) as exc:
        print(f"fmrcc {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
