"""Command-line front end.

    hybrecycle deblur  [--config PATH] [--out DIR] [--seed N]
    hybrecycle tomo    [--config PATH] [--out DIR] [--seed N]
    hybrecycle stream  [--config PATH] [--out DIR] [--seed N] [--approach {1,2,3,4}]
    hybrecycle verify  [--config PATH] [--out DIR] [--seed N] [--fault-inject]
    hybrecycle cost    [--config PATH] [--out DIR]

Each subcommand starts from built-in defaults, overlays the JSON config
(validated against ``config_schema.json``; unknown keys are errors) and
writes CSV/JSON/PGM files to the output directory.  Timings are written as
0 unless ``--timings`` is given, so that reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import sys
import time
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import problems as pb
from .analysis import tsvd_pipeline, verification_report
from .compress import Rbd, SolutionOriented, Sparse, Tsvd
from .driver import (
    APPROACH_NAMES,
    GcvFlat,
    MaxFill,
    SolverConfig,
    cost_bound,
    cost_hybr,
    cost_recycle,
    hybr,
    hybr_recycle,
    stream_solve,
)
from .output import CURVE_COLUMNS, write_csv, write_json, write_pgm
from .projreg import DP, GCV, UPRE, WGCV, Optimal

__all__ = ["main", "load_schema", "load_config", "DEFAULTS", "ConfigError"]


class ConfigError(ValueError):
    pass


_BLUR = {"kind": "blur2d", "size": 32, "psf_sigma": 1.5, "noise_level": 0.002, "seed": 0}
_TOMO = {"kind": "tomo", "size": 32, "angle_range": [0, 180], "angle_step": 2,
         "noise_level": 0.02, "seed": 0}

DEFAULTS = {
    "deblur": {
        "problem": _BLUR,
        "solver": {"method": "hybr", "storage_limit": 20, "reorth": True, "max_cycles": 4,
                   "compress": {"kind": "tsvd", "eps_tol": 1e-10},
                   "reg": {"kind": "wgcv"}, "inner_stop": {"kind": "max-fill"}},
        "outputs": {"dir": "out"},
    },
    "tomo": {
        "problem": _TOMO,
        "solver": {"method": "hybr", "storage_limit": 30, "reorth": True, "max_cycles": 4,
                   "compress": {"kind": "tsvd", "eps_tol": 1e-10},
                   "reg": {"kind": "dp"}, "inner_stop": {"kind": "max-fill"}},
        "outputs": {"dir": "out"},
    },
    "stream": {
        "problem": {**_TOMO, "angle_step": 1, "splits": [[0, 90], [90, 180]]},
        "solver": {"method": "recycle", "storage_limit": 30, "reorth": True, "max_cycles": 5,
                   "compress": {"kind": "tsvd", "eps_tol": 1e-10},
                   "reg": {"kind": "dp"}, "inner_stop": {"kind": "max-fill"}},
        "stream": {"approaches": [1, 2, 3, 4]},
        "outputs": {"dir": "out"},
    },
    "verify": {
        "problem": {"kind": "blur1d", "size": 64, "psf_sigma": 2.0, "noise_level": 0.002, "seed": 0},
        "solver": {"reg": {"kind": "gcv"}},
        "verify": {"m": 30, "k": 15, "ell": 10, "lambda_min": 1e-6, "lambda_max": 1.0,
                   "lambda_points": 20},
        "outputs": {"dir": "out"},
    },
    "cost": {
        "problem": {"kind": "blur2d", "size": 32, "psf_sigma": 1.5, "noise_level": 0.0, "seed": 0},
        "solver": {"storage_limit": 20},
        "outputs": {"dir": "out"},
    },
}


def load_schema() -> dict:
    text = resources.files("hybrecycle").joinpath("config_schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict) and key not in ("compress", "reg", "inner_stop"):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(path: str | None, command: str) -> dict:
    """Defaults for ``command`` overlaid with the validated user config."""
    user: dict = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                user = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(user, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from exc
    return _merge(DEFAULTS[command], user)


class _Built:
    """Problem instances built from the ``problem`` section."""

    def __init__(self, pcfg: dict):
        kind = pcfg["kind"]
        n = int(pcfg["size"])
        seed = int(pcfg.get("seed", 0))
        level = float(pcfg.get("noise_level", 0.0))
        if kind == "blur1d":
            self.x_true = pb.test_signal_1d(n)
            self.shape = (1, n)
            ops = [pb.gaussian_blur_1d(n, float(pcfg.get("psf_sigma", 2.0)))] * int(pcfg.get("datasets", 1))
        elif kind == "blur2d":
            self.x_true = pb.shepp_logan(n)
            self.shape = (n, n)
            ops = [pb.gaussian_blur_2d(n, n, float(pcfg.get("psf_sigma", 1.5)))] * int(pcfg.get("datasets", 1))
        else:
            self.x_true = pb.shepp_logan(n)
            self.shape = (n, n)
            step = float(pcfg.get("angle_step", 1.0))
            splits = pcfg.get("splits") or [pcfg.get("angle_range", [0, 180])]
            ops = []
            for lo, hi in splits:
                angles = np.arange(float(lo), float(hi), step)
                if len(angles) == 0:
                    raise ConfigError(f"angle split [{lo}, {hi}) is empty")
                ops.append(pb.parallel_tomo(n, angles, pcfg.get("n_rays")))
        self.datasets = [pb.make_noisy_problem(op, self.x_true, level, seed + i) for i, op in enumerate(ops)]

    @property
    def first(self) -> pb.NoisyProblem:
        return self.datasets[0]


def _reg_method(rcfg: dict, data: pb.NoisyProblem):
    kind = rcfg["kind"]
    if kind == "optimal":
        return Optimal()
    if kind == "gcv":
        return GCV()
    if kind == "wgcv":
        nn = data.noise_norm if rcfg.get("use_noise_norm", False) else None
        return WGCV(omega=rcfg.get("omega"), noise_norm=nn, tau=rcfg.get("tau", 1.01))
    if data.noise_norm == 0.0:
        raise ConfigError(f"regularization rule '{kind}' needs a positive noise level")
    if kind == "upre":
        var = rcfg.get("noise_variance", data.noise_norm**2 / data.op.nrows)
        return UPRE(var)
    return DP(data.noise_norm, rcfg.get("tau", 1.01))


def _compress_method(ccfg: dict, storage_limit: int):
    cls = {"tsvd": Tsvd, "solution": SolutionOriented, "sparse": Sparse, "rbd": Rbd}[ccfg["kind"]]
    # default keeps two thirds of the budget
    q = int(ccfg.get("q", max(1, 2 * storage_limit // 3)))
    kwargs = {"q": q, "eps_tol": float(ccfg.get("eps_tol", 1e-6))}
    if cls is Sparse and "mu" in ccfg:
        kwargs["mu"] = float(ccfg["mu"])
    return cls(**kwargs)


def _solver_config(scfg: dict, data: pb.NoisyProblem, seed: int) -> SolverConfig:
    stop = scfg.get("inner_stop", {"kind": "max-fill"})
    inner = MaxFill() if stop["kind"] == "max-fill" else GcvFlat(stop.get("tol", 1e-3), stop.get("window", 3))
    reg = _reg_method(scfg.get("reg", {"kind": "gcv"}), data)
    return SolverConfig(
        storage_limit=int(scfg["storage_limit"]),
        compress=_compress_method(scfg.get("compress", {"kind": "tsvd"}), int(scfg["storage_limit"])),
        reg=reg,
        reorth=bool(scfg.get("reorth", True)),
        max_cycles=int(scfg.get("max_cycles", 5)),
        inner_stop=inner,
        seed=seed,
    )


def _curve_rows(records, timings: bool, label: str | None = None):
    for r in records:
        row = [r.cycle, r.inner_iter, r.lam, r.projected_resnorm, r.rel_error, r.basis_count,
               r.wall_time * 1e3 if timings else 0]
        if label is not None:
            row.append(label)
        yield row


class _Clock:
    def __init__(self, enabled: bool):
        self.enabled = enabled
        self.t0 = time.process_time()

    def elapsed(self) -> float:
        return time.process_time() - self.t0 if self.enabled else 0.0


def _summary(records) -> dict:
    errs = [r.rel_error for r in records if r.rel_error is not None]
    return {
        "iterations": len(records),
        "min_relerr": min(errs) if errs else None,
        "final_relerr": errs[-1] if errs else None,
        "max_basis_count": max((r.basis_count for r in records), default=0),
    }


def run_solve(cfg: dict, out: Path, timings: bool) -> int:
    """Single-dataset run (``deblur`` and ``tomo``)."""
    built = _Built(cfg["problem"])
    data = built.first
    scfg = cfg["solver"]
    config = _solver_config(scfg, data, cfg["problem"].get("seed", 0))
    method = scfg.get("method", "hybr")
    metrics: dict = {"problem": cfg["problem"]["kind"], "method": method, "N": data.op.ncols,
                     "M": data.op.nrows, "noise_norm": data.noise_norm}
    runs = []
    if method in ("hybr", "compare"):
        clock = _Clock(timings)
        res = hybr(data.op, data.b, config, x_true=built.x_true)
        runs.append(("hybr", res, clock.elapsed()))
    if method in ("recycle", "compare"):
        clock = _Clock(timings)
        res = hybr_recycle(data.op, data.b, config=config, x_true=built.x_true)
        runs.append(("recycle", res, clock.elapsed()))

    header = list(CURVE_COLUMNS)
    rows = []
    if method == "compare":
        header.append("solver")
        for label, res, _ in runs:
            rows.extend(_curve_rows(res.records, timings, label))
    else:
        rows.extend(_curve_rows(runs[0][1].records, timings))
    write_csv(out / "curves.csv", header, rows)
    for label, res, cpu in runs:
        metrics[label] = {**_summary(res.records), "stopped": res.stopped, "cpu_s": cpu}
        name = "reconstruction.pgm" if method != "compare" else f"reconstruction_{label}.pgm"
        write_pgm(out / name, res.x.reshape(built.shape))
    write_json(out / "metrics.json", metrics)
    return 0


def run_stream(cfg: dict, out: Path, timings: bool, approach: int | None) -> int:
    built = _Built(cfg["problem"])
    datasets = built.datasets
    config = _solver_config(cfg["solver"], datasets[0], cfg["problem"].get("seed", 0))
    probs = [(d.op, d.b) for d in datasets]
    norms = [d.noise_norm for d in datasets] if all(d.noise_norm > 0 for d in datasets) else None
    approaches = [approach] if approach is not None else list(cfg["stream"]["approaches"])
    xnorm = float(np.linalg.norm(built.x_true))
    rows, solutions = [], {}
    for a in approaches:
        clock = _Clock(timings)
        res = stream_solve(probs, config, a, x_true=built.x_true, noise_norms=norms)
        cpu = clock.elapsed()
        solutions[a] = res.x
        write_csv(out / f"curves_approach{a}.csv", CURVE_COLUMNS, _curve_rows(res.records, timings))
        write_pgm(out / f"reconstruction_approach{a}.pgm", res.x.reshape(built.shape))
        relerr = float(np.linalg.norm(res.x - built.x_true) / xnorm)
        rows.append([a, APPROACH_NAMES[a], relerr, len(res.records), cpu])
    write_csv(out / "summary.csv", ["approach", "label", "relerr", "iterations", "cpu_s"], rows)
    xs = list(solutions.values())
    scale = max(float(np.linalg.norm(xs[0])), np.finfo(float).tiny)
    coincide = all(float(np.linalg.norm(x - xs[0])) <= 1e-12 * scale for x in xs[1:])
    write_json(out / "summary.json", {
        "datasets": len(datasets),
        "approaches": [{"approach": r[0], "label": r[1], "relerr": r[2], "iterations": r[3], "cpu_s": r[4]}
                       for r in rows],
        "all_coincide": coincide,
    })
    return 0


def run_verify(cfg: dict, out: Path, fault_inject: bool) -> int:
    built = _Built(cfg["problem"])
    data = built.first
    v = cfg["verify"]
    m, k, ell = int(v["m"]), int(v["k"]), int(v["ell"])
    if not k <= m:
        raise ConfigError("verify needs k <= m")
    reg = _reg_method(cfg["solver"].get("reg", {"kind": "gcv"}), data)
    pipe = tsvd_pipeline(data.op, data.b, m, k, ell, reg=reg)
    lams = np.logspace(math.log10(v["lambda_min"]), math.log10(v["lambda_max"]), int(v["lambda_points"]))
    report = verification_report(pipe, lams, fault_inject=fault_inject)
    report["fault_injected"] = bool(fault_inject)
    write_json(out / "verify.json", report)
    failed = [name for name, ok in report["checks"].items() if not ok]
    if failed:
        print("verification failed: " + ", ".join(failed), file=sys.stderr)
        return 1
    return 0


def run_cost(cfg: dict, out: Path) -> int:
    """Storage costs of both methods for every split ``k + ell = m``."""
    built = _Built(cfg["problem"])
    op = built.first.op
    N, M = op.ncols, op.nrows
    m = int(cfg["solver"]["storage_limit"])
    rows = []
    for k in range(m + 1):
        ell = m - k
        rows.append([k, ell, cost_hybr(m, N, M), cost_recycle(k, ell, N, M), cost_bound(m, N, M)])
    write_csv(out / "cost.csv", ["k", "ell", "c_hybr", "c_recycle", "bound"], rows)
    return 0


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hybrecycle", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (
        ("deblur", "hybrid solve of a blurring problem"),
        ("tomo", "hybrid solve of a tomography problem"),
        ("stream", "multi-dataset approaches"),
        ("verify", "structural checks on a TSVD compression pipeline"),
        ("cost", "storage-cost table"),
    ):
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", metavar="PATH", help="JSON experiment config")
        s.add_argument("--out", metavar="DIR", help="output directory (overrides outputs.dir)")
        s.add_argument("--seed", type=int, help="noise seed (overrides problem.seed)")
        s.add_argument("--timings", action="store_true", help="record wall and CPU times")
        if name == "stream":
            s.add_argument("--approach", type=int, choices=[1, 2, 3, 4])
        if name == "verify":
            s.add_argument("--fault-inject", action="store_true",
                           help="corrupt the projected matrix; the bound check must fail")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.command)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be nonnegative")
            cfg["problem"]["seed"] = args.seed
        out = Path(args.out if args.out is not None else cfg["outputs"]["dir"])
        out.mkdir(parents=True, exist_ok=True)
        if args.command in ("deblur", "tomo"):
            return run_solve(cfg, out, args.timings)
        if args.command == "stream":
            return run_stream(cfg, out, args.timings, args.approach)
        if args.command == "verify":
            return run_verify(cfg, out, args.fault_inject)
        return run_cost(cfg, out)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
