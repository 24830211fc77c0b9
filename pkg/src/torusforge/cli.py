"""Command-line front end.

Exit codes: 0 success (including "none found" search results), 1 input error,
2 verification failure. CSV columns for search/table output are
``n,N,K,product,delta_hat,seed`` with floats at 12 significant digits.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from . import bending, curvature, design, freeness
from .immersion import SpecError, enclosing_radius, is_isometric, load_spec

COMMANDS = ("verify", "curv", "free", "search", "table", "cascade", "clifford")
STOCHASTIC = ("free", "search", "table", "cascade")
CSV_COLUMNS = ("n", "N", "K", "product", "delta_hat", "seed")


class InputError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    spec: str | None = None
    plan: str | None = None
    n: int | None = None
    N: list[int] = field(default_factory=list)
    m: int | None = None
    seed: int | None = None
    budget: int = 10_000
    tol: float = 1e-8
    trials: int = 50
    samples: int = 10_000
    grid: int = 2000
    pool: str = "norm"
    bound: int = 25
    out: str | None = None
    format: str = "json"

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise InputError(f"unknown command {self.command!r}")
        if self.command in STOCHASTIC and self.seed is None:
            raise InputError(f"--seed is required for {self.command}")
        if not self.tol > 0:
            raise InputError("--tol must be positive")
        if self.format not in ("json", "csv"):
            raise InputError("--format must be json or csv")


def _fmt(x) -> str:
    if isinstance(x, float):
        return "inf" if math.isinf(x) else f"{x:.12g}"
    return str(x)


def _csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _emit(cfg: RunConfig, payload, rows: list[dict] | None = None) -> None:
    if cfg.format == "csv":
        if rows is None:
            raise InputError(f"--format csv is not available for {cfg.command}")
        text = _csv(rows)
    else:
        text = json.dumps(_clean(payload), indent=2) + "\n"
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _need(value, flag):
    if value is None:
        raise InputError(f"{flag} is required")
    return value


def _curv_config(cfg: RunConfig) -> curvature.CurvatureConfig:
    return curvature.CurvatureConfig(grid_resolution=cfg.grid)


def _verify(cfg: RunConfig) -> int:
    spec = load_spec(_need(cfg.spec, "--spec"))
    iso, defect = is_isometric(spec, max(cfg.tol, 1e-9))
    rep = curvature.curv(spec, _curv_config(cfg))
    out = {"isometric": iso, "metric_defect": defect, "curv": rep.curv,
           "enclosing_radius": enclosing_radius(spec), "curvature": rep.to_dict()}
    ok = iso
    if iso:
        chk = curvature.petrunin_product_check(spec, report=rep)
        out["petrunin"] = {**chk.to_dict(), "verdict": "pass" if chk.passed else "fail"}
        ok = chk.passed
    else:
        out["petrunin"] = {"verdict": "skipped: spec is not isometric"}
    out["verdict"] = "pass" if ok else "fail"
    _emit(cfg, out)
    return 0 if ok else 2


def _curv(cfg: RunConfig) -> int:
    spec = load_spec(_need(cfg.spec, "--spec"))
    rep = curvature.curv(spec, _curv_config(cfg))
    _emit(cfg, {**rep.to_dict(), "value": rep.value, "oracle_value": rep.oracle_value,
                "multistart_value": rep.multistart_value})
    return 0


def _free(cfg: RunConfig) -> int:
    spec = load_spec(_need(cfg.spec, "--spec"))
    rep = freeness.is_free(spec, cfg.trials, cfg.tol, cfg.seed)
    out = {"free": rep.to_dict(), "thresholds": freeness.dimension_thresholds(cfg.m or spec.n, spec.n)}
    if cfg.m is not None:
        out["m_free"] = freeness.is_m_free(spec, cfg.m, point_trials=cfg.trials, tol=cfg.tol, seed=cfg.seed).to_dict()
    _emit(cfg, out)
    return 0


def _search(cfg: RunConfig) -> int:
    n = _need(cfg.n, "--n")
    N = _need(cfg.N, "--N")[-1]
    res = design.search(design.DesignSearchProblem(n, N, cfg.pool, cfg.bound, seed=cfg.seed, budget=cfg.budget))
    payload = res.to_dict()
    if not res.found:
        payload["result"] = "none found"
    _emit(cfg, payload, design.table_rows([res]))
    return 0


def _table(cfg: RunConfig) -> int:
    n = _need(cfg.n, "--n")
    Ns = _need(cfg.N or None, "--N")
    rows = design.table_rows(design.delta_table(n, Ns, cfg.budget, cfg.seed, cfg.pool, cfg.bound))
    _emit(cfg, {"n": n, "rows": rows}, rows)
    return 0


def _cascade(cfg: RunConfig) -> int:
    start, steps = bending.load_plan(_need(cfg.plan or cfg.spec, "--plan"))
    im = bending.cascade(start, steps)
    flat, dev = bending.certify_flat(im, cfg.samples, 1e-6, cfg.seed)
    osc = freeness.is_free(im, cfg.trials, cfg.tol, cfg.seed)
    out = {
        "ambient_dim": im.M,
        "flat": flat,
        "max_metric_deviation": dev,
        "metric": im.metric,
        "stretch": im.stretch,
        "amplitudes": [c.a for c in im.curves],
        "osculating": osc.to_dict(),
        "curv_sampled": bending.sampled_curvature(im, im.metric, seed=cfg.seed),
    }
    _emit(cfg, out)
    return 0 if flat else 2


def _clifford(cfg: RunConfig) -> int:
    N = _need(cfg.N, "--N")[-1]
    n = cfg.n if cfg.n is not None else N
    res = design.clifford_subtorus(N, n, seed=cfg.seed or 0)
    _emit(cfg, res.to_dict())
    return 0


HANDLERS = {"verify": _verify, "curv": _curv, "free": _free, "search": _search,
            "table": _table, "cascade": _cascade, "clifford": _clifford}


def run(cfg: RunConfig) -> int:
    try:
        return HANDLERS[cfg.command](cfg)
    except (SpecError, InputError, bending.CorrugationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def parse_range(text: str) -> list[int]:
    """'2..24' -> [2, ..., 24]; '2,4,8' -> [2, 4, 8]; '5' -> [5]."""
    out = []
    for part in text.split(","):
        if ".." in part:
            a, b = part.split("..")
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="torusforge", description="Flat-torus immersions: curvature, freeness, design search.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--spec", help="FrequencySpec JSON file")
    p.add_argument("--plan", help="cascade plan JSON file")
    p.add_argument("--n", type=int)
    p.add_argument("--N", type=parse_range, default=[], help="N or a range like 2..24")
    p.add_argument("--m", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--budget", type=int, default=10_000)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--grid", type=int, default=2000, help="grid-oracle points per angle")
    p.add_argument("--pool", choices=("norm", "sign"), default="norm")
    p.add_argument("--bound", type=int, default=25, help="squared-norm bound of the frequency pool")
    p.add_argument("--out")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig(**vars(args))
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
