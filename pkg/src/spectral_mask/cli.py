"""Operator-facing command line: verification suites and report sweeps.

Subcommands: ``verify`` (run suites, write summary.json), ``tails`` (exact /
Monte Carlo / closed-form tail tables per parameter point), ``crossover``
(branch classification table), ``psi2`` (norm and bound table), ``scan``
(free-form grid sweep of a scalar formula).

Exit codes: 0 all checks passed, 1 a verification suite failed, 2 usage or
configuration error.  Identical config and seed produce byte-identical
output files; workers only change wall time.
"""

from __future__ import annotations

import argparse
import importlib.metadata
import importlib.resources
import json
import math
import os
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import bounds, oracle
from .errors import ParameterDomainError, SpectralMaskError
from .model import ModelParams, Part
from .montecarlo import (
    RNG_ALGORITHM,
    Accumulator,
    EstimateWithCI,
    McConfig,
    McQueries,
    _splitmix64,
    mc_psi2,
    mc_run,
    mc_tail,
)
from .verify import SUITES, DOMINATION_EPS, SuiteResult

#: Environment variable capping the worker count of any command.
THREADS_ENV_VAR = "SPECTRAL_MASK_THREADS"

_PART_NAMES = {p.value: p for p in Part if p is not Part.COMPLEX}

TAILS_HEADER = ["t", "exact", "mc", "mc_halfwidth", "thm23", "eq9", "eq10", "q_form"]
PSI2_HEADER = [
    "N", "l", "m", "part",
    "exact_psi2", "mc_psi2", "moment_psi2", "upper_cor27", "upper_eq12",
]
CROSSOVER_HEADER = ["N", "m", "coeff_first", "coeff_second", "verdict", "t_star", "reason"]

#: Crossover parameter pairs always included in the table.
CROSSOVER_NAMED_PAIRS = ((2304, 48), (470, 10), (480, 10), (960, 20), (2256, 48))


@dataclass(frozen=True)
class GridSpec:
    """A threshold/scale grid: explicit values or min + (max-min) * i/points,
    optionally multiplied by sqrt(N)."""

    spacing: str = "sqrt-n-scaled"
    min: float = 0.0
    max: float = 2.0
    points: int = 50
    values: tuple[float, ...] | None = None

    def resolve(self, N: int) -> np.ndarray:
        if self.values is not None:
            base = np.asarray(self.values, dtype=np.float64)
        else:
            base = self.min + (self.max - self.min) * np.arange(self.points) / self.points
        if self.spacing == "sqrt-n-scaled":
            base = base * math.sqrt(N)
        return base

    @classmethod
    def from_dict(cls, data: dict) -> "GridSpec":
        kwargs = dict(data)
        if "values" in kwargs and kwargs["values"] is not None:
            kwargs["values"] = tuple(float(v) for v in kwargs["values"])
        return cls(**kwargs)


_DEFAULT_K_GRID = GridSpec(values=(0.6, 0.75, 1.0, 2.0, 5.0))
_DEFAULT_N_ORDERS = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class RunConfig:
    """Resolved configuration for one CLI invocation."""

    n_grid: tuple[int, ...] = tuple(range(3, 13))
    l_grid: tuple[int, ...] | str = "all"
    m_grid: tuple[int, ...] | str = "all"
    parts: tuple[Part, ...] = (Part.REAL,)
    t_grid: GridSpec = GridSpec()
    k_grid: GridSpec = _DEFAULT_K_GRID
    n_orders: tuple[int, ...] = _DEFAULT_N_ORDERS
    mc_samples: int = 200_000
    mc_seed: int = 42
    mc_batch: int = 1 << 18
    mc_confidence: float = 0.99
    output_dir: Path = Path(".")
    suites: tuple[str, ...] = tuple(SUITES)
    max_enum_n: int = oracle.DEFAULT_ENUM_GUARD
    workers: int = 4

    def iter_params(self) -> list[ModelParams]:
        out = []
        for N in self.n_grid:
            ls = range(1, N) if self.l_grid == "all" else [l for l in self.l_grid if 0 <= l <= N - 1]
            ms = range(1, N + 1) if self.m_grid == "all" else [m for m in self.m_grid if 1 <= m <= N]
            for l in ls:
                for m in ms:
                    out.append(ModelParams(N, l, m))
        return out

    def mc_config(self) -> McConfig | None:
        if self.mc_samples <= 0:
            return None
        return McConfig(
            samples=self.mc_samples,
            seed=self.mc_seed,
            batch=self.mc_batch,
            confidence=self.mc_confidence,
        )

    def to_dict(self) -> dict:
        return {
            "n_grid": list(self.n_grid),
            "l_grid": self.l_grid if self.l_grid == "all" else list(self.l_grid),
            "m_grid": self.m_grid if self.m_grid == "all" else list(self.m_grid),
            "parts": [p.value for p in self.parts],
            "t_grid": _grid_dict(self.t_grid),
            "k_grid": _grid_dict(self.k_grid),
            "n_orders": list(self.n_orders),
            "mc": {
                "samples": self.mc_samples,
                "seed": self.mc_seed,
                "batch": self.mc_batch,
                "confidence": self.mc_confidence,
            },
            "output_dir": str(self.output_dir),
            "suites": list(self.suites),
            "max_enum_n": self.max_enum_n,
            "workers": self.workers,
        }


def _grid_dict(grid: GridSpec) -> dict:
    out = {"spacing": grid.spacing}
    if grid.values is not None:
        out["values"] = list(grid.values)
    else:
        out.update({"min": grid.min, "max": grid.max, "points": grid.points})
    return out


def _load_schema(name: str) -> dict:
    ref = importlib.resources.files("spectral_mask") / "schemas" / name
    return json.loads(ref.read_text())


def load_config(path: str | None) -> dict:
    data: dict = {}
    if path is not None:
        data = json.loads(Path(path).read_text())
    jsonschema.validate(data, _load_schema("config.schema.json"))
    return data


def build_config(data: dict, args: argparse.Namespace | None = None) -> RunConfig:
    kwargs: dict = {}
    if "n_grid" in data:
        kwargs["n_grid"] = tuple(data["n_grid"])
    for key in ("l_grid", "m_grid"):
        if key in data:
            kwargs[key] = data[key] if data[key] == "all" else tuple(data[key])
    if "parts" in data:
        kwargs["parts"] = tuple(_PART_NAMES[name] for name in data["parts"])
    if "t_grid" in data:
        kwargs["t_grid"] = GridSpec.from_dict(data["t_grid"])
    if "k_grid" in data:
        kwargs["k_grid"] = GridSpec.from_dict(data["k_grid"])
    if "n_orders" in data:
        kwargs["n_orders"] = tuple(data["n_orders"])
    mc = data.get("mc", {})
    if "samples" in mc:
        kwargs["mc_samples"] = mc["samples"]
    if "seed" in mc:
        kwargs["mc_seed"] = mc["seed"]
    if "batch" in mc:
        kwargs["mc_batch"] = mc["batch"]
    if "confidence" in mc:
        kwargs["mc_confidence"] = mc["confidence"]
    if "output_dir" in data:
        kwargs["output_dir"] = Path(data["output_dir"])
    if "suites" in data:
        kwargs["suites"] = tuple(data["suites"])
    if "max_enum_n" in data:
        kwargs["max_enum_n"] = data["max_enum_n"]
    if "workers" in data:
        kwargs["workers"] = data["workers"]
    if args is not None:
        if args.out is not None:
            kwargs["output_dir"] = Path(args.out)
        if args.seed is not None:
            kwargs["mc_seed"] = args.seed
        if args.samples is not None:
            kwargs["mc_samples"] = args.samples
        if args.suites is not None:
            names = tuple(s.strip() for s in args.suites.split(",") if s.strip())
            unknown = [s for s in names if s not in SUITES]
            if unknown:
                raise ParameterDomainError(
                    f"unknown suites {unknown}; registered: {sorted(SUITES)}"
                )
            kwargs["suites"] = names
        if args.max_enum_n is not None:
            kwargs["max_enum_n"] = args.max_enum_n
    return RunConfig(**kwargs)


def _effective_workers(cfg: RunConfig) -> int:
    raw = os.environ.get(THREADS_ENV_VAR)
    workers = cfg.workers
    if raw is not None:
        try:
            cap = int(raw)
        except ValueError:
            raise ParameterDomainError(
                f"{THREADS_ENV_VAR} must be a positive integer, got {raw!r}"
            ) from None
        if cap < 1:
            raise ParameterDomainError(
                f"{THREADS_ENV_VAR} must be a positive integer, got {raw!r}"
            )
        workers = min(workers, cap)
    return max(1, workers)


def _fmt(value: float | None) -> str:
    # 17 significant digits: round-trip safe for float64.
    return "" if value is None else format(float(value), ".17g")


def _write_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    lines = [",".join(header)] + [",".join(row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def _map_points(items, fn, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class BoundReport:
    """Every applicable bound at one (params, query) point, with exact and
    Monte Carlo companions and domination flags where the exact value exists.

    Bound values are the raw formula outputs; clamping to [0, 2] happens only
    in :meth:`effective_bounds`.
    """

    params: ModelParams
    query: tuple[str, float]
    bounds: dict[str, float]
    exact: float | None = None
    mc: EstimateWithCI | None = None
    dominated: dict[str, bool] | None = field(default=None)

    def __post_init__(self) -> None:
        if self.exact is None:
            if self.dominated is not None:
                raise ParameterDomainError("domination flags need an exact value")
        elif self.dominated is not None and set(self.dominated) != set(self.bounds):
            raise ParameterDomainError("domination flags must cover exactly the bounds")

    def effective_bounds(self) -> dict[str, float]:
        return {k: bounds.effective_tail_bound(v) for k, v in self.bounds.items()}

    def to_dict(self) -> dict:
        return {
            "params": {"N": self.params.N, "l": self.params.l, "m": self.params.m},
            "query": {self.query[0]: self.query[1]},
            "exact": self.exact,
            "mc": None
            if self.mc is None
            else {
                "estimate": self.mc.estimate,
                "half_width": self.mc.half_width,
                "n": self.mc.n,
                "method": self.mc.method.value,
            },
            "bounds": dict(self.bounds),
            "dominated": None if self.dominated is None else dict(self.dominated),
        }


def tail_bound_report(
    params: ModelParams,
    part: Part,
    t: float,
    exact: float | None = None,
    mc: EstimateWithCI | None = None,
) -> BoundReport:
    """Assemble the applicable tail bounds at (params, part, t)."""
    values: dict[str, float] = {}
    in_hypotheses = params.l >= 1 and not params.is_degenerate_2l
    if in_hypotheses:
        if part is Part.REAL:
            values["thm23_i"] = bounds.tail_bound_uv(params.N, t)
        elif part is Part.IMAG:
            values["thm23_ii"] = bounds.tail_bound_uv(params.N, t)
        elif part is Part.MODULUS_CENTERED:
            values["thm23_iii"] = bounds.tail_bound_mod(params.N, t)
        if part in (Part.REAL, Part.IMAG):
            if 2 * params.m < params.N:
                values["eq9"] = bounds.tail_bound_entropy(params.N, params.m, t)
                values["eq10"] = bounds.tail_bound_combined(params.N, params.m, t)
            if t > 0:
                values["q_form"] = bounds.tail_bound_q(params.N, t)
    dominated = None
    if exact is not None:
        dominated = {k: exact <= v + DOMINATION_EPS for k, v in values.items()}
    return BoundReport(params, ("t", t), values, exact=exact, mc=mc, dominated=dominated)


def _modulus_center(params: ModelParams, cfg: RunConfig, workers: int) -> float:
    """Center for modulus_centered queries: exact when enumerable, otherwise a
    dedicated estimation pass on a seed derived from the main seed."""
    if params.N <= cfg.max_enum_n:
        dist = oracle.enumerate_distribution(
            params, Part.MODULUS, max_enum_n=cfg.max_enum_n
        )
        return float(np.dot(dist.values, dist.probs))
    pre = McConfig(
        samples=cfg.mc_samples,
        seed=_splitmix64(cfg.mc_seed),
        batch=cfg.mc_batch,
        confidence=cfg.mc_confidence,
    )
    acc = mc_run(params, McQueries(parts=(Part.MODULUS,)), pre, workers=workers)
    return acc.sum_mod / acc.n


def _tails_point(
    params: ModelParams, cfg: RunConfig, workers: int
) -> list[tuple[str, list[list[str]]]]:
    ts = cfg.t_grid.resolve(params.N)
    exact_curves: dict[Part, np.ndarray] = {}
    if params.N <= cfg.max_enum_n:
        for part in cfg.parts:
            exact_curves[part] = oracle.exact_tail_curve(
                params, part, ts, max_enum_n=cfg.max_enum_n
            )
    acc: Accumulator | None = None
    mc_cfg = cfg.mc_config()
    if mc_cfg is not None:
        center = None
        if Part.MODULUS_CENTERED in cfg.parts:
            center = _modulus_center(params, cfg, workers)
        queries = McQueries(
            parts=cfg.parts,
            tail_thresholds=tuple(float(t) for t in ts),
            modulus_center=center,
        )
        acc = mc_run(params, queries, mc_cfg, workers=workers, work_ceiling=None)
    files = []
    for part in cfg.parts:
        rows = []
        for i, t in enumerate(ts):
            t = float(t)
            exact = None if part not in exact_curves else float(exact_curves[part][i])
            est = mc_tail(acc, part, t) if acc is not None else None
            report = tail_bound_report(params, part, t, exact=exact, mc=est)
            rows.append(
                [
                    _fmt(t),
                    _fmt(report.exact),
                    _fmt(None if est is None else est.estimate),
                    _fmt(None if est is None else est.half_width),
                    _fmt(next(
                        (report.bounds[k] for k in ("thm23_i", "thm23_ii", "thm23_iii") if k in report.bounds),
                        None,
                    )),
                    _fmt(report.bounds.get("eq9")),
                    _fmt(report.bounds.get("eq10")),
                    _fmt(report.bounds.get("q_form")),
                ]
            )
        name = f"tails_N{params.N}_l{params.l}_m{params.m}_{part.value}.csv"
        files.append((name, rows))
    return files


def cmd_tails(cfg: RunConfig) -> int:
    workers = _effective_workers(cfg)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    points = cfg.iter_params()
    results = _map_points(points, lambda p: _tails_point(p, cfg, 1), workers)
    for files in results:
        for name, rows in files:
            path = cfg.output_dir / name
            _write_csv(path, TAILS_HEADER, rows)
            print(path)
    return 0


def cmd_crossover(cfg: RunConfig) -> int:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    pairs: list[tuple[int, int]] = list(CROSSOVER_NAMED_PAIRS)
    for N in cfg.n_grid:
        ms = range(1, N + 1) if cfg.m_grid == "all" else [m for m in cfg.m_grid if 1 <= m <= N]
        for m in ms:
            if (N, m) not in pairs:
                pairs.append((N, m))
    rows = []
    for N, m in pairs:
        try:
            verdict = bounds.crossover_region(N, m)
        except SpectralMaskError as exc:
            rows.append([str(N), str(m), "", "", "", "", str(exc)])
            continue
        rows.append(
            [
                str(N),
                str(m),
                _fmt(verdict.coeff_first),
                _fmt(verdict.coeff_second),
                verdict.kind.value,
                _fmt(verdict.t_star),
                "",
            ]
        )
    path = cfg.output_dir / "crossover.csv"
    _write_csv(path, CROSSOVER_HEADER, rows)
    print(path)
    return 0


def _psi2_point(params: ModelParams, cfg: RunConfig, workers: int) -> list[list[str]]:
    rows = []
    mc_cfg = cfg.mc_config()
    for part in cfg.parts:
        exact_norm = moment_norm = None
        center = None
        if params.N <= cfg.max_enum_n:
            exact_norm = oracle.exact_psi2_norm(
                params, part, 1e-10, max_enum_n=cfg.max_enum_n
            ).norm
            moment_norm = oracle.exact_psi2_moment_norm(
                params, part, max_enum_n=cfg.max_enum_n
            ).norm
        mc_norm = None
        if mc_cfg is not None:
            if part is Part.MODULUS_CENTERED:
                center = _modulus_center(params, cfg, workers)
            mc_norm = mc_psi2(
                params, part, mc_cfg, 1e-6, center=center,
                workers=workers, work_ceiling=None,
            ).norm
        rows.append(
            [
                str(params.N),
                str(params.l),
                str(params.m),
                part.value,
                _fmt(exact_norm),
                _fmt(mc_norm),
                _fmt(moment_norm),
                _fmt(bounds.psi2_upper(params.N)),
                _fmt(bounds.psi2_sup_upper(params.N)),
            ]
        )
    return rows


def cmd_psi2(cfg: RunConfig) -> int:
    workers = _effective_workers(cfg)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    points = cfg.iter_params()
    results = _map_points(points, lambda p: _psi2_point(p, cfg, 1), workers)
    rows = [row for point_rows in results for row in point_rows]
    path = cfg.output_dir / "psi2.csv"
    _write_csv(path, PSI2_HEADER, rows)
    print(path)
    return 0


# Scalar formulas available to `scan`, with their grid axes.
SCAN_FORMULAS = {
    "tail_bound_uv": ("N", "t"),
    "tail_bound_mod": ("N", "t"),
    "tail_bound_entropy": ("N", "m", "t"),
    "tail_bound_combined": ("N", "m", "t"),
    "tail_bound_q": ("N", "t"),
    "moment_bound": ("N", "n"),
    "exp_moment_bound": ("N", "K"),
    "psi2_upper": ("N",),
    "psi2_sup_upper": ("N",),
}


def _scan_axis_values(axis: str, N: int, cfg: RunConfig) -> list:
    if axis == "t":
        return [float(t) for t in cfg.t_grid.resolve(N)]
    if axis == "K":
        return [float(k) for k in cfg.k_grid.resolve(N)]
    if axis == "m":
        ms = range(1, N + 1) if cfg.m_grid == "all" else [m for m in cfg.m_grid if 1 <= m <= N]
        return list(ms)
    if axis == "n":
        return list(cfg.n_orders)
    raise ParameterDomainError(f"unknown scan axis {axis!r}")


def cmd_scan(cfg: RunConfig, formula: str) -> int:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    axes = SCAN_FORMULAS[formula]
    fn = getattr(bounds, formula)
    rows: list[list[str]] = []

    def emit(args: list) -> None:
        cells = [str(a) if isinstance(a, int) else _fmt(a) for a in args]
        try:
            value = fn(*args)
        except SpectralMaskError as exc:
            rows.append(cells + ["", str(exc)])
            return
        rows.append(cells + [_fmt(value), ""])

    def walk(axis_idx: int, args: list, N: int | None) -> None:
        if axis_idx == len(axes):
            emit(args)
            return
        axis = axes[axis_idx]
        if axis == "N":
            for n_value in cfg.n_grid:
                walk(axis_idx + 1, args + [n_value], n_value)
        else:
            for v in _scan_axis_values(axis, N if N is not None else 1, cfg):
                walk(axis_idx + 1, args + [v], N)

    walk(0, [], None)
    path = cfg.output_dir / f"scan_{formula}.csv"
    _write_csv(path, list(axes) + ["value", "reason"], rows)
    print(path)
    return 0


def _package_version() -> str:
    try:
        return importlib.metadata.version("spectral-mask")
    except importlib.metadata.PackageNotFoundError:
        return "unknown"


def _environment() -> dict:
    return {
        "package_version": _package_version(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "platform": sys.platform,
        "rng_algorithm": RNG_ALGORITHM,
    }


def _run_suite(name: str, cfg: RunConfig, workers: int) -> SuiteResult:
    if name == "montecarlo":
        return SUITES[name](
            samples=cfg.mc_samples if cfg.mc_samples > 0 else 200_000,
            seed=cfg.mc_seed,
            batch=cfg.mc_batch,
            workers_many=max(workers, 2),
            max_enum_n=cfg.max_enum_n,
        )
    if name in ("moments", "special_forms", "tails", "entropy_tails", "moment_chain", "psi2"):
        return SUITES[name](max_enum_n=cfg.max_enum_n)
    return SUITES[name]()


def cmd_verify(cfg: RunConfig) -> int:
    workers = _effective_workers(cfg)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    results: dict[str, SuiteResult] = {}
    for name in cfg.suites:
        result = _run_suite(name, cfg, workers)
        results[name] = result
        slack = "" if result.worst_slack is None else f" worst_slack={result.worst_slack:.3e}"
        print(f"suite {name}: {'PASS' if result.ok else 'FAIL'} "
              f"({result.passed} passed, {result.failed} failed){slack}")
    summary = {
        "all_passed": all(r.ok for r in results.values()),
        "environment": _environment(),
        "config": cfg.to_dict(),
        "suites": {name: r.to_dict() for name, r in results.items()},
    }
    jsonschema.validate(summary, _load_schema("summary.schema.json"))
    path = cfg.output_dir / "summary.json"
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(path)
    return 0 if summary["all_passed"] else 1


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (see shipped config schema)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="Monte Carlo seed override")
    common.add_argument("--samples", type=int, help="Monte Carlo sample-count override (0 disables MC)")
    common.add_argument("--suites", help="comma-separated suite names for `verify`")
    common.add_argument("--max-enum-n", type=int, dest="max_enum_n",
                        help="exact-enumeration guard override (default 24, hard cap 26)")
    parser = argparse.ArgumentParser(
        prog="spectral-mask",
        description="Verification tool for DFT-coefficient statistics of Bernoulli sampling masks",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("verify", parents=[common], help="run verification suites, write summary.json")
    sub.add_parser("tails", parents=[common], help="tail tables: exact vs Monte Carlo vs bounds")
    sub.add_parser("crossover", parents=[common], help="combined-bound branch classification table")
    sub.add_parser("psi2", parents=[common], help="psi2 norm and bound table")
    scan = sub.add_parser("scan", parents=[common], help="grid sweep of one scalar formula")
    scan.add_argument("--formula", required=True, choices=sorted(SCAN_FORMULAS))
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = build_config(load_config(args.config), args)
        if args.command == "verify":
            return cmd_verify(cfg)
        if args.command == "tails":
            return cmd_tails(cfg)
        if args.command == "crossover":
            return cmd_crossover(cfg)
        if args.command == "psi2":
            return cmd_psi2(cfg)
        return cmd_scan(cfg, args.formula)
    except (OSError, json.JSONDecodeError, jsonschema.ValidationError, SpectralMaskError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
