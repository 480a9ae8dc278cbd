"""Streaming Monte Carlo estimators with seeded, mergeable accumulators.

Sampling uses the counter-based Philox generator (``philox4x64-10``): batch b
draws from an independent substream keyed ``seed XOR splitmix64(b)``, so a
given config produces bit-identical results no matter how many workers
computed the batches.  Per-batch accumulators merge in a deterministic binary
tree by batch index.

Reductions are single-pass and must be registered up front; asking for an
unregistered threshold or scale afterwards raises ``QueryError`` instead of
silently re-running.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from .errors import CapabilityError, ParameterDomainError, QueryError
from .model import (
    REAL_VALUED_PARTS,
    VALUE_GROUPING_TOL,
    ModelParams,
    Part,
    _inclusion_threshold,
    atom_table,
)
from .oracle import Psi2Definition, Psi2Estimate

#: Generator family used for every draw; echoed in snapshots for audits.
RNG_ALGORITHM = "philox4x64-10"

#: Default ceiling on samples * N for one run.
DEFAULT_WORK_CEILING = 1 << 33

_MASK64 = (1 << 64) - 1
# Elements (samples x N) generated per internal chunk; a fixed function of N
# only, so chunking never perturbs the stream-to-sample mapping.
_CHUNK_ELEMENTS = 1 << 22


def _splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def _substream(seed: int, batch_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed ^ _splitmix64(batch_index)))


@dataclass(frozen=True)
class McConfig:
    """Sampling plan: total draws, seed, batch granularity, CI confidence.

    ``batch`` is clamped to ``samples`` so the defaults stay valid for small
    runs; batching is part of the reproducibility contract (it fixes the
    batch-to-substream mapping), so compare like with like.
    """

    samples: int
    seed: int
    batch: int = 1 << 18
    confidence: float = 0.99

    def __post_init__(self) -> None:
        if not isinstance(self.samples, int) or self.samples < 1:
            raise ParameterDomainError(f"samples must be a positive integer, got {self.samples!r}")
        if not isinstance(self.seed, int) or not 0 <= self.seed <= _MASK64:
            raise ParameterDomainError(f"seed must be a 64-bit integer, got {self.seed!r}")
        if not isinstance(self.batch, int) or self.batch < 1:
            raise ParameterDomainError(f"batch must be a positive integer, got {self.batch!r}")
        object.__setattr__(self, "batch", min(self.batch, self.samples))
        if not (
            isinstance(self.confidence, float)
            and math.isfinite(self.confidence)
            and 0.0 < self.confidence < 1.0
        ):
            raise ParameterDomainError(
                f"confidence must lie strictly inside (0, 1), got {self.confidence!r}"
            )


@dataclass(frozen=True)
class McQueries:
    """Reductions to register before the pass.

    Thresholds, exponential scales and extra moment orders apply to every
    listed part.  Centered-modulus queries need an explicit ``modulus_center``
    (the exact expected modulus from the oracle, or a prior estimate); the
    engine never guesses it.
    """

    parts: tuple[Part, ...] = (Part.REAL, Part.IMAG, Part.MODULUS)
    moment_orders: tuple[int, ...] = ()
    tail_thresholds: tuple[float, ...] = ()
    exp_scales: tuple[float, ...] = ()
    modulus_center: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "parts", tuple(self.parts))
        object.__setattr__(self, "moment_orders", tuple(int(k) for k in self.moment_orders))
        object.__setattr__(self, "tail_thresholds", tuple(float(t) for t in self.tail_thresholds))
        object.__setattr__(self, "exp_scales", tuple(float(k) for k in self.exp_scales))
        if not self.parts:
            raise ParameterDomainError("at least one part must be requested")
        for part in self.parts:
            if part not in REAL_VALUED_PARTS:
                raise ParameterDomainError(f"queries need real-valued parts, got {part!r}")
        for k in self.moment_orders:
            if k < 1:
                raise ParameterDomainError(f"moment orders must be >= 1, got {k}")
        for t in self.tail_thresholds:
            if not (math.isfinite(t) and t >= 0.0):
                raise ParameterDomainError(f"tail thresholds must be finite and >= 0, got {t}")
        for k in self.exp_scales:
            if not (math.isfinite(k) and k > 0.0):
                raise ParameterDomainError(f"exp-moment scales must be finite and > 0, got {k}")
        if Part.MODULUS_CENTERED in self.parts and self.modulus_center is None:
            raise ParameterDomainError(
                "modulus_centered queries need an explicit modulus_center"
            )


class CIMethod(enum.Enum):
    HOEFFDING_INTERVAL = "hoeffding_interval"
    NORMAL_APPROX = "normal_approx"


@dataclass(frozen=True)
class EstimateWithCI:
    """Point estimate with confidence half-width over n consumed samples."""

    estimate: float
    half_width: float
    n: int
    method: CIMethod

    def __post_init__(self) -> None:
        if self.half_width < 0:
            raise ParameterDomainError("half_width must be >= 0")

    def covers(self, value: float) -> bool:
        # The 1e-12 cushion absorbs float-level disagreement when the target
        # quantity is deterministic and the interval collapses to a point.
        return abs(self.estimate - value) <= self.half_width + 1e-12


# Extra moment orders tracked beyond the named sum fields: order 4 backs the
# normal-approx CI of the always-on second moment.
_BASE_EXTRA_ORDERS = (4,)


def _tracked_orders(queries: McQueries, part: Part) -> tuple[int, ...]:
    orders = set(_BASE_EXTRA_ORDERS)
    if part is Part.MODULUS_CENTERED:
        orders.update((1, 2))
    for k in queries.moment_orders:
        orders.add(k)
        orders.add(2 * k)  # backs the CI of order k
    return tuple(sorted(orders))


@dataclass
class Accumulator:
    """Mergeable single-pass reductions for one (params, queries, config) run."""

    params: ModelParams
    queries: McQueries
    cfg: McConfig
    n: int = 0
    sum_re: float = 0.0
    sum_im: float = 0.0
    sum_sq_re: float = 0.0
    sum_sq_im: float = 0.0
    sum_mod: float = 0.0
    sum_sq_mod: float = 0.0
    moment_sums: dict = field(default_factory=dict)
    threshold_hits: dict = field(default_factory=dict)
    exp_sums: dict = field(default_factory=dict)
    exp_sq_sums: dict = field(default_factory=dict)

    @classmethod
    def zero(cls, params: ModelParams, queries: McQueries, cfg: McConfig) -> "Accumulator":
        acc = cls(params, queries, cfg)
        for part in queries.parts:
            for k in _tracked_orders(queries, part):
                acc.moment_sums[(part, k)] = 0.0
            for t in queries.tail_thresholds:
                acc.threshold_hits[(part, t)] = 0
            for K in queries.exp_scales:
                acc.exp_sums[(part, K)] = 0.0
                acc.exp_sq_sums[(part, K)] = 0.0
        return acc


def _part_arrays(acc: Accumulator, re: np.ndarray, im: np.ndarray) -> dict:
    mod = np.hypot(re, im)
    out = {Part.REAL: re, Part.IMAG: im, Part.MODULUS: mod}
    if Part.MODULUS_CENTERED in acc.queries.parts:
        out[Part.MODULUS_CENTERED] = mod - acc.queries.modulus_center
    return out


def _accumulate(acc: Accumulator, re: np.ndarray, im: np.ndarray) -> None:
    arrays = _part_arrays(acc, re, im)
    mod = arrays[Part.MODULUS]
    acc.n += int(re.size)
    acc.sum_re += float(re.sum())
    acc.sum_im += float(im.sum())
    acc.sum_sq_re += float(np.dot(re, re))
    acc.sum_sq_im += float(np.dot(im, im))
    acc.sum_mod += float(mod.sum())
    acc.sum_sq_mod += float(np.dot(mod, mod))
    for (part, k), _ in acc.moment_sums.items():
        acc.moment_sums[(part, k)] += float(np.sum(arrays[part] ** k))
    for (part, t), _ in acc.threshold_hits.items():
        acc.threshold_hits[(part, t)] += int(
            np.count_nonzero(np.abs(arrays[part]) >= t - VALUE_GROUPING_TOL)
        )
    if acc.exp_sums:
        with np.errstate(over="ignore"):
            for (part, K), _ in acc.exp_sums.items():
                x = arrays[part]
                e = np.exp((x * x) / (K * K))
                acc.exp_sums[(part, K)] += float(e.sum())
                acc.exp_sq_sums[(part, K)] += float(np.dot(e, e))


def _batch_part_values(
    params: ModelParams, rng: np.random.Generator, rows: int
) -> tuple[np.ndarray, np.ndarray]:
    atoms = atom_table(params.N, params.l)
    cos_col = np.ascontiguousarray(atoms.real)
    msin_col = np.ascontiguousarray(atoms.imag)
    if params.m == params.N:
        incl = np.ones((rows, params.N), dtype=np.float64)
    else:
        threshold = np.uint64(_inclusion_threshold(params.m, params.N))
        u = rng.integers(0, 2**64, size=(rows, params.N), dtype=np.uint64)
        incl = (u < threshold).astype(np.float64)
    return incl @ cos_col, incl @ msin_col


def _run_batch(
    params: ModelParams, queries: McQueries, cfg: McConfig, batch_index: int, size: int
) -> Accumulator:
    acc = Accumulator.zero(params, queries, cfg)
    rng = _substream(cfg.seed, batch_index)
    rows_per_chunk = max(1, _CHUNK_ELEMENTS // params.N)
    done = 0
    while done < size:
        rows = min(rows_per_chunk, size - done)
        re, im = _batch_part_values(params, rng, rows)
        _accumulate(acc, re, im)
        done += rows
    return acc


def merge(a: Accumulator, b: Accumulator) -> Accumulator:
    """Commutative pairwise merge: field-wise addition of the reductions."""
    if (a.params, a.queries, a.cfg) != (b.params, b.queries, b.cfg):
        raise ParameterDomainError("cannot merge accumulators from different runs")
    if (
        a.moment_sums.keys() != b.moment_sums.keys()
        or a.threshold_hits.keys() != b.threshold_hits.keys()
        or a.exp_sums.keys() != b.exp_sums.keys()
    ):
        raise ParameterDomainError("cannot merge accumulators with different registrations")
    out = Accumulator(
        a.params,
        a.queries,
        a.cfg,
        n=a.n + b.n,
        sum_re=a.sum_re + b.sum_re,
        sum_im=a.sum_im + b.sum_im,
        sum_sq_re=a.sum_sq_re + b.sum_sq_re,
        sum_sq_im=a.sum_sq_im + b.sum_sq_im,
        sum_mod=a.sum_mod + b.sum_mod,
        sum_sq_mod=a.sum_sq_mod + b.sum_sq_mod,
        moment_sums={k: v + b.moment_sums[k] for k, v in a.moment_sums.items()},
        threshold_hits={k: v + b.threshold_hits[k] for k, v in a.threshold_hits.items()},
        exp_sums={k: v + b.exp_sums[k] for k, v in a.exp_sums.items()},
        exp_sq_sums={k: v + b.exp_sq_sums[k] for k, v in a.exp_sq_sums.items()},
    )
    return out


def merge_tree(accs: list[Accumulator]) -> Accumulator:
    """Deterministic binary-tree reduction by batch index."""
    if not accs:
        raise ParameterDomainError("nothing to merge")
    layer = list(accs)
    while len(layer) > 1:
        nxt = []
        for i in range(0, len(layer), 2):
            if i + 1 < len(layer):
                nxt.append(merge(layer[i], layer[i + 1]))
            else:
                nxt.append(layer[i])
        layer = nxt
    return layer[0]


def _batch_sizes(cfg: McConfig) -> list[int]:
    full, rem = divmod(cfg.samples, cfg.batch)
    sizes = [cfg.batch] * full
    if rem:
        sizes.append(rem)
    return sizes


def _check_work(params: ModelParams, samples: int, work_ceiling: int | None) -> None:
    if work_ceiling is not None and params.N * samples > work_ceiling:
        raise CapabilityError(
            f"samples*N = {params.N * samples} exceeds the work ceiling {work_ceiling}; "
            "raise work_ceiling explicitly to proceed"
        )


def mc_run(
    params: ModelParams,
    queries: McQueries,
    cfg: McConfig,
    *,
    workers: int = 1,
    work_ceiling: int | None = DEFAULT_WORK_CEILING,
) -> Accumulator:
    """Single streaming pass over cfg.samples masks filling every registered
    reduction.

    Bit-identical for a given (params, queries, cfg) regardless of
    ``workers``: batch b always draws from substream seed XOR splitmix64(b)
    and merging is a fixed binary tree by batch index.
    """
    if not isinstance(workers, int) or workers < 1:
        raise ParameterDomainError(f"workers must be a positive integer, got {workers!r}")
    _check_work(params, cfg.samples, work_ceiling)
    sizes = _batch_sizes(cfg)
    if workers == 1 or len(sizes) == 1:
        accs = [_run_batch(params, queries, cfg, b, size) for b, size in enumerate(sizes)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            accs = list(
                pool.map(
                    lambda item: _run_batch(params, queries, cfg, item[0], item[1]),
                    enumerate(sizes),
                )
            )
    return merge_tree(accs)


def _z_value(confidence: float) -> float:
    return NormalDist().inv_cdf(0.5 * (1.0 + confidence))


def _moment_sum(acc: Accumulator, part: Part, order: int) -> float:
    named = {
        (Part.REAL, 1): acc.sum_re,
        (Part.IMAG, 1): acc.sum_im,
        (Part.MODULUS, 1): acc.sum_mod,
        (Part.REAL, 2): acc.sum_sq_re,
        (Part.IMAG, 2): acc.sum_sq_im,
        (Part.MODULUS, 2): acc.sum_sq_mod,
    }
    if (part, order) in named:
        return named[(part, order)]
    try:
        return acc.moment_sums[(part, order)]
    except KeyError:
        raise QueryError(
            f"moment order {order} for part {part.value} was not registered before the run"
        ) from None


def mc_moment(acc: Accumulator, part: Part, order: int) -> EstimateWithCI:
    """Sample moment E[X^order] with a normal-approximation CI.

    The half-width uses the sample variance of X^order, so the doubled order
    must have been tracked; orders 1 and 2 always are.
    """
    s_k = _moment_sum(acc, part, order)
    s_2k = _moment_sum(acc, part, 2 * order)
    n = acc.n
    estimate = s_k / n
    variance = max(s_2k / n - estimate * estimate, 0.0)
    half = _z_value(acc.cfg.confidence) * math.sqrt(variance / n)
    return EstimateWithCI(estimate, half, n, CIMethod.NORMAL_APPROX)


def mc_tail(acc: Accumulator, part: Part, t: float) -> EstimateWithCI:
    """Hit fraction for |X| >= t with a two-sided distribution-free interval.

    Thresholds absorb the shared value tolerance exactly like the oracle, so
    boundary atoms are counted identically on both sides.  The half-width is
    sqrt(ln(2/(1-confidence)) / (2n)) (Hoeffding), valid at any tail depth.
    """
    key = (part, float(t))
    if key not in acc.threshold_hits:
        raise QueryError(
            f"tail threshold {t!r} for part {part.value} was not registered before the run"
        )
    n = acc.n
    estimate = acc.threshold_hits[key] / n
    half = math.sqrt(math.log(2.0 / (1.0 - acc.cfg.confidence)) / (2.0 * n))
    return EstimateWithCI(estimate, half, n, CIMethod.HOEFFDING_INTERVAL)


def mc_exp_moment(acc: Accumulator, part: Part, K: float) -> EstimateWithCI:
    """Sample E[exp(X^2/K^2)] with a normal-approximation CI."""
    key = (part, float(K))
    if key not in acc.exp_sums:
        raise QueryError(
            f"exp-moment scale {K!r} for part {part.value} was not registered before the run"
        )
    n = acc.n
    estimate = acc.exp_sums[key] / n
    variance = max(acc.exp_sq_sums[key] / n - estimate * estimate, 0.0)
    half = _z_value(acc.cfg.confidence) * math.sqrt(variance / n)
    return EstimateWithCI(estimate, half, n, CIMethod.NORMAL_APPROX)


def _collect_part_values(
    params: ModelParams,
    part: Part,
    cfg: McConfig,
    center: float | None,
    workers: int,
) -> np.ndarray:
    def one(item: tuple[int, int]) -> np.ndarray:
        b, size = item
        rng = _substream(cfg.seed, b)
        rows_per_chunk = max(1, _CHUNK_ELEMENTS // params.N)
        chunks = []
        done = 0
        while done < size:
            rows = min(rows_per_chunk, size - done)
            re, im = _batch_part_values(params, rng, rows)
            if part is Part.REAL:
                chunks.append(re)
            elif part is Part.IMAG:
                chunks.append(im)
            elif part is Part.MODULUS:
                chunks.append(np.hypot(re, im))
            else:
                chunks.append(np.hypot(re, im) - center)
            done += rows
        return np.concatenate(chunks)

    items = list(enumerate(_batch_sizes(cfg)))
    if workers == 1 or len(items) == 1:
        parts = [one(item) for item in items]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(one, items))
    return np.concatenate(parts)


def mc_psi2(
    params: ModelParams,
    part: Part,
    cfg: McConfig,
    tol: float = 1e-6,
    *,
    center: float | None = None,
    workers: int = 1,
    work_ceiling: int | None = DEFAULT_WORK_CEILING,
) -> Psi2Estimate:
    """Empirical exp-moment psi2 norm over one fixed, reusable sample set.

    The same draws back every K probe (common random numbers), so the
    bisection sees a monotone objective.  The returned bracket is widened by
    the objective's sampling noise at the root through its local slope; it is
    a diagnostic, not a certified enclosure.
    """
    if part not in REAL_VALUED_PARTS:
        raise ParameterDomainError(f"mc_psi2 needs a real-valued part, got {part!r}")
    if part is Part.MODULUS_CENTERED and center is None:
        raise ParameterDomainError("centered-modulus psi2 needs an explicit center")
    if not (math.isfinite(tol) and tol > 0):
        raise ParameterDomainError(f"tol must be a positive real, got {tol!r}")
    _check_work(params, cfg.samples, work_ceiling)
    values = _collect_part_values(params, part, cfg, center, workers)
    sq = values * values
    if float(np.sqrt(sq.max(initial=0.0))) <= VALUE_GROUPING_TOL:
        return Psi2Estimate(0.0, Psi2Definition.ORLICZ_EXP_MOMENT, (0.0, 0.0), tol)

    def objective(K: float) -> float:
        with np.errstate(over="ignore"):
            return float(np.mean(np.exp(sq / (K * K))))

    hi = params.N / math.sqrt(math.log(2.0)) + 1.0
    lo = 1e-6
    while objective(lo) <= 2.0:
        lo *= 0.0625
        if lo < 1e-300:
            return Psi2Estimate(0.0, Psi2Definition.ORLICZ_EXP_MOMENT, (0.0, 0.0), tol)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if objective(mid) > 2.0:
            lo = mid
        else:
            hi = mid
    root = 0.5 * (lo + hi)
    with np.errstate(over="ignore"):
        at_root = np.exp(sq / (root * root))
    se = float(at_root.std()) / math.sqrt(at_root.size)
    h = max(1e-6, 1e-3 * root)
    slope = abs(objective(root + h) - objective(root - h)) / (2.0 * h)
    widen = se / max(slope, 1e-300)
    bracket = (max(lo - widen, 0.0), hi + widen)
    return Psi2Estimate(
        root, Psi2Definition.ORLICZ_EXP_MOMENT, bracket, bracket[1] - bracket[0]
    )


def snapshot(acc: Accumulator) -> dict:
    """JSON-ready state echo (config, RNG algorithm, every reduction)."""

    def key_str(part: Part, x) -> str:
        return f"{part.value}:{x!r}"

    return {
        "rng_algorithm": RNG_ALGORITHM,
        "params": {"N": acc.params.N, "l": acc.params.l, "m": acc.params.m},
        "config": {
            "samples": acc.cfg.samples,
            "seed": acc.cfg.seed,
            "batch": acc.cfg.batch,
            "confidence": acc.cfg.confidence,
        },
        "queries": {
            "parts": [p.value for p in acc.queries.parts],
            "moment_orders": list(acc.queries.moment_orders),
            "tail_thresholds": list(acc.queries.tail_thresholds),
            "exp_scales": list(acc.queries.exp_scales),
            "modulus_center": acc.queries.modulus_center,
        },
        "n": acc.n,
        "sums": {
            "re": acc.sum_re,
            "im": acc.sum_im,
            "sq_re": acc.sum_sq_re,
            "sq_im": acc.sum_sq_im,
            "mod": acc.sum_mod,
            "sq_mod": acc.sum_sq_mod,
        },
        "moment_sums": {
            key_str(p, k): v for (p, k), v in sorted(acc.moment_sums.items(), key=lambda kv: (kv[0][0].value, kv[0][1]))
        },
        "threshold_hits": {
            key_str(p, t): v for (p, t), v in sorted(acc.threshold_hits.items(), key=lambda kv: (kv[0][0].value, kv[0][1]))
        },
        "exp_sums": {
            key_str(p, K): v for (p, K), v in sorted(acc.exp_sums.items(), key=lambda kv: (kv[0][0].value, kv[0][1]))
        },
        "exp_sq_sums": {
            key_str(p, K): v for (p, K), v in sorted(acc.exp_sq_sums.items(), key=lambda kv: (kv[0][0].value, kv[0][1]))
        },
    }
