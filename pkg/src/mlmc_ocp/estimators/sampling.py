"""Monte Carlo and multilevel Monte Carlo estimators of the mean control.

Samples are processed in fixed-size chunks.  Each chunk is reduced locally
(``np.sum`` over a stacked block, Welford statistics for the norms) and the
chunk results are merged strictly in chunk order with compensated summation.
The reduction tree therefore depends only on the sample counts, never on the
number of workers, and reruns are bitwise identical for any pool size.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import fem
from ..mesh import MeshHierarchy, prolong
from ..ocp import OCPConfig, solve_pathwise
from ..randfield import KLBasis, PAPER_BASIS, draw_sample
from .allocation import LevelPlan

__all__ = [
    "CHUNK_SIZE",
    "MCResult",
    "LevelStats",
    "MLMCResult",
    "mc_estimate",
    "mlmc_estimate",
    "variance_decay_probe",
    "spawn_seeds",
]

CHUNK_SIZE = 16


def spawn_seeds(master_seed: int, n: int) -> list[int]:
    """Independent 63-bit seeds for ``n`` replications of an experiment."""
    ss = np.random.SeedSequence(master_seed)
    return [int(c.generate_state(1, np.uint64)[0] >> np.uint64(1)) for c in ss.spawn(n)]


@dataclass
class _ChunkStats:
    n: int
    total: np.ndarray
    norm_mean: float
    norm_m2: float
    sq_sum: float
    cost: float
    work: int
    newton_iters: int


class _Accumulator:
    """Ordered merge of chunk statistics (Kahan for vectors, Chan for norms)."""

    def __init__(self, size: int):
        self.n = 0
        self.total = np.zeros(size)
        self._comp = np.zeros(size)
        self.norm_mean = 0.0
        self.norm_m2 = 0.0
        self.sq_sum = 0.0
        self.cost = 0.0
        self.work = 0
        self.newton_iters = 0

    def add(self, c: _ChunkStats) -> None:
        y = c.total - self._comp
        t = self.total + y
        self._comp = (t - self.total) - y
        self.total = t
        n = self.n + c.n
        delta = c.norm_mean - self.norm_mean
        self.norm_mean += delta * c.n / n
        self.norm_m2 += c.norm_m2 + delta * delta * self.n * c.n / n
        self.n = n
        self.sq_sum += c.sq_sum
        self.cost += c.cost
        self.work += c.work
        self.newton_iters += c.newton_iters

    @property
    def mean(self) -> np.ndarray:
        return self.total / self.n

    @property
    def norm_variance(self) -> float:
        return self.norm_m2 / (self.n - 1) if self.n > 1 else 0.0


# --- worker side -----------------------------------------------------------

_CONTEXT: dict = {}


def _init_worker(context: dict) -> None:
    _CONTEXT.clear()
    _CONTEXT.update(context)


def _sample_vector(level: int, sample_id: int, stream: int, correction: bool):
    hierarchy: MeshHierarchy = _CONTEXT["hierarchy"]
    cfg: OCPConfig = _CONTEXT["cfg"]
    sample = draw_sample(_CONTEXT["seed"], sample_id, stream, _CONTEXT["basis"])
    t0 = time.perf_counter()
    fine = solve_pathwise(hierarchy[level], sample, cfg)
    v, work, iters = fine.u, fine.work, fine.newton_iters
    if correction and level > 0:
        coarse = solve_pathwise(hierarchy[level - 1], sample, cfg)
        v = v - prolong(hierarchy, level - 1, level, coarse.u)
        work += coarse.work
        iters += coarse.newton_iters
    return v, time.perf_counter() - t0, work, iters


def _run_chunk(task) -> _ChunkStats:
    level, start, stop, stream, correction = task
    mesh = _CONTEXT["hierarchy"][level]
    mass = fem.space(mesh).mass
    vecs, cost, work, iters = [], 0.0, 0, 0
    for sid in range(start, stop):
        v, c, w, it = _sample_vector(level, sid, stream, correction)
        vecs.append(v)
        cost += c
        work += w
        iters += it
    block = np.stack(vecs)
    sq = np.einsum("ij,ij->i", block, (mass @ block.T).T)
    norms = np.sqrt(np.maximum(sq, 0.0))
    return _ChunkStats(
        n=len(vecs),
        total=block.sum(axis=0),
        norm_mean=float(norms.mean()),
        norm_m2=float(((norms - norms.mean()) ** 2).sum()),
        sq_sum=float(sq.sum()),
        cost=cost,
        work=work,
        newton_iters=iters,
    )


def _chunks(level: int, M: int, stream: int, correction: bool):
    return [
        (level, start, min(start + CHUNK_SIZE, M), stream, correction)
        for start in range(0, M, CHUNK_SIZE)
    ]


def _execute(tasks, context: dict, workers: int) -> list[_ChunkStats]:
    if workers <= 1 or len(tasks) <= 1:
        saved = dict(_CONTEXT)
        _init_worker(context)
        try:
            return [_run_chunk(t) for t in tasks]
        finally:
            _init_worker(saved)
    with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(context,)) as pool:
        return list(pool.map(_run_chunk, tasks))


def _accumulate(stats, size: int) -> _Accumulator:
    acc = _Accumulator(size)
    for c in stats:
        acc.add(c)
    return acc


def _box_violation(values: np.ndarray, cfg: OCPConfig) -> float:
    over = max(float(np.max(values - cfg.u_b, initial=0.0)), float(np.max(cfg.u_a - values, initial=0.0)))
    return max(over, 0.0)


# --- estimators ----------------------------------------------------------------


@dataclass
class MCResult:
    mean: np.ndarray
    variance: float  # sample variance of ||u_i||
    cost: float  # summed per-sample solve time, seconds
    work: int
    M: int
    level: int
    mean_sq_norm: float
    newton_iters: int
    bound_violation: float


def mc_estimate(
    hierarchy: MeshHierarchy,
    level: int,
    M: int,
    cfg: OCPConfig,
    master_seed: int,
    workers: int = 1,
    stream: int = 0,
    basis: KLBasis = PAPER_BASIS,
) -> MCResult:
    """Sample mean of ``M`` pathwise controls on one level (sample ids 0..M-1)."""
    if M < 1:
        raise ValueError("need at least one sample")
    context = {"hierarchy": hierarchy, "cfg": cfg, "seed": master_seed, "basis": basis}
    stats = _execute(_chunks(level, M, stream, False), context, workers)
    acc = _accumulate(stats, hierarchy[level].n_interior)
    mean = acc.mean
    return MCResult(
        mean=mean,
        variance=acc.norm_variance,
        cost=acc.cost,
        work=acc.work,
        M=M,
        level=level,
        mean_sq_norm=acc.sq_sum / M,
        newton_iters=acc.newton_iters,
        bound_violation=_box_violation(mean, cfg),
    )


@dataclass
class LevelStats:
    level: int
    h: float
    M: int
    corr_mean_norm: float  # L2 norm of the averaged correction
    corr_var: float  # sample variance of ||u_l - u_{l-1}||
    corr_sq_mean: float  # sample mean of ||u_l - u_{l-1}||^2
    cost: float
    work: int


@dataclass
class MLMCResult:
    mean: np.ndarray  # on the finest level of the plans
    per_level: list[LevelStats]
    total_cost: float
    total_work: int
    seed: int
    bound_violation: float = 0.0
    level_means: list[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def L(self) -> int:
        return len(self.per_level) - 1


def mlmc_estimate(
    hierarchy: MeshHierarchy,
    plans: list[LevelPlan],
    cfg: OCPConfig,
    master_seed: int,
    workers: int = 1,
    coupled_streams: bool = False,
    basis: KLBasis = PAPER_BASIS,
) -> MLMCResult:
    """Telescoping estimator  sum_l mean_{M_l}(u_l - u_{l-1}),  u_{-1} = 0.

    Level ``l`` draws its own stream (tag ``l``), and every correction uses a
    single coefficient realisation on meshes ``l`` and ``l-1``.  With
    ``coupled_streams=True`` all levels reuse stream 0, a diagnostic mode in
    which, for equal ``M_l``, the corrections telescope sample by sample.
    The result is not projected onto the box; any violation is reported.
    """
    levels = [p.level for p in plans]
    if levels != list(range(len(plans))):
        raise ValueError(f"plans must cover levels 0..L contiguously, got {levels}")
    L = len(plans) - 1
    if L >= len(hierarchy):
        raise ValueError(f"hierarchy has {len(hierarchy)} levels, plans need {L + 1}")
    context = {"hierarchy": hierarchy, "cfg": cfg, "seed": master_seed, "basis": basis}
    tasks, owner = [], []
    for plan in plans:
        stream = 0 if coupled_streams else plan.level
        chunk = _chunks(plan.level, int(plan.M), stream, True)
        tasks += chunk
        owner += [plan.level] * len(chunk)
    stats = _execute(tasks, context, workers)

    mean = np.zeros(hierarchy[L].n_interior)
    per_level, level_means = [], []
    for plan in plans:
        l = plan.level
        acc = _accumulate([s for s, o in zip(stats, owner) if o == l], hierarchy[l].n_interior)
        m = acc.mean
        level_means.append(m)
        mean += prolong(hierarchy, l, L, m)
        per_level.append(
            LevelStats(
                level=l,
                h=hierarchy[l].h,
                M=acc.n,
                corr_mean_norm=fem.l2_norm(hierarchy[l], m),
                corr_var=acc.norm_variance,
                corr_sq_mean=acc.sq_sum / acc.n,
                cost=acc.cost,
                work=acc.work,
            )
        )
    return MLMCResult(
        mean=mean,
        per_level=per_level,
        total_cost=sum(s.cost for s in per_level),
        total_work=sum(s.work for s in per_level),
        seed=master_seed,
        bound_violation=_box_violation(mean, cfg),
        level_means=level_means,
    )


def variance_decay_probe(
    hierarchy: MeshHierarchy,
    cfg: OCPConfig,
    M_probe: int,
    levels,
    master_seed: int,
    workers: int = 1,
    basis: KLBasis = PAPER_BASIS,
) -> list[tuple[int, float]]:
    """Mean squared L2 norm of the coupled corrections on each level."""
    if M_probe < 2:
        raise ValueError("need at least two probe samples")
    context = {"hierarchy": hierarchy, "cfg": cfg, "seed": master_seed, "basis": basis}
    out = []
    for l in levels:
        stats = _execute(_chunks(l, M_probe, l, True), context, workers)
        acc = _accumulate(stats, hierarchy[l].n_interior)
        out.append((l, acc.sq_sum / acc.n))
    return out
