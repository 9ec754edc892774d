"""Genetic search over edge-spreading splits.

Each individual is a split ``B_0 .. B_W`` of a fixed base matrix. Its fitness
rewards convergence of the layered PEXIT analysis on a descending Eb/N0
ladder, and fast convergence at each rung:

    f = N_c * N_max - sum(N_it)

where ``N_c`` counts rungs that converged before the first failure.
"""

from __future__ import annotations

import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from pathlib import Path

import numpy as np

from .pexit import DEFAULT_START_DB, MiSampleConfig, layered_pexit_converges
from .protograph import Protomatrix, ProtographError, SplitSet, validate_split

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    tomllib = None


@dataclass
class GaConfig:
    """Search parameters. ``start_db=None`` picks the per-``r`` default."""

    K: int = 30
    N_g: int = 4
    p_c: float = 0.8
    p_m: float = 0.6
    W: int = 1
    L: int = 10
    n_max: int = 150
    start_db: float | None = None
    step_db: float = 0.05
    max_levels: int = 60
    max_generations: int = 50
    patience: int | None = None
    seed: int = 0
    r: int | None = None
    mi_samples: int = 100_000
    mi_seed: int = 0
    mi_resample: bool = True
    jobs: int = 1

    def __post_init__(self):
        if self.N_g < 1 or self.N_g > self.K:
            raise ValueError(f"need 1 <= N_g <= K, got N_g={self.N_g}, K={self.K}")
        if (self.K - self.N_g) % 2:
            raise ValueError("K - N_g must be even so offspring can be paired")
        for name in ("p_c", "p_m"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        if self.W < 0 or self.L < 1 or self.n_max < 1:
            raise ValueError("W >= 0, L >= 1 and n_max >= 1 are required")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be positive")

    @property
    def mi_config(self) -> MiSampleConfig:
        return MiSampleConfig(w=self.mi_samples, seed=self.mi_seed, resample=self.mi_resample)

    @classmethod
    def from_mapping(cls, d: dict) -> "GaConfig":
        known = {f.name: f for f in fields(cls)}
        extra = set(d) - set(known)
        if extra:
            raise ValueError(f"unknown GA config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "GaConfig":
        """Read ``key = value`` lines (TOML when available)."""
        text = Path(path).read_text()
        if tomllib is not None:
            return cls.from_mapping(tomllib.loads(text))
        d = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise ValueError(f"malformed config line: {raw!r}")
            d[key.strip()] = json.loads(val.strip())
        return cls.from_mapping(d)


@dataclass
class Individual:
    split: SplitSet
    fitness: int | None = None

    def copy(self) -> "Individual":
        return Individual(SplitSet(self.split.base, self.split.parts), self.fitness)


def fitness_from_counts(n_its, n_max: int) -> int:
    """``N_c * N_max - sum(N_it)`` over the converged rungs ``n_its``."""
    n_its = list(n_its)
    for n in n_its:
        if not 0 <= n <= n_max:
            raise ValueError(f"iteration count {n} outside [0, {n_max}]")
    return len(n_its) * n_max - sum(n_its)


def ladder_counts(split: SplitSet, cfg: GaConfig) -> list[int]:
    """Iteration counts of the converged rungs, stopping at the first failure."""
    r = cfg.r if cfg.r is not None else split.base.hadamard_order()
    start = cfg.start_db if cfg.start_db is not None else DEFAULT_START_DB.get(r)
    if start is None:
        raise ValueError(f"no default start Eb/N0 for r={r}; set start_db")
    mi = cfg.mi_config
    counts = []
    for k in range(cfg.max_levels):
        db = round(start - k * cfg.step_db, 10)
        ok, n_it = layered_pexit_converges(split, cfg.W, cfg.L, db, cfg.n_max, mi, r)
        if not ok:
            break
        counts.append(n_it)
    return counts


def fitness(ind: Individual | SplitSet, cfg: GaConfig) -> int:
    split = ind.split if isinstance(ind, Individual) else ind
    return fitness_from_counts(ladder_counts(split, cfg), cfg.n_max)


@lru_cache(maxsize=None)
def compositions(total: int, parts: int) -> tuple[tuple[int, ...], ...]:
    """All ordered ways to write ``total`` as ``parts`` nonnegative integers."""
    if parts < 1:
        raise ValueError("parts must be positive")
    if parts == 1:
        return ((total,),)
    out = []
    # stars and bars: choose the positions of the parts - 1 bars
    for bars in itertools.combinations(range(total + parts - 1), parts - 1):
        prev = -1
        comp = []
        for b in bars:
            comp.append(b - prev - 1)
            prev = b
        comp.append(total + parts - 2 - prev)
        out.append(tuple(comp))
    return tuple(out)


def random_split(base, W: int, rng: np.random.Generator) -> SplitSet:
    """Each entry's composition drawn uniformly over all compositions."""
    base = base if isinstance(base, Protomatrix) else Protomatrix(base)
    B = base.entries
    S = np.zeros((W + 1,) + B.shape, dtype=np.int64)
    for (u, v), b in np.ndenumerate(B):
        comps = compositions(int(b), W + 1)
        S[:, u, v] = comps[rng.integers(len(comps))]
    return SplitSet(base, tuple(S))


def _with_stack(split: SplitSet, S) -> SplitSet:
    return SplitSet(split.base, tuple(np.asarray(S)))


def selection_probabilities(fit) -> np.ndarray:
    f = np.asarray(fit, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("fitness values must be nonnegative")
    tot = f.sum()
    if tot == 0:
        return np.full(len(f), 1.0 / len(f))
    return f / tot


def select_indices(fit, cfg: GaConfig, rng: np.random.Generator) -> tuple[list[int], list[int]]:
    """Elite indices (best first, ties by position) and roulette draws."""
    fit = list(fit)
    elite = sorted(range(len(fit)), key=lambda k: (-fit[k], k))[: cfg.N_g]
    p = selection_probabilities(fit)
    drawn = rng.choice(len(fit), size=cfg.K - cfg.N_g, replace=True, p=p)
    return elite, [int(k) for k in drawn]


def select(population: list[Individual], cfg: GaConfig, rng: np.random.Generator) -> list[Individual]:
    """Offspring group: ``N_g`` elite copies followed by ``K - N_g`` roulette picks."""
    if any(ind.fitness is None for ind in population):
        raise ValueError("select needs evaluated individuals")
    elite, drawn = select_indices([ind.fitness for ind in population], cfg, rng)
    return [population[k].copy() for k in elite + drawn]


def crossover_window(m: int, n: int, rng: np.random.Generator) -> tuple[int, int]:
    """Flat column-major index range ``[lo, hi]`` of a random crossover window."""
    u1, u2 = sorted(int(x) for x in rng.integers(0, m, size=2))
    v1, v2 = sorted(int(x) for x in rng.integers(0, n, size=2))
    return v1 * m + u1, v2 * m + u2


def swap_window(a: SplitSet, b: SplitSet, lo: int, hi: int) -> tuple[SplitSet, SplitSet]:
    """Exchange column-major entries ``lo..hi`` between ``a`` and ``b`` in every part."""
    if a.base != b.base or a.W != b.W:
        raise ProtographError("crossover needs splits of the same base and width")
    Sa, Sb = a.stack(), b.stack()
    Wp, m, n = Sa.shape
    # a transposed view makes the column-major order contiguous
    fa = Sa.transpose(0, 2, 1).reshape(Wp, m * n)
    fb = Sb.transpose(0, 2, 1).reshape(Wp, m * n)
    seg = slice(lo, hi + 1)
    fa[:, seg], fb[:, seg] = fb[:, seg].copy(), fa[:, seg].copy()
    back = lambda f: f.reshape(Wp, n, m).transpose(0, 2, 1)
    return _with_stack(a, back(fa)), _with_stack(b, back(fb))


def crossover(a: Individual, b: Individual, cfg: GaConfig, rng: np.random.Generator) -> tuple[Individual, Individual]:
    """Swap a random column-major window with probability ``p_c``.

    The window is drawn on every call so the RNG stream does not depend on
    whether the swap happens.
    """
    lo, hi = crossover_window(a.split.m, a.split.n, rng)
    if rng.random() >= cfg.p_c:
        return a, b
    sa, sb = swap_window(a.split, b.split, lo, hi)
    a.split, b.split, a.fitness, b.fitness = sa, sb, None, None
    return a, b


def mutate(ind: Individual, cfg: GaConfig, rng: np.random.Generator) -> Individual:
    """With probability ``p_m`` re-split one nonzero base entry differently."""
    B = ind.split.base.entries
    nz = np.argwhere(B > 0)
    if not len(nz):
        raise ProtographError("mutation needs a base with a nonzero entry")
    u, v = (int(x) for x in nz[rng.integers(len(nz))])
    hit = rng.random() < cfg.p_m
    S = ind.split.stack()
    cur = tuple(int(x) for x in S[:, u, v])
    alts = [c for c in compositions(int(B[u, v]), S.shape[0]) if c != cur]
    pick = rng.integers(len(alts)) if alts else 0
    if not hit or not alts:
        return ind
    S[:, u, v] = alts[pick]
    ind.split, ind.fitness = _with_stack(ind.split, S), None
    return ind


@dataclass
class GenerationLog:
    generation: int
    best: int
    mean: float
    evaluations: int


@dataclass
class GaResult:
    best: Individual
    history: list[GenerationLog] = field(default_factory=list)
    population: list[Individual] = field(default_factory=list)


def _split_to_json(split: SplitSet) -> list:
    return split.stack().tolist()


def _split_from_json(base: Protomatrix, data) -> SplitSet:
    return SplitSet(base, tuple(np.asarray(data, dtype=np.int64)))


class _Evaluator:
    """Memoized fitness; ``jobs > 1`` fans new splits out to worker processes."""

    def __init__(self, cfg: GaConfig, fn=None, cache: dict | None = None):
        self.cfg = cfg
        self.fn = fn or fitness
        self.cache = {} if cache is None else cache
        self.evaluations = 0

    def __call__(self, pop: list[Individual]) -> None:
        todo = []
        for ind in pop:
            key = ind.split.key().hex()
            if key not in self.cache and key not in todo:
                todo.append(key)
        splits = {ind.split.key().hex(): ind.split for ind in pop}
        if todo:
            if self.cfg.jobs > 1 and len(todo) > 1:
                with ProcessPoolExecutor(max_workers=self.cfg.jobs) as ex:
                    vals = list(ex.map(self.fn, [splits[k] for k in todo], [self.cfg] * len(todo)))
            else:
                vals = [self.fn(splits[k], self.cfg) for k in todo]
            for k, f in zip(todo, vals):
                if f < 0:
                    raise ValueError("fitness must be nonnegative")
                self.cache[k] = int(f)
            self.evaluations += len(todo)
        for ind in pop:
            ind.fitness = self.cache[ind.split.key().hex()]


def _save_checkpoint(path, gen, pop, rng, best, history, cache, cfg):
    state = {
        "generation": gen,
        "config": asdict(cfg),
        "population": [_split_to_json(ind.split) for ind in pop],
        "fitness": [ind.fitness for ind in pop],
        "best": {"split": _split_to_json(best.split), "fitness": best.fitness},
        "history": [asdict(h) for h in history],
        "rng": rng.bit_generator.state,
        "cache": cache,
    }
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(json.dumps(state))
    tmp.replace(path)


def evolve(cfg: GaConfig, base, initial=None, checkpoint=None, resume=None, fitness_fn=None,
           log=None) -> GaResult:
    """Run the search and return the best-ever individual.

    Parameters
    ----------
    cfg : GaConfig
    base : Protomatrix or array
        Base matrix every individual splits.
    initial : sequence of SplitSet, optional
        Individuals placed at the front of the random initial population.
    checkpoint : path, optional
        Written after each generation's evaluation.
    resume : path, optional
        Checkpoint to continue from; the continuation matches an
        uninterrupted run with the same configuration.
    fitness_fn : callable, optional
        ``(split, cfg) -> int`` replacing the PEXIT ladder (tests, tooling).
    log : callable, optional
        Called with each :class:`GenerationLog`.
    """
    base = base if isinstance(base, Protomatrix) else Protomatrix(base)
    if resume is not None:
        st = json.loads(Path(resume).read_text())
        rng = np.random.default_rng()
        rng.bit_generator.state = st["rng"]
        pop = [Individual(_split_from_json(base, s), f) for s, f in zip(st["population"], st["fitness"])]
        best = Individual(_split_from_json(base, st["best"]["split"]), st["best"]["fitness"])
        history = [GenerationLog(**h) for h in st["history"]]
        ev = _Evaluator(cfg, fitness_fn, st["cache"])
        ev.evaluations = history[-1].evaluations if history else 0
        gen = st["generation"]
        if gen + 1 >= cfg.max_generations or _plateaued(history, cfg):
            return GaResult(best, history, pop)
        pop = _breed(pop, cfg, rng)
        gen += 1
    else:
        rng = np.random.default_rng(cfg.seed)
        pop = [Individual(s) for s in (initial or [])][: cfg.K]
        for ind in pop:
            if ind.split.base != base or ind.split.W != cfg.W or validate_split(ind.split) is not None:
                raise ProtographError("initial individual does not split the base with the configured W")
        while len(pop) < cfg.K:
            pop.append(Individual(random_split(base, cfg.W, rng)))
        best, history, gen = None, [], 0
        ev = _Evaluator(cfg, fitness_fn)

    while True:
        ev(pop)
        fit = [ind.fitness for ind in pop]
        top = int(np.argmax(fit))
        if history and fit[top] < history[-1].best:
            raise AssertionError("elitism violated: best fitness decreased")
        if best is None or fit[top] > best.fitness:
            best = pop[top].copy()
        history.append(GenerationLog(gen, int(fit[top]), float(np.mean(fit)), ev.evaluations))
        if log is not None:
            log(history[-1])
        if checkpoint is not None:
            _save_checkpoint(checkpoint, gen, pop, rng, best, history, ev.cache, cfg)
        if gen + 1 >= cfg.max_generations or _plateaued(history, cfg):
            return GaResult(best, history, pop)
        pop = _breed(pop, cfg, rng)
        gen += 1


def _plateaued(history: list[GenerationLog], cfg: GaConfig) -> bool:
    p = cfg.patience
    if p is None or len(history) <= p:
        return False
    return history[-1].best <= history[-1 - p].best


def _breed(pop: list[Individual], cfg: GaConfig, rng) -> list[Individual]:
    off = select(pop, cfg, rng)
    rest = off[cfg.N_g:]
    order = rng.permutation(len(rest))
    for a, b in zip(order[0::2], order[1::2]):
        crossover(rest[a], rest[b], cfg, rng)
    for ind in rest:
        mutate(ind, cfg, rng)
    return off[: cfg.N_g] + rest
