"""Multi-objective selection machinery.

Pareto dominance with per-objective directions, NSGA-II mating selection
(fast non-dominated sorting + crowding distance + binary tournaments), SPEA-2
elite selection (strength/raw/density fitness and distance-based archive
truncation), and the run-global hall of fame.

All functions are pure over immutable inputs; randomness enters only through
an explicit rng argument.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from .errors import ObjectiveMismatch
from .genome import Genome

MAXIMIZE = "maximize"
MINIMIZE = "minimize"


@dataclass(frozen=True)
class Objective:
    name: str
    direction: str

    def __post_init__(self):
        if self.direction not in (MAXIMIZE, MINIMIZE):
            raise ValueError(f"direction must be maximize or minimize, got {self.direction!r}")


@dataclass(frozen=True)
class ObjectiveSpec:
    objectives: tuple[Objective, ...]

    def __post_init__(self):
        if not self.objectives:
            raise ValueError("at least one objective required")
        names = [o.name for o in self.objectives]
        if len(set(names)) != len(names):
            raise ValueError("objective names must be unique")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(o.name for o in self.objectives)

    @classmethod
    def of(cls, *pairs: tuple[str, str]) -> "ObjectiveSpec":
        return cls(objectives=tuple(Objective(n, d) for n, d in pairs))


@dataclass(frozen=True)
class Fitness:
    """Validity flag plus named objective values (present iff valid)."""

    valid: bool
    values: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.valid and self.values:
            raise ValueError("invalid fitness must carry no values")
        for name, v in self.values.items():
            if not math.isfinite(v):
                raise ValueError(f"objective {name!r} is not finite: {v!r}")

    @classmethod
    def invalid(cls) -> "Fitness":
        return cls(valid=False)

    @classmethod
    def of(cls, **values: float) -> "Fitness":
        return cls(valid=True, values={k: float(v) for k, v in values.items()})

    def to_dict(self) -> dict:
        return {"valid": self.valid, "values": dict(self.values)} if self.valid else {"valid": False}

    @classmethod
    def from_dict(cls, d: dict) -> "Fitness":
        return cls(valid=d["valid"], values=dict(d.get("values", {})))


@dataclass(frozen=True)
class ScoredGenome:
    genome: Genome
    fitness: Fitness

    @property
    def genome_id(self) -> str:
        return self.genome.genome_id


def _min_vector(f: Fitness, spec: ObjectiveSpec) -> tuple[float, ...]:
    """Objective values oriented so lower is always better."""
    out = []
    for obj in spec.objectives:
        if obj.name not in f.values:
            raise ObjectiveMismatch(f"fitness missing objective {obj.name!r}")
        v = f.values[obj.name]
        out.append(-v if obj.direction == MAXIMIZE else v)
    return tuple(out)


def dominates(a: Fitness, b: Fitness, spec: ObjectiveSpec) -> bool:
    """Pareto dominance after direction normalization.

    A valid fitness dominates any invalid one; an invalid fitness dominates
    nothing.
    """
    if not a.valid:
        return False
    if not b.valid:
        return True
    va = _min_vector(a, spec)
    vb = _min_vector(b, spec)
    no_worse = all(x <= y for x, y in zip(va, vb))
    strictly_better = any(x < y for x, y in zip(va, vb))
    return no_worse and strictly_better


def fast_nondominated_sort(pop: list[ScoredGenome], spec: ObjectiveSpec) -> list[list[int]]:
    """Deb's fast non-dominated sort; returns fronts of population indices.

    Invalid-fitness individuals are dominated by every valid one, so they
    always land in the final front.
    """
    n = len(pop)
    dominated_by: list[list[int]] = [[] for _ in range(n)]
    domination_count = [0] * n
    fronts: list[list[int]] = [[]]

    for p in range(n):
        for q in range(n):
            if p == q:
                continue
            if dominates(pop[p].fitness, pop[q].fitness, spec):
                dominated_by[p].append(q)
            elif dominates(pop[q].fitness, pop[p].fitness, spec):
                domination_count[p] += 1
        if domination_count[p] == 0:
            fronts[0].append(p)

    i = 0
    while fronts[i]:
        nxt: list[int] = []
        for p in fronts[i]:
            for q in dominated_by[p]:
                domination_count[q] -= 1
                if domination_count[q] == 0:
                    nxt.append(q)
        i += 1
        fronts.append(sorted(nxt))
    fronts.pop()
    return fronts


def crowding_distance(front: list[ScoredGenome], spec: ObjectiveSpec) -> list[float]:
    """NSGA-II crowding distance; boundary members get infinity.

    Interior members accumulate (next - prev) / (max - min) per objective;
    zero-range objectives contribute nothing. All members must be valid.
    """
    n = len(front)
    if n == 0:
        return []
    dist = [0.0] * n
    if n <= 2:
        return [math.inf] * n
    for obj in spec.objectives:
        vals = []
        for m in front:
            if obj.name not in m.fitness.values:
                raise ObjectiveMismatch(f"fitness missing objective {obj.name!r}")
            vals.append(m.fitness.values[obj.name])
        order = sorted(range(n), key=lambda i: vals[i])
        lo, hi = vals[order[0]], vals[order[-1]]
        dist[order[0]] = math.inf
        dist[order[-1]] = math.inf
        span = hi - lo
        if span == 0:
            continue
        for k in range(1, n - 1):
            i = order[k]
            dist[i] += (vals[order[k + 1]] - vals[order[k - 1]]) / span
    return dist


def _dedup_by_id(pop: list[ScoredGenome]) -> list[ScoredGenome]:
    seen: set[str] = set()
    out = []
    for m in pop:
        if m.genome_id not in seen:
            seen.add(m.genome_id)
            out.append(m)
    return out


def nsga2_select(
    pop: list[ScoredGenome],
    n: int,
    spec: ObjectiveSpec,
    rng: random.Random,
    record: dict | None = None,
) -> list[ScoredGenome]:
    """Binary tournament selection with replacement over NSGA-II ranks.

    Lower front rank wins; equal ranks fall back to larger crowding distance;
    full ties are settled by an rng coin flip. Exact duplicates (same
    genome_id) are collapsed to one representative before the tournaments.
    When `record` is given, the number of coin flips is stored under
    "tiebreaks".
    """
    if n == 0:
        return []
    if not pop:
        raise ValueError("population must be non-empty")
    reps = _dedup_by_id(pop)
    fronts = fast_nondominated_sort(reps, spec)
    rank = [0] * len(reps)
    crowd = [0.0] * len(reps)
    for r, front in enumerate(fronts):
        members = [reps[i] for i in front]
        if all(m.fitness.valid for m in members):
            dists = crowding_distance(members, spec)
        else:
            dists = [0.0] * len(front)
        for i, d in zip(front, dists):
            rank[i] = r
            crowd[i] = d

    tiebreaks = 0
    chosen: list[ScoredGenome] = []
    for _ in range(n):
        i = rng.randrange(len(reps))
        j = rng.randrange(len(reps))
        if rank[i] != rank[j]:
            win = i if rank[i] < rank[j] else j
        elif crowd[i] != crowd[j]:
            win = i if crowd[i] > crowd[j] else j
        elif i == j:
            win = i
        else:
            tiebreaks += 1
            win = i if rng.random() < 0.5 else j
        chosen.append(reps[win])
    if record is not None:
        record["tiebreaks"] = tiebreaks
    return chosen


@dataclass(frozen=True)
class Spea2Score:
    strength: int
    raw: int
    density: float
    total: float


def _normalized_points(members: list[ScoredGenome], spec: ObjectiveSpec) -> list[tuple[float, ...]]:
    cols = [[m.fitness.values[o.name] for m in members] for o in spec.objectives]
    spans = [(min(c), max(c) - min(c)) for c in cols]
    pts = []
    for i in range(len(members)):
        pts.append(tuple(
            (cols[k][i] - spans[k][0]) / spans[k][1] if spans[k][1] else 0.0
            for k in range(len(cols))
        ))
    return pts


def _euclid(a: tuple[float, ...], b: tuple[float, ...]) -> float:
    return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))


def spea2_fitness(pop: list[ScoredGenome], spec: ObjectiveSpec) -> list[Spea2Score]:
    """SPEA-2 fine-grained fitness: strength, raw fitness, k-NN density, total.

    k = round(sqrt(N)) over the pool; distances are Euclidean in per-objective
    min-max normalized space computed among valid members. Invalid members get
    sigma = 0 (density 0.5); since every valid member dominates them, their
    raw fitness keeps their total >= 1 whenever any valid member exists.
    """
    n = len(pop)
    strengths = [0] * n
    dominators: list[list[int]] = [[] for _ in range(n)]
    for i in range(n):
        for j in range(n):
            if i != j and dominates(pop[i].fitness, pop[j].fitness, spec):
                strengths[i] += 1
                dominators[j].append(i)
    raws = [sum(strengths[d] for d in dominators[i]) for i in range(n)]

    valid_idx = [i for i in range(n) if pop[i].fitness.valid]
    sigmas = {i: 0.0 for i in range(n)}
    if len(valid_idx) > 1:
        pts = _normalized_points([pop[i] for i in valid_idx], spec)
        k = max(1, min(round(math.sqrt(len(valid_idx))), len(valid_idx) - 1))
        for a, i in enumerate(valid_idx):
            dists = sorted(_euclid(pts[a], pts[b]) for b in range(len(valid_idx)) if b != a)
            sigmas[i] = dists[k - 1]

    return [
        Spea2Score(
            strength=strengths[i],
            raw=raws[i],
            density=1.0 / (sigmas[i] + 2.0),
            total=raws[i] + 1.0 / (sigmas[i] + 2.0),
        )
        for i in range(n)
    ]


def spea2_environmental_select(
    pop: list[ScoredGenome],
    archive_size: int,
    spec: ObjectiveSpec,
) -> list[ScoredGenome]:
    """SPEA-2 archive filling: non-dominated members, truncated or topped up.

    All total-fitness < 1 members enter. Overfull archives drop, one at a
    time, the member with the lexicographically smallest sorted
    nearest-neighbor distance vector; underfull archives are filled with the
    best dominated members by ascending total fitness. Invalid members never
    enter. Result is ordered by ascending total fitness.
    """
    if archive_size < 1:
        raise ValueError("archive_size must be >= 1")
    members = _dedup_by_id([m for m in pop if m.fitness.valid])
    if not members:
        return []
    scores = spea2_fitness(members, spec)
    order = sorted(range(len(members)), key=lambda i: (scores[i].total, i))
    nondom = [i for i in order if scores[i].raw == 0]
    dominated = [i for i in order if scores[i].raw > 0]

    if len(nondom) <= archive_size:
        keep = nondom + dominated[: archive_size - len(nondom)]
        return [members[i] for i in sorted(keep, key=order.index)]

    # Truncation: repeatedly drop the most crowded non-dominated member.
    pts = {i: p for i, p in zip(
        nondom, _normalized_points([members[i] for i in nondom], spec)
    )}
    alive = list(nondom)
    dmat = {
        (i, j): _euclid(pts[i], pts[j])
        for i in alive for j in alive if i < j
    }

    def dist(i: int, j: int) -> float:
        return dmat[(i, j)] if i < j else dmat[(j, i)]

    while len(alive) > archive_size:
        vectors = {i: sorted(dist(i, j) for j in alive if j != i) for i in alive}
        victim = min(alive, key=lambda i: (vectors[i], i))
        alive.remove(victim)
    return [members[i] for i in sorted(alive, key=order.index)]


@dataclass(frozen=True)
class ParetoArchive:
    """Mutually non-dominated, genome_id-deduplicated set of scored genomes."""

    members: tuple[ScoredGenome, ...] = ()

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(m.genome_id for m in self.members)

    def __len__(self) -> int:
        return len(self.members)


def update_hall_of_fame(
    hof: ParetoArchive,
    batch: list[ScoredGenome],
    spec: ObjectiveSpec,
) -> ParetoArchive:
    """Non-dominated subset of hof plus the valid members of the batch."""
    pool = _dedup_by_id(list(hof.members) + [m for m in batch if m.fitness.valid])
    keep = [
        m for m in pool
        if not any(dominates(o.fitness, m.fitness, spec) for o in pool if o.genome_id != m.genome_id)
    ]
    keep.sort(key=lambda m: m.genome_id)
    return ParetoArchive(members=tuple(keep))
