"""The generational loop: initialization, SPEA-2 elites, NSGA-II mating
selection, LLM mating and mutation, elite-preserving combination, hall-of-fame
updates, convergence, and checkpoint/resume.

Operator calls run sequentially off one rng stream and lineage events carry
no timestamps, so two runs with the same config, seed code, and mock corpus
produce byte-identical lineage logs.
"""

from __future__ import annotations

import json
import os
import random
import threading
from dataclasses import dataclass
from pathlib import Path

from .config import RunConfig, load_seed_tree
from .errors import CheckpointError, MatingFailed, MutationFailed, VersionError
from .evaluator import EvalRecord, Evaluator
from .genome import Genome, SeedTemplate, parse_seed
from .llm import LlmGateway
from .moea import (
    ParetoArchive,
    ScoredGenome,
    dominates,
    nsga2_select,
    spea2_environmental_select,
    update_hall_of_fame,
)
from .operators import MutationContext, mate, mutate
from .prompts import PromptSet

CHECKPOINT_FORMAT = "evoblocks-checkpoint"
CHECKPOINT_VERSION = 1


class LineageLog:
    """Append-only NDJSON event log; also kept in memory for audits."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self.events: list[dict] = []
        self._lock = threading.Lock()

    def append(
        self,
        generation: int,
        event_type: str,
        genome_id: str | None = None,
        parent_ids: list[str] | None = None,
        operator: str | None = None,
        prompt_key: str | None = None,
        **extra,
    ) -> None:
        event = {
            "generation": generation,
            "event_type": event_type,
            "genome_id": genome_id,
            "parent_ids": parent_ids or [],
            "operator": operator,
            "prompt_key": prompt_key,
        }
        event.update(extra)
        with self._lock:
            self.events.append(event)
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(event, ensure_ascii=False) + "\n")


@dataclass
class RunState:
    generation: int
    population: list[ScoredGenome]
    elites: list[ScoredGenome]
    hall_of_fame: ParetoArchive
    rng: random.Random
    stagnant: int = 0


def combine_elites(
    elites: list[ScoredGenome],
    offspring: list[ScoredGenome],
    population_size: int,
    spec,
) -> list[ScoredGenome]:
    """Elite-preserving combination of elites and evaluated offspring.

    An elite is dropped only when some offspring dominates it; the merged pool
    is reduced to population_size by SPEA-2 environmental selection, with
    surviving elites force-reinserted if truncation crowded them out.
    """
    surviving = [
        e for e in elites
        if not any(dominates(o.fitness, e.fitness, spec) for o in offspring)
    ]
    pool = surviving + offspring
    selected = spea2_environmental_select(pool, population_size, spec)
    if not selected:  # no valid genome anywhere: carry offspring as-is
        seen: set[str] = set()
        selected = []
        for o in offspring:
            if o.genome_id not in seen:
                seen.add(o.genome_id)
                selected.append(o)
        return selected[:population_size]

    selected_ids = {s.genome_id for s in selected}
    surviving_ids = {e.genome_id for e in surviving}
    for e in surviving:
        if e.genome_id in selected_ids:
            continue
        if len(selected) >= population_size:
            for i in range(len(selected) - 1, -1, -1):
                if selected[i].genome_id not in surviving_ids:
                    del selected[i]
                    break
        selected.append(e)
        selected_ids.add(e.genome_id)
    return selected


class Engine:
    """Drives one evolutionary run over a parsed seed."""

    def __init__(
        self,
        cfg: RunConfig,
        template: SeedTemplate,
        gateway: LlmGateway,
        evaluator: Evaluator,
        prompts: PromptSet,
        lineage: LineageLog | None = None,
    ):
        self.cfg = cfg
        self.template = template
        self.gateway = gateway
        self.evaluator = evaluator
        self.prompts = prompts
        self.lineage = lineage or LineageLog()
        self.seed = template.seed_genome()
        self.spec = cfg.objective_spec

    # -- helpers ------------------------------------------------------------

    def _ctx(self, rng: random.Random, elites: list[ScoredGenome], generation: int,
             eot_enabled: bool) -> MutationContext:
        return MutationContext(
            seed=self.seed,
            rng=rng,
            gateway=self.gateway,
            prompts=self.prompts,
            prob_eot=self.cfg.prob_eot,
            elites=elites,
            crp_enabled=self.cfg.crp_enabled,
            eot_enabled=eot_enabled,
            generation=generation,
            param_ranges=self.cfg.llm.param_ranges,
        )

    def _mutate_with_retries(self, genome: Genome, ctx: MutationContext,
                             generation: int) -> Genome:
        """Budgeted mutation; exhausted retries keep the input unchanged."""
        for attempt in range(1 + self.cfg.mutation_retries):
            record: dict = {}
            try:
                child = mutate(genome, ctx, record=record)
            except MutationFailed as exc:
                self.lineage.append(
                    generation, "mutation_failed", genome_id=genome.genome_id,
                    detail=str(exc), attempt=attempt,
                )
                continue
            self.lineage.append(
                generation, "mutate",
                genome_id=child.genome_id,
                parent_ids=[genome.genome_id],
                operator="mutate",
                prompt_key=record.get("prompt_key"),
            )
            return child
        self.lineage.append(
            generation, "mutation_skipped", genome_id=genome.genome_id,
            operator="copy",
        )
        return genome

    def _log_evaluations(self, generation: int, scored: list[ScoredGenome],
                         records: list[EvalRecord]) -> None:
        for sg, rec in zip(scored, records):
            self.lineage.append(
                generation, "evaluate",
                genome_id=sg.genome_id,
                cached=rec.from_cache,
                valid=sg.fitness.valid,
                values=dict(sg.fitness.values),
                reason=rec.reason,
            )

    # -- spec operations -----------------------------------------------------

    def initialize(self) -> RunState:
        """Generation-0 population: LLM mutants of the seed, EoT disabled.

        The unmodified seed is always evaluated too and becomes the
        hall-of-fame baseline.
        """
        rng = random.Random(self.cfg.rng_seed)
        ctx = self._ctx(rng, elites=[], generation=0, eot_enabled=False)
        genomes: list[Genome] = []
        for _ in range(self.cfg.population_size):
            genomes.append(self._mutate_with_retries(self.seed, ctx, generation=0))

        batch = [self.seed] + genomes
        records = self.evaluator.evaluate_batch(batch, self.template)
        scored = [ScoredGenome(g, r.fitness) for g, r in zip(batch, records)]
        self._log_evaluations(0, scored, records)

        seed_scored, population = scored[0], scored[1:]
        hof = update_hall_of_fame(ParetoArchive(), [seed_scored], self.spec)
        self.lineage.append(
            0, "seed_baseline", genome_id=self.seed.genome_id,
            valid=seed_scored.fitness.valid,
        )
        self.lineage.append(
            0, "population", ids=[m.genome_id for m in population],
        )
        return RunState(
            generation=0,
            population=population,
            elites=[],
            hall_of_fame=hof,
            rng=rng,
        )

    def run_generation(self, state: RunState) -> RunState:
        """One pass of the loop: select, mate, mutate, evaluate, combine."""
        cfg = self.cfg
        rng = state.rng
        gen = state.generation + 1

        elites = spea2_environmental_select(
            state.population, cfg.elite_archive_size, self.spec
        )
        self.lineage.append(gen, "elites", ids=[e.genome_id for e in elites])

        sel_record: dict = {}
        parents = nsga2_select(
            state.population, cfg.population_size, self.spec, rng, record=sel_record
        )
        self.lineage.append(
            gen, "mating_selection",
            ids=[p.genome_id for p in parents],
            tiebreaks=sel_record.get("tiebreaks", 0),
        )

        ctx = self._ctx(rng, elites=elites, generation=gen, eot_enabled=cfg.eot_enabled)

        mated: list[Genome] = []
        for i in range(0, len(parents) - 1, 2):
            a, b = parents[i].genome, parents[i + 1].genome
            if rng.random() < cfg.mating_rate:
                for first, second in ((a, b), (b, a)):
                    record: dict = {}
                    try:
                        child = mate(first, second, ctx, record=record)
                    except MatingFailed as exc:
                        self.lineage.append(
                            gen, "mating_failed", genome_id=first.genome_id,
                            detail=str(exc),
                        )
                        child = first
                        record = {"clone": True}
                    self.lineage.append(
                        gen, "clone" if record.get("clone") else "mate",
                        genome_id=child.genome_id,
                        parent_ids=[first.genome_id, second.genome_id],
                        operator="clone" if record.get("clone") else "mate",
                        prompt_key=record.get("prompt_key"),
                    )
                    mated.append(child)
            else:
                mated.extend([a, b])
        if len(parents) % 2:
            mated.append(parents[-1].genome)

        offspring_genomes: list[Genome] = []
        for g in mated:
            if rng.random() < cfg.mutation_rate:
                offspring_genomes.append(self._mutate_with_retries(g, ctx, gen))
            else:
                offspring_genomes.append(g)

        records = self.evaluator.evaluate_batch(offspring_genomes, self.template)
        offspring = [ScoredGenome(g, r.fitness) for g, r in zip(offspring_genomes, records)]
        self._log_evaluations(gen, offspring, records)

        hof = update_hall_of_fame(state.hall_of_fame, offspring, self.spec)
        self.lineage.append(gen, "hall_of_fame", ids=list(hof.ids))
        stagnant = state.stagnant + 1 if hof.ids == state.hall_of_fame.ids else 0

        next_population = combine_elites(
            elites, offspring, cfg.population_size, self.spec
        )
        padded = 0
        i = 0
        while next_population and len(next_population) < cfg.population_size:
            next_population.append(next_population[i % len(next_population)])
            i += 1
            padded += 1
        if padded:
            self.lineage.append(gen, "population_padded", count=padded)
        self.lineage.append(
            gen, "population", ids=[m.genome_id for m in next_population],
        )

        return RunState(
            generation=gen,
            population=next_population,
            elites=elites,
            hall_of_fame=hof,
            rng=rng,
            stagnant=stagnant,
        )

    def convergence_condition(self, state: RunState) -> bool:
        if state.generation >= self.cfg.max_generations:
            return True
        if self.cfg.stagnation_window > 0 and state.stagnant >= self.cfg.stagnation_window:
            return True
        return False

    def run(self, state: RunState | None = None, stop_after: int | None = None) -> RunState:
        """Run to convergence, checkpointing after every completed generation."""
        if state is None:
            state = self.initialize()
        while not self.convergence_condition(state):
            if stop_after is not None and state.generation >= stop_after:
                break
            state = self.run_generation(state)
            write_checkpoint(
                state,
                self.cfg.checkpoint_dir / f"checkpoint_gen{state.generation:04d}.json",
                config_digest=self.cfg.digest(),
                template_digest=self.template.digest(),
            )
        return state


def build_engine(cfg: RunConfig) -> Engine:
    """Assemble an engine and its components from a run config."""
    tree = load_seed_tree(cfg.seed_path)
    template = parse_seed(tree, comment_leader=cfg.comment_leader)
    return Engine(
        cfg=cfg,
        template=template,
        gateway=cfg.build_gateway(),
        evaluator=cfg.build_evaluator(),
        prompts=cfg.build_prompts(),
        lineage=LineageLog(cfg.lineage_path),
    )


# -- checkpointing ------------------------------------------------------------

def _scored_to_dict(sg: ScoredGenome) -> dict:
    return {"genome": sg.genome.to_dict(), "fitness": sg.fitness.to_dict()}


def _scored_from_dict(d: dict) -> ScoredGenome:
    from .moea import Fitness

    return ScoredGenome(
        genome=Genome.from_dict(d["genome"]),
        fitness=Fitness.from_dict(d["fitness"]),
    )


def write_checkpoint(
    state: RunState,
    path: str | Path,
    config_digest: str,
    template_digest: str,
) -> None:
    """Atomically persist a run state (tmp file + rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rng_state = state.rng.getstate()
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config_digest": config_digest,
        "template_digest": template_digest,
        "generation": state.generation,
        "stagnant": state.stagnant,
        "population": [_scored_to_dict(m) for m in state.population],
        "elites": [_scored_to_dict(m) for m in state.elites],
        "hall_of_fame": [_scored_to_dict(m) for m in state.hall_of_fame.members],
        "rng_state": [rng_state[0], list(rng_state[1]), rng_state[2]],
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(doc, ensure_ascii=False), encoding="utf-8")
    os.replace(tmp, path)


def read_checkpoint(
    path: str | Path,
    config_digest: str | None = None,
    template_digest: str | None = None,
) -> RunState:
    """Load a checkpoint back into a RunState, verifying compatibility."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint {path} is corrupt: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not an engine checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise VersionError(
            f"checkpoint version {doc.get('version')} unsupported "
            f"(engine writes version {CHECKPOINT_VERSION})"
        )
    if config_digest is not None and doc["config_digest"] != config_digest:
        raise CheckpointError("checkpoint was written under a different config")
    if template_digest is not None and doc["template_digest"] != template_digest:
        raise CheckpointError("checkpoint was written against a different seed")

    rng = random.Random()
    raw_state = doc["rng_state"]
    rng.setstate((raw_state[0], tuple(raw_state[1]), raw_state[2]))
    try:
        return RunState(
            generation=doc["generation"],
            population=[_scored_from_dict(d) for d in doc["population"]],
            elites=[_scored_from_dict(d) for d in doc["elites"]],
            hall_of_fame=ParetoArchive(
                members=tuple(_scored_from_dict(d) for d in doc["hall_of_fame"])
            ),
            rng=rng,
            stagnant=doc.get("stagnant", 0),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"checkpoint {path} is malformed: {exc}") from exc


def latest_checkpoint(checkpoint_dir: Path) -> Path | None:
    candidates = sorted(checkpoint_dir.glob("checkpoint_gen*.json"))
    return candidates[-1] if candidates else None
