from __future__ import annotations

import random
from collections import Counter

import pytest

from conftest import MIN2, PY, scored, scored_invalid
from evoblocks import toy
from evoblocks.config import RunConfig
from evoblocks.engine import (
    RunState,
    build_engine,
    combine_elites,
    read_checkpoint,
    write_checkpoint,
)
from evoblocks.errors import CheckpointError, VersionError
from evoblocks.genome import CodeBlock, Provenance
from evoblocks.moea import Fitness, ObjectiveSpec, ParetoArchive, ScoredGenome, dominates

TOY_SPEC = ObjectiveSpec.of(("fit_error", "minimize"), ("complexity_count", "minimize"))


def toy_run_config(run_dir, **overrides) -> RunConfig:
    cfg = RunConfig(
        run_dir=run_dir,
        seed_path=toy.seed_dir(),
        objective_spec=TOY_SPEC,
        population_size=8,
        elite_archive_size=4,
        max_generations=5,
        mating_rate=0.5,
        mutation_rate=1.0,
        prob_eot=0.3,
        rng_seed=1,
        eval_command=(PY, "-m", "evoblocks.toy.evaluate", "{workdir}"),
        eval_timeout=30.0,
        max_concurrent=2,
        raw={"marker": "engine-test"},
    )
    cfg.llm.mock_corpus = toy.corpus_path()
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


def group_events(events):
    by_gen: dict[int, list[dict]] = {}
    for e in events:
        by_gen.setdefault(e["generation"], []).append(e)
    return by_gen


def values_by_id(events) -> dict[str, dict]:
    out = {}
    for e in events:
        if e["event_type"] == "evaluate" and e.get("valid"):
            out[e["genome_id"]] = e["values"]
    return out


def audit_elite_preservation(events, spec) -> None:
    """Every elite either reappears in its generation's population or is
    dominated by an offspring evaluated that generation."""
    known = values_by_id(events)
    for gen, evts in group_events(events).items():
        if gen == 0:
            continue
        elite_ids = next(e["ids"] for e in evts if e["event_type"] == "elites")
        pop_ids = next(e["ids"] for e in evts if e["event_type"] == "population")
        offspring = [
            e for e in evts if e["event_type"] == "evaluate" and e.get("valid")
        ]
        for eid in elite_ids:
            if eid in pop_ids:
                continue
            elite_fit = Fitness.of(**known[eid])
            assert any(
                dominates(Fitness.of(**o["values"]), elite_fit, spec)
                for o in offspring
            ), f"elite {eid[:8]} lost without a dominating offspring in gen {gen}"


class TestInitialize:
    def test_population_size_and_seed_baseline(self, tmp_path):
        engine = build_engine(toy_run_config(tmp_path))
        state = engine.initialize()
        assert len(state.population) == 8
        assert state.generation == 0
        assert engine.seed.genome_id in state.hall_of_fame.ids or any(
            dominates(m.fitness, Fitness.of(fit_error=17.97, complexity_count=2), TOY_SPEC)
            for m in state.hall_of_fame.members
        )
        # baseline event logged
        assert any(e["event_type"] == "seed_baseline" for e in engine.lineage.events)

    def test_generation_zero_has_no_eot_provenance(self, tmp_path):
        engine = build_engine(toy_run_config(tmp_path, prob_eot=1.0))
        state = engine.initialize()
        for member in state.population:
            for b in member.genome.blocks.values():
                assert b.provenance.kind != "eot"

    def test_at_least_population_size_llm_calls(self, tmp_path):
        cfg = toy_run_config(tmp_path, population_size=20, elite_archive_size=4)
        engine = build_engine(cfg)
        engine.initialize()
        assert engine.gateway.call_count >= 20
        transcript = cfg.transcript_path.read_text().strip().split("\n")
        assert len(transcript) == engine.gateway.call_count

    def test_population_of_one_identity_corpus_is_seed_clone(self, tmp_path):
        cfg = toy_run_config(tmp_path, population_size=1, elite_archive_size=1)
        cfg.llm.mock_corpus = None  # pure identity fallback
        engine = build_engine(cfg)
        state = engine.initialize()
        assert state.population[0].genome_id == engine.seed.genome_id


class TestCombineElites:
    def test_all_offspring_dominated_elites_survive(self):
        elites = [scored("e1", a=0, b=1), scored("e2", a=1, b=0)]
        offspring = [scored("o1", a=2, b=2), scored("o2", a=3, b=3)]
        out = combine_elites(elites, offspring, 4, MIN2)
        ids = {m.genome_id for m in out}
        assert {e.genome_id for e in elites} <= ids

    def test_dominating_offspring_replaces_elite(self):
        e = scored("elite", a=1, b=1)
        champ = scored("champ", a=0, b=0)
        out = combine_elites([e], [champ, scored("other", a=5, b=5)], 2, MIN2)
        ids = {m.genome_id for m in out}
        assert e.genome_id not in ids
        assert champ.genome_id in ids

    def test_small_pool_returned_whole(self):
        elites = [scored("e1", a=0, b=0)]
        offspring = [scored("o1", a=1, b=1)]
        out = combine_elites(elites, offspring, 10, MIN2)
        assert {m.genome_id for m in out} == {elites[0].genome_id, offspring[0].genome_id}

    def test_invalid_offspring_never_selected(self):
        elites = [scored("e1", a=0, b=0)]
        offspring = [scored_invalid("broken"), scored("ok", a=1, b=0.5)]
        out = combine_elites(elites, offspring, 4, MIN2)
        assert all(m.fitness.valid for m in out)

    def test_undominated_elite_survives_truncation(self):
        # five non-dominated offspring crowd the front; archive of 3 would
        # truncate, but the two elites must stay because nothing beats them
        elites = [scored("e1", a=0, b=10), scored("e2", a=10, b=0)]
        offspring = [
            scored("o1", a=2, b=8),
            scored("o2", a=4, b=6),
            scored("o3", a=5, b=5),
            scored("o4", a=6, b=4),
            scored("o5", a=8, b=2),
        ]
        out = combine_elites(elites, offspring, 3, MIN2)
        ids = {m.genome_id for m in out}
        assert {e.genome_id for e in elites} <= ids
        assert len(out) == 3


class TestInertGeneration:
    def test_population_multiset_preserved_with_zero_rates(self, tmp_path):
        cfg = toy_run_config(
            tmp_path,
            population_size=4,
            elite_archive_size=4,
            mating_rate=0.0,
            mutation_rate=0.0,
        )
        engine = build_engine(cfg)
        # distinct, all-valid population built from block variants
        seed = engine.seed
        population = []
        for i, err in enumerate((5.0, 6.0, 7.0, 8.0)):
            g = seed.with_block(
                CodeBlock(
                    name="BIAS",
                    source=f"BIAS = {i}.5",
                    provenance=Provenance(kind="eot"),
                    origin_generation=1,
                ),
                parent_ids=(seed.genome_id,),
                born_generation=1,
            )
            population.append(ScoredGenome(genome=g, fitness=Fitness.of(fit_error=err, complexity_count=2)))
        state = RunState(
            generation=1,
            population=population,
            elites=[],
            hall_of_fame=ParetoArchive(),
            rng=random.Random(7),
        )
        before = engine.gateway.call_count
        nxt = engine.run_generation(state)
        assert engine.gateway.call_count == before  # zero LLM calls
        assert Counter(m.genome_id for m in nxt.population) == Counter(
            m.genome_id for m in population
        )


class TestConvergence:
    def test_generation_thresholds(self, tmp_path):
        engine = build_engine(toy_run_config(tmp_path, max_generations=10))
        state = RunState(0, [], [], ParetoArchive(), random.Random(0))
        assert not engine.convergence_condition(state)
        state.generation = 10
        assert engine.convergence_condition(state)

    def test_stagnation_window(self, tmp_path):
        cfg = toy_run_config(tmp_path, max_generations=50, stagnation_window=3)
        cfg.llm.mock_corpus = None  # identity corpus: hall of fame frozen
        engine = build_engine(cfg)
        state = engine.run()
        assert state.stagnant >= 3
        assert state.generation < 50

    def test_stagnation_disabled_by_default(self, tmp_path):
        cfg = toy_run_config(tmp_path, max_generations=4)
        cfg.llm.mock_corpus = None
        engine = build_engine(cfg)
        state = engine.run()
        assert state.generation == 4


class TestCheckpoint:
    def test_round_trip_exact(self, tmp_path):
        engine = build_engine(toy_run_config(tmp_path))
        state = engine.initialize()
        state.rng.random()  # advance so the stream position matters
        path = tmp_path / "checkpoints" / "checkpoint_gen0000.json"
        write_checkpoint(state, path, config_digest="cfg", template_digest="tpl")
        restored = read_checkpoint(path, config_digest="cfg", template_digest="tpl")
        assert restored.generation == state.generation
        assert [m.genome_id for m in restored.population] == [
            m.genome_id for m in state.population
        ]
        assert restored.hall_of_fame.ids == state.hall_of_fame.ids
        assert restored.rng.getstate() == state.rng.getstate()
        assert [m.fitness for m in restored.population] == [
            m.fitness for m in state.population
        ]
        # blocks round-trip with provenance
        for a, b in zip(restored.population, state.population):
            assert a.genome.to_dict() == b.genome.to_dict()

    def test_missing_file_raises(self, tmp_path):
        with pytest.raises(CheckpointError):
            read_checkpoint(tmp_path / "nope.json")

    def test_corrupt_file_raises(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{ not json")
        with pytest.raises(CheckpointError):
            read_checkpoint(bad)

    def test_version_mismatch_raises(self, tmp_path):
        engine = build_engine(toy_run_config(tmp_path))
        state = engine.initialize()
        path = tmp_path / "cp.json"
        write_checkpoint(state, path, config_digest="c", template_digest="t")
        import json

        doc = json.loads(path.read_text())
        doc["version"] = 99
        path.write_text(json.dumps(doc))
        with pytest.raises(VersionError):
            read_checkpoint(path)

    def test_config_digest_mismatch_raises(self, tmp_path):
        engine = build_engine(toy_run_config(tmp_path))
        state = engine.initialize()
        path = tmp_path / "cp.json"
        write_checkpoint(state, path, config_digest="original", template_digest="t")
        with pytest.raises(CheckpointError):
            read_checkpoint(path, config_digest="edited")


class TestScriptedRun:
    def test_improving_mutation_reaches_hall_of_fame(self, tmp_path):
        engine = build_engine(toy_run_config(tmp_path))
        state = engine.run()
        seed_scored = next(
            (e for e in engine.lineage.events if e["event_type"] == "seed_baseline"), None
        )
        assert seed_scored is not None
        seed_fit = Fitness.of(**values_by_id(engine.lineage.events)[engine.seed.genome_id])
        assert any(
            dominates(m.fitness, seed_fit, TOY_SPEC) for m in state.hall_of_fame.members
        )

    def test_breaking_mutation_produces_invalid_record(self, tmp_path):
        engine = build_engine(toy_run_config(tmp_path))
        engine.run()
        invalid = [
            e for e in engine.lineage.events
            if e["event_type"] == "evaluate" and not e["valid"]
        ]
        assert invalid, "the breaking corpus entry never fired"

    def test_elite_preservation_holds_every_generation(self, tmp_path):
        engine = build_engine(toy_run_config(tmp_path))
        engine.run()
        audit_elite_preservation(engine.lineage.events, TOY_SPEC)

    def test_subprocess_launches_equal_distinct_ids(self, tmp_path):
        engine = build_engine(toy_run_config(tmp_path))
        engine.run()
        distinct = {
            e["genome_id"] for e in engine.lineage.events if e["event_type"] == "evaluate"
        }
        assert engine.evaluator.launches == len(distinct)

    def test_llm_budget_per_generation(self, tmp_path):
        cfg = toy_run_config(tmp_path)
        engine = build_engine(cfg)
        engine.run()
        ops = [
            e for e in engine.lineage.events if e["event_type"] in ("mate", "mutate")
        ]
        per_gen = Counter(e["generation"] for e in ops)
        for gen, count in per_gen.items():
            assert count <= cfg.population_size * 2
        assert len(ops) == engine.gateway.call_count

    def test_two_runs_identical_lineage_logs(self, tmp_path):
        logs = []
        for sub in ("a", "b"):
            d = tmp_path / sub
            d.mkdir()
            engine = build_engine(toy_run_config(d))
            engine.run()
            logs.append((d / "lineage.ndjson").read_text())
        assert logs[0] == logs[1]

    def test_population_size_invariant(self, tmp_path):
        cfg = toy_run_config(tmp_path)
        engine = build_engine(cfg)
        state = engine.run()
        for e in engine.lineage.events:
            if e["event_type"] == "population" and e["generation"] > 0:
                assert len(e["ids"]) == cfg.population_size
        assert len(state.population) == cfg.population_size

    def test_run_writes_one_checkpoint_per_generation(self, tmp_path):
        cfg = toy_run_config(tmp_path, max_generations=3)
        engine = build_engine(cfg)
        engine.run()
        files = sorted(p.name for p in cfg.checkpoint_dir.glob("*.json"))
        assert files == [
            "checkpoint_gen0001.json",
            "checkpoint_gen0002.json",
            "checkpoint_gen0003.json",
        ]

    def test_resume_matches_uninterrupted_run(self, tmp_path):
        full_dir = tmp_path / "full"
        full_dir.mkdir()
        full_engine = build_engine(toy_run_config(full_dir))
        full_state = full_engine.run()

        part_dir = tmp_path / "part"
        part_dir.mkdir()
        cfg = toy_run_config(part_dir)
        part_engine = build_engine(cfg)
        part_engine.run(stop_after=2)
        checkpoint = cfg.checkpoint_dir / "checkpoint_gen0002.json"
        assert checkpoint.exists()

        resumed_engine = build_engine(cfg)
        state = read_checkpoint(
            checkpoint,
            config_digest=cfg.digest(),
            template_digest=resumed_engine.template.digest(),
        )
        final = resumed_engine.run(state)
        assert final.hall_of_fame.ids == full_state.hall_of_fame.ids
        assert final.generation == full_state.generation
