from __future__ import annotations

import json
import os
import time

from conftest import PY
from evoblocks.evaluator import EvalConfig, Evaluator, parse_metrics
from evoblocks.genome import CodeBlock
from evoblocks.moea import ObjectiveSpec

ACC_PARAMS = ObjectiveSpec.of(("accuracy", "maximize"), ("param_count", "minimize"))
TOY_SPEC = ObjectiveSpec.of(("fit_error", "minimize"), ("complexity_count", "minimize"))


def echo_command(payload: str) -> tuple[str, ...]:
    return (PY, "-c", f"print({payload!r})")


def cfg(command, spec=ACC_PARAMS, timeout=20.0, **kw) -> EvalConfig:
    return EvalConfig(command=tuple(command), timeout=timeout, objective_spec=spec, **kw)


def variant(template, name, source):
    seed = template.seed_genome()
    return seed.with_block(
        CodeBlock(name=name, source=source, provenance=seed.blocks[name].provenance),
        parent_ids=(seed.genome_id,),
        born_generation=1,
    )


class TestParseMetrics:
    def test_well_formed_line(self):
        line = 'GE_METRICS: {"objectives": {"accuracy": 0.9252, "param_count": 518230}}'
        fitness, reason = parse_metrics(f"noise\n{line}\n", ACC_PARAMS)
        assert reason is None
        assert fitness.valid
        assert fitness.values == {"accuracy": 0.9252, "param_count": 518230.0}

    def test_last_line_wins(self):
        first = 'GE_METRICS: {"objectives": {"accuracy": 0.1, "param_count": 1}}'
        second = 'GE_METRICS: {"objectives": {"accuracy": 0.9, "param_count": 2}}'
        fitness, _ = parse_metrics(f"{first}\nbetween\n{second}\n", ACC_PARAMS)
        assert fitness.values["accuracy"] == 0.9

    def test_prefix_is_bit_exact(self):
        fitness, reason = parse_metrics(
            ' GE_METRICS: {"objectives": {"accuracy": 1, "param_count": 1}}\n', ACC_PARAMS
        )
        assert not fitness.valid and reason == "no_metrics"
        fitness, reason = parse_metrics(
            'GE_METRICS:{"objectives": {"accuracy": 1, "param_count": 1}}\n', ACC_PARAMS
        )
        assert not fitness.valid and reason == "no_metrics"

    def test_failure_reasons(self):
        cases = {
            "nothing here\n": "no_metrics",
            "GE_METRICS: not json\n": "bad_metrics",
            'GE_METRICS: {"other": 1}\n': "bad_metrics",
            'GE_METRICS: {"objectives": {"accuracy": 1}}\n': "missing_objective",
            'GE_METRICS: {"objectives": {"accuracy": "NaN", "param_count": 1}}\n': "nonfinite",
            'GE_METRICS: {"objectives": {"accuracy": null, "param_count": 1}}\n': "nonfinite",
        }
        for stdout, expected in cases.items():
            fitness, reason = parse_metrics(stdout, ACC_PARAMS)
            assert not fitness.valid
            assert reason == expected, stdout

    def test_extra_objectives_ignored(self):
        line = 'GE_METRICS: {"objectives": {"accuracy": 1, "param_count": 2, "extra": 3}}'
        fitness, _ = parse_metrics(line, ACC_PARAMS)
        assert set(fitness.values) == {"accuracy", "param_count"}


class TestEvaluate:
    def test_paper_baseline_command(self, two_block_template, tmp_path):
        command = echo_command(
            'GE_METRICS: {"objectives": {"accuracy": 0.9252, "param_count": 518230}}'
        )
        ev = Evaluator(cfg(command, cache_path=tmp_path / "cache.ndjson"))
        record = ev.evaluate(two_block_template.seed_genome(), two_block_template)
        assert record.fitness.valid
        assert record.fitness.values == {"accuracy": 0.9252, "param_count": 518230.0}
        assert record.exit_status == 0
        assert not record.from_cache

    def test_nonzero_exit_invalid(self, two_block_template):
        ev = Evaluator(cfg((PY, "-c", "import sys; sys.exit(1)")))
        record = ev.evaluate(two_block_template.seed_genome(), two_block_template)
        assert not record.fitness.valid
        assert record.reason == "nonzero_exit"
        assert record.exit_status == 1

    def test_timeout_killed_within_slack(self, two_block_template):
        ev = Evaluator(cfg((PY, "-c", "import time; time.sleep(3600)"), timeout=1.0))
        t0 = time.monotonic()
        record = ev.evaluate(two_block_template.seed_genome(), two_block_template)
        elapsed = time.monotonic() - t0
        assert record.exit_status == "timeout"
        assert record.reason == "timeout"
        assert not record.fitness.valid
        assert record.wall_time <= 1.0 + 5.0
        assert elapsed <= 1.0 + 5.0

    def test_cache_hit_returns_identical_record(self, two_block_template, tmp_path):
        command = echo_command('GE_METRICS: {"objectives": {"accuracy": 0.5, "param_count": 10}}')
        ev = Evaluator(cfg(command, cache_path=tmp_path / "cache.ndjson"))
        g = two_block_template.seed_genome()
        first = ev.evaluate(g, two_block_template)
        second = ev.evaluate(g, two_block_template)
        assert second.from_cache and not first.from_cache
        assert second == first  # from_cache excluded from comparison
        assert ev.launches == 1 and ev.cache_hits == 1

    def test_cache_reloaded_from_disk(self, two_block_template, tmp_path):
        path = tmp_path / "cache.ndjson"
        command = echo_command('GE_METRICS: {"objectives": {"accuracy": 0.5, "param_count": 10}}')
        first = Evaluator(cfg(command, cache_path=path))
        record = first.evaluate(two_block_template.seed_genome(), two_block_template)
        again = Evaluator(cfg(command, cache_path=path))
        replay = again.evaluate(two_block_template.seed_genome(), two_block_template)
        assert replay.from_cache
        assert replay.fitness == record.fitness
        assert again.launches == 0

    def test_corrupt_cache_lines_skipped(self, two_block_template, tmp_path):
        path = tmp_path / "cache.ndjson"
        path.write_text("{ half a json\n\n")
        command = echo_command('GE_METRICS: {"objectives": {"accuracy": 1, "param_count": 1}}')
        ev = Evaluator(cfg(command, cache_path=path))
        record = ev.evaluate(two_block_template.seed_genome(), two_block_template)
        assert record.fitness.valid

    def test_rendered_tree_and_env_visible_to_command(self, two_block_template, tmp_path):
        capture = tmp_path / "seen.json"
        script = (
            "import json, os, sys, pathlib\n"
            "w = pathlib.Path(sys.argv[1])\n"
            "doc = {'files': sorted(p.name for p in w.iterdir()),"
            " 'gid': os.environ.get('GE_GENOME_ID', ''),"
            " 'text': (w / 'main.py').read_text()}\n"
            f"pathlib.Path({str(capture)!r}).write_text(json.dumps(doc))\n"
            "print('GE_METRICS: {\"objectives\": {\"accuracy\": 1, \"param_count\": 1}}')\n"
        )
        ev = Evaluator(cfg((PY, "-c", script, "{workdir}")))
        g = variant(two_block_template, "SE", "rendered_variant")
        record = ev.evaluate(g, two_block_template)
        assert record.fitness.valid
        seen = json.loads(capture.read_text())
        assert seen["files"] == ["main.py"]
        assert seen["gid"] == g.genome_id
        assert "rendered_variant" in seen["text"]

    def test_workdir_cleaned_up(self, two_block_template, tmp_path):
        marker = tmp_path / "workdir_path.txt"
        script = (
            "import sys, pathlib\n"
            f"pathlib.Path({str(marker)!r}).write_text(sys.argv[1])\n"
            "print('GE_METRICS: {\"objectives\": {\"accuracy\": 1, \"param_count\": 1}}')\n"
        )
        ev = Evaluator(cfg((PY, "-c", script, "{workdir}")))
        ev.evaluate(two_block_template.seed_genome(), two_block_template)
        assert not os.path.exists(marker.read_text())


class TestEvaluateBatch:
    def test_duplicates_evaluated_once(self, two_block_template, tmp_path):
        command = echo_command('GE_METRICS: {"objectives": {"accuracy": 1, "param_count": 1}}')
        ev = Evaluator(cfg(command, cache_path=tmp_path / "c.ndjson"))
        g = two_block_template.seed_genome()
        records = ev.evaluate_batch([g, g, g, g], two_block_template)
        assert len(records) == 4
        assert ev.launches == 1
        assert len({r.genome_id for r in records}) == 1
        assert all(r.fitness == records[0].fitness for r in records)

    def test_results_positionally_aligned(self, two_block_template):
        seed = two_block_template.seed_genome()
        other = variant(two_block_template, "SE", "breaks_parse")
        script = (
            "import sys, pathlib\n"
            "text = pathlib.Path(sys.argv[1], 'main.py').read_text()\n"
            "acc = 0.9 if 'breaks_parse' in text else 0.1\n"
            "print('GE_METRICS: {\"objectives\": {\"accuracy\": %s, \"param_count\": 1}}' % acc)\n"
        )
        ev = Evaluator(cfg((PY, "-c", script, "{workdir}"), max_concurrent=3))
        records = ev.evaluate_batch([other, seed, other], two_block_template)
        assert [r.fitness.values["accuracy"] for r in records] == [0.9, 0.1, 0.9]

    def test_empty_batch(self, two_block_template):
        ev = Evaluator(cfg(echo_command("x")))
        assert ev.evaluate_batch([], two_block_template) == []

    def test_peak_concurrency_bounded(self, two_block_template, tmp_path):
        stamp_dir = tmp_path / "stamps"
        stamp_dir.mkdir()
        script = (
            "import os, sys, time, pathlib\n"
            f"d = pathlib.Path({str(stamp_dir)!r})\n"
            "gid = os.environ['GE_GENOME_ID']\n"
            "(d / (gid + '.start')).write_text(repr(time.time()))\n"
            "time.sleep(0.3)\n"
            "(d / (gid + '.end')).write_text(repr(time.time()))\n"
            "print('GE_METRICS: {\"objectives\": {\"accuracy\": 1, \"param_count\": 1}}')\n"
        )
        ev = Evaluator(cfg((PY, "-c", script), max_concurrent=2))
        genomes = [
            variant(two_block_template, "SE", f"distinct source {i}") for i in range(6)
        ]
        ev.evaluate_batch(genomes, two_block_template)
        spans = []
        for start_file in stamp_dir.glob("*.start"):
            end_file = stamp_dir / (start_file.name[: -len(".start")] + ".end")
            spans.append((eval(start_file.read_text()), eval(end_file.read_text())))
        assert len(spans) == 6
        peak = 0
        for t, _ in spans:
            live = sum(1 for s, e in spans if s <= t < e)
            peak = max(peak, live)
        assert peak <= 2
