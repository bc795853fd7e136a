"""Sandboxed subprocess evaluation with caching.

A genome is rendered into a fresh temporary directory and the configured
command runs against it with a wall-clock timeout. The command reports
objective values on stdout via the metrics protocol:

    GE_METRICS: {"objectives": {"<name>": <number>, ...}}

Only the last such line counts. Every failure mode (non-zero exit, timeout,
missing or malformed metrics, non-finite or missing objectives) yields an
invalid fitness with a reason code instead of an exception. Results are
cached by genome content hash in an append-only NDJSON file.
"""

from __future__ import annotations

import json
import logging
import math
import os
import shutil
import signal
import subprocess
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .genome import Genome, SeedTemplate, render
from .moea import Fitness, ObjectiveSpec

logger = logging.getLogger(__name__)

METRICS_PREFIX = "GE_METRICS: "
TAIL_CHARS = 4000


@dataclass(frozen=True)
class EvalConfig:
    command: tuple[str, ...]
    timeout: float
    objective_spec: ObjectiveSpec
    max_concurrent: int = 1
    cache_path: str | Path | None = None

    def __post_init__(self):
        if not self.command:
            raise ValueError("evaluation command must be non-empty")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_concurrent < 1:
            raise ValueError("max_concurrent must be >= 1")


@dataclass(frozen=True)
class EvalRecord:
    genome_id: str
    fitness: Fitness
    wall_time: float
    stdout_tail: str
    stderr_tail: str
    exit_status: int | str  # integer exit code or "timeout"
    reason: str | None = None
    from_cache: bool = field(default=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "genome_id": self.genome_id,
            "fitness": self.fitness.to_dict(),
            "wall_time": self.wall_time,
            "stdout_tail": self.stdout_tail,
            "stderr_tail": self.stderr_tail,
            "exit_status": self.exit_status,
            "reason": self.reason,
        }

    @classmethod
    def from_dict(cls, d: dict, from_cache: bool = False) -> "EvalRecord":
        return cls(
            genome_id=d["genome_id"],
            fitness=Fitness.from_dict(d["fitness"]),
            wall_time=d["wall_time"],
            stdout_tail=d["stdout_tail"],
            stderr_tail=d["stderr_tail"],
            exit_status=d["exit_status"],
            reason=d.get("reason"),
            from_cache=from_cache,
        )


def parse_metrics(stdout: str, spec: ObjectiveSpec) -> tuple[Fitness, str | None]:
    """Extract a fitness from the last metrics line of a command's stdout."""
    last = None
    for line in stdout.split("\n"):
        line = line.rstrip("\r")
        if line.startswith(METRICS_PREFIX):
            last = line[len(METRICS_PREFIX):]
    if last is None:
        return Fitness.invalid(), "no_metrics"
    try:
        doc = json.loads(last)
        objectives = doc["objectives"]
        if not isinstance(objectives, dict):
            raise TypeError("objectives is not an object")
    except (ValueError, KeyError, TypeError):
        return Fitness.invalid(), "bad_metrics"
    values = {}
    for obj in spec.objectives:
        if obj.name not in objectives:
            return Fitness.invalid(), "missing_objective"
        try:
            v = float(objectives[obj.name])
        except (TypeError, ValueError):
            return Fitness.invalid(), "nonfinite"
        if not math.isfinite(v):
            return Fitness.invalid(), "nonfinite"
        values[obj.name] = v
    return Fitness(valid=True, values=values), None


class Evaluator:
    """Runs and caches genome evaluations."""

    def __init__(self, cfg: EvalConfig):
        self.cfg = cfg
        self._cache: dict[str, EvalRecord] = {}
        self._lock = threading.Lock()
        self.launches = 0
        self.cache_hits = 0
        if cfg.cache_path is not None:
            self._load_cache(Path(cfg.cache_path))

    def _load_cache(self, path: Path) -> None:
        if not path.exists():
            return
        with path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = EvalRecord.from_dict(json.loads(line))
                except (ValueError, KeyError, TypeError):
                    logger.warning("skipping corrupt cache line %s:%d", path, lineno)
                    continue
                self._cache[record.genome_id] = record

    def _persist(self, record: EvalRecord) -> None:
        if self.cfg.cache_path is None:
            return
        path = Path(self.cfg.cache_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")

    def evaluate(self, genome: Genome, template: SeedTemplate) -> EvalRecord:
        """Cached evaluation of one genome; never raises for candidate failures."""
        gid = genome.genome_id
        with self._lock:
            cached = self._cache.get(gid)
            if cached is not None:
                self.cache_hits += 1
                return EvalRecord.from_dict(cached.to_dict(), from_cache=True)
        record = self._run(genome, template)
        with self._lock:
            if gid not in self._cache:
                self._cache[gid] = record
                self._persist(record)
            else:  # lost a race; serve the first observed fitness
                record = EvalRecord.from_dict(self._cache[gid].to_dict(), from_cache=True)
        return record

    def evaluate_batch(
        self, genomes: list[Genome], template: SeedTemplate
    ) -> list[EvalRecord]:
        """Evaluate many genomes, duplicates once, at bounded concurrency."""
        if not genomes:
            return []
        unique: dict[str, Genome] = {}
        for g in genomes:
            unique.setdefault(g.genome_id, g)
        results: dict[str, EvalRecord] = {}
        with ThreadPoolExecutor(max_workers=self.cfg.max_concurrent) as pool:
            futures = {
                gid: pool.submit(self.evaluate, g, template)
                for gid, g in unique.items()
            }
            for gid, fut in futures.items():
                results[gid] = fut.result()
        return [results[g.genome_id] for g in genomes]

    def _run(self, genome: Genome, template: SeedTemplate) -> EvalRecord:
        workdir = Path(tempfile.mkdtemp(prefix=f"evoblocks-{genome.genome_id[:12]}-"))
        try:
            for rel, text in render(genome, template):
                target = workdir / rel
                target.parent.mkdir(parents=True, exist_ok=True)
                target.write_text(text, encoding="utf-8")
            argv = [arg.replace("{workdir}", str(workdir)) for arg in self.cfg.command]
            env = dict(os.environ, GE_GENOME_ID=genome.genome_id)

            t0 = time.monotonic()
            with self._lock:
                self.launches += 1
            proc = subprocess.Popen(
                argv,
                cwd=workdir,
                env=env,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                start_new_session=True,
            )
            timed_out = False
            try:
                stdout, stderr = proc.communicate(timeout=self.cfg.timeout)
            except subprocess.TimeoutExpired:
                timed_out = True
                try:
                    os.killpg(proc.pid, signal.SIGKILL)
                except ProcessLookupError:
                    pass
                stdout, stderr = proc.communicate()
            wall_time = time.monotonic() - t0

            if timed_out:
                fitness, reason = Fitness.invalid(), "timeout"
                exit_status: int | str = "timeout"
            elif proc.returncode != 0:
                fitness, reason = Fitness.invalid(), "nonzero_exit"
                exit_status = proc.returncode
            else:
                fitness, reason = parse_metrics(stdout, self.cfg.objective_spec)
                exit_status = proc.returncode
            return EvalRecord(
                genome_id=genome.genome_id,
                fitness=fitness,
                wall_time=wall_time,
                stdout_tail=(stdout or "")[-TAIL_CHARS:],
                stderr_tail=(stderr or "")[-TAIL_CHARS:],
                exit_status=exit_status,
                reason=reason,
            )
        finally:
            shutil.rmtree(workdir, ignore_errors=True)
