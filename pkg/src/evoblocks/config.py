"""Run configuration: YAML schema, validation, component builders.

One human-editable YAML file fully describes a run; every engine default can
be overridden there. Relative paths resolve against the config file's
directory, which doubles as the run directory.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError
from .evaluator import EvalConfig, Evaluator
from .llm import HttpBackend, LlmGateway, MockBackend, ParamRanges
from .moea import MAXIMIZE, MINIMIZE, ObjectiveSpec
from .prompts import PromptSet

CONFIG_FILENAME = "config.yaml"


@dataclass
class LlmSettings:
    backend: str = "mock"
    mock_corpus: Path | None = None
    on_corpus_miss: str = "identity"
    base_url: str = "http://localhost:8000/v1"
    model: str = "local-model"
    auth_env: str = "EVOBLOCKS_API_TOKEN"
    max_attempts: int = 3
    backoff_seconds: float = 1.0
    request_cap: int = 1
    param_ranges: ParamRanges = field(default_factory=ParamRanges)


@dataclass
class RunConfig:
    run_dir: Path
    seed_path: Path
    comment_leader: str = "#"
    objective_spec: ObjectiveSpec = None  # required, set by loader
    population_size: int = 20
    elite_archive_size: int = 10
    max_generations: int = 10
    mating_rate: float = 0.5
    mutation_rate: float = 1.0
    prob_eot: float = 0.3
    crp_enabled: bool = True
    eot_enabled: bool = True
    rng_seed: int = 1
    stagnation_window: int = 0
    mutation_retries: int = 1
    eval_command: tuple[str, ...] = ()
    eval_timeout: float = 60.0
    max_concurrent: int = 2
    templates_dir: Path | None = None
    llm: LlmSettings = field(default_factory=LlmSettings)
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def checkpoint_dir(self) -> Path:
        return self.run_dir / "checkpoints"

    @property
    def lineage_path(self) -> Path:
        return self.run_dir / "lineage.ndjson"

    @property
    def transcript_path(self) -> Path:
        return self.run_dir / "transcript.ndjson"

    @property
    def cache_path(self) -> Path:
        return self.run_dir / "cache.ndjson"

    def digest(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    def build_gateway(self) -> LlmGateway:
        if self.llm.backend == "mock":
            if self.llm.mock_corpus is not None:
                backend = MockBackend.from_file(self.llm.mock_corpus, self.llm.on_corpus_miss)
            else:
                backend = MockBackend(on_miss=self.llm.on_corpus_miss)
        else:
            backend = HttpBackend(
                base_url=self.llm.base_url,
                model=self.llm.model,
                auth_env=self.llm.auth_env,
                max_attempts=self.llm.max_attempts,
                backoff_seconds=self.llm.backoff_seconds,
            )
        return LlmGateway(
            backend,
            transcript_path=self.transcript_path,
            request_cap=self.llm.request_cap,
        )

    def build_evaluator(self) -> Evaluator:
        return Evaluator(
            EvalConfig(
                command=self.eval_command,
                timeout=self.eval_timeout,
                objective_spec=self.objective_spec,
                max_concurrent=self.max_concurrent,
                cache_path=self.cache_path,
            )
        )

    def build_prompts(self) -> PromptSet:
        if self.templates_dir is not None:
            return PromptSet.load(self.templates_dir)
        return PromptSet.default()


def _require(cond: bool, errors: list[str], message: str) -> None:
    if not cond:
        errors.append(message)


def _as_objective_spec(entries, errors: list[str]) -> ObjectiveSpec | None:
    if not isinstance(entries, list) or not entries:
        errors.append("objectives: must be a non-empty list")
        return None
    pairs = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict) or "name" not in entry or "direction" not in entry:
            errors.append(f"objectives[{i}]: needs name and direction")
            return None
        if entry["direction"] not in (MAXIMIZE, MINIMIZE):
            errors.append(f"objectives[{i}]: direction must be maximize or minimize")
            return None
        pairs.append((str(entry["name"]), entry["direction"]))
    names = [n for n, _ in pairs]
    if len(set(names)) != len(names):
        errors.append("objectives: names must be unique")
        return None
    return ObjectiveSpec.of(*pairs)


def load_config(path: str | Path) -> RunConfig:
    """Parse and validate a run config; raises ConfigError listing problems."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a YAML mapping")

    base = path.parent.resolve()
    errors: list[str] = []

    seed = raw.get("seed", {})
    seed_path_raw = seed.get("path") if isinstance(seed, dict) else None
    _require(bool(seed_path_raw), errors, "seed.path: required")
    comment_leader = str(seed.get("comment_leader", "#")) if isinstance(seed, dict) else "#"

    spec = _as_objective_spec(raw.get("objectives"), errors)

    evo = raw.get("evolution", {})
    if not isinstance(evo, dict):
        errors.append("evolution: must be a mapping")
        evo = {}

    def geti(key, default, lo=None):
        v = evo.get(key, default)
        if not isinstance(v, int) or isinstance(v, bool) or (lo is not None and v < lo):
            errors.append(f"evolution.{key}: must be an integer" + (f" >= {lo}" if lo else ""))
            return default
        return v

    def getf(key, default, lo=0.0, hi=1.0):
        v = evo.get(key, default)
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not (lo <= v <= hi):
            errors.append(f"evolution.{key}: must be a number in [{lo}, {hi}]")
            return default
        return float(v)

    population_size = geti("population_size", 20, lo=1)
    elite_archive_size = geti("elite_archive_size", 10, lo=1)
    max_generations = geti("max_generations", 10, lo=1)
    rng_seed = geti("rng_seed", 1)
    stagnation_window = geti("stagnation_window", 0, lo=0)
    mutation_retries = geti("mutation_retries", 1, lo=0)
    mating_rate = getf("mating_rate", 0.5)
    mutation_rate = getf("mutation_rate", 1.0)
    prob_eot = getf("prob_eot", 0.3)
    crp_enabled = bool(evo.get("crp_enabled", True))
    eot_enabled = bool(evo.get("eot_enabled", True))
    _require(
        elite_archive_size <= population_size,
        errors,
        "evolution.elite_archive_size: must be <= population_size",
    )

    ev = raw.get("evaluation", {})
    if not isinstance(ev, dict):
        errors.append("evaluation: must be a mapping")
        ev = {}
    command = ev.get("command")
    if not isinstance(command, list) or not command or not all(isinstance(c, str) for c in command):
        errors.append("evaluation.command: must be a non-empty list of strings")
        command = ["false"]
    timeout = ev.get("timeout_seconds", 60.0)
    if not isinstance(timeout, (int, float)) or isinstance(timeout, bool) or timeout <= 0:
        errors.append("evaluation.timeout_seconds: must be a positive number")
        timeout = 60.0
    max_concurrent = ev.get("max_concurrent", 2)
    if not isinstance(max_concurrent, int) or isinstance(max_concurrent, bool) or max_concurrent < 1:
        errors.append("evaluation.max_concurrent: must be an integer >= 1")
        max_concurrent = 2

    llm_raw = raw.get("llm", {})
    if not isinstance(llm_raw, dict):
        errors.append("llm: must be a mapping")
        llm_raw = {}
    backend = llm_raw.get("backend", "mock")
    _require(backend in ("mock", "http"), errors, "llm.backend: must be mock or http")
    on_miss = llm_raw.get("on_corpus_miss", "identity")
    _require(on_miss in ("identity", "error"), errors, "llm.on_corpus_miss: identity or error")
    t_range = llm_raw.get("temperature_range", [0.05, 0.4])
    n_range = llm_raw.get("max_tokens_range", [600, 1400])
    try:
        param_ranges = ParamRanges(
            temperature_lo=float(t_range[0]),
            temperature_hi=float(t_range[1]),
            max_tokens_lo=int(n_range[0]),
            max_tokens_hi=int(n_range[1]),
        )
    except (ConfigError, TypeError, ValueError, IndexError) as exc:
        errors.append(f"llm parameter ranges: {exc}")
        param_ranges = ParamRanges()

    mock_corpus = llm_raw.get("mock_corpus")
    llm = LlmSettings(
        backend=backend if backend in ("mock", "http") else "mock",
        mock_corpus=(base / mock_corpus) if mock_corpus else None,
        on_corpus_miss=on_miss if on_miss in ("identity", "error") else "identity",
        base_url=str(llm_raw.get("base_url", "http://localhost:8000/v1")),
        model=str(llm_raw.get("model", "local-model")),
        auth_env=str(llm_raw.get("auth_env", "EVOBLOCKS_API_TOKEN")),
        max_attempts=int(llm_raw.get("max_attempts", 3)),
        backoff_seconds=float(llm_raw.get("backoff_seconds", 1.0)),
        request_cap=int(llm_raw.get("request_cap", 1)),
        param_ranges=param_ranges,
    )

    templates_dir = raw.get("templates_dir")

    if errors:
        raise ConfigError("invalid config:\n  " + "\n  ".join(errors))

    return RunConfig(
        run_dir=base,
        seed_path=(base / seed_path_raw).resolve(),
        comment_leader=comment_leader,
        objective_spec=spec,
        population_size=population_size,
        elite_archive_size=elite_archive_size,
        max_generations=max_generations,
        mating_rate=mating_rate,
        mutation_rate=mutation_rate,
        prob_eot=prob_eot,
        crp_enabled=crp_enabled,
        eot_enabled=eot_enabled,
        rng_seed=rng_seed,
        stagnation_window=stagnation_window,
        mutation_retries=mutation_retries,
        eval_command=tuple(command),
        eval_timeout=float(timeout),
        max_concurrent=max_concurrent,
        templates_dir=(base / templates_dir) if templates_dir else None,
        llm=llm,
        raw=raw,
    )


def load_seed_tree(seed_path: Path) -> list[tuple[str, str]]:
    """Read a seed file or directory into (relative path, text) pairs.

    Caches and bytecode (__pycache__, *.pyc) are skipped: pip compiles even
    bundled data seeds at install time.
    """
    if seed_path.is_file():
        return [(seed_path.name, seed_path.read_text(encoding="utf-8"))]
    if seed_path.is_dir():
        tree = []
        for p in sorted(seed_path.rglob("*")):
            rel = p.relative_to(seed_path)
            if "__pycache__" in rel.parts or p.suffix in (".pyc", ".pyo"):
                continue
            if p.is_file():
                tree.append((str(rel), p.read_text(encoding="utf-8")))
        if not tree:
            raise ConfigError(f"seed directory {seed_path} contains no files")
        return tree
    raise ConfigError(f"seed path {seed_path} does not exist")
