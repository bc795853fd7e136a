"""Operator-facing command line.

Commands: init, run, resume, report, inspect. Exit codes are a stable
contract: 0 success, 2 user/config error, 3 environment/backend error,
4 internal error.
"""

from __future__ import annotations

import argparse
import shutil
import sys
import traceback
from pathlib import Path

from . import toy
from .config import CONFIG_FILENAME, RunConfig, load_config, load_seed_tree
from .engine import build_engine, latest_checkpoint, read_checkpoint
from .errors import (
    BackendError,
    BackendUnavailable,
    CheckpointError,
    ConfigError,
    EvoblocksError,
    SeedError,
    TemplateError,
)
from .genome import parse_seed, render
from .report import Constraint, generate_report

EXIT_OK = 0
EXIT_USER = 2
EXIT_ENV = 3
EXIT_INTERNAL = 4

CONFIG_TEMPLATE = """\
# evoblocks run configuration. Relative paths resolve against this file's
# directory, which is also where checkpoints, logs, caches and reports land.

seed:
  path: {seed_path}
  comment_leader: "{comment_leader}"

# Named objectives with optimization directions; the evaluation command must
# report a value for each via its GE_METRICS stdout line.
objectives:
{objectives}

evolution:
  population_size: {population_size}
  elite_archive_size: {elite_archive_size}
  max_generations: {max_generations}
  mating_rate: 0.5
  mutation_rate: 1.0
  prob_eot: 0.3
  crp_enabled: true
  eot_enabled: true
  rng_seed: {rng_seed}
  stagnation_window: 0      # 0 disables the stagnation stop
  mutation_retries: 1

evaluation:
  # {{workdir}} is replaced with the rendered candidate's directory.
  command: {command}
  timeout_seconds: {timeout}
  max_concurrent: 2

llm:
  backend: {backend}          # mock | http
  mock_corpus: {mock_corpus}
  on_corpus_miss: identity    # identity | error
  base_url: http://localhost:8000/v1
  model: local-model
  auth_env: EVOBLOCKS_API_TOKEN
  max_attempts: 3
  backoff_seconds: 1.0
  request_cap: 1
  temperature_range: [0.05, 0.4]
  max_tokens_range: [600, 1400]

templates_dir: templates
"""


def _toy_objectives() -> str:
    return (
        "  - name: fit_error\n"
        "    direction: minimize\n"
        "  - name: complexity_count\n"
        "    direction: minimize"
    )


def cmd_init(args) -> int:
    out_dir = Path(args.output_dir)
    if args.toy:
        seed_src = toy.seed_dir()
        comment_leader = "#"
    elif args.seed_path:
        seed_src = Path(args.seed_path)
        comment_leader = args.comment_leader
    else:
        print("init: provide a seed path or --toy", file=sys.stderr)
        return EXIT_USER
    if not seed_src.exists():
        print(f"init: seed path {seed_src} does not exist", file=sys.stderr)
        return EXIT_USER

    try:
        tree = load_seed_tree(seed_src)
        template = parse_seed(tree, comment_leader=comment_leader)
    except (ConfigError, SeedError) as exc:
        print(f"init: seed does not parse: {exc}", file=sys.stderr)
        return EXIT_USER

    out_dir.mkdir(parents=True, exist_ok=True)
    seed_dest = out_dir / "seed"
    seed_dest.mkdir(exist_ok=True)
    for rel, text in tree:
        target = seed_dest / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text, encoding="utf-8")

    templates_dest = out_dir / "templates"
    if not templates_dest.exists():
        from importlib import resources

        shutil.copytree(str(resources.files("evoblocks") / "templates"), templates_dest)

    if args.toy:
        corpus_dest = out_dir / "corpus.json"
        shutil.copyfile(toy.corpus_path(), corpus_dest)
        command = '["python3", "-m", "evoblocks.toy.evaluate", "{workdir}"]'
        objectives = _toy_objectives()
        mock_corpus = "corpus.json"
        timeout = 30
    else:
        command = '["python3", "-m", "evoblocks.toy.evaluate", "{workdir}"]  # EDIT: your evaluation command'
        objectives = _toy_objectives() + "  # EDIT: your objectives"
        mock_corpus = "null"
        timeout = 600

    config_path = out_dir / CONFIG_FILENAME
    config_path.write_text(
        CONFIG_TEMPLATE.format(
            seed_path="seed",
            comment_leader=comment_leader,
            objectives=objectives,
            population_size=8 if args.toy else 20,
            elite_archive_size=4 if args.toy else 10,
            max_generations=5 if args.toy else 10,
            rng_seed=1,
            command=command,
            timeout=timeout,
            backend="mock",
            mock_corpus=mock_corpus,
        ),
        encoding="utf-8",
    )

    audit_path = out_dir / "seed_blocks.txt"
    audit_path.write_text(
        "\n".join(template.block_names) + "\n", encoding="utf-8"
    )
    print(f"initialized run directory {out_dir}")
    print(f"seed blocks ({len(template.block_names)}): {', '.join(template.block_names)}")
    print(f"edit {config_path} and start with: evoblocks run --config {config_path}")
    return EXIT_OK


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "no_eot", False):
        cfg.eot_enabled = False
    if getattr(args, "no_crp", False):
        cfg.crp_enabled = False
    if getattr(args, "mock_corpus", None):
        cfg.llm.backend = "mock"
        cfg.llm.mock_corpus = Path(args.mock_corpus).resolve()
    return cfg


def cmd_run(args) -> int:
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        engine = build_engine(cfg)
    except (ConfigError, SeedError, TemplateError) as exc:
        print(f"run: {exc}", file=sys.stderr)
        return EXIT_USER

    try:
        engine.gateway.ping()
    except (BackendUnavailable, BackendError) as exc:
        print(f"run: backend unreachable: {exc}", file=sys.stderr)
        return EXIT_ENV

    if args.dry_run:
        print(f"config ok: {len(engine.template.block_names)} blocks, "
              f"objectives {', '.join(cfg.objective_spec.names)}, backend reachable")
        return EXIT_OK

    if latest_checkpoint(cfg.checkpoint_dir) is not None and not args.force:
        print(
            f"run: checkpoints already exist under {cfg.checkpoint_dir}; "
            "use resume, or --force to start over",
            file=sys.stderr,
        )
        return EXIT_USER
    if args.force and cfg.checkpoint_dir.exists():
        shutil.rmtree(cfg.checkpoint_dir)
        for name in ("lineage.ndjson", "transcript.ndjson", "cache.ndjson"):
            (cfg.run_dir / name).unlink(missing_ok=True)
        engine = build_engine(cfg)  # reopen logs after the wipe

    state = engine.run()
    _print_summary(engine, state)
    return EXIT_OK


def cmd_resume(args) -> int:
    checkpoint_path = Path(args.checkpoint)
    run_dir = checkpoint_path.parent.parent
    config_path = run_dir / CONFIG_FILENAME
    if not config_path.exists():
        config_path = checkpoint_path.parent / CONFIG_FILENAME
    try:
        cfg = _apply_overrides(load_config(config_path), args)
        engine = build_engine(cfg)
        state = read_checkpoint(
            checkpoint_path,
            config_digest=cfg.digest(),
            template_digest=engine.template.digest(),
        )
    except (ConfigError, SeedError, TemplateError, CheckpointError) as exc:
        print(f"resume: {exc}", file=sys.stderr)
        return EXIT_USER

    try:
        engine.gateway.ping()
    except (BackendUnavailable, BackendError) as exc:
        print(f"resume: backend unreachable: {exc}", file=sys.stderr)
        return EXIT_ENV

    state = engine.run(state)
    _print_summary(engine, state)
    return EXIT_OK


def _print_summary(engine, state) -> None:
    print(f"run complete at generation {state.generation}")
    print(f"hall of fame ({len(state.hall_of_fame)} genomes):")
    for m in state.hall_of_fame.members:
        values = ", ".join(f"{k}={v:g}" for k, v in m.fitness.values.items())
        print(f"  {m.genome_id[:12]}  {values}  (born gen {m.genome.born_generation})")
    print(
        f"llm calls: {engine.gateway.call_count}, "
        f"evaluations: {engine.evaluator.launches} "
        f"(+{engine.evaluator.cache_hits} cache hits)"
    )


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    try:
        cfg = load_config(run_dir / CONFIG_FILENAME)
    except ConfigError as exc:
        print(f"report: {exc}", file=sys.stderr)
        return EXIT_USER
    constraint = None
    if args.constraint_objective:
        constraint = Constraint(
            objective=args.constraint_objective,
            max_value=args.constraint_max,
            min_value=args.constraint_min,
        )
    try:
        bundle = generate_report(run_dir, cfg.objective_spec, constraint=constraint)
    except CheckpointError as exc:
        print(f"report: {exc}", file=sys.stderr)
        return EXIT_USER
    print(f"wrote {bundle.pareto_csv}")
    print(f"wrote {bundle.trajectory_csv}")
    for p in bundle.plot_paths:
        print(f"wrote {p}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    run_dir = Path(args.run_dir)
    try:
        cfg = load_config(run_dir / CONFIG_FILENAME)
        template = parse_seed(load_seed_tree(cfg.seed_path), comment_leader=cfg.comment_leader)
    except (ConfigError, SeedError) as exc:
        print(f"inspect: {exc}", file=sys.stderr)
        return EXIT_USER

    target = None
    for path in sorted(cfg.checkpoint_dir.glob("checkpoint_gen*.json"), reverse=True):
        state = read_checkpoint(path)
        for m in list(state.hall_of_fame.members) + state.population + state.elites:
            if m.genome_id.startswith(args.genome_id):
                target = m
                break
        if target:
            break
    if target is None:
        print(f"inspect: genome {args.genome_id} not found in any checkpoint", file=sys.stderr)
        return EXIT_USER

    print(f"genome {target.genome_id}")
    print(f"born generation: {target.genome.born_generation}")
    print(f"parents: {', '.join(target.genome.parent_ids) or '(seed)'}")
    if target.fitness.valid:
        for k, v in target.fitness.values.items():
            print(f"  {k} = {v:g}")
    else:
        print("  fitness: invalid")
    print()
    for name, block in target.genome.blocks.items():
        p = block.provenance
        origin = p.kind if p.kind == "seed" else f"{p.kind} (gen {block.origin_generation})"
        print(f"-- block {name} [{origin}]")
    print()
    for rel, text in render(target.genome, template):
        print(f"==== {rel} ====")
        print(text)

    lineage_path = cfg.lineage_path
    if lineage_path.exists():
        import json as _json

        print("==== lineage events ====")
        with lineage_path.open("r", encoding="utf-8") as fh:
            for line in fh:
                if target.genome_id in line:
                    event = _json.loads(line)
                    print(
                        f"gen {event['generation']}: {event['event_type']}"
                        + (f" via {event['prompt_key']}" if event.get("prompt_key") else "")
                    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evoblocks",
        description="Evolve marker-delimited code blocks with LLM operators "
        "under multi-objective selection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_init = sub.add_parser("init", help="scaffold a run directory from a seed")
    p_init.add_argument("seed_path", nargs="?", help="seed file or directory")
    p_init.add_argument("output_dir", help="run directory to create")
    p_init.add_argument("--toy", action="store_true", help="use the bundled toy seed")
    p_init.add_argument("--comment-leader", default="#", help="marker comment leader")
    p_init.set_defaults(func=cmd_init)

    for name, func in (("run", cmd_run), ("resume", cmd_resume)):
        p = sub.add_parser(name, help=f"{name} an evolutionary run")
        if name == "run":
            p.add_argument("--config", required=True, help="path to config.yaml")
            p.add_argument("--force", action="store_true", help="overwrite an existing run")
            p.add_argument("--dry-run", action="store_true",
                           help="validate config, parse seed, ping backend, exit")
        else:
            p.add_argument("checkpoint", help="checkpoint file to resume from")
        p.add_argument("--mock-corpus", help="switch to the mock backend with this corpus")
        p.add_argument("--no-eot", action="store_true", help="disable exemplar-guided mutation")
        p.add_argument("--no-crp", action="store_true", help="disable persona role play")
        p.set_defaults(func=func)

    p_report = sub.add_parser("report", help="emit Pareto table, trajectory, and plots")
    p_report.add_argument("run_dir", help="run directory with checkpoints")
    p_report.add_argument("--constraint-objective", help="objective the constraint applies to")
    p_report.add_argument("--constraint-max", type=float, default=None)
    p_report.add_argument("--constraint-min", type=float, default=None)
    p_report.set_defaults(func=cmd_report)

    p_inspect = sub.add_parser("inspect", help="print a genome's source and lineage")
    p_inspect.add_argument("run_dir", help="run directory")
    p_inspect.add_argument("genome_id", help="genome id (prefix allowed)")
    p_inspect.set_defaults(func=cmd_inspect)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EvoblocksError as exc:
        print(f"evoblocks: {exc}", file=sys.stderr)
        return EXIT_USER
    except Exception:  # pragma: no cover - last-resort diagnostics
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
