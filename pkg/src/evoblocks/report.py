"""Post-hoc reports over a run directory: Pareto front table, per-generation
best-objective trajectory, and static scatter plots.

Reports only read checkpoints and the lineage log; they never change run
state. The trajectory can be restricted to genomes satisfying a constraint
(e.g. best accuracy among models no larger than the seed), which is why it
scans the per-generation evaluation events rather than surviving populations.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .engine import latest_checkpoint, read_checkpoint
from .errors import CheckpointError
from .moea import MAXIMIZE, ObjectiveSpec


@dataclass(frozen=True)
class Constraint:
    """Objective bound a genome must satisfy to count for the trajectory."""

    objective: str
    max_value: float | None = None
    min_value: float | None = None

    def admits(self, values: dict[str, float]) -> bool:
        if self.objective not in values:
            return False
        v = values[self.objective]
        if self.max_value is not None and v > self.max_value:
            return False
        if self.min_value is not None and v < self.min_value:
            return False
        return True


@dataclass
class ReportBundle:
    pareto_csv: Path
    trajectory_csv: Path
    plot_paths: list[Path]


def _load_evaluations(lineage_path: Path) -> list[dict]:
    events = []
    if not lineage_path.exists():
        return events
    with lineage_path.open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                event = json.loads(line)
            except json.JSONDecodeError:
                continue
            if event.get("event_type") == "evaluate" and event.get("valid"):
                events.append(event)
    return events


def generate_report(
    run_dir: str | Path,
    spec: ObjectiveSpec,
    out_dir: str | Path | None = None,
    constraint: Constraint | None = None,
) -> ReportBundle:
    """Build the report bundle for a run; raises CheckpointError without one."""
    run_dir = Path(run_dir)
    checkpoint_path = latest_checkpoint(run_dir / "checkpoints")
    if checkpoint_path is None:
        raise CheckpointError(f"no checkpoints found under {run_dir}")
    state = read_checkpoint(checkpoint_path)
    out = Path(out_dir) if out_dir else run_dir / "reports"
    out.mkdir(parents=True, exist_ok=True)

    names = list(spec.names)

    pareto_csv = out / "pareto.csv"
    with pareto_csv.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["genome_id", *names, "born_generation"])
        for m in state.hall_of_fame.members:
            writer.writerow(
                [m.genome_id]
                + [m.fitness.values[n] for n in names]
                + [m.genome.born_generation]
            )

    evaluations = _load_evaluations(run_dir / "lineage.ndjson")
    generations = sorted({e["generation"] for e in evaluations})
    best_by_gen: list[dict] = []
    for g in generations:
        eligible = [
            e["values"] for e in evaluations
            if e["generation"] <= g and (constraint is None or constraint.admits(e["values"]))
        ]
        row: dict = {"generation": g}
        for obj in spec.objectives:
            vals = [v[obj.name] for v in eligible if obj.name in v]
            if not vals:
                row[obj.name] = ""
            else:
                row[obj.name] = max(vals) if obj.direction == MAXIMIZE else min(vals)
        best_by_gen.append(row)

    trajectory_csv = out / "trajectory.csv"
    with trajectory_csv.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["generation", *names])
        writer.writeheader()
        writer.writerows(best_by_gen)

    plots = [_plot_pareto(state, spec, out)]
    plots.extend(_plot_trajectory(best_by_gen, spec, out))
    return ReportBundle(pareto_csv=pareto_csv, trajectory_csv=trajectory_csv, plot_paths=plots)


def _plot_pareto(state, spec: ObjectiveSpec, out: Path) -> Path:
    x_name = spec.names[0]
    y_name = spec.names[1] if len(spec.names) > 1 else spec.names[0]
    xs = [m.fitness.values[x_name] for m in state.hall_of_fame.members]
    ys = [m.fitness.values[y_name] for m in state.hall_of_fame.members]
    gens = [m.genome.born_generation for m in state.hall_of_fame.members]
    fig, ax = plt.subplots(figsize=(6, 4.5))
    scatter = ax.scatter(xs, ys, c=gens, cmap="viridis")
    fig.colorbar(scatter, ax=ax, label="generation born")
    ax.set_xlabel(x_name)
    ax.set_ylabel(y_name)
    ax.set_title("Hall-of-fame front")
    path = out / "pareto.png"
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _plot_trajectory(rows: list[dict], spec: ObjectiveSpec, out: Path) -> list[Path]:
    paths = []
    for obj in spec.objectives:
        gens = [r["generation"] for r in rows if r[obj.name] != ""]
        vals = [r[obj.name] for r in rows if r[obj.name] != ""]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(gens, vals, marker="o")
        ax.set_xlabel("generation")
        ax.set_ylabel(f"best {obj.name}")
        ax.set_title(f"Best {obj.name} by generation ({obj.direction})")
        path = out / f"trajectory_{obj.name}.png"
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths
