from __future__ import annotations

import random
import sys

import pytest

from evoblocks import toy
from evoblocks.config import load_seed_tree
from evoblocks.genome import CodeBlock, Genome, parse_seed
from evoblocks.llm import LlmGateway, MockBackend
from evoblocks.moea import Fitness, ObjectiveSpec, ScoredGenome
from evoblocks.prompts import PromptSet

PY = sys.executable

TWO_BLOCK_SEED = """\
header line
# @GE-BLOCK: SE
se_line_one
se_line_two
# @GE-END
middle scaffold
# @GE-BLOCK: FCT
fct_line
# @GE-END
footer
"""

MIN2 = ObjectiveSpec.of(("a", "minimize"), ("b", "minimize"))


@pytest.fixture(scope="session")
def prompts() -> PromptSet:
    return PromptSet.default()


@pytest.fixture(scope="session")
def toy_template():
    return parse_seed(load_seed_tree(toy.seed_dir()), comment_leader="#")


@pytest.fixture()
def two_block_template():
    return parse_seed([("main.py", TWO_BLOCK_SEED)])


def make_gateway(corpus=None, on_miss="identity", transcript_path=None, request_cap=4):
    backend = MockBackend(corpus=corpus or {}, on_miss=on_miss)
    return LlmGateway(backend, transcript_path=transcript_path, request_cap=request_cap)


def make_genome(tag: str) -> Genome:
    """Minimal one-block genome with content-unique id."""
    return Genome(blocks={"B": CodeBlock(name="B", source=f"content {tag}")})


def scored(tag: str, **values) -> ScoredGenome:
    return ScoredGenome(genome=make_genome(tag), fitness=Fitness.of(**values))


def scored_invalid(tag: str) -> ScoredGenome:
    return ScoredGenome(genome=make_genome(tag), fitness=Fitness.invalid())


def assert_diff_confined_to_block(base_text: str, new_text: str, name: str, leader: str = "#"):
    """Both texts must agree outside the named block's marker region."""
    open_marker = f"{leader} @GE-BLOCK: {name}"
    close_marker = f"{leader} @GE-END"

    def bounds(lines):
        open_i = next(i for i, l in enumerate(lines) if l.strip() == open_marker)
        close_i = next(
            i for i in range(open_i + 1, len(lines)) if lines[i].strip() == close_marker
        )
        return open_i, close_i

    base_lines = base_text.split("\n")
    new_lines = new_text.split("\n")
    b_open, b_close = bounds(base_lines)
    n_open, n_close = bounds(new_lines)
    assert base_lines[: b_open + 1] == new_lines[: n_open + 1]
    assert base_lines[b_close:] == new_lines[n_close:]


def rand_population(rng: random.Random, size: int, names, valid_rate=1.0):
    pop = []
    for i in range(size):
        if rng.random() > valid_rate:
            pop.append(scored_invalid(f"r{rng.random()}_{i}"))
        else:
            pop.append(
                scored(
                    f"r{rng.random()}_{i}",
                    **{n: round(rng.uniform(-10, 10), 3) for n in names},
                )
            )
    return pop
