"""evoblocks: LLM-driven evolution of marker-delimited code blocks under
multi-objective selection, with sandboxed subprocess evaluation."""

from .engine import Engine, LineageLog, RunState, build_engine, read_checkpoint, write_checkpoint
from .evaluator import EvalConfig, EvalRecord, Evaluator
from .genome import CodeBlock, Genome, Provenance, SeedTemplate, differing_blocks, parse_seed, render
from .llm import ChatRequest, HttpBackend, LlmGateway, LlmResponse, MockBackend, extract_code
from .moea import (
    Fitness,
    Objective,
    ObjectiveSpec,
    ParetoArchive,
    ScoredGenome,
    crowding_distance,
    dominates,
    fast_nondominated_sort,
    nsga2_select,
    spea2_environmental_select,
    spea2_fitness,
    update_hall_of_fame,
)
from .operators import MutationContext, mate, mutate
from .prompts import CATEGORY_IDS, PERSONA_IDS, PromptSet

__version__ = "0.1.0"
