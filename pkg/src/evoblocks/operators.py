"""LLM-driven genetic operators: mutation (fixed-prompt or exemplar-guided)
and single-block crossover.

Both operators touch exactly one block of the genome and never modify their
inputs. Randomness comes from the context's rng in a fixed draw order, so a
run is reproducible from its seed under the mock backend.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .errors import EvoblocksError, MatingFailed, MutationFailed
from .genome import CodeBlock, Genome, Provenance, differing_blocks
from .llm import LlmGateway, ParamRanges, extract_code, sample_params
from .moea import ScoredGenome
from .prompts import CATEGORY_IDS, PERSONA_IDS, PromptSet


@dataclass
class MutationContext:
    """Everything one mutation or mating event needs."""

    seed: Genome
    rng: random.Random
    gateway: LlmGateway
    prompts: PromptSet
    prob_eot: float = 0.3
    elites: list[ScoredGenome] = field(default_factory=list)
    crp_enabled: bool = True
    eot_enabled: bool = True
    generation: int = 0
    param_ranges: ParamRanges = field(default_factory=ParamRanges)


def _complete_block(ctx: MutationContext, request) -> str:
    response = ctx.gateway.complete(request)
    return extract_code(response.raw_text)


def mutate(genome: Genome, ctx: MutationContext, record: dict | None = None) -> Genome:
    """Rewrite one uniformly drawn block via the LLM.

    Draw order: target block; EoT-vs-fixed branch (only when EoT is possible);
    then the branch's own draws and the generation parameters. With
    probability prob_eot (given eot_enabled and non-empty elites) an elite
    exemplar guides the rewrite; otherwise a category template is used, with a
    persona drawn uniformly from the four options when role play is enabled.

    When `record` is given it receives the prompt key actually used.
    Raises MutationFailed on any LLM or extraction failure.
    """
    names = list(genome.blocks)
    target_name = names[ctx.rng.randrange(len(names))]
    target = genome.blocks[target_name]

    use_eot = False
    if ctx.eot_enabled and ctx.elites:
        use_eot = ctx.rng.random() < ctx.prob_eot

    exemplar = None
    if use_eot:
        elite = ctx.elites[ctx.rng.randrange(len(ctx.elites))]
        diff = differing_blocks(elite.genome, ctx.seed)
        if diff:
            exemplar_name = diff[ctx.rng.randrange(len(diff))]
            exemplar = (
                elite.genome.blocks[exemplar_name],
                ctx.seed.blocks[exemplar_name],
            )
        # An elite identical to the seed gives the model nothing to compare;
        # fall back to a fixed-prompt mutation.

    try:
        if exemplar is not None:
            params = sample_params(ctx.rng, ctx.param_ranges)
            request = ctx.prompts.build_eot_prompt(target, exemplar[0], exemplar[1], params)
            new_source = _complete_block(ctx, request)
            provenance = Provenance(kind="eot")
        else:
            category = CATEGORY_IDS[ctx.rng.randrange(len(CATEGORY_IDS))]
            persona = (
                PERSONA_IDS[ctx.rng.randrange(len(PERSONA_IDS))]
                if ctx.crp_enabled
                else "none"
            )
            params = sample_params(ctx.rng, ctx.param_ranges)
            request = ctx.prompts.build_fixed_prompt(target, category, persona, params)
            new_source = _complete_block(ctx, request)
            provenance = Provenance(kind="mutated", category=category, persona=persona)
        if record is not None:
            record["prompt_key"] = request.mock_key
            record["block"] = target_name
    except EvoblocksError as exc:
        raise MutationFailed(f"mutation of block {target_name!r} failed: {exc}") from exc

    new_block = CodeBlock(
        name=target_name,
        source=new_source,
        provenance=provenance,
        origin_generation=ctx.generation,
    )
    return genome.with_block(
        new_block,
        parent_ids=(genome.genome_id,),
        born_generation=ctx.generation,
    )


def mate(
    parent_a: Genome,
    parent_b: Genome,
    ctx: MutationContext,
    record: dict | None = None,
) -> Genome:
    """Merge one uniformly drawn differing block of two parents via the LLM.

    Identical parents short-circuit to a clone of parent_a with no LLM call.
    Raises MatingFailed on any LLM or extraction failure.
    """
    diff = differing_blocks(parent_a, parent_b)
    if not diff:
        if record is not None:
            record["clone"] = True
        return parent_a

    block_name = diff[ctx.rng.randrange(len(diff))]
    params = sample_params(ctx.rng, ctx.param_ranges)
    try:
        request = ctx.prompts.build_mating_prompt(
            parent_a.blocks[block_name],
            parent_b.blocks[block_name],
            params,
        )
        merged_source = _complete_block(ctx, request)
        if record is not None:
            record["clone"] = False
            record["prompt_key"] = request.mock_key
            record["block"] = block_name
    except EvoblocksError as exc:
        raise MatingFailed(f"mating on block {block_name!r} failed: {exc}") from exc

    merged = CodeBlock(
        name=block_name,
        source=merged_source,
        provenance=Provenance(
            kind="mated",
            parent_ids=(parent_a.genome_id, parent_b.genome_id),
        ),
        origin_generation=ctx.generation,
    )
    return parent_a.with_block(
        merged,
        parent_ids=(parent_a.genome_id, parent_b.genome_id),
        born_generation=ctx.generation,
    )
