"""Prompt template loading and chat-request construction.

Templates live in a directory of plain text files so operators can edit them
without touching code:

    templates/
      system.txt
      eot.txt                  uses {seed_block} {elite_block} {target_block}
      mate.txt                 uses {block_a} {block_b}
      categories/<id>.txt      uses {block_source}
      personas/<id>.txt        plain preamble text

Unknown or missing placeholders are a startup error.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import ExemplarMismatch, IneffectualMating, TemplateError
from .genome import CodeBlock
from .llm import ChatRequest, GenerationParams

CATEGORY_IDS = (
    "hyperparam",
    "hyperparam_uncommon",
    "complex",
    "reduce_size",
    "uncommon",
    "significant",
)

PERSONA_IDS = ("none", "expert", "dr_magoo", "innovative_scientist")

_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")

DEFAULT_PARAMS = GenerationParams(temperature=0.2, max_tokens=1000)


@dataclass(frozen=True)
class PromptCategory:
    id: str
    template: str


@dataclass(frozen=True)
class Persona:
    id: str
    preamble: str


def _check_placeholders(text: str, required: set[str], label: str) -> None:
    found = set(_PLACEHOLDER_RE.findall(text))
    unknown = found - required
    if unknown:
        raise TemplateError(f"{label}: unknown placeholders {sorted(unknown)}")
    missing = required - found
    if missing:
        raise TemplateError(f"{label}: missing placeholders {sorted(missing)}")


class PromptSet:
    """All templates for one run, loaded and validated up front."""

    def __init__(
        self,
        categories: dict[str, PromptCategory],
        personas: dict[str, Persona],
        eot_template: str,
        mate_template: str,
        system_text: str,
    ):
        self.categories = categories
        self.personas = personas
        self.eot_template = eot_template
        self.mate_template = mate_template
        self.system_text = system_text

    @classmethod
    def load(cls, directory: str | Path) -> "PromptSet":
        root = Path(directory)
        if not root.is_dir():
            raise TemplateError(f"template directory not found: {root}")

        categories: dict[str, PromptCategory] = {}
        for path in sorted((root / "categories").glob("*.txt")):
            cid = path.stem
            if cid not in CATEGORY_IDS:
                raise TemplateError(f"unknown prompt category file: {path.name}")
            text = path.read_text(encoding="utf-8")
            _check_placeholders(text, {"block_source"}, f"categories/{path.name}")
            categories[cid] = PromptCategory(id=cid, template=text)
        missing = [c for c in CATEGORY_IDS if c not in categories]
        if missing:
            raise TemplateError(f"missing category templates: {missing}")

        personas: dict[str, Persona] = {"none": Persona(id="none", preamble="")}
        for path in sorted((root / "personas").glob("*.txt")):
            pid = path.stem
            if pid not in PERSONA_IDS or pid == "none":
                raise TemplateError(f"unknown persona file: {path.name}")
            text = path.read_text(encoding="utf-8").strip()
            _check_placeholders(text, set(), f"personas/{path.name}")
            personas[pid] = Persona(id=pid, preamble=text)
        missing = [p for p in PERSONA_IDS if p not in personas]
        if missing:
            raise TemplateError(f"missing persona templates: {missing}")

        eot = (root / "eot.txt").read_text(encoding="utf-8")
        _check_placeholders(eot, {"seed_block", "elite_block", "target_block"}, "eot.txt")
        mate = (root / "mate.txt").read_text(encoding="utf-8")
        _check_placeholders(mate, {"block_a", "block_b"}, "mate.txt")
        system = (root / "system.txt").read_text(encoding="utf-8").strip()
        _check_placeholders(system, set(), "system.txt")

        return cls(
            categories=categories,
            personas=personas,
            eot_template=eot,
            mate_template=mate,
            system_text=system,
        )

    @classmethod
    def default(cls) -> "PromptSet":
        return cls.load(resources.files("evoblocks") / "templates")

    def build_fixed_prompt(
        self,
        block: CodeBlock,
        category: str,
        persona: str = "none",
        params: GenerationParams = DEFAULT_PARAMS,
    ) -> ChatRequest:
        """Category template instantiated with the block, optionally persona-led."""
        if category not in self.categories:
            raise TemplateError(f"unknown category {category!r}")
        if persona not in self.personas:
            raise TemplateError(f"unknown persona {persona!r}")
        body = self.categories[category].template.replace("{block_source}", block.source)
        preamble = self.personas[persona].preamble
        user = f"{preamble}\n\n{body}" if preamble else body
        return ChatRequest(
            system_text=self.system_text,
            user_text=user,
            temperature=params.temperature,
            max_tokens=params.max_tokens,
            mock_key=f"mutate:{block.name}:{category}:{persona}",
            fallback_text=block.source,
        )

    def build_eot_prompt(
        self,
        target: CodeBlock,
        elite_block: CodeBlock,
        seed_block: CodeBlock,
        params: GenerationParams = DEFAULT_PARAMS,
    ) -> ChatRequest:
        """Seed-vs-elite exemplar comparison applied to a target block."""
        if elite_block.name != seed_block.name:
            raise ExemplarMismatch(
                f"exemplar blocks differ: {elite_block.name!r} vs {seed_block.name!r}"
            )
        user = (
            self.eot_template
            .replace("{seed_block}", seed_block.source)
            .replace("{elite_block}", elite_block.source)
            .replace("{target_block}", target.source)
        )
        notes = []
        if elite_block.source == seed_block.source:
            notes.append(
                "Note: the improved variant is identical to the original, so there is "
                "no change to analyze; focus on strengthening the target block directly."
            )
        if target.name == elite_block.name:
            notes.append(
                "Note: the target block is the same gene as the exemplar pair; "
                "you are refining that block further."
            )
        if notes:
            user = user.rstrip() + "\n\n" + "\n".join(notes) + "\n"
        return ChatRequest(
            system_text=self.system_text,
            user_text=user,
            temperature=params.temperature,
            max_tokens=params.max_tokens,
            mock_key=f"eot:{target.name}",
            fallback_text=target.source,
        )

    def build_mating_prompt(
        self,
        block_a: CodeBlock,
        block_b: CodeBlock,
        params: GenerationParams = DEFAULT_PARAMS,
    ) -> ChatRequest:
        """Merge request over two differing variants of the same block."""
        if block_a.name != block_b.name:
            raise ValueError(f"cannot mate different blocks: {block_a.name!r} vs {block_b.name!r}")
        if block_a.source == block_b.source:
            raise IneffectualMating(f"variants of {block_a.name!r} are identical")
        user = (
            self.mate_template
            .replace("{block_a}", block_a.source)
            .replace("{block_b}", block_b.source)
        )
        return ChatRequest(
            system_text=self.system_text,
            user_text=user,
            temperature=params.temperature,
            max_tokens=params.max_tokens,
            mock_key=f"mate:{block_a.name}",
            fallback_text=block_a.source,
        )
