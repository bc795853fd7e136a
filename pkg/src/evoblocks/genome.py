"""Seed parsing, genome representation, and rendering.

A seed source tree is ordinary text with marker-delimited gene blocks:

    # @GE-BLOCK: SE
    ...block body...
    # @GE-END

Everything outside the marker pairs (including the marker lines themselves)
is immutable scaffold. A genome assigns one source variant to every block
name discovered at parse time; rendering substitutes the variants back into
the scaffold byte-for-byte.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

from .errors import (
    DuplicateBlock,
    EmptyBlock,
    EmptySeed,
    IncompleteGenome,
    TemplateMismatch,
    UnbalancedMarker,
)

BLOCK_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")

PROVENANCE_KINDS = ("seed", "mutated", "eot", "mated")


@dataclass(frozen=True)
class Provenance:
    """Where a block variant came from."""

    kind: str  # one of PROVENANCE_KINDS
    category: str | None = None  # mutated only
    persona: str | None = None  # mutated only
    parent_ids: tuple[str, ...] = ()  # mated only

    def __post_init__(self):
        if self.kind not in PROVENANCE_KINDS:
            raise ValueError(f"unknown provenance kind {self.kind!r}")

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.category is not None:
            d["category"] = self.category
        if self.persona is not None:
            d["persona"] = self.persona
        if self.parent_ids:
            d["parent_ids"] = list(self.parent_ids)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Provenance":
        return cls(
            kind=d["kind"],
            category=d.get("category"),
            persona=d.get("persona"),
            parent_ids=tuple(d.get("parent_ids", ())),
        )


SEED_PROVENANCE = Provenance(kind="seed")


@dataclass(frozen=True)
class CodeBlock:
    """One gene segment: a named marker-delimited region of the seed."""

    name: str
    source: str
    provenance: Provenance = SEED_PROVENANCE
    origin_generation: int = 0

    def __post_init__(self):
        if not self.name:
            raise ValueError("block name must be non-empty")
        if not self.source:
            raise ValueError(f"block {self.name!r} has empty source")
        if self.origin_generation < 0:
            raise ValueError("origin_generation must be non-negative")
        if self.provenance.kind == "seed" and self.origin_generation != 0:
            raise ValueError("seed blocks must have origin_generation 0")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "source": self.source,
            "provenance": self.provenance.to_dict(),
            "origin_generation": self.origin_generation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CodeBlock":
        return cls(
            name=d["name"],
            source=d["source"],
            provenance=Provenance.from_dict(d["provenance"]),
            origin_generation=d["origin_generation"],
        )


@dataclass(frozen=True)
class _Region:
    """Line span of one block inside one seed file (markers excluded)."""

    name: str
    path: str
    start: int  # index of first body line
    end: int  # index one past the last body line


@dataclass(frozen=True)
class SeedTemplate:
    """Parsed seed: immutable scaffold plus the ordered block names."""

    files: tuple[tuple[str, str], ...]
    block_names: tuple[str, ...]
    comment_leader: str = "#"
    _regions: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def block_sources(self) -> dict[str, str]:
        texts = dict(self.files)
        out = {}
        for name in self.block_names:
            region: _Region = self._regions[name]
            lines = _file_lines(texts[region.path])
            out[name] = "\n".join(lines[region.start:region.end])
        return out

    def seed_genome(self) -> "Genome":
        blocks = {
            name: CodeBlock(name=name, source=src)
            for name, src in self.block_sources.items()
        }
        return Genome(blocks=blocks)

    def digest(self) -> str:
        h = hashlib.sha256()
        for path, text in self.files:
            h.update(path.encode("utf-8"))
            h.update(b"\x00")
            h.update(text.encode("utf-8"))
            h.update(b"\x00")
        return h.hexdigest()


@dataclass(frozen=True)
class Genome:
    """A full assignment of one variant to every block; the unit of selection."""

    blocks: dict[str, CodeBlock]
    parent_ids: tuple[str, ...] = ()
    born_generation: int = 0
    genome_id: str = field(default="", compare=False)

    def __post_init__(self):
        if len(self.parent_ids) > 2:
            raise ValueError("a genome has at most two parents")
        for name, block in self.blocks.items():
            if block.name != name:
                raise ValueError(f"block stored under {name!r} is named {block.name!r}")
        object.__setattr__(self, "genome_id", _content_hash(self.blocks))

    def with_block(
        self,
        block: CodeBlock,
        parent_ids: tuple[str, ...],
        born_generation: int,
    ) -> "Genome":
        """Copy of this genome with one block replaced; never mutates self."""
        if block.name not in self.blocks:
            raise TemplateMismatch(f"block {block.name!r} not in genome")
        new_blocks = dict(self.blocks)
        new_blocks[block.name] = block
        return Genome(
            blocks=new_blocks,
            parent_ids=parent_ids,
            born_generation=born_generation,
        )

    def to_dict(self) -> dict:
        return {
            "genome_id": self.genome_id,
            "parent_ids": list(self.parent_ids),
            "born_generation": self.born_generation,
            "blocks": [self.blocks[n].to_dict() for n in self.blocks],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Genome":
        blocks = {b["name"]: CodeBlock.from_dict(b) for b in d["blocks"]}
        g = cls(
            blocks=blocks,
            parent_ids=tuple(d["parent_ids"]),
            born_generation=d["born_generation"],
        )
        if d.get("genome_id") and g.genome_id != d["genome_id"]:
            raise ValueError("genome_id mismatch after deserialization")
        return g


def _content_hash(blocks: dict[str, CodeBlock]) -> str:
    """256-bit hash of (name, source) pairs; lineage metadata excluded.

    Pairs are hashed in lexicographic name order so the id is independent of
    the mapping's internal storage order.
    """
    h = hashlib.sha256()
    for name in sorted(blocks):
        src = blocks[name].source
        h.update(f"{len(name)}:".encode("ascii"))
        h.update(name.encode("utf-8"))
        h.update(f"{len(src.encode('utf-8'))}:".encode("ascii"))
        h.update(src.encode("utf-8"))
    return h.hexdigest()


def genome_id(genome: Genome) -> str:
    """Content hash of a genome; equal block sources imply equal ids."""
    return _content_hash(genome.blocks)


def _file_lines(text: str) -> list[str]:
    return text.split("\n")


def _marker_patterns(comment_leader: str) -> tuple[re.Pattern, re.Pattern]:
    lead = re.escape(comment_leader)
    open_re = re.compile(rf"^\s*{lead} @GE-BLOCK: ([A-Za-z_][A-Za-z0-9_]*)\s*$")
    close_re = re.compile(rf"^\s*{lead} @GE-END\s*$")
    return open_re, close_re


def parse_seed(
    source_tree: list[tuple[str, str]],
    comment_leader: str = "#",
) -> SeedTemplate:
    """Parse a seed source tree into a template of named gene blocks.

    Raises DuplicateBlock, UnbalancedMarker, EmptyBlock or EmptySeed on
    malformed input.
    """
    open_re, close_re = _marker_patterns(comment_leader)
    regions: dict[str, _Region] = {}
    order: list[str] = []

    for path, text in source_tree:
        lines = _file_lines(text)
        current: str | None = None
        start = 0
        open_line = 0
        for i, line in enumerate(lines):
            m_open = open_re.match(line)
            m_close = close_re.match(line)
            if m_open:
                if current is not None:
                    raise UnbalancedMarker(
                        f"marker for {m_open.group(1)!r} opened while {current!r} is still open",
                        path=path,
                        line=i + 1,
                    )
                name = m_open.group(1)
                if name in regions:
                    raise DuplicateBlock(f"block {name!r} defined twice", path=path, line=i + 1)
                current = name
                start = i + 1
                open_line = i + 1
            elif m_close:
                if current is None:
                    raise UnbalancedMarker("close marker without open", path=path, line=i + 1)
                body = lines[start:i]
                if not "\n".join(body):
                    raise EmptyBlock(f"block {current!r} has an empty body", path=path, line=i + 1)
                regions[current] = _Region(name=current, path=path, start=start, end=i)
                order.append(current)
                current = None
        if current is not None:
            raise UnbalancedMarker(
                f"block {current!r} opened here but never closed", path=path, line=open_line
            )

    if not order:
        raise EmptySeed("no marker-delimited blocks found in seed")

    template = SeedTemplate(
        files=tuple((p, t) for p, t in source_tree),
        block_names=tuple(order),
        comment_leader=comment_leader,
    )
    template._regions.update(regions)
    return template


def render(genome: Genome, template: SeedTemplate) -> list[tuple[str, str]]:
    """Substitute the genome's block sources into the template scaffold.

    Scaffold bytes (including the marker lines) are reproduced verbatim;
    output is byte-deterministic.
    """
    missing = [n for n in template.block_names if n not in genome.blocks]
    if missing:
        raise IncompleteGenome(f"genome missing blocks: {', '.join(missing)}")
    extra = [n for n in genome.blocks if n not in template.block_names]
    if extra:
        raise TemplateMismatch(f"genome has blocks unknown to template: {', '.join(extra)}")

    by_path: dict[str, list[_Region]] = {}
    for name in template.block_names:
        region: _Region = template._regions[name]
        by_path.setdefault(region.path, []).append(region)

    out: list[tuple[str, str]] = []
    for path, text in template.files:
        lines = _file_lines(text)
        pieces: list[str] = []
        cursor = 0
        for region in sorted(by_path.get(path, []), key=lambda r: r.start):
            pieces.extend(lines[cursor:region.start])
            pieces.extend(_file_lines(genome.blocks[region.name].source))
            cursor = region.end
        pieces.extend(lines[cursor:])
        out.append((path, "\n".join(pieces)))
    return out


def differing_blocks(a: Genome, b: Genome) -> list[str]:
    """Names of blocks whose source text differs, in a's block order."""
    if set(a.blocks) != set(b.blocks):
        raise TemplateMismatch("genomes are not from the same template")
    return [n for n in a.blocks if a.blocks[n].source != b.blocks[n].source]
