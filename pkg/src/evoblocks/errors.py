"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class EvoblocksError(Exception):
    """Base class for all engine errors."""


# --- seed / genome ---------------------------------------------------------

class SeedError(EvoblocksError):
    """Problem in a seed source tree."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        loc = ""
        if path is not None:
            loc = f" [{path}" + (f":{line}" if line is not None else "") + "]"
        super().__init__(message + loc)


class DuplicateBlock(SeedError):
    pass


class UnbalancedMarker(SeedError):
    pass


class EmptySeed(SeedError):
    pass


class EmptyBlock(SeedError):
    pass


class IncompleteGenome(EvoblocksError):
    pass


class TemplateMismatch(EvoblocksError):
    pass


# --- objectives / selection ------------------------------------------------

class ObjectiveMismatch(EvoblocksError):
    pass


# --- llm gateway -----------------------------------------------------------

class ConfigError(EvoblocksError):
    pass


class BackendUnavailable(EvoblocksError):
    pass


class BackendError(EvoblocksError):
    def __init__(self, status: int, detail: str = ""):
        self.status = status
        super().__init__(f"backend returned HTTP {status}" + (f": {detail}" if detail else ""))


class CorpusMiss(EvoblocksError):
    pass


class EmptyCode(EvoblocksError):
    pass


# --- operators --------------------------------------------------------------

class TemplateError(EvoblocksError):
    pass


class ExemplarMismatch(EvoblocksError):
    pass


class IneffectualMating(EvoblocksError):
    pass


class MutationFailed(EvoblocksError):
    pass


class MatingFailed(EvoblocksError):
    pass


# --- engine / persistence ---------------------------------------------------

class CheckpointError(EvoblocksError):
    pass


class VersionError(CheckpointError):
    pass
