"""Bundled desk-scale evaluation target.

A four-block cubic whose coefficients are the genes, scored against a
committed 200-point dataset in seconds and with zero extra dependencies. The
scorer is a pure function of the rendered bytes, so the whole evolutionary
loop is testable end to end.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

COEFFICIENTS = ("BIAS", "LINEAR", "QUAD", "CUBIC")


def data_dir() -> Path:
    return Path(str(resources.files("evoblocks") / "toy" / "data"))


def seed_dir() -> Path:
    return data_dir() / "seed"


def dataset_path() -> Path:
    return data_dir() / "dataset.json"


def corpus_path() -> Path:
    return data_dir() / "corpus.json"
