"""Workflow generation engine: DSL, catalog, retrieval, generation, evaluation."""

from importlib import resources
from pathlib import Path

__version__ = "0.1.0"


def demo_catalog_dir() -> Path:
    """Directory of the demo environment catalog shipped with the package."""
    return Path(resources.files(__name__) / "data" / "catalog")


def demo_corpus_dir() -> Path:
    """Directory of the labeled demo workflow corpus shipped with the package."""
    return Path(resources.files(__name__) / "data" / "corpus")
