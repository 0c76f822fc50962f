"""Shared fixtures and helpers for the test suite."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from mwpeval import Dataset, Triplet, load_dataset

DATA_DIR = Path(__file__).parent / "data"


def read_jsonl(path: Path) -> list[dict]:
    with path.open(encoding="utf-8") as handle:
        return [json.loads(line) for line in handle if line.strip()]


def make_triplet(**overrides) -> Triplet:
    """A valid triplet with every field filled; override what the test needs."""
    fields = dict(
        id="x01",
        question="A box holds 6 eggs. How many eggs are in 4 boxes?",
        reference_solution="Each box holds 6 eggs. Four boxes hold 6 * 4 = 24 eggs.",
        reference_numeric="24",
        brief_explanation="Four boxes hold 6 * 4 = 24 eggs.",
        wrong_solution="6 + 4 = 10 eggs.",
        source="unit",
        meta={},
    )
    fields.update(overrides)
    return Triplet(**fields)


@pytest.fixture(scope="session")
def fixture_dataset() -> Dataset:
    return load_dataset(DATA_DIR / "fixture_triplets.jsonl")


@pytest.fixture()
def scripted_path() -> Path:
    return DATA_DIR / "scripted_responses.jsonl"
