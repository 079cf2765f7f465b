from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from symptom_search.questionnaire import (
    default_questionnaire_path,
    load_questionnaire,
)


@pytest.fixture(scope="session")
def questionnaire():
    return load_questionnaire(default_questionnaire_path())


def random_unit_vectors(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    """Random float32 unit vectors with no zero rows."""
    matrix = rng.standard_normal((count, dim))
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    return (matrix / norms).astype(np.float32)
