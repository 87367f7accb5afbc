import os
import sys

import pytest

_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, _ROOT)

from models import ModelSpec  # noqa: E402
from structures import model_from_name  # noqa: E402


@pytest.fixture
def heis() -> ModelSpec:
    return ModelSpec.heisenberg()


@pytest.fixture
def grushin() -> ModelSpec:
    return ModelSpec.grushin()


@pytest.fixture
def htype() -> ModelSpec:
    """Corank-1 H-type group with k=4, S = diag(1, 1, 2, 2)."""
    return model_from_name("htype")


@pytest.fixture
def heis_generic() -> ModelSpec:
    """The Heisenberg frame entered as a generic polynomial frame (numeric paths only)."""
    return ModelSpec.generic(
        [
            [[(1.0, (0, 0, 0))], [], [(-0.5, (0, 1, 0))]],
            [[], [(1.0, (0, 0, 0))], [(0.5, (1, 0, 0))]],
        ]
    )


@pytest.fixture
def euclidean2() -> ModelSpec:
    return ModelSpec.generic([[[(1.0, (0, 0))], []], [[], [(1.0, (0, 0))]]])
