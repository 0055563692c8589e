import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mdflow.motion import (
    identity_motion,
    rotating_ellipse_motion,
    stretch_motion,
    translation_motion,
)


def builtin_motions(horizon=1.0):
    """One instance of every built-in motion kind."""
    return {
        "identity": identity_motion(horizon),
        "translation": translation_motion(
            lambda t: np.array([t, 0.5 * t * t]),
            lambda t: np.array([1.0, t]),
            horizon,
        ),
        "stretch": stretch_motion(lambda t: 0.2 * t, lambda t: 0.2, horizon),
        "rotating_ellipse": rotating_ellipse_motion(
            np.sqrt(2.0), lambda t: t, lambda t: 1.0, horizon
        ),
    }


@pytest.fixture(scope="session")
def motions():
    return builtin_motions()


@pytest.fixture(params=list(builtin_motions().keys()))
def motion_kind(request):
    return request.param
