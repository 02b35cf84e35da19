import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def stripes(h, w, angle_deg, spacing=12.0, width=3.0, phase=0.0, level=200.0, background=20.0):
    from pennation.synth import stripe_pattern
    return background + (level - background) * stripe_pattern(h, w, angle_deg, spacing, width, phase)
