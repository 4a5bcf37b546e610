"""Test-only helpers that expose ground truth the learners must never see."""

import numpy as np

from .mixture import ComponentLabel, MallowsMixture, _component_draws


def sample_with_labels(mix: MallowsMixture, count: int, rng: np.random.Generator):
    """Draw rankings together with the component that produced each one."""
    orders, labels = _component_draws(mix, count, rng)
    return orders, [ComponentLabel(int(x)) for x in labels]
