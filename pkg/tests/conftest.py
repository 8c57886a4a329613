import numpy as np
import pytest

from clothgrasp.descriptors import train_model
from clothgrasp.synthetic import SyntheticSceneSpec, generate_scene


def make_scene(cls, seed, **kw):
    return generate_scene(SyntheticSceneSpec(garment_class=cls, seed=seed, **kw))


@pytest.fixture(scope="session")
def trained_model():
    """Small shared model: 6 scenes per class."""
    samples = []
    for cls in ("pant", "shirt", "tshirt"):
        for seed in range(6):
            depth, rec, _ = make_scene(cls, seed)
            samples.append((depth, rec.key_part_polygon, rec.key_part_label))
    return train_model(samples)
