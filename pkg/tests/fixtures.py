"""Hand-placed fixture scene and seeded model shared by golden-value tests."""

import numpy as np

from wheelgraph.geometry import BoundingBox, BoxClass, Scene
from wheelgraph.priors import GaussianMixture, PriorModel
from wheelgraph.relgraph import init_model


def golden_scene():
    """Two vehicles, three wheels; one wheel doubly contained."""
    return Scene(
        0, 800.0, 600.0,
        (
            BoundingBox(0, BoxClass.VEHICLE, 80.0, 260.0, 340.0, 440.0),
            BoundingBox(1, BoxClass.VEHICLE, 300.0, 250.0, 560.0, 440.0),
            BoundingBox(2, BoxClass.WHEEL, 110.0, 390.0, 160.0, 440.0),
            BoundingBox(3, BoxClass.WHEEL, 280.0, 390.0, 330.0, 440.0),
            BoundingBox(4, BoxClass.WHEEL, 500.0, 390.0, 550.0, 440.0),
        ),
        gt_wheel_vehicle={2: 0, 3: 0, 4: 1},
        gt_wheel_wheel=frozenset({frozenset({2, 3})}),
    )


def golden_priors():
    """Fixed mixtures so golden values do not depend on any fitting run."""
    wv = GaussianMixture(
        np.array([0.6, 0.4]), np.array([0.2, 1.1]), np.array([0.09, 0.25])
    )
    ww = GaussianMixture(
        np.array([0.5, 0.5]), np.array([0.8, 1.6]), np.array([0.16, 0.36])
    )
    return PriorModel(wv=wv, ww=ww)


def golden_model():
    return init_model(
        feature_dim=4, gcn_depth=2, gat_hidden=3, extractor_hidden=(5,), seed=1234
    )
