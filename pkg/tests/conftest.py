from __future__ import annotations

import numpy as np
import pytest

from flowtwin import synthetic
from flowtwin.environment import baseline_environment
from flowtwin.network import Network


def triangle_network_payload():
    """Three PoIs on a triangle where the two-hop route beats the direct edge."""
    return {
        "nodes": [
            {"id": "a", "x": 0.0, "y": 0.0},
            {"id": "b", "x": 300.0, "y": 0.0},
            {"id": "c", "x": 300.0, "y": 400.0},
            {"id": "iso", "x": 5000.0, "y": 5000.0},
        ],
        "edges": [
            {"u": "a", "v": "b", "length": 300.0, "walkable": True},
            {"u": "b", "v": "c", "length": 400.0, "walkable": True},
            {"u": "a", "v": "c", "length": 800.0, "walkable": True},
        ],
        "pois": [
            {"id": "A", "x": 0.0, "y": 0.0, "radius": 15.0, "attraction": 0.25, "area": "Z1"},
            {"id": "B", "x": 300.0, "y": 0.0, "radius": 15.0, "attraction": 0.25, "area": "Z1"},
            {"id": "C", "x": 300.0, "y": 400.0, "radius": 15.0, "attraction": 0.5, "area": "Z2"},
        ],
        "areas": [
            {"id": "Z1", "polygon": [[-50, -50], [350, -50], [350, 200], [-50, 200]],
             "observed": True},
            {"id": "Z2", "polygon": [[-50, 200], [350, 200], [350, 450], [-50, 450]],
             "observed": False},
        ],
    }


@pytest.fixture
def triangle_network():
    return Network.from_json(triangle_network_payload())


@pytest.fixture(scope="session")
def demo_network():
    return synthetic.build_network()


@pytest.fixture(scope="session")
def demo_env(demo_network):
    return baseline_environment(demo_network, walk_speed=5.0 * 1000 / 3600)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
