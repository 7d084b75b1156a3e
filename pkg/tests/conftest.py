import numpy as np
import pytest
from hypothesis import strategies as st

from jointmc.graph import EdgeClass, Layer, build_graph


def random_graph(rng: np.random.Generator, n: int, density: float, low=-1.0, high=1.0):
    """Random all-low graph; each unordered pair is an edge with probability ``density``."""
    edges = [
        (u, v, EdgeClass.LL, float(rng.uniform(low, high)))
        for u in range(n)
        for v in range(u + 1, n)
        if rng.random() < density
    ]
    return build_graph([Layer.LOW] * n, edges)


def triangle(w01=-1.0, w02=2.0, w12=2.0):
    return build_graph([Layer.LOW] * 3, [(0, 1, "LL", w01), (0, 2, "LL", w02), (1, 2, "LL", w12)])


@st.composite
def graphs(draw, max_nodes=8, min_nodes=1):
    n = draw(st.integers(min_nodes, max_nodes))
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    costs = draw(
        st.lists(
            st.floats(-5, 5, allow_nan=False, allow_infinity=False),
            min_size=len(chosen),
            max_size=len(chosen),
        )
    )
    return build_graph([Layer.LOW] * n, [(u, v, "LL", c) for (u, v), c in zip(chosen, costs)])


@pytest.fixture(scope="session")
def crossing():
    from jointmc.scene import crossing_benchmark

    return crossing_benchmark(1)
