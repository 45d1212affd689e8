from __future__ import annotations

import numpy as np
import pytest

from snnrobust.graph import generate_ws, layer_dag, to_dag
from snnrobust.network import build_network, init_weights


def random_small_graph(rng: np.random.Generator, max_vertices: int = 8):
    """Random simple graph for oracle comparisons."""
    n = int(rng.integers(2, max_vertices + 1))
    edges = set()
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < rng.uniform(0.15, 0.8):
                edges.add((u, v))
    from snnrobust.graph import UndirectedGraph
    return UndirectedGraph(n, frozenset(edges))


def random_layered_net(rng: np.random.Generator, input_dim: int = 6,
                       output_dim: int = 4, max_units: int = 30,
                       require_skip: bool = True, bias_scale: float = 0.0):
    """Small initialized network from a random WS prior, with a skip group."""
    for _ in range(200):
        size = int(rng.integers(5, max_units + 1))
        nei = int(rng.integers(1, min(3, (size - 1) // 2) + 1))
        p = float(rng.uniform(0.2, 0.9))
        g = generate_ws(size, nei, p, seed=int(rng.integers(2**31)))
        ld = layer_dag(to_dag(g))
        net = build_network(ld, input_dim, output_dim)
        has_skip = any(gr.source_layer >= 0
                       and gr.target_layer - gr.source_layer > 1
                       and gr.target_layer < net.n_layers
                       for gr in net.groups)
        if has_skip or not require_skip:
            net = init_weights(net, "He_N", seed=int(rng.integers(2**31)))
            if bias_scale:
                for b in net.biases:
                    b += rng.uniform(-bias_scale, bias_scale, b.shape)
                net.mark_mutated()
            return net
    raise AssertionError("could not sample a network with a skip group")


def kink_free_case(rng: np.random.Generator, margin: float = 1e-3, **net_kwargs):
    """Net + input whose pre-activations sit away from the ReLU kink.

    Central differences are only a valid oracle where the loss is smooth in
    an h-neighborhood, so gradient checks sample clear of |pre| <= margin.
    """
    from snnrobust.network import forward
    for _ in range(200):
        net = random_layered_net(rng, bias_scale=0.05, **net_kwargs)
        x = rng.uniform(0.05, 0.95, net.input_dim)
        _, _, cache = forward(net, x)
        if min(np.abs(p).min() for p in cache.pre) > margin:
            y = int(rng.integers(net.output_dim))
            return net, x, y
    raise AssertionError("could not sample a kink-free gradient check case")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
