"""Shared fixtures and helpers for the spnforge test suite."""

from __future__ import annotations

import random

import pytest

from spnforge.errors import SpnForgeError
from spnforge.fp32 import same_bits
from spnforge.ir import NodeKind, SpnGraph, SpnNode, binarize, gen_random_spn


def random_graph(seed: int, *, max_leaves: int = 64, max_internal: int = 120) -> SpnGraph | None:
    """One deterministic random n-ary graph, or None for infeasible draws."""
    rng = random.Random(seed)
    m = rng.randint(2, max_leaves)
    n = rng.randint(1, max_internal)
    fanin = rng.randint(2, 5)
    reuse = rng.choice([0.05, 0.2, 0.5, 0.8])
    try:
        return gen_random_spn(m, n, fanin, rng.random(), seed=seed, reuse_prob=reuse)
    except SpnForgeError:
        return None


def random_inputs(g: SpnGraph, seed: int) -> list[float]:
    rng = random.Random(seed ^ 0x5EED)
    return [rng.random() for _ in range(g.num_leaves)]


@pytest.fixture(scope="session")
def small_corpus() -> list[SpnGraph]:
    """A few hundred small binarized graphs shared across test modules."""
    out = []
    for seed in range(300):
        g = random_graph(seed)
        if g is not None:
            out.append(binarize(g))
    assert len(out) > 250
    return out


@pytest.fixture(scope="session")
def nary_corpus() -> list[SpnGraph]:
    out = []
    for seed in range(200):
        g = random_graph(seed)
        if g is not None:
            out.append(g)
    return out


def assert_bits_equal(a: float, b: float, msg: str = ""):
    assert same_bits(a, b), f"{msg}: {a!r} ({a.hex()}) != {b!r} ({b.hex()})"


def graph_with(nodes: list[tuple]) -> SpnGraph:
    """Build a graph from (kind, children, slot) tuples without validation."""
    built = []
    for i, (kind, children, slot) in enumerate(nodes):
        built.append(SpnNode(i, kind, tuple(children), slot))
    return SpnGraph(tuple(built), len(built) - 1)


LEAF = NodeKind.LEAF
SUM = NodeKind.SUM
PROD = NodeKind.PROD
