"""Graph IR: parsing, serialization, validation, binarize, levels, generation."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import LEAF, PROD, SUM, graph_with
from spnforge.errors import (
    CycleError,
    DanglingRefError,
    InfeasibleParams,
    MultiRootError,
    SpnSyntaxError,
)
from spnforge.fp32 import same_bits
from spnforge.ir import (
    NodeKind,
    SpnGraph,
    SpnNode,
    binarize,
    gen_random_spn,
    level_decompose,
    make_chain,
    make_complete_tree,
    make_layered_spn,
    make_mixture_spn,
    node_levels,
    parse_spn,
    serialize_spn,
    validate,
)
from spnforge.reference import eval_list


# -- parse / serialize -------------------------------------------------------


def test_parse_smallest_product():
    g = parse_spn("spn 3 2\nl 0\nl 1\n* 2 2 0 1")
    assert g.root_id == 2 and g.num_leaves == 2 and g.num_internal == 1
    assert g.nodes[2].kind is PROD and g.nodes[2].children == (0, 1)


def test_parse_rejects_forward_reference():
    with pytest.raises(DanglingRefError):
        parse_spn("spn 3 2\nl 0\n* 1 2 0 2\nl 2")


def test_parse_rejects_self_reference():
    with pytest.raises(CycleError):
        parse_spn("spn 2 2\nl 0\n+ 1 2 0 1")


def test_parse_rejects_multiple_roots():
    with pytest.raises(MultiRootError):
        parse_spn("spn 4 2\nl 0\nl 1\nl 2\n* 3 2 0 1")


@pytest.mark.parametrize(
    "text",
    [
        "",
        "spn x 2",
        "spn 2 0\nl 0\nl 1\nl 2",  # too many nodes
        "spn 2 0\nl 0",  # too few
        "spn 3 1\nl 0\nl 1\n* 2 2 0 1",  # edge count mismatch
        "spn 3 2\nl 1\nl 0\n* 2 2 0 1",  # ids out of sequence
        "spn 2 1\nl 0\n+ 1 1 0",  # arity below two
        "spn 3 2\nl 0\nl 1\n% 2 2 0 1",  # unknown kind
        "spn 3 2\nl 0\nl 1\n* 2 3 0 1",  # child count mismatch
    ],
)
def test_parse_rejects_bad_syntax(text):
    with pytest.raises(SpnSyntaxError):
        parse_spn(text)


def test_parse_comments_and_blank_lines():
    g = parse_spn("# header comment\n\nspn 3 2  # counts\nl 0\n\nl 1\n* 2 2 0 1 # root\n")
    assert g.num_internal == 1


def test_serialize_single_leaf():
    g = SpnGraph((SpnNode(0, LEAF, (), 0),), 0)
    assert serialize_spn(g) == "spn 1 0\nl 0"


def test_serialize_canonical_reemission():
    text = "spn 3 2\nl 0\nl 1\n* 2 2 0 1"
    assert serialize_spn(parse_spn(text)) == text


@given(st.integers(0, 5000))
@settings(max_examples=120, deadline=None)
def test_round_trip_on_random_graphs(seed):
    rng = random.Random(seed)
    try:
        g = gen_random_spn(rng.randint(1, 80), rng.randint(0, 150),
                           rng.randint(2, 6), rng.random(), seed=seed)
    except InfeasibleParams:
        return
    assert parse_spn(serialize_spn(g)) == g


def test_round_trip_thousand_node_file():
    g = gen_random_spn(128, 900, 3, 0.5, seed=99)
    assert len(g.nodes) > 1000
    assert parse_spn(serialize_spn(g)) == g


# -- validate ----------------------------------------------------------------


def test_validate_accepts_valid_graph():
    assert validate(parse_spn("spn 3 2\nl 0\nl 1\n* 2 2 0 1")) == []


def test_validate_flags_single_child_sum():
    g = graph_with([(LEAF, (), 0), (SUM, (0,), None)])
    v = validate(g)
    assert [x.rule for x in v] == ["arity"] and v[0].node_id == 1


@pytest.mark.parametrize(
    "mutate,expected",
    [
        (lambda ns: ns.__setitem__(2, SpnNode(2, SUM, (0,), None)), "arity"),
        (lambda ns: ns.__setitem__(2, SpnNode(2, SUM, (0, 3), None)), "child-order"),
        (lambda ns: ns.__setitem__(2, SpnNode(2, SUM, (0, 9), None)), "child-bounds"),
        (lambda ns: ns.__setitem__(2, SpnNode(2, SUM, (0, 2), None)), "self-edge"),
        (lambda ns: ns.__setitem__(1, SpnNode(1, LEAF, (), 0)), "leaf-slot"),
        (lambda ns: ns.__setitem__(0, SpnNode(0, LEAF, (), 5)), "leaf-slot"),
    ],
)
def test_validate_detects_injected_violation(mutate, expected):
    nodes = [SpnNode(0, LEAF, (), 0), SpnNode(1, LEAF, (), 1),
             SpnNode(2, SUM, (0, 1), None), SpnNode(3, LEAF, (), 2),
             SpnNode(4, PROD, (2, 3), None)]
    mutate(nodes)
    rules = {v.rule for v in validate(SpnGraph(tuple(nodes), 4))}
    assert expected in rules


def test_validate_flags_extra_root():
    g = graph_with([(LEAF, (), 0), (LEAF, (), 1), (LEAF, (), 2), (PROD, (0, 1), None)])
    assert "multi-root" in {v.rule for v in validate(g)}


def test_random_corruption_detected(small_corpus):
    rng = random.Random(0)
    hits = 0
    for g in small_corpus[:60]:
        nodes = list(g.nodes)
        internal = [n for n in nodes if n.kind is not LEAF]
        victim = internal[rng.randrange(len(internal))]
        nodes[victim.id] = SpnNode(victim.id, victim.kind, (victim.children[0],), None)
        assert any(v.rule == "arity" and v.node_id == victim.id
                   for v in validate(SpnGraph(tuple(nodes), g.root_id)))
        hits += 1
    assert hits == 60


# -- binarize ----------------------------------------------------------------


def test_binarize_fixed_point_on_binary_graph():
    g = parse_spn("spn 3 2\nl 0\nl 1\n* 2 2 0 1")
    assert binarize(g) == g


def test_binarize_four_children_balanced():
    g = graph_with([(LEAF, (), 0), (LEAF, (), 1), (LEAF, (), 2), (LEAF, (), 3),
                    (SUM, (0, 1, 2, 3), None)])
    b = binarize(g)
    assert b.num_internal == 3
    root = b.nodes[b.root_id]
    left, right = b.nodes[root.children[0]], b.nodes[root.children[1]]
    assert left.children == (0, 1) and right.children == (2, 3)


def test_binarize_three_children_left_heavy():
    g = graph_with([(LEAF, (), 0), (LEAF, (), 1), (LEAF, (), 2), (PROD, (0, 1, 2), None)])
    b = binarize(g)
    root = b.nodes[b.root_id]
    assert b.nodes[root.children[0]].children == (0, 1) and root.children[1] == 2


def test_binarize_idempotent(nary_corpus):
    for g in nary_corpus[:80]:
        once = binarize(g)
        assert binarize(once) == once


def test_binarize_preserves_value_against_nary_oracle(nary_corpus):
    def nary_eval(g, xs):
        # Independent float64 evaluator over the original n-ary structure.
        vals = {}
        for node in g.nodes:
            if node.kind is LEAF:
                vals[node.id] = float(xs[node.leaf_slot])
            else:
                acc = vals[node.children[0]]
                for c in node.children[1:]:
                    acc = acc + vals[c] if node.kind is SUM else acc * vals[c]
                vals[node.id] = acc
        return vals[g.root_id]

    rng = random.Random(42)
    for g in nary_corpus[:80]:
        xs = [0.5 + rng.random() / 2 for _ in range(g.num_leaves)]
        got = eval_list(binarize(g), xs)
        want = nary_eval(g, xs)
        assert got == pytest.approx(want, rel=1e-6)


def test_binarize_keeps_topological_order(nary_corpus):
    for g in nary_corpus[:60]:
        assert validate(binarize(g)) == []


# -- level decomposition -----------------------------------------------------


def test_level_single_product():
    d = level_decompose(parse_spn("spn 3 2\nl 0\nl 1\n* 2 2 0 1"))
    assert d.num_groups == 1 and d.groups[0] == frozenset({2})


def test_level_complete_tree_sizes():
    d = level_decompose(make_complete_tree(8))
    assert [len(g) for g in d.groups] == [4, 2, 1]


def test_level_invariants_on_corpus(small_corpus):
    for g in small_corpus[:80]:
        d = level_decompose(g)
        seen = set()
        for gi, group in enumerate(d.groups):
            for nid in group:
                node = g.nodes[nid]
                assert node.kind is not LEAF
                for c in node.children:
                    if g.nodes[c].kind is not LEAF:
                        assert c in seen, "child not in an earlier group"
                assert not any(c in group for c in node.children), "group not an antichain"
            seen |= group
        assert seen == {n.id for n in g.nodes if n.kind is not LEAF}


def test_group_count_equals_longest_path_oracle(small_corpus):
    def longest_path(g):
        # Independent DFS over internal nodes only.
        depth = {}
        for node in g.nodes:
            if node.kind is LEAF:
                depth[node.id] = 0
            else:
                depth[node.id] = 1 + max(depth[c] for c in node.children)
        return max(depth.values())

    for g in small_corpus[:100]:
        assert level_decompose(g).num_groups == longest_path(g)


# -- generation --------------------------------------------------------------


def test_gen_single_leaf():
    g = gen_random_spn(1, 0, seed=7)
    assert len(g.nodes) == 1 and g.nodes[0].kind is LEAF


def test_gen_determinism():
    a = serialize_spn(gen_random_spn(64, 500, 2, 0.5, seed=42))
    b = serialize_spn(gen_random_spn(64, 500, 2, 0.5, seed=42))
    assert a == b
    assert a != serialize_spn(gen_random_spn(64, 500, 2, 0.5, seed=43))


def test_gen_thousand_seeds_all_valid():
    bad = 0
    for seed in range(1000):
        rng = random.Random(seed)
        try:
            g = gen_random_spn(rng.randint(1, 40), rng.randint(0, 60),
                               rng.randint(2, 5), rng.random(), seed=seed,
                               reuse_prob=rng.random())
        except InfeasibleParams:
            continue
        if validate(g):
            bad += 1
    assert bad == 0


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(num_leaves=0, num_internal=1),
        dict(num_leaves=3, num_internal=0),
        dict(num_leaves=1, num_internal=2),
        dict(num_leaves=2, num_internal=1, max_fanin=1),
        dict(num_leaves=100, num_internal=2, max_fanin=2),
    ],
)
def test_gen_infeasible(kwargs):
    with pytest.raises(InfeasibleParams):
        gen_random_spn(**kwargs)


def test_gen_every_node_reachable():
    g = gen_random_spn(32, 200, 3, 0.5, seed=3)
    seen = set()
    stack = [g.root_id]
    while stack:
        nid = stack.pop()
        if nid in seen:
            continue
        seen.add(nid)
        stack.extend(g.nodes[nid].children)
    assert seen == set(range(len(g.nodes)))


def test_builders_are_valid():
    for g in (make_complete_tree(32), make_complete_tree(16, alternate=False),
              make_chain(10), make_layered_spn(16, 3, seed=1),
              make_mixture_spn(32, 3, seed=2)):
        assert validate(g) == []
        assert g.is_binary()
