"""Sum-product network graphs: types, text format, validation, transforms.

A graph is a rooted DAG stored as a topologically ordered node list: every
child index is strictly smaller than its parent's index and the last node is
the unique parentless node (the root). Leaves carry an input-vector slot
instead of children. All types are immutable and all operations are pure
functions, so concurrent callers need no coordination.

The `.spn` text format (UTF-8, LF):

    spn <num_nodes> <num_edges>
    l <id>                        leaf; slots assigned in order of appearance
    + <id> <k> <c1> ... <ck>      sum with k children
    * <id> <k> <c1> ... <ck>      product with k children

`#` starts a comment, blank lines are ignored, nodes appear in id order.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum

from .errors import (
    CycleError,
    DanglingRefError,
    InfeasibleParams,
    MultiRootError,
    SpnSyntaxError,
)


class NodeKind(Enum):
    LEAF = "l"
    SUM = "+"
    PROD = "*"


@dataclass(frozen=True)
class SpnNode:
    id: int
    kind: NodeKind
    children: tuple[int, ...] = ()
    leaf_slot: int | None = None


@dataclass(frozen=True)
class SpnGraph:
    nodes: tuple[SpnNode, ...]
    root_id: int

    @property
    def num_leaves(self) -> int:
        return sum(1 for n in self.nodes if n.kind is NodeKind.LEAF)

    @property
    def num_internal(self) -> int:
        return len(self.nodes) - self.num_leaves

    @property
    def num_edges(self) -> int:
        return sum(len(n.children) for n in self.nodes)

    def leaves(self) -> list[SpnNode]:
        return [n for n in self.nodes if n.kind is NodeKind.LEAF]

    def internal(self) -> list[SpnNode]:
        return [n for n in self.nodes if n.kind is not NodeKind.LEAF]

    def is_binary(self) -> bool:
        return all(
            len(n.children) == 2 for n in self.nodes if n.kind is not NodeKind.LEAF
        )


# Violation rule identifiers used by validate() and the mutation tests.
RULE_ARITY = "arity"
RULE_CHILD_ORDER = "child-order"
RULE_CHILD_BOUNDS = "child-bounds"
RULE_SELF_EDGE = "self-edge"
RULE_LEAF_SLOT = "leaf-slot"
RULE_MULTI_ROOT = "multi-root"
RULE_ROOT = "root"


@dataclass(frozen=True)
class Violation:
    rule: str
    node_id: int
    message: str


def validate(g: SpnGraph) -> list[Violation]:
    """Check every structural invariant; an empty list means the graph is valid."""
    out: list[Violation] = []
    n_nodes = len(g.nodes)
    seen_slots: dict[int, int] = {}
    has_parent = [False] * n_nodes

    for idx, node in enumerate(g.nodes):
        if node.id != idx:
            out.append(Violation(RULE_ROOT, idx, f"node at position {idx} has id {node.id}"))
        if node.kind is NodeKind.LEAF:
            if node.children:
                out.append(Violation(RULE_ARITY, idx, "leaf node has children"))
            if node.leaf_slot is None or not (0 <= node.leaf_slot):
                out.append(Violation(RULE_LEAF_SLOT, idx, "leaf without a valid slot"))
            elif node.leaf_slot in seen_slots:
                out.append(
                    Violation(
                        RULE_LEAF_SLOT,
                        idx,
                        f"slot {node.leaf_slot} already used by node {seen_slots[node.leaf_slot]}",
                    )
                )
            else:
                seen_slots[node.leaf_slot] = idx
        else:
            if node.leaf_slot is not None:
                out.append(Violation(RULE_LEAF_SLOT, idx, "internal node carries a leaf slot"))
            if len(node.children) < 2:
                out.append(
                    Violation(RULE_ARITY, idx, f"{node.kind.value} node with {len(node.children)} children")
                )
        for c in node.children:
            if not (0 <= c < n_nodes):
                out.append(Violation(RULE_CHILD_BOUNDS, idx, f"child {c} out of range"))
            elif c == idx:
                out.append(Violation(RULE_SELF_EDGE, idx, "node is its own child"))
            elif c > idx:
                out.append(Violation(RULE_CHILD_ORDER, idx, f"child {c} defined after parent"))
            else:
                has_parent[c] = True

    # With uniqueness enforced, slots form [0, m) exactly iff none exceeds m-1.
    m = len(seen_slots)
    for slot, owner in sorted(seen_slots.items()):
        if slot >= m:
            out.append(Violation(RULE_LEAF_SLOT, owner, f"slot {slot} outside [0,{m})"))

    if n_nodes:
        if g.root_id != n_nodes - 1:
            out.append(Violation(RULE_ROOT, g.root_id, "root is not the last node"))
        for idx in range(n_nodes - 1):
            if not has_parent[idx]:
                out.append(Violation(RULE_MULTI_ROOT, idx, "node unreachable from root (no parent)"))
    return out


def parse_spn(text: str) -> SpnGraph:
    """Parse the `.spn` format, rejecting anything outside the grammar."""
    n_nodes = n_edges = None
    nodes: list[SpnNode] = []
    n_slots = 0
    edges_seen = 0

    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        if n_nodes is None:
            if toks[0] != "spn" or len(toks) != 3:
                raise SpnSyntaxError("expected header 'spn <nodes> <edges>'", lineno)
            try:
                n_nodes, n_edges = int(toks[1]), int(toks[2])
            except ValueError:
                raise SpnSyntaxError("header counts must be integers", lineno) from None
            if n_nodes < 1 or n_edges < 0:
                raise SpnSyntaxError("header counts out of range", lineno)
            continue

        if len(nodes) >= n_nodes:
            raise SpnSyntaxError(f"more than {n_nodes} node lines", lineno)
        kind_tok = toks[0]
        if kind_tok not in ("l", "+", "*"):
            raise SpnSyntaxError(f"unknown node kind {kind_tok!r}", lineno)
        try:
            vals = [int(t) for t in toks[1:]]
        except ValueError:
            raise SpnSyntaxError("non-integer field", lineno) from None
        nid = len(nodes)
        if not vals or vals[0] != nid:
            raise SpnSyntaxError(f"expected node id {nid} in sequence", lineno)

        if kind_tok == "l":
            if len(vals) != 1:
                raise SpnSyntaxError("leaf line takes exactly one field", lineno)
            nodes.append(SpnNode(nid, NodeKind.LEAF, (), n_slots))
            n_slots += 1
            continue

        if len(vals) < 2:
            raise SpnSyntaxError("missing child count", lineno)
        k = vals[1]
        if k < 2:
            raise SpnSyntaxError(f"{kind_tok} node needs at least 2 children, got {k}", lineno)
        children = vals[2:]
        if len(children) != k:
            raise SpnSyntaxError(f"expected {k} children, got {len(children)}", lineno)
        for c in children:
            if c == nid:
                raise CycleError(f"line {lineno}: node {nid} references itself")
            if c < 0 or c > nid:
                raise DanglingRefError(
                    f"line {lineno}: child {c} of node {nid} is not defined yet"
                )
        kind = NodeKind.SUM if kind_tok == "+" else NodeKind.PROD
        nodes.append(SpnNode(nid, kind, tuple(children)))
        edges_seen += k

    if n_nodes is None:
        raise SpnSyntaxError("empty input", 1)
    if len(nodes) != n_nodes:
        raise SpnSyntaxError(f"expected {n_nodes} nodes, found {len(nodes)}")
    if edges_seen != n_edges:
        raise SpnSyntaxError(f"header claims {n_edges} edges, found {edges_seen}")

    has_parent = [False] * n_nodes
    for node in nodes:
        for c in node.children:
            has_parent[c] = True
    extra_roots = [i for i in range(n_nodes - 1) if not has_parent[i]]
    if extra_roots:
        raise MultiRootError(f"parentless nodes besides the root: {extra_roots}")

    return SpnGraph(tuple(nodes), n_nodes - 1)


def serialize_spn(g: SpnGraph) -> str:
    """Canonical text form; `parse_spn(serialize_spn(g)) == g` for valid graphs."""
    lines = [f"spn {len(g.nodes)} {g.num_edges}"]
    for n in g.nodes:
        if n.kind is NodeKind.LEAF:
            lines.append(f"l {n.id}")
        else:
            kids = " ".join(str(c) for c in n.children)
            lines.append(f"{n.kind.value} {n.id} {len(n.children)} {kids}")
    return "\n".join(lines)


def binarize(g: SpnGraph) -> SpnGraph:
    """Expand n-ary nodes into balanced binary trees.

    Children are split in halves recursively (left half gets the extra child
    on odd arity), so a 4-ary sum (a,b,c,d) becomes ((a+b)+(c+d)). Binary
    input graphs come back structurally identical and the transform is
    idempotent. Leaf slots are preserved.
    """
    out: list[SpnNode] = []
    id_map: dict[int, int] = {}

    def combine(kind: NodeKind, ids: list[int]) -> int:
        if len(ids) == 1:
            return ids[0]
        mid = (len(ids) + 1) // 2
        a = combine(kind, ids[:mid])
        b = combine(kind, ids[mid:])
        out.append(SpnNode(len(out), kind, (a, b)))
        return len(out) - 1

    for node in g.nodes:
        if node.kind is NodeKind.LEAF:
            out.append(SpnNode(len(out), NodeKind.LEAF, (), node.leaf_slot))
            id_map[node.id] = len(out) - 1
        else:
            id_map[node.id] = combine(node.kind, [id_map[c] for c in node.children])

    return SpnGraph(tuple(out), len(out) - 1)


@dataclass(frozen=True)
class LevelDecomposition:
    """Internal nodes partitioned into dependency antichains (ASAP levels)."""

    groups: tuple[frozenset[int], ...]

    @property
    def num_groups(self) -> int:
        return len(self.groups)


def node_levels(g: SpnGraph) -> dict[int, int]:
    """ASAP level per node: leaves are 0, internal = 1 + max(child levels)."""
    lvl: dict[int, int] = {}
    for node in g.nodes:
        if node.kind is NodeKind.LEAF:
            lvl[node.id] = 0
        else:
            lvl[node.id] = 1 + max(lvl[c] for c in node.children)
    return lvl


def level_decompose(g: SpnGraph) -> LevelDecomposition:
    lvl = node_levels(g)
    depth = max((v for v in lvl.values()), default=0)
    groups: list[set[int]] = [set() for _ in range(depth)]
    for node in g.nodes:
        if node.kind is not NodeKind.LEAF:
            groups[lvl[node.id] - 1].add(node.id)
    return LevelDecomposition(tuple(frozenset(s) for s in groups))


def gen_random_spn(
    num_leaves: int,
    num_internal: int,
    max_fanin: int = 2,
    sum_prob: float = 0.5,
    seed: int = 0,
    reuse_prob: float = 0.5,
) -> SpnGraph:
    """Deterministic random SPN: valid, connected, single-rooted.

    `reuse_prob` controls how often a child slot reuses an already-covered
    node (shared subexpressions, fan-out > 1) instead of claiming a fresh
    parentless one; low values give tree-like graphs.
    """
    if num_leaves < 1:
        raise InfeasibleParams("need at least one leaf")
    if max_fanin < 2:
        raise InfeasibleParams("max_fanin must be >= 2")
    if num_internal == 0:
        if num_leaves != 1:
            raise InfeasibleParams("multiple leaves cannot form a single root without internal nodes")
        return SpnGraph((SpnNode(0, NodeKind.LEAF, (), 0),), 0)
    if num_leaves < 2:
        raise InfeasibleParams("internal nodes need two distinct children; use >= 2 leaves")
    capacity = sum(min(max_fanin, num_leaves + i) for i in range(num_internal))
    if capacity < num_leaves + num_internal - 1:
        raise InfeasibleParams(
            f"cannot cover {num_leaves} leaves with {num_internal} nodes of fanin <= {max_fanin}"
        )

    rng = random.Random(seed)
    nodes: list[SpnNode] = [SpnNode(i, NodeKind.LEAF, (), i) for i in range(num_leaves)]
    uncovered = list(range(num_leaves))  # parentless so far
    covered: list[int] = []

    for i in range(num_internal):
        nid = num_leaves + i
        remaining = num_internal - 1 - i
        kind = NodeKind.SUM if rng.random() < sum_prob else NodeKind.PROD
        c_min = max(0, len(uncovered) - remaining * (max_fanin - 1))
        k_lo = max(2, c_min)
        k_hi = min(max_fanin, nid)
        if k_lo > k_hi:
            raise InfeasibleParams("coverage constraint unsatisfiable mid-generation")
        k = rng.randint(k_lo, k_hi)

        fresh = c_min
        for _ in range(min(k, len(uncovered)) - c_min):
            if rng.random() >= reuse_prob:
                fresh += 1
        fresh = max(fresh, k - len(covered))  # not enough covered nodes to reuse
        fresh = min(fresh, len(uncovered), k)

        picks: list[int] = []
        for _ in range(fresh):
            j = rng.randrange(len(uncovered))
            picks.append(uncovered[j])
            uncovered[j] = uncovered[-1]
            uncovered.pop()
        chosen = set(picks)
        while len(picks) < k:
            cand = covered[rng.randrange(len(covered))]
            if cand not in chosen:
                chosen.add(cand)
                picks.append(cand)
        covered.extend(picks[:fresh])
        nodes.append(SpnNode(nid, kind, tuple(sorted(picks))))
        uncovered.append(nid)

    assert len(uncovered) == 1 and uncovered[0] == num_leaves + num_internal - 1
    return SpnGraph(tuple(nodes), num_leaves + num_internal - 1)


def make_complete_tree(num_leaves: int, *, alternate: bool = True,
                       bottom: NodeKind = NodeKind.PROD) -> SpnGraph:
    """Complete binary tree over `num_leaves` (a power of two).

    With `alternate` the node kind flips per level starting from `bottom`;
    otherwise the bottom level uses `bottom` and everything above is SUM
    (a classic mixture shape).
    """
    if num_leaves < 1 or num_leaves & (num_leaves - 1):
        raise InfeasibleParams("num_leaves must be a power of two")
    nodes = [SpnNode(i, NodeKind.LEAF, (), i) for i in range(num_leaves)]
    prev = list(range(num_leaves))
    level = 1
    other = NodeKind.SUM if bottom is NodeKind.PROD else NodeKind.PROD
    while len(prev) > 1:
        if alternate:
            kind = bottom if level % 2 == 1 else other
        else:
            kind = bottom if level == 1 else NodeKind.SUM
        cur = []
        for j in range(0, len(prev), 2):
            nodes.append(SpnNode(len(nodes), kind, (prev[j], prev[j + 1])))
            cur.append(len(nodes) - 1)
        prev = cur
        level += 1
    return SpnGraph(tuple(nodes), len(nodes) - 1)


def make_mixture_spn(num_leaves: int, num_components: int, *, seed: int = 0) -> SpnGraph:
    """Mixture of complete alternating trees over rotated views of one leaf set.

    Each component is a product/sum tree over the leaves shifted by a seeded
    offset; a balanced sum tree combines the component roots. This is the
    dense, wide, tree-structured shape learned SPNs tend to have, and the
    default workload for the Ptree-versus-Pvect benchmark.
    """
    if num_leaves < 2 or num_leaves & (num_leaves - 1):
        raise InfeasibleParams("num_leaves must be a power of two >= 2")
    if num_components < 1:
        raise InfeasibleParams("need at least one component")
    rng = random.Random(seed)
    nodes = [SpnNode(i, NodeKind.LEAF, (), i) for i in range(num_leaves)]
    roots = []
    for _ in range(num_components):
        off = rng.randrange(num_leaves)
        prev = [(i + off) % num_leaves for i in range(num_leaves)]
        lvl = 1
        while len(prev) > 1:
            kind = NodeKind.PROD if lvl % 2 == 1 else NodeKind.SUM
            cur = []
            for j in range(0, len(prev), 2):
                nodes.append(SpnNode(len(nodes), kind, (prev[j], prev[j + 1])))
                cur.append(len(nodes) - 1)
            prev = cur
            lvl += 1
        roots.append(prev[0])
    while len(roots) > 1:
        cur = []
        for j in range(0, len(roots) - 1, 2):
            nodes.append(SpnNode(len(nodes), NodeKind.SUM, (roots[j], roots[j + 1])))
            cur.append(len(nodes) - 1)
        if len(roots) % 2:
            cur.append(roots[-1])
        roots = cur
    return SpnGraph(tuple(nodes), len(nodes) - 1)


def make_layered_spn(
    width: int,
    depth: int,
    *,
    sum_prob: float = 0.5,
    seed: int = 0,
) -> SpnGraph:
    """Wide layered SPN: `depth` layers of `width` binary nodes over `width`
    leaves, each child drawn from the previous layer, topped by a balanced
    combining tree. Group count is depth + ceil(log2(width)), so dependency
    depth is directly controllable (benchmark-like shapes for the SIMT model).
    """
    if width < 2 or depth < 1:
        raise InfeasibleParams("need width >= 2 and depth >= 1")
    rng = random.Random(seed)
    nodes = [SpnNode(i, NodeKind.LEAF, (), i) for i in range(width)]
    prev = list(range(width))
    for _ in range(depth):
        cur = []
        for j in range(width):
            a = prev[j]  # cover every node of the previous layer
            b = prev[rng.randrange(width - 1)]
            if b == a:
                b = prev[width - 1]
            kind = NodeKind.SUM if rng.random() < sum_prob else NodeKind.PROD
            nodes.append(SpnNode(len(nodes), kind, (min(a, b), max(a, b))))
            cur.append(len(nodes) - 1)
        prev = cur
    while len(prev) > 1:
        kind = NodeKind.SUM if rng.random() < sum_prob else NodeKind.PROD
        cur = []
        for j in range(0, len(prev) - 1, 2):
            nodes.append(SpnNode(len(nodes), kind, (prev[j], prev[j + 1])))
            cur.append(len(nodes) - 1)
        if len(prev) % 2:
            cur.append(prev[-1])
        prev = cur
    return SpnGraph(tuple(nodes), len(nodes) - 1)


def make_chain(num_ops: int, *, kind: NodeKind = NodeKind.SUM) -> SpnGraph:
    """Dependency chain: each op combines the previous result with a fresh leaf."""
    if num_ops < 1:
        raise InfeasibleParams("need at least one op")
    nodes: list[SpnNode] = [
        SpnNode(0, NodeKind.LEAF, (), 0),
        SpnNode(1, NodeKind.LEAF, (), 1),
        SpnNode(2, kind, (0, 1)),
    ]
    prev = 2
    slot = 2
    for _ in range(num_ops - 1):
        leaf_id = len(nodes)
        nodes.append(SpnNode(leaf_id, NodeKind.LEAF, (), slot))
        slot += 1
        nodes.append(SpnNode(len(nodes), kind, (prev, leaf_id)))
        prev = len(nodes) - 1
    return SpnGraph(tuple(nodes), prev)
