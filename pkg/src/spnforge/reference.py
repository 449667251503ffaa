"""Reference interpreters: the functional oracle for every other module.

Two equivalent strategies are implemented over strict float32 scalars: direct
evaluation of the node list, and the flat (ops, left, right) vector encoding
evaluated by a single loop over a unified buffer. Both perform exactly one
binary float32 operation per internal node in topological order, with no
fused multiply-add and no reassociation, so results are bit-identical across
runs, platforms, and the machine simulator.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

from .errors import InputLengthError, NotBinaryError
from .fp32 import add32, f32, mul32
from .ir import NodeKind, SpnGraph


@dataclass(frozen=True)
class EncodedSpn:
    """Flat encoding: op i computes buffer[m+i] = buffer[left[i]] . buffer[right[i]]."""

    ops: tuple[NodeKind, ...]
    left: tuple[int, ...]
    right: tuple[int, ...]
    num_leaves: int

    @property
    def num_ops(self) -> int:
        return len(self.ops)

    def __post_init__(self):
        if not (len(self.ops) == len(self.left) == len(self.right)):
            raise ValueError("ops/left/right lengths differ")
        for i, (b, c) in enumerate(zip(self.left, self.right)):
            bound = self.num_leaves + i
            if not (0 <= b < bound and 0 <= c < bound):
                raise ValueError(f"operand of op {i} does not precede it")


def encode_vectors(g: SpnGraph) -> EncodedSpn:
    """Map a validated binary graph to the flat vector encoding.

    Buffer slots preserve order: leaf with slot s sits at s, the j-th internal
    node (in id order) at num_leaves + j.
    """
    if not g.is_binary():
        raise NotBinaryError("encode_vectors requires a binarized graph")
    m = g.num_leaves
    slot_of: dict[int, int] = {}
    ops: list[NodeKind] = []
    left: list[int] = []
    right: list[int] = []
    for node in g.nodes:
        if node.kind is NodeKind.LEAF:
            slot_of[node.id] = node.leaf_slot
        else:
            slot_of[node.id] = m + len(ops)
            ops.append(node.kind)
            left.append(slot_of[node.children[0]])
            right.append(slot_of[node.children[1]])
    return EncodedSpn(tuple(ops), tuple(left), tuple(right), m)


def _check_inputs(values: list[float], expected: int) -> list[float]:
    if len(values) != expected:
        raise InputLengthError(f"expected {expected} inputs, got {len(values)}")
    vals = [f32(v) for v in values]
    if any(v < 0 or v != v or v in (float("inf"), float("-inf")) for v in vals):
        warnings.warn("input vector contains negative or non-finite values", stacklevel=3)
    return vals


def eval_list(g: SpnGraph, inputs: list[float]) -> float:
    """Evaluate by walking the node list; returns the root's float32 value."""
    return eval_list_values(g, inputs)[g.root_id]


def eval_list_values(g: SpnGraph, inputs: list[float]) -> list[float]:
    """Per-node values (debugging aid and per-node oracle for the simulator)."""
    if not g.is_binary():
        raise NotBinaryError("eval_list requires a binarized graph")
    vals = _check_inputs(inputs, g.num_leaves)
    out: list[float] = [0.0] * len(g.nodes)
    for node in g.nodes:
        if node.kind is NodeKind.LEAF:
            out[node.id] = vals[node.leaf_slot]
        elif node.kind is NodeKind.SUM:
            out[node.id] = add32(out[node.children[0]], out[node.children[1]])
        else:
            out[node.id] = mul32(out[node.children[0]], out[node.children[1]])
    return out


def eval_forloop(enc: EncodedSpn, inputs: list[float]) -> float:
    """Evaluate the flat encoding with one loop over the unified buffer."""
    buf = _check_inputs(inputs, enc.num_leaves)
    for i in range(enc.num_ops):
        a, b = buf[enc.left[i]], buf[enc.right[i]]
        buf.append(add32(a, b) if enc.ops[i] is NodeKind.SUM else mul32(a, b))
    return buf[enc.num_leaves + enc.num_ops - 1]


def count_effective_ops(g: SpnGraph) -> int:
    """Number of binary arithmetic nodes; the numerator of ops/cycle."""
    if not g.is_binary():
        raise NotBinaryError("count_effective_ops requires a binarized graph")
    return g.num_internal
