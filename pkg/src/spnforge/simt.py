"""Abstract cycle-cost model of group-synchronized SIMT execution.

This models the GPU baseline: ops grouped into dependency antichains, each
group executed by `num_threads` threads in round-robin order, warps of
`warp_size` stepping in lockstep. Cost components per run:

  compute     base_op_cost per warp-step
  divergence  a warp-step mixing sum and product ops costs
              divergence_penalty * base_op_cost instead of base_op_cost
  conflict    per warp-step, (max accesses landing on one bank) - 1 extra
              cycles, over the step's 2 reads + 1 write per op
  sync        sync_cost per group barrier

It is a cost model only; functional results always come from the reference
interpreters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ir import LevelDecomposition, NodeKind
from .reference import EncodedSpn


@dataclass(frozen=True)
class SimtConfig:
    num_threads: int
    warp_size: int = 32
    shared_banks: int = 32
    sync_cost: float = 20
    base_op_cost: float = 1
    divergence_penalty: float = 2

    def __post_init__(self):
        if self.num_threads < 1 or self.warp_size < 1 or self.shared_banks < 1:
            raise ValueError("thread, warp and bank counts must be >= 1")
        if min(self.sync_cost, self.base_op_cost) < 0 or self.divergence_penalty < 1:
            raise ValueError("costs must be non-negative and penalty >= 1")


@dataclass(frozen=True)
class GroupCost:
    group: int
    warp_steps: int
    compute: float
    conflict: float
    divergence: float


@dataclass(frozen=True)
class SimtReport:
    total_cycles: float
    cycles_compute: float
    cycles_sync: float
    cycles_conflict_serialization: float
    cycles_divergence: float
    ops_per_cycle: float
    per_group: tuple[GroupCost, ...]


def _op_groups(enc: EncodedSpn) -> list[list[int]]:
    """Dependency levels over op indices (operand slots below num_leaves are free)."""
    m = enc.num_leaves
    lvl = [0] * enc.num_ops
    for i in range(enc.num_ops):
        l = enc.left[i] - m
        r = enc.right[i] - m
        lvl[i] = 1 + max(lvl[l] if l >= 0 else 0, lvl[r] if r >= 0 else 0)
    groups: list[list[int]] = [[] for _ in range(max(lvl, default=0))]
    for i, v in enumerate(lvl):
        groups[v - 1].append(i)
    return groups


def _warp_steps(group: list[int], num_threads: int, warp_size: int) -> list[list[int]]:
    """Split one group (sorted op ids) into lockstep warp-steps.

    Thread j takes ops j, j+t, j+2t, ... (the strided assignment); a wave is
    one op per thread, warps chunk a wave into `warp_size` lanes.
    """
    steps = []
    for wave_start in range(0, len(group), num_threads):
        wave = group[wave_start:wave_start + num_threads]
        for k in range(0, len(wave), warp_size):
            steps.append(wave[k:k + warp_size])
    return steps


def assign_threads(decomp: LevelDecomposition, num_threads: int) -> list[dict[int, int]]:
    """Round-robin node-to-thread map per group, in node-id order."""
    if num_threads < 1:
        raise ValueError("num_threads must be >= 1")
    out = []
    for group in decomp.groups:
        out.append({nid: j % num_threads for j, nid in enumerate(sorted(group))})
    return out


def _node_rank(decomp: LevelDecomposition) -> dict[int, int]:
    """Rank of each internal node id among all internal ids (its op index)."""
    all_ids = sorted(i for g in decomp.groups for i in g)
    return {nid: j for j, nid in enumerate(all_ids)}


def color_banks(
    enc: EncodedSpn,
    decomp: LevelDecomposition,
    assignment: list[dict[int, int]],
    cfg: SimtConfig,
) -> dict[int, int]:
    """Greedy DSATUR coloring of buffer slots over the shared banks.

    Slots touched in the same warp-step form a clique in the conflict graph.
    When the palette is exhausted the least-conflicting color is reused, so
    the mapping is always total.
    """
    rank = _node_rank(decomp)
    n_slots = enc.num_leaves + enc.num_ops
    steps: list[list[int]] = []
    for gi, group in enumerate(decomp.groups):
        amap = assignment[gi]
        ids = sorted(group)
        if any(amap[nid] != j % cfg.num_threads for j, nid in enumerate(ids)):
            raise ValueError(f"assignment for group {gi} is not round-robin over {cfg.num_threads} threads")
        steps.extend(_warp_steps([rank[i] for i in ids], cfg.num_threads, cfg.warp_size))

    adj: list[set[int]] = [set() for _ in range(n_slots)]
    for step in steps:
        accessed = set()
        for i in step:
            accessed.add(enc.left[i])
            accessed.add(enc.right[i])
            accessed.add(enc.num_leaves + i)
        acc = sorted(accessed)
        for a_idx, a in enumerate(acc):
            for b in acc[a_idx + 1:]:
                adj[a].add(b)
                adj[b].add(a)

    banks = cfg.shared_banks
    color: dict[int, int] = {}
    sat: list[set[int]] = [set() for _ in range(n_slots)]
    uncolored = set(range(n_slots))
    while uncolored:
        v = max(uncolored, key=lambda s: (len(sat[s]), len(adj[s]), -s))
        used = sat[v]
        free = [c for c in range(banks) if c not in used]
        if free:
            # Least-loaded free color keeps banks balanced; ties to lowest.
            loads = {c: 0 for c in free}
            for c in color.values():
                if c in loads:
                    loads[c] += 1
            chosen = min(free, key=lambda c: (loads[c], c))
        else:
            conflicts = {c: 0 for c in range(banks)}
            for u in adj[v]:
                if u in color:
                    conflicts[color[u]] += 1
            chosen = min(range(banks), key=lambda c: (conflicts[c], c))
        color[v] = chosen
        uncolored.remove(v)
        for u in adj[v]:
            sat[u].add(chosen)
    return color


def _conflict_extra(enc: EncodedSpn, step: list[int], bank_of, banks: int) -> int:
    counts: dict[int, int] = {}
    for i in step:
        for slot in (enc.left[i], enc.right[i], enc.num_leaves + i):
            b = bank_of(slot) % banks
            counts[b] = counts.get(b, 0) + 1
    return max(counts.values()) - 1 if counts else 0


def conflict_cycles(enc: EncodedSpn, cfg: SimtConfig, bank_of) -> int:
    """Total serialization cycles for any slot-to-bank mapping (oracle hook)."""
    total = 0
    for group in _op_groups(enc):
        for step in _warp_steps(group, cfg.num_threads, cfg.warp_size):
            total += _conflict_extra(enc, step, bank_of, cfg.shared_banks)
    return total


def simulate_simt(enc: EncodedSpn, cfg: SimtConfig) -> SimtReport:
    """Deterministic cost-model run; see module docstring for the components."""
    groups = _op_groups(enc)
    # Build the graph-level structures the public ops expose, then cost them.
    decomp = LevelDecomposition(tuple(frozenset(g) for g in groups))
    assignment = assign_threads(decomp, cfg.num_threads)
    colors = color_banks(enc, decomp, assignment, cfg)

    per_group: list[GroupCost] = []
    compute = conflict = divergence = 0.0
    for gi, group in enumerate(groups):
        g_steps = _warp_steps(group, cfg.num_threads, cfg.warp_size)
        g_compute = cfg.base_op_cost * len(g_steps)
        g_conflict = 0.0
        g_diverge = 0.0
        for step in g_steps:
            kinds = {enc.ops[i] for i in step}
            if NodeKind.SUM in kinds and NodeKind.PROD in kinds:
                g_diverge += (cfg.divergence_penalty - 1) * cfg.base_op_cost
            g_conflict += _conflict_extra(enc, step, colors.__getitem__, cfg.shared_banks)
        per_group.append(GroupCost(gi, len(g_steps), g_compute, g_conflict, g_diverge))
        compute += g_compute
        conflict += g_conflict
        divergence += g_diverge

    sync = cfg.sync_cost * len(groups)
    total = compute + conflict + divergence + sync
    assert total == compute + conflict + divergence + sync
    opc = enc.num_ops / total if total > 0 else 0.0
    return SimtReport(
        total_cycles=total,
        cycles_compute=compute,
        cycles_sync=sync,
        cycles_conflict_serialization=conflict,
        cycles_divergence=divergence,
        ops_per_cycle=opc,
        per_group=tuple(per_group),
    )


@dataclass(frozen=True)
class SweepRow:
    threads: int
    cycles: float
    sync: float
    conflict: float
    divergence: float
    ops_per_cycle: float


def scaling_sweep(enc: EncodedSpn, thread_counts: list[int], cfg: SimtConfig) -> list[SweepRow]:
    """One simulate_simt run per thread count (ascending, non-empty)."""
    if not thread_counts:
        raise ValueError("thread_counts must be non-empty")
    if sorted(thread_counts) != list(thread_counts):
        raise ValueError("thread_counts must be ascending")
    rows = []
    for t in thread_counts:
        r = simulate_simt(enc, SimtConfig(
            num_threads=t,
            warp_size=cfg.warp_size,
            shared_banks=cfg.shared_banks,
            sync_cost=cfg.sync_cost,
            base_op_cost=cfg.base_op_cost,
            divergence_penalty=cfg.divergence_penalty,
        ))
        rows.append(SweepRow(t, r.total_cycles, r.cycles_sync,
                             r.cycles_conflict_serialization, r.cycles_divergence,
                             r.ops_per_cycle))
    return rows


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def sweep_to_csv(rows: list[SweepRow]) -> str:
    """CSV with '.' decimal separator and LF line endings."""
    lines = ["threads,cycles,sync,conflict,divergence,ops_per_cycle"]
    for r in rows:
        lines.append(",".join([
            str(r.threads), _fmt(r.cycles), _fmt(r.sync), _fmt(r.conflict),
            _fmt(r.divergence), repr(r.ops_per_cycle),
        ]))
    return "\n".join(lines) + "\n"
