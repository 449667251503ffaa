"""SPN-to-VLIW compiler: cone packing, bank allocation, list scheduling.

Pipeline for a binarized graph:

  1. pack_cones      partition internal nodes into depth-bounded in-trees
                     that map onto one PE-tree issue each
  2. dup insertion   a value read twice in one instruction, or two leaves
                     pinned to the same bank, cannot share a read port; a
                     single-PE PASS cone copies the value into another bank
  3. allocate_banks  DSATUR coloring of values over global banks; choosing a
                     bank pins the producing PE (tree and position follow
                     from the write-region arithmetic), so placement and
                     allocation happen in one step
  4. list scheduler  cycle-by-cycle greedy issue by critical path, honoring
                     crossbar port exclusivity, write-port completions,
                     register capacity (spilling whole vector rows to data
                     memory) and row reloads

Everything is deterministic: ties break on lowest id everywhere.
"""

from __future__ import annotations

import heapq
from bisect import insort
from dataclasses import dataclass, field

from .errors import CapacityError, NotBinaryError, ScheduleDeadlock, SpillOverflow
from .ir import NodeKind, SpnGraph
from .isa import (
    OP_ADD,
    OP_MUL,
    OP_PASS_A,
    MemInput,
    MemOp,
    PeSlot,
    ProcessorConfig,
    RegInput,
    VliwInstruction,
    VliwProgram,
    emit_asm,
    parse_asm,
)

__all__ = [
    "Cone",
    "BankAllocation",
    "pack_cones",
    "allocate_banks",
    "schedule",
    "emit_asm",
    "parse_asm",
]


@dataclass
class Cone:
    """A single-rooted subtree mapped onto one PE-tree issue.

    `shape` is ("op", node_id, kind, left, right) nested, with ("in", k)
    leaves indexing into `operands`, or ("pass",) for a duplication cone.
    Value ids are graph node ids; duplication values get fresh ids past them.
    """

    root: int
    members: tuple[int, ...]
    depth: int
    shape: tuple
    operands: list[int]

    @property
    def n_ops(self) -> int:
        return len(self.members)


def pack_cones(g: SpnGraph, cfg: ProcessorConfig) -> list[Cone]:
    """Grow cones greedily from ready roots in reverse topological order.

    A cone absorbs a child when the child is internal, single-use and
    unassigned. Growth deepens level by level and stops when the tree limit
    is reached or when deepening would leave the reserved leaf-PE interval
    underused (ops < 2^(depth-1)), which keeps skinny chains from hogging a
    whole subtree. Every fan-out>1 value therefore roots its own cone.
    """
    if not g.is_binary():
        raise NotBinaryError("pack_cones requires a binarized graph")
    levels = cfg.levels
    fanout = [0] * len(g.nodes)
    for node in g.nodes:
        for c in node.children:
            fanout[c] += 1

    assigned = [False] * len(g.nodes)
    cones: list[Cone] = []
    internal_ids = [n.id for n in g.nodes if n.kind is not NodeKind.LEAF]

    for rid in reversed(internal_ids):
        if assigned[rid]:
            continue
        assigned[rid] = True
        depth_of = {rid: 1}
        members = [rid]
        frontier = [rid]
        depth = 1
        while depth < levels:
            pool = []
            for v in frontier:
                for c in g.nodes[v].children:
                    cn = g.nodes[c]
                    if cn.kind is not NodeKind.LEAF and fanout[c] == 1 and not assigned[c]:
                        pool.append(c)
            if not pool or len(members) + len(pool) < (1 << depth):
                break
            for c in pool:
                assigned[c] = True
                depth_of[c] = depth + 1
            members.extend(pool)
            frontier = pool
            depth += 1

        operands: list[int] = []

        def build(nid: int, d: int) -> tuple:
            node = g.nodes[nid]
            parts = []
            for c in node.children:
                if depth_of.get(c) == d + 1:
                    parts.append(build(c, d + 1))
                else:
                    operands.append(c)
                    parts.append(("in", len(operands) - 1))
            return ("op", nid, node.kind, parts[0], parts[1])

        shape = build(rid, 1)
        cones.append(Cone(rid, tuple(members), depth, shape, operands))

    cones.sort(key=lambda c: c.root)
    return cones


def _leaf_banks(g: SpnGraph, cfg: ProcessorConfig) -> dict[int, int]:
    """Leaf inputs land round-robin across global banks by slot."""
    return {
        n.id: n.leaf_slot % cfg.total_banks
        for n in g.nodes
        if n.kind is NodeKind.LEAF
    }


def _insert_dups(cones: list[Cone], g: SpnGraph, cfg: ProcessorConfig) -> list[Cone]:
    """Give every conflicting operand occurrence its own PASS-copied value."""
    leaf_bank = _leaf_banks(g, cfg)
    next_vid = len(g.nodes)
    dups: list[Cone] = []
    for cone in cones:
        seen_vals: set[int] = set()
        seen_leaf_banks: set[int] = set()
        for idx, vid in enumerate(cone.operands):
            lb = leaf_bank.get(vid)
            if vid in seen_vals or (lb is not None and lb in seen_leaf_banks):
                dup = Cone(next_vid, (), 1, ("pass",), [vid])
                next_vid += 1
                dups.append(dup)
                cone.operands[idx] = dup.root
                seen_vals.add(dup.root)
            else:
                seen_vals.add(vid)
                if lb is not None:
                    seen_leaf_banks.add(lb)
    return cones + dups


@dataclass
class BankAllocation:
    banks: dict[int, int]  # value id -> global bank (leaves included)
    cones: list[Cone]  # possibly extended with duplication cones
    spill_hints: frozenset[int]


def _cone_levels(cones: list[Cone], producers: dict[int, int]) -> list[int]:
    """ASAP level per cone (Kahn order, deterministic)."""
    n = len(cones)
    succ: list[list[int]] = [[] for _ in range(n)]
    indeg = [0] * n
    for ci, cone in enumerate(cones):
        for v in cone.operands:
            pi = producers.get(v)
            if pi is not None:
                succ[pi].append(ci)
                indeg[ci] += 1
    lvl = [1] * n
    ready = [ci for ci in range(n) if indeg[ci] == 0]
    heapq.heapify(ready)
    seen = 0
    while ready:
        ci = heapq.heappop(ready)
        seen += 1
        for sj in succ[ci]:
            lvl[sj] = max(lvl[sj], lvl[ci] + 1)
            indeg[sj] -= 1
            if indeg[sj] == 0:
                heapq.heappush(ready, sj)
    assert seen == len(cones), "cone graph has a cycle"
    return lvl


def allocate_banks(
    cones: list[Cone],
    g: SpnGraph,
    cfg: ProcessorConfig,
    *,
    strategy: str = "dsatur",
) -> BankAllocation:
    """Color values over global banks; the color pins the producing PE.

    Hard edges join operands of one cone (they share an instruction's read
    ports, so their banks must differ). Soft edges join values read in the
    same candidate issue cycle; DSATUR avoids those when it can, which is
    what cuts co-issue deferrals. Unsatisfiable values (all banks hard
    blocked) get duplication cones for the conflicting consumers. The naive
    strategy replaces the DSATUR order and choice with a rotating counter
    and serves as the baseline the acceptance suite compares against.
    """
    nb = cfg.total_banks
    cones = [c for c in cones]
    banks: dict[int, int] = dict(_leaf_banks(g, cfg))

    producers: dict[int, int] = {c.root: ci for ci, c in enumerate(cones)}
    max_ops = 1 << cfg.levels
    for cone in cones:
        if len(cone.operands) > min(nb, max_ops):
            raise CapacityError(
                f"cone at {cone.root} reads {len(cone.operands)} values; "
                f"only {min(nb, max_ops)} can coexist"
            )

    lvl = _cone_levels(cones, producers)
    order = sorted(range(len(cones)), key=lambda ci: (lvl[ci], cones[ci].root))
    pseudo_cycle: dict[int, int] = {}
    base = 0
    i = 0
    while i < len(order):
        j = i
        while j < len(order) and lvl[order[j]] == lvl[order[i]]:
            j += 1
        for k in range(i, j):
            pseudo_cycle[order[k]] = base + (k - i) // cfg.num_trees
        base += (j - i + cfg.num_trees - 1) // cfg.num_trees
        i = j

    hard: dict[int, set[int]] = {}
    soft: dict[int, set[int]] = {}
    cones_of: dict[int, list[int]] = {}

    def link(d: dict[int, set[int]], a: int, b: int):
        d.setdefault(a, set()).add(b)
        d.setdefault(b, set()).add(a)

    for ci, cone in enumerate(cones):
        ops = cone.operands
        for x in range(len(ops)):
            cones_of.setdefault(ops[x], []).append(ci)
            for y in range(x + 1, len(ops)):
                link(hard, ops[x], ops[y])

    by_pc: dict[int, set[int]] = {}
    for ci, cone in enumerate(cones):
        by_pc.setdefault(pseudo_cycle[ci], set()).update(cone.operands)
    for pc_vals in by_pc.values():
        vals = sorted(pc_vals)
        for x in range(len(vals)):
            for y in range(x + 1, len(vals)):
                link(soft, vals[x], vals[y])

    to_color = [c.root for c in cones]
    next_vid = max([len(g.nodes)] + [v + 1 for v in to_color])

    hard_sat: dict[int, set[int]] = {v: set() for v in to_color}
    soft_sat: dict[int, set[int]] = {v: set() for v in to_color}
    for v in to_color:
        for u in hard.get(v, ()):  # leaves are pre-colored
            if u in banks:
                hard_sat[v].add(banks[u])
        for u in soft.get(v, ()):
            if u in banks:
                soft_sat[v].add(banks[u])

    load = [0] * nb
    for b in banks.values():
        load[b] += 1

    def soft_conflicts(v: int, b: int) -> int:
        return sum(1 for u in soft.get(v, ()) if banks.get(u) == b)

    def assign(v: int, b: int):
        banks[v] = b
        load[b] += 1
        for u in hard.get(v, ()):
            if u in hard_sat:
                hard_sat[u].add(b)
        for u in soft.get(v, ()):
            if u in soft_sat:
                soft_sat[u].add(b)

    def fixup(v: int) -> int:
        # All banks hard-blocked: pick the least-conflicting bank and give
        # each clashing consumer cone its own PASS copy of v.
        counts = [0] * nb
        for u in hard.get(v, ()):
            bu = banks.get(u)
            if bu is not None:
                counts[bu] += 1
        b = min(range(nb), key=lambda x: (counts[x], x))
        nonlocal next_vid
        for ci in list(cones_of.get(v, ())):
            cone = cones[ci]
            clash = any(o != v and banks.get(o) == b for o in cone.operands)
            if not clash:
                continue
            dup = Cone(next_vid, (), 1, ("pass",), [v])
            next_vid += 1
            cones.append(dup)
            producers[dup.root] = len(cones) - 1
            idx = cone.operands.index(v)
            cone.operands[idx] = dup.root
            cones_of[v].remove(ci)
            cones_of[v].append(len(cones) - 1)
            cones_of.setdefault(dup.root, []).append(ci)
            hard_sat[dup.root] = set()
            soft_sat[dup.root] = set()
            for o in cone.operands:
                if o != dup.root:
                    link(hard, dup.root, o)
                    if o in banks:
                        hard_sat[dup.root].add(banks[o])
            uncolored.add(dup.root)
        return b

    uncolored = set(to_color)
    if strategy == "dsatur":
        while uncolored:
            v = max(
                uncolored,
                key=lambda x: (
                    len(hard_sat[x] | soft_sat[x]),
                    len(hard.get(x, ())) + len(soft.get(x, ())),
                    -x,
                ),
            )
            uncolored.remove(v)
            blocked = hard_sat[v]
            free = [b for b in range(nb) if b not in blocked]
            if free:
                b = min(free, key=lambda x: (soft_conflicts(v, x), load[x], x))
            else:
                b = fixup(v)
            assign(v, b)
    elif strategy == "roundrobin":
        counter = 0
        queue = sorted(uncolored, key=lambda v: (pseudo_cycle[producers[v]], v))
        qi = 0
        while uncolored:
            if qi >= len(queue):
                queue.extend(sorted(uncolored))
            v = queue[qi]
            qi += 1
            if v not in uncolored:
                continue
            uncolored.remove(v)
            b = None
            for k in range(nb):
                cand = (counter + k) % nb
                if cand not in hard_sat[v]:
                    b = cand
                    break
            if b is None:
                b = fixup(v)
            counter = (b + 1) % nb
            assign(v, b)
    else:
        raise ValueError(f"unknown bank strategy {strategy!r}")

    # Static pressure estimate per bank: values whose live range overlaps
    # more than regs_per_bank peers are flagged for the scheduler.
    hints: set[int] = set()
    birth: dict[int, int] = {}
    death: dict[int, int] = {}
    for ci, cone in enumerate(cones):
        pc = pseudo_cycle.get(ci, base)
        birth[cone.root] = pc
        for v in cone.operands:
            death[v] = max(death.get(v, 0), pc)
    per_bank: dict[int, list[tuple[int, int, int]]] = {}
    for v, b in banks.items():
        per_bank.setdefault(b, []).append((birth.get(v, 0), death.get(v, birth.get(v, 0)), v))
    for b, items in per_bank.items():
        items.sort()
        active: list[tuple[int, int]] = []
        for bth, dth, v in items:
            while active and active[0][0] < bth:
                heapq.heappop(active)
            if len(active) >= cfg.regs_per_bank:
                hints.add(v)
            else:
                heapq.heappush(active, (dth, v))

    return BankAllocation(banks, cones, frozenset(hints))


# ---------------------------------------------------------------------------
# List scheduler
# ---------------------------------------------------------------------------


class _Sched:
    """Mutable scheduling state; one instance per schedule() call."""

    def __init__(self, g: SpnGraph, cfg: ProcessorConfig, bank_strategy: str):
        self.g = g
        self.cfg = cfg
        self.nb = cfg.total_banks
        self.bpt = cfg.banks_per_tree
        self.R = cfg.regs_per_bank
        self.rows = cfg.mem_rows
        self.lat1 = cfg.pe_latency_cycles

        m = g.num_leaves
        self.in_rows = (m + self.nb - 1) // self.nb
        self.resident = self.in_rows <= max(1, self.R - 16)
        if not self.resident and self.in_rows > self.rows:
            raise SpillOverflow("input vector exceeds data memory")

        cones = _insert_dups(pack_cones(g, cfg), g, cfg)
        alloc = allocate_banks(cones, g, cfg, strategy=bank_strategy)
        self.cones = alloc.cones
        self.banks = alloc.banks
        self.spill_hints = alloc.spill_hints

        self.producers = {c.root: ci for ci, c in enumerate(self.cones)}
        self.consumers: dict[int, list[int]] = {}
        self.uses: dict[int, int] = {}
        for ci, c in enumerate(self.cones):
            for v in c.operands:
                self.consumers.setdefault(v, []).append(ci)
                self.uses[v] = self.uses.get(v, 0) + 1
        self.root_vid = g.root_id
        self.uses[self.root_vid] = self.uses.get(self.root_vid, 0) + 1

        self.prio = self._priorities()

        # Value locations: ("reg", gb, r) | ("mem", va, lane) | ("flight",) | ("dead",)
        self.loc: dict[int, tuple] = {}
        self.mem_home: dict[int, tuple[int, int]] = {}
        self.cell: dict[tuple[int, int], int] = {}
        self.occupied = [bytearray(self.R) for _ in range(self.nb)]
        self.row_ref = [0] * self.R
        self.flight_rows = [0] * self.R
        self.mem_cells: dict[int, dict[int, int]] = {}
        self.spill_base = self.in_rows if not self.resident else 0
        self.free_spill_rows: list[int] = []  # recycled vaddrs, min-heap
        self.live_home_count: dict[int, int] = {}  # vaddr -> live values homed there

        slot_to_nid = {n.leaf_slot: n.id for n in g.nodes if n.kind is NodeKind.LEAF}
        self.input_layout: dict[int, RegInput | MemInput] = {}
        for slot in range(m):
            nid = slot_to_nid[slot]
            gb, r = slot % self.nb, slot // self.nb
            if self.resident:
                self.loc[nid] = ("reg", gb, r)
                self.cell[(gb, r)] = nid
                self.occupied[gb][r] = 1
                self.row_ref[r] += 1
                self.input_layout[slot] = RegInput(gb, r)
            else:
                va = slot // self.nb
                self.loc[nid] = ("mem", va, gb)
                self.mem_home[nid] = (va, gb)
                self.mem_cells.setdefault(va, {})[gb] = nid
                self.input_layout[slot] = MemInput(va, gb)
                self.live_home_count[va] = self.live_home_count.get(va, 0) + 1

        self.not_ready = [0] * len(self.cones)
        self.mem_count = [0] * len(self.cones)
        self.issued = [False] * len(self.cones)
        for ci, c in enumerate(self.cones):
            for v in c.operands:
                st = self.loc.get(v, ("none",))[0]
                if st != "reg":
                    self.not_ready[ci] += 1
                if st == "mem":
                    self.mem_count[ci] += 1

        self.ready_list: list[tuple[int, int, int]] = []  # (-prio, root, ci)
        self.listed = [False] * len(self.cones)
        for ci in range(len(self.cones)):
            if self.not_ready[ci] == 0:
                self._list_ready(ci)
        self.blocked: set[int] = {ci for ci in range(len(self.cones)) if self.mem_count[ci] > 0}

        self.events: list[tuple[int, int, int, int, int]] = []  # (cycle, seq, vid, gb, r)
        self._seq = 0
        self.completion_banks: dict[int, set[int]] = {}
        self.vector_cycles: set[int] = set()
        self.spill_requests: set = set()
        self.next_spill_row = self.spill_base
        self.last_commit = -1

        self.instrs: list[VliwInstruction] = []
        self.cycle = 0
        self.n_issued = 0
        self.stat = {
            "spill_stores": 0,
            "reload_loads": 0,
            "nop_cycles": 0,
            "conflict_deferrals": 0,
            "capacity_deferrals": 0,
        }

    # -- bookkeeping -------------------------------------------------------

    def _priorities(self) -> list[int]:
        n = len(self.cones)
        succ: list[list[int]] = [[] for _ in range(n)]
        indeg = [0] * n
        for ci, c in enumerate(self.cones):
            for v in c.operands:
                pi = self.producers.get(v)
                if pi is not None:
                    succ[pi].append(ci)
                    indeg[ci] += 1
        topo: list[int] = []
        ready = [ci for ci in range(n) if indeg[ci] == 0]
        heapq.heapify(ready)
        while ready:
            ci = heapq.heappop(ready)
            topo.append(ci)
            for sj in succ[ci]:
                indeg[sj] -= 1
                if indeg[sj] == 0:
                    heapq.heappush(ready, sj)
        prio = [0] * n
        for ci in reversed(topo):
            lat = self.cones[ci].depth * self.lat1 + 1
            best = 0
            for sj in succ[ci]:
                if prio[sj] > best:
                    best = prio[sj]
            prio[ci] = lat + best
        return prio

    def _list_ready(self, ci: int):
        if not self.listed[ci] and not self.issued[ci]:
            insort(self.ready_list, (-self.prio[ci], self.cones[ci].root, ci))
            self.listed[ci] = True

    def _push_event(self, cycle: int, vid: int, gb: int, r: int):
        heapq.heappush(self.events, (cycle, self._seq, vid, gb, r))
        self._seq += 1
        if cycle > self.last_commit:
            self.last_commit = cycle

    def _commit_events(self) -> bool:
        did = False
        while self.events and self.events[0][0] <= self.cycle:
            _, _, vid, gb, r = heapq.heappop(self.events)
            did = True
            self.flight_rows[r] -= 1
            if self.uses.get(vid, 0) <= 0:
                # Died while in flight (possible for pass copies never read).
                self._free_cell(gb, r)
                self.loc[vid] = ("dead",)
                continue
            self.loc[vid] = ("reg", gb, r)
            for ci in self.consumers.get(vid, ()):
                if not self.issued[ci]:
                    self.not_ready[ci] -= 1
                    if self.not_ready[ci] == 0:
                        self._list_ready(ci)
        return did

    def _free_cell(self, gb: int, r: int):
        if self.cell.pop((gb, r), None) is not None:
            self.occupied[gb][r] = 0
            self.row_ref[r] -= 1

    def _find_free_reg(self, gb: int) -> int | None:
        occ = self.occupied[gb]
        for r in range(self.R):
            if not occ[r]:
                return r
        return None

    def _find_virgin_row(self) -> int | None:
        for r in range(self.R - 1, -1, -1):
            if self.row_ref[r] == 0 and self.flight_rows[r] == 0:
                return r
        return None

    def _kill_use(self, vid: int):
        self.uses[vid] -= 1
        if self.uses[vid] == 0:
            lv = self.loc[vid]
            if lv[0] == "reg":
                self._free_cell(lv[1], lv[2])
            elif lv[0] == "mem":
                row_map = self.mem_cells.get(lv[1])
                if row_map is not None:
                    row_map.pop(lv[2], None)
            home = self.mem_home.get(vid)
            if home is not None:
                va = home[0]
                self.live_home_count[va] -= 1
                if self.live_home_count[va] == 0 and va >= self.spill_base:
                    heapq.heappush(self.free_spill_rows, va)
            self.loc[vid] = ("dead",)

    # -- memory stage ------------------------------------------------------

    def _urgency(self, vid: int) -> int:
        best = 0
        for ci in self.consumers.get(vid, ()):
            if not self.issued[ci] and self.prio[ci] > best:
                best = self.prio[ci]
        return best

    def _protected_rows(self) -> set[int]:
        """Rows holding operands of the cones currently being served.

        Evicting these would thrash: the top blocked cone and the head of the
        ready queue are about to consume them.
        """
        prot: set[int] = set()
        serving: list[int] = []
        if self.blocked:
            serving.append(max(self.blocked, key=lambda x: (self.prio[x], -self.cones[x].root)))
        for _, _, ci in self.ready_list[:6]:
            if not self.issued[ci]:
                serving.append(ci)
        for ci in serving:
            for v in self.cones[ci].operands:
                lv = self.loc.get(v, ("none",))
                if lv[0] == "reg":
                    prot.add(lv[2])
        return prot

    def _pick_victim(self, want_banks) -> int | None:
        best = None
        protected = self._protected_rows()
        for r in range(self.R):
            if self.flight_rows[r] != 0 or self.row_ref[r] == 0 or r in protected:
                continue
            cells = [(gb, self.cell[(gb, r)]) for gb in range(self.nb) if (gb, r) in self.cell]
            if any(v == self.root_vid for _, v in cells):
                continue
            if want_banks is not None and not any(gb in want_banks for gb, _ in cells):
                continue
            needs_store = any(v not in self.mem_home for _, v in cells)
            urgency = max((self._urgency(v) for _, v in cells), default=0)
            key = (urgency, needs_store, r)
            if best is None or key < best[0]:
                best = (key, r)
        return best[1] if best else None

    def _evict(self, row: int, instr: VliwInstruction) -> bool:
        cells = [(gb, self.cell[(gb, row)]) for gb in range(self.nb) if (gb, row) in self.cell]
        needs_store = any(v not in self.mem_home for _, v in cells)
        if needs_store:
            if instr.mem is not None:
                return False
            if self.free_spill_rows:
                va = heapq.heappop(self.free_spill_rows)
            elif self.next_spill_row < self.rows:
                va = self.next_spill_row
                self.next_spill_row += 1
            else:
                raise SpillOverflow(
                    f"out of data memory: {self.rows} rows used while spilling"
                )
            instr.mem = MemOp("ST", va, row)
            self.stat["spill_stores"] += 1
            for gb, v in cells:
                old = self.mem_home.get(v)
                if old is not None:
                    ova = old[0]
                    self.live_home_count[ova] -= 1
                    if self.live_home_count[ova] == 0 and ova >= self.spill_base:
                        heapq.heappush(self.free_spill_rows, ova)
                self.mem_home[v] = (va, gb)
                self.live_home_count[va] = self.live_home_count.get(va, 0) + 1
        for gb, v in cells:
            va, lane = self.mem_home[v]
            self.loc[v] = ("mem", va, lane)
            self.mem_cells.setdefault(va, {})[lane] = v
            self._free_cell(gb, row)
            for ci in self.consumers.get(v, ()):
                if not self.issued[ci]:
                    self.not_ready[ci] += 1
                    self.mem_count[ci] += 1
                    self.blocked.add(ci)
        return True

    def _memory_stage(self, instr: VliwInstruction):
        if self.spill_requests:
            want = None if "*" in self.spill_requests else self.spill_requests
            row = self._pick_victim(want)
            if row is not None and self._evict(row, instr):
                self.spill_requests.clear()
                return
        if instr.mem is not None or not self.blocked:
            return
        ci = max(self.blocked, key=lambda x: (self.prio[x], -self.cones[x].root))
        rows_needed = sorted(
            {
                lv[1]
                for lv in (self.loc.get(v, ("none",)) for v in self.cones[ci].operands)
                if lv[0] == "mem"
            }
        )
        if not rows_needed:
            self.blocked.discard(ci)
            return
        va = rows_needed[0]
        vr = self._find_virgin_row()
        if vr is None:
            self.spill_requests.add("*")
            return
        nxt = self.cycle + 1
        if nxt in self.vector_cycles or self.completion_banks.get(nxt):
            return
        instr.mem = MemOp("LD", va, vr)
        self.vector_cycles.add(nxt)
        self.stat["reload_loads"] += 1
        for lane, vid in sorted(self.mem_cells.get(va, {}).items()):
            self.cell[(lane, vr)] = vid
            self.occupied[lane][vr] = 1
            self.row_ref[vr] += 1
            self.flight_rows[vr] += 1
            self.loc[vid] = ("flight",)
            self._push_event(nxt, vid, lane, vr)
            for cj in self.consumers.get(vid, ()):
                if not self.issued[cj]:
                    self.mem_count[cj] -= 1
                    if self.mem_count[cj] == 0:
                        self.blocked.discard(cj)
        self.mem_cells.pop(va, None)

    # -- compute stage -----------------------------------------------------

    def _emit_cone(
        self,
        cone: Cone,
        tree: int,
        q: int,
        reg: int,
        local_bank: int,
        op_locs: list[tuple[int, int]],
        instr: VliwInstruction,
    ):
        t = tree
        if cone.shape == ("pass",):
            instr.pe_ops[PeSlot(t, 1, q)] = OP_PASS_A
            instr.reads[(t, 2 * q)] = op_locs[0]
            instr.writebacks[PeSlot(t, 1, q)] = (local_bank, reg)
            return

        def route_operand(idx: int, level: int, pos: int):
            # Deliver operand idx to slot (level, pos) via a PASS_A chain
            # rooted there and fed from the level-1 crossbar port beneath it.
            p = pos
            for lv in range(level, 0, -1):
                instr.pe_ops[PeSlot(t, lv, p)] = OP_PASS_A
                if lv > 1:
                    p *= 2
            instr.reads[(t, 2 * p)] = op_locs[idx]

        def place(shape: tuple, level: int, pos: int):
            _, nid, kind, left, right = shape
            instr.pe_ops[PeSlot(t, level, pos)] = OP_ADD if kind is NodeKind.SUM else OP_MUL
            for side, child in ((0, left), (1, right)):
                cpos = 2 * pos + side
                if child[0] == "op":
                    place(child, level - 1, cpos)
                else:
                    if level == 1:
                        instr.reads[(t, 2 * pos + side)] = op_locs[child[1]]
                    else:
                        route_operand(child[1], level - 1, cpos)

        place(cone.shape, cone.depth, q)
        instr.writebacks[PeSlot(t, cone.depth, q)] = (local_bank, reg)

    def _try_place(self, ci: int, instr: VliwInstruction, used_banks: set[int],
                   occ_mask: list[int]) -> bool:
        cone = self.cones[ci]
        op_locs: list[tuple[int, int]] = []
        for v in cone.operands:
            lv = self.loc[v]
            if lv[0] != "reg":
                return False
            op_locs.append((lv[1], lv[2]))

        gb_root = self.banks[cone.root]
        tree, local = divmod(gb_root, self.bpt)
        d = cone.depth
        q = local >> d
        lo = q << (d - 1)
        mask = ((1 << (1 << (d - 1))) - 1) << lo
        if occ_mask[tree] & mask:
            self.stat["capacity_deferrals"] += 1
            return False

        rbanks = set()
        for gb, _ in op_locs:
            if gb in used_banks or gb in rbanks:
                self.stat["conflict_deferrals"] += 1
                return False
            rbanks.add(gb)

        cc = self.cycle + d * self.lat1
        if cc in self.vector_cycles or gb_root in self.completion_banks.get(cc, ()):
            self.stat["conflict_deferrals"] += 1
            return False

        reg = self._find_free_reg(gb_root)
        if reg is None:
            self.spill_requests.add(gb_root)
            return False

        # Commit the placement.
        occ_mask[tree] |= mask
        used_banks.update(rbanks)
        self.completion_banks.setdefault(cc, set()).add(gb_root)
        self.cell[(gb_root, reg)] = cone.root
        self.occupied[gb_root][reg] = 1
        self.row_ref[reg] += 1
        self.flight_rows[reg] += 1
        self.loc[cone.root] = ("flight",)
        self._push_event(cc, cone.root, gb_root, reg)
        self._emit_cone(cone, tree, q, reg, local, op_locs, instr)
        self.issued[ci] = True
        self.n_issued += 1
        for v in cone.operands:
            self._kill_use(v)
        return True

    # -- main loop ---------------------------------------------------------

    def run(self) -> VliwProgram:
        total = len(self.cones)
        guard = 0
        guard_limit = 4 * (self.R + self.cfg.levels + 64) + 16 * self.rows

        while self.n_issued < total:
            self._commit_events()
            instr = VliwInstruction()
            used_banks: set[int] = set()
            occ_mask = [0] * self.cfg.num_trees

            placed = 0
            scanned = 0
            i = 0
            while i < len(self.ready_list) and scanned < 128:
                _, _, ci = self.ready_list[i]
                if self.issued[ci] or self.not_ready[ci] != 0:
                    self.listed[ci] = False
                    self.ready_list.pop(i)
                    continue
                scanned += 1
                if self._try_place(ci, instr, used_banks, occ_mask):
                    self.listed[ci] = False
                    self.ready_list.pop(i)
                    placed += 1
                else:
                    i += 1

            # Memory stage last: a LOAD landing at cycle+1 must not collide
            # with writebacks the compute stage just booked.
            self._memory_stage(instr)

            if instr.is_nop():
                self.stat["nop_cycles"] += 1
            self.instrs.append(instr)
            self.cycle += 1

            # Only issued cones count as progress; memory traffic alone can
            # thrash forever and must eventually trip this guard.
            guard = 0 if placed else guard + 1
            if guard > guard_limit:
                raise ScheduleDeadlock(
                    f"no cone issued for {guard} cycles at cycle {self.cycle}; "
                    f"{total - self.n_issued} cones left"
                )

        # Trim trailing all-NOP instructions (they carry no effects).
        while self.instrs and self.instrs[-1].is_nop():
            self.instrs.pop()
            self.stat["nop_cycles"] -= 1

        out_loc = self.loc[self.root_vid]
        if out_loc[0] == "flight":
            # Still in the pipeline; find its landing cell.
            for cyc, _, vid, gb, r in self.events:
                if vid == self.root_vid:
                    out_loc = ("reg", gb, r)
                    break
        assert out_loc[0] == "reg", "root value must end in a register"

        total_cycles = max(len(self.instrs), self.last_commit + 1)
        meta = {
            "total_cycles": total_cycles,
            "effective_ops": self.g.num_internal,
            "instructions": len(self.instrs),
            **self.stat,
        }
        return VliwProgram(
            self.cfg,
            self.instrs,
            self.input_layout,
            (out_loc[1], out_loc[2]),
            meta=meta,
        )


def schedule(g: SpnGraph, cfg: ProcessorConfig, *, bank_strategy: str = "dsatur") -> VliwProgram:
    """Compile a valid binarized graph into a legal VLIW program."""
    if not g.is_binary():
        raise NotBinaryError("schedule requires a binarized graph")
    return _Sched(g, cfg, bank_strategy).run()
