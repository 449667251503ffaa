"""Cycle-accurate simulator for the tree-of-PEs processor.

Execution model: one instruction issues per cycle with no dynamic stalling.
Reads happen at issue through the crossbar (one port per global bank per
cycle). The configured wave flows up the PE tree one level per cycle, so a
level-l writeback commits at issue + l*pe_latency; LOAD and copy results
commit one cycle after issue. A register is readable in the cycle its write
commits (write-before-read ordering inside a cycle). Hazards fault instead of
stalling: avoiding them is the compiler's job, and faulting surfaces compiler
bugs immediately.
"""

from __future__ import annotations

import heapq
import json
import warnings
from dataclasses import dataclass, field

from .errors import (
    HazardFault,
    IllegalInstruction,
    InputLengthError,
    UninitializedRead,
)
from .fp32 import add32, f32, mul32
from .ir import SpnGraph
from .isa import (
    OP_ADD,
    OP_MUL,
    OP_PASS_A,
    OP_PASS_B,
    MemInput,
    MemOp,
    PeSlot,
    ProcessorConfig,
    RegInput,
    VliwInstruction,
    VliwProgram,
)

# check_legality violation kinds.
V_READ_PORT = "read-port-conflict"
V_WRITE_PORT = "write-port-conflict"
V_WRITE_REGION = "write-region"
V_BOUNDS = "bounds"
V_MISSING_OPERAND = "missing-operand"
V_ORPHAN_WRITEBACK = "orphan-writeback"
V_READ_BEFORE_READY = "read-before-ready"
V_UNINIT_READ = "uninitialized-read"
V_LAYOUT = "input-layout"
V_OUTPUT = "output-location"


@dataclass(frozen=True)
class LegalityViolation:
    kind: str
    cycle: int | None
    where: str
    message: str


@dataclass
class SimReport:
    root_value: float
    total_cycles: int
    effective_ops: int
    ops_per_cycle: float
    nop_cycles: int
    mem_ops: int
    spill_rows_used: int
    violations: list = field(default_factory=list)
    adds: int = 0
    muls: int = 0
    passes: int = 0
    copies: int = 0

    def to_json(self) -> str:
        return json.dumps(
            {
                "root_value_hex": float(self.root_value).hex(),
                "root_value": repr(float(self.root_value)),
                "total_cycles": self.total_cycles,
                "effective_ops": self.effective_ops,
                "ops_per_cycle": self.ops_per_cycle,
                "nop_cycles": self.nop_cycles,
                "mem_ops": self.mem_ops,
                "spill_rows_used": self.spill_rows_used,
                "violations": [v.__dict__ if hasattr(v, "__dict__") else v for v in self.violations],
                "adds": self.adds,
                "muls": self.muls,
                "passes": self.passes,
                "copies": self.copies,
            },
            sort_keys=True,
        )


class MachineState:
    """Register files, in-flight pipeline values, data memory, counters."""

    def __init__(self, cfg: ProcessorConfig):
        self.cfg = cfg
        self.cycle = 0
        # committed register cells: (global_bank, reg) -> (value, initialized)
        self.regs: dict[tuple[int, int], tuple[float, bool]] = {}
        # in-flight writes: heap of (commit_cycle, seq, gbank, reg, value, init)
        self.pending: list[tuple[int, int, int, int, float, bool]] = []
        self.pending_count: dict[tuple[int, int], int] = {}
        self._seq = 0
        # data memory cells: (vaddr, lane) -> (value, initialized)
        self.memory: dict[tuple[int, int], tuple[float, bool]] = {}
        self.last_commit = -1
        self.adds = self.muls = self.passes = 0
        self.mem_ops = self.copies = self.nop_cycles = 0
        self.store_rows: set[int] = set()
        self.on_uninit = "fault"

    # -- plumbing ---------------------------------------------------------

    def enqueue(self, commit_cycle: int, gbank: int, reg: int, value: float, init: bool):
        heapq.heappush(self.pending, (commit_cycle, self._seq, gbank, reg, value, init))
        self._seq += 1
        key = (gbank, reg)
        self.pending_count[key] = self.pending_count.get(key, 0) + 1
        if commit_cycle > self.last_commit:
            self.last_commit = commit_cycle

    def commit_until(self, cycle: int):
        while self.pending and self.pending[0][0] <= cycle:
            _, _, gb, r, v, init = heapq.heappop(self.pending)
            self.regs[(gb, r)] = (v, init)
            self.pending_count[(gb, r)] -= 1

    def read_reg(self, gbank: int, reg: int, what: str) -> float:
        cell = self.regs.get((gbank, reg))
        if cell is not None:
            value, init = cell
            if not init:
                return self._uninit(f"{what}: b{gbank}:r{reg} holds an uninitialized value")
            return value
        if self.pending_count.get((gbank, reg), 0) > 0:
            raise HazardFault(
                f"cycle {self.cycle}: {what}: b{gbank}:r{reg} written but not yet committed"
            )
        return self._uninit(f"{what}: b{gbank}:r{reg} was never written")

    def _uninit(self, msg: str) -> float:
        if self.on_uninit == "warn":
            warnings.warn(msg, stacklevel=3)
            return 0.0
        raise UninitializedRead(f"cycle {self.cycle}: {msg}")


def _global(cfg: ProcessorConfig, tree: int, local_bank: int) -> int:
    return tree * cfg.banks_per_tree + local_bank


def step(state: MachineState, instr: VliwInstruction) -> MachineState:
    """Advance exactly one cycle; `run` is a fold of `step` plus drain."""
    cfg = state.cfg
    c = state.cycle
    state.commit_until(c)

    port_vals: dict[tuple[int, int], float] = {}
    for (tree, port), (gb, reg) in instr.reads.items():
        port_vals[(tree, port)] = state.read_reg(gb, reg, f"read port t{tree}.{port}")

    for gb, (src, dst) in sorted(instr.copies.items()):
        v = state.read_reg(gb, src, f"copy on b{gb}")
        state.enqueue(c + 1, gb, dst, v, True)
        state.copies += 1

    if instr.mem is not None:
        vaddr, reg = instr.mem.vaddr, instr.mem.reg
        if not (0 <= vaddr < cfg.mem_rows and 0 <= reg < cfg.regs_per_bank):
            raise IllegalInstruction(f"cycle {c}: memory op out of bounds {instr.mem}")
        if instr.mem.kind == "LD":
            for gb in range(cfg.total_banks):
                v, init = state.memory.get((vaddr, gb), (0.0, False))
                state.enqueue(c + 1, gb, reg, v, init)
        else:
            for gb in range(cfg.total_banks):
                cell = state.regs.get((gb, reg))
                state.memory[(vaddr, gb)] = cell if cell is not None else (0.0, False)
            state.store_rows.add(vaddr)
        state.mem_ops += 1

    for tree in range(cfg.num_trees):
        outputs: dict[tuple[int, int], float] = {}
        for level in range(1, cfg.levels + 1):
            for pos in range(cfg.level_width(level)):
                slot = PeSlot(tree, level, pos)
                op = instr.pe_ops.get(slot)
                if op is None:
                    continue
                if level == 1:
                    a = port_vals.get((tree, 2 * pos))
                    b = port_vals.get((tree, 2 * pos + 1))
                else:
                    a = outputs.get((level - 1, 2 * pos))
                    b = outputs.get((level - 1, 2 * pos + 1))
                if op == OP_ADD or op == OP_MUL:
                    if a is None or b is None:
                        raise IllegalInstruction(f"cycle {c}: {slot} {op} missing an input")
                    out = add32(a, b) if op == OP_ADD else mul32(a, b)
                    if op == OP_ADD:
                        state.adds += 1
                    else:
                        state.muls += 1
                elif op == OP_PASS_A:
                    if a is None:
                        raise IllegalInstruction(f"cycle {c}: {slot} PASS_A missing input A")
                    out = a
                    state.passes += 1
                else:
                    if b is None:
                        raise IllegalInstruction(f"cycle {c}: {slot} PASS_B missing input B")
                    out = b
                    state.passes += 1
                outputs[(level, pos)] = out
                wb = instr.writebacks.get(slot)
                if wb is not None:
                    local_bank, reg = wb
                    if local_bank not in cfg.write_region(level, pos):
                        raise IllegalInstruction(
                            f"cycle {c}: {slot} writeback bank {local_bank} outside write region"
                        )
                    if not 0 <= reg < cfg.regs_per_bank:
                        raise IllegalInstruction(f"cycle {c}: {slot} writeback reg {reg} out of range")
                    state.enqueue(c + cfg.latency(level), _global(cfg, tree, local_bank), reg, out, True)

    for slot in instr.writebacks:
        if slot not in instr.pe_ops:
            raise IllegalInstruction(f"cycle {c}: writeback on idle PE {slot}")

    if instr.is_nop():
        state.nop_cycles += 1
    state.cycle += 1
    return state


def make_state(p: VliwProgram, inputs: list[float], *, on_uninit: str = "fault") -> MachineState:
    """Fresh machine state with the input vector staged per the program layout."""
    if len(inputs) != len(p.input_layout):
        raise InputLengthError(f"expected {len(p.input_layout)} inputs, got {len(inputs)}")
    state = MachineState(p.config)
    state.on_uninit = on_uninit
    for slot, loc in p.input_layout.items():
        v = f32(inputs[slot])
        if isinstance(loc, RegInput):
            state.regs[(loc.bank, loc.reg)] = (v, True)
        else:
            state.memory[(loc.vaddr, loc.lane)] = (v, True)
    return state


def run(
    p: VliwProgram,
    inputs: list[float],
    cfg: ProcessorConfig | None = None,
    *,
    on_uninit: str = "fault",
    return_state: bool = False,
):
    """Execute a program and report cycles, ops and the float32 root value."""
    if cfg is not None and cfg != p.config:
        from .errors import ConfigMismatch

        raise ConfigMismatch("run() config differs from the program's")
    state = make_state(p, inputs, on_uninit=on_uninit)
    for instr in p.instructions:
        step(state, instr)
    # Drain: let in-flight writes land.
    state.commit_until(state.last_commit if state.last_commit >= 0 else 0)
    total = max(len(p.instructions), state.last_commit + 1, 0)
    state.cycle = total

    gb, reg = p.output_location
    root = state.read_reg(gb, reg, "output read")
    eff = state.adds + state.muls
    report = SimReport(
        root_value=root,
        total_cycles=total,
        effective_ops=eff,
        ops_per_cycle=(eff / total) if total else 0.0,
        nop_cycles=state.nop_cycles,
        mem_ops=state.mem_ops,
        spill_rows_used=len(state.store_rows),
        adds=state.adds,
        muls=state.muls,
        passes=state.passes,
        copies=state.copies,
    )
    if return_state:
        return report, state
    return report


def check_legality(p: VliwProgram, cfg: ProcessorConfig | None = None) -> list[LegalityViolation]:
    """Static pass over every instruction; an empty list means legal.

    Mirrors the runtime timing model exactly (symbolic values, real commit
    cycles), so a program with no violations can never raise HazardFault or
    UninitializedRead when run. Violations are data, not exceptions.
    """
    cfg = cfg or p.config
    out: list[LegalityViolation] = []
    bad = out.append

    committed: dict[tuple[int, int], bool] = {}  # (gbank, reg) -> initialized
    pend: list[tuple[int, int, int, int, bool]] = []  # (cycle, seq, gb, reg, init)
    pend_count: dict[tuple[int, int], int] = {}
    completions: dict[int, dict[int, str]] = {}  # cycle -> gbank -> writer
    mem_init: dict[tuple[int, int], bool] = {}
    seq = 0

    def commit_until(c: int):
        while pend and pend[0][0] <= c:
            _, _, gb, r, init = heapq.heappop(pend)
            committed[(gb, r)] = init
            pend_count[(gb, r)] -= 1

    def enqueue(cc: int, gb: int, r: int, init: bool, c: int, who: str):
        nonlocal seq
        slot_map = completions.setdefault(cc, {})
        if gb in slot_map:
            bad(LegalityViolation(
                V_WRITE_PORT, c,
                who, f"bank {gb} written twice in cycle {cc} ({slot_map[gb]} and {who})",
            ))
        else:
            slot_map[gb] = who
        heapq.heappush(pend, (cc, seq, gb, r, init))
        seq += 1
        pend_count[(gb, r)] = pend_count.get((gb, r), 0) + 1

    def check_read(gb: int, r: int, c: int, who: str):
        cell = committed.get((gb, r))
        if cell is True:
            return
        if cell is False:
            bad(LegalityViolation(V_UNINIT_READ, c, who, f"b{gb}:r{r} holds an uninitialized value"))
        elif pend_count.get((gb, r), 0) > 0:
            bad(LegalityViolation(V_READ_BEFORE_READY, c, who, f"b{gb}:r{r} still in flight"))
        else:
            bad(LegalityViolation(V_UNINIT_READ, c, who, f"b{gb}:r{r} never written"))

    # Input layout.
    seen_cells: set = set()
    for slot, loc in sorted(p.input_layout.items()):
        if isinstance(loc, RegInput):
            if not (0 <= loc.bank < cfg.total_banks and 0 <= loc.reg < cfg.regs_per_bank):
                bad(LegalityViolation(V_LAYOUT, None, f"in {slot}", "register out of range"))
                continue
            key = ("r", loc.bank, loc.reg)
            committed[(loc.bank, loc.reg)] = True
        else:
            if not (0 <= loc.vaddr < cfg.mem_rows and 0 <= loc.lane < cfg.total_banks):
                bad(LegalityViolation(V_LAYOUT, None, f"in {slot}", "memory cell out of range"))
                continue
            key = ("m", loc.vaddr, loc.lane)
            mem_init[(loc.vaddr, loc.lane)] = True
        if key in seen_cells:
            bad(LegalityViolation(V_LAYOUT, None, f"in {slot}", f"cell {key} assigned twice"))
        seen_cells.add(key)

    for c, instr in enumerate(p.instructions):
        commit_until(c)
        where = f"cycle {c}"

        # Crossbar: every populated read port (and copy source) needs its own bank.
        banks_read: dict[int, str] = {}
        for (tree, port), (gb, reg) in sorted(instr.reads.items()):
            who = f"t{tree} port {port}"
            if not (0 <= tree < cfg.num_trees and 0 <= port < cfg.ports_per_tree):
                bad(LegalityViolation(V_BOUNDS, c, who, "no such read port"))
                continue
            if not (0 <= gb < cfg.total_banks and 0 <= reg < cfg.regs_per_bank):
                bad(LegalityViolation(V_BOUNDS, c, who, f"read target b{gb}:r{reg} out of range"))
                continue
            if gb in banks_read:
                bad(LegalityViolation(V_READ_PORT, c, who,
                                      f"bank {gb} also read by {banks_read[gb]}"))
            else:
                banks_read[gb] = who
            check_read(gb, reg, c, who)

        for gb, (src, dst) in sorted(instr.copies.items()):
            who = f"copy b{gb}"
            if not (0 <= gb < cfg.total_banks and 0 <= src < cfg.regs_per_bank
                    and 0 <= dst < cfg.regs_per_bank):
                bad(LegalityViolation(V_BOUNDS, c, who, "copy field out of range"))
                continue
            if gb in banks_read:
                bad(LegalityViolation(V_READ_PORT, c, who,
                                      f"bank {gb} also read by {banks_read[gb]}"))
            else:
                banks_read[gb] = who
            check_read(gb, src, c, who)
            init = committed.get((gb, src), False) is True
            enqueue(c + 1, gb, dst, init, c, who)

        if instr.mem is not None:
            vaddr, reg = instr.mem.vaddr, instr.mem.reg
            who = f"{instr.mem.kind} v{vaddr}"
            if not (0 <= vaddr < cfg.mem_rows and 0 <= reg < cfg.regs_per_bank):
                bad(LegalityViolation(V_BOUNDS, c, who, "memory op out of range"))
            elif instr.mem.kind == "LD":
                for gb in range(cfg.total_banks):
                    enqueue(c + 1, gb, reg, mem_init.get((vaddr, gb), False), c, who)
            else:
                for gb in range(cfg.total_banks):
                    mem_init[(vaddr, gb)] = committed.get((gb, reg), False) is True

        # PE wave: symbolic (True = produces an initialized value).
        for tree in range(cfg.num_trees):
            produced: dict[tuple[int, int], bool] = {}
            for level in range(1, cfg.levels + 1):
                for pos in range(cfg.level_width(level)):
                    slot = PeSlot(tree, level, pos)
                    op = instr.pe_ops.get(slot)
                    if op is None:
                        continue
                    who = f"t{tree}.l{level}.p{pos}"
                    if level == 1:
                        a = (tree, 2 * pos) in instr.reads
                        b = (tree, 2 * pos + 1) in instr.reads
                    else:
                        a = produced.get((level - 1, 2 * pos), False)
                        b = produced.get((level - 1, 2 * pos + 1), False)
                    need_a = op in (OP_ADD, OP_MUL, OP_PASS_A)
                    need_b = op in (OP_ADD, OP_MUL, OP_PASS_B)
                    if (need_a and not a) or (need_b and not b):
                        bad(LegalityViolation(V_MISSING_OPERAND, c, who, f"{op} lacks an input"))
                        continue
                    produced[(level, pos)] = True
                    wb = instr.writebacks.get(slot)
                    if wb is not None:
                        local_bank, reg = wb
                        if not (0 <= reg < cfg.regs_per_bank and 0 <= local_bank < cfg.banks_per_tree):
                            bad(LegalityViolation(V_BOUNDS, c, who, f"writeback b{local_bank}:r{reg} out of range"))
                        elif local_bank not in cfg.write_region(level, pos):
                            bad(LegalityViolation(
                                V_WRITE_REGION, c, who,
                                f"bank {local_bank} outside region "
                                f"[{cfg.write_region(level, pos).start},{cfg.write_region(level, pos).stop})"))
                        else:
                            enqueue(c + cfg.latency(level), _global(cfg, tree, local_bank), reg, True, c, who)

            for slot in sorted(instr.writebacks):
                if slot.tree == tree and slot not in instr.pe_ops:
                    bad(LegalityViolation(V_ORPHAN_WRITEBACK, c, f"{slot}", "writeback on idle PE"))
            for slot in sorted(instr.pe_ops):
                if slot.tree == tree and not (
                    1 <= slot.level <= cfg.levels and 0 <= slot.pos < cfg.level_width(slot.level)
                ):
                    bad(LegalityViolation(V_BOUNDS, c, f"{slot}", "no such PE"))

    commit_until(len(p.instructions) + cfg.latency(cfg.levels) + 2)
    gb, reg = p.output_location
    if not (0 <= gb < cfg.total_banks and 0 <= reg < cfg.regs_per_bank):
        bad(LegalityViolation(V_OUTPUT, None, "out", "output location out of range"))
    elif committed.get((gb, reg)) is not True:
        bad(LegalityViolation(V_OUTPUT, None, "out", "output register never holds a committed value"))
    return out


def measure_throughput(
    g: SpnGraph,
    cfg: ProcessorConfig,
    inputs: list[float],
    *,
    bank_strategy: str = "dsatur",
    return_program: bool = False,
):
    """Convenience composition used by the benchmarks: binarize, compile, run."""
    from .compiler import schedule
    from .ir import binarize

    bg = binarize(g)
    prog = schedule(bg, cfg, bank_strategy=bank_strategy)
    report = run(prog, inputs)
    if return_program:
        return report, prog
    return report
