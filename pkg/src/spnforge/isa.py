"""Machine configuration, VLIW instruction/program types, and assembly text.

Conventions (the full contract lives in docs/isa.md):

  * Banks are numbered globally: tree t owns global banks
    [t*2P, (t+1)*2P). Crossbar read ports name global banks; writebacks name
    a bank local to the producing tree, which must lie inside the PE's write
    region [pos*2^level, (pos+1)*2^level).
  * A level-l PE of the instruction issued at cycle c commits its writeback
    at cycle c + l*pe_latency. LOADs and copies commit at c + 1. A register
    is readable in the cycle its write commits (write-before-read).
  * Omitted PEs are NOP. One memory op per instruction, at most one copy per
    bank.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import NamedTuple

from .errors import AsmSyntaxError, ConfigMismatch


@dataclass(frozen=True)
class ProcessorConfig:
    num_trees: int
    levels: int
    leaf_pes_per_tree: int
    banks_per_tree: int
    regs_per_bank: int
    data_mem_bytes: int
    pe_latency_cycles: int = 1

    def __post_init__(self):
        t, l, p = self.num_trees, self.levels, self.leaf_pes_per_tree
        if t < 1 or l < 1 or p < 1:
            raise ValueError("trees, levels and leaf PEs must be >= 1")
        if self.banks_per_tree != 2 * p:
            raise ValueError("banks_per_tree must equal 2 * leaf_pes_per_tree")
        if p % (1 << (l - 1)):
            raise ValueError("leaf_pes_per_tree must be divisible by 2^(levels-1)")
        if self.regs_per_bank < 1 or self.pe_latency_cycles < 1:
            raise ValueError("registers and latency must be >= 1")
        if self.data_mem_bytes < 4 * self.num_trees * self.banks_per_tree:
            raise ValueError("data memory smaller than one vector row")

    @classmethod
    def ptree(cls) -> "ProcessorConfig":
        return cls(num_trees=2, levels=4, leaf_pes_per_tree=8, banks_per_tree=16,
                   regs_per_bank=64, data_mem_bytes=65536)

    @classmethod
    def pvect(cls) -> "ProcessorConfig":
        return cls(num_trees=2, levels=1, leaf_pes_per_tree=8, banks_per_tree=16,
                   regs_per_bank=64, data_mem_bytes=65536)

    @property
    def total_banks(self) -> int:
        return self.num_trees * self.banks_per_tree

    @property
    def ports_per_tree(self) -> int:
        return 2 * self.leaf_pes_per_tree

    @property
    def mem_rows(self) -> int:
        return self.data_mem_bytes // (4 * self.total_banks)

    @property
    def pes_per_tree(self) -> int:
        return sum(self.level_width(l) for l in range(1, self.levels + 1))

    @property
    def total_pes(self) -> int:
        return self.num_trees * self.pes_per_tree

    def level_width(self, level: int) -> int:
        return self.leaf_pes_per_tree >> (level - 1)

    def write_region(self, level: int, pos: int) -> range:
        """Local banks a (level, pos) PE may write: [pos*2^l, (pos+1)*2^l)."""
        return range(pos << level, (pos + 1) << level)

    def latency(self, level: int) -> int:
        return level * self.pe_latency_cycles

    def fingerprint(self) -> str:
        return (f"T={self.num_trees} L={self.levels} P={self.leaf_pes_per_tree} "
                f"R={self.regs_per_bank} MEM={self.data_mem_bytes}")


class PeSlot(NamedTuple):
    tree: int
    level: int
    pos: int


class MemOp(NamedTuple):
    kind: str  # "LD" | "ST"
    vaddr: int
    reg: int


# PE opcodes. Absent slot means NOP.
OP_ADD = "ADD"
OP_MUL = "MUL"
OP_PASS_A = "PASS_A"
OP_PASS_B = "PASS_B"
PE_OPS = (OP_ADD, OP_MUL, OP_PASS_A, OP_PASS_B)


@dataclass
class VliwInstruction:
    pe_ops: dict[PeSlot, str] = field(default_factory=dict)
    reads: dict[tuple[int, int], tuple[int, int]] = field(default_factory=dict)
    writebacks: dict[PeSlot, tuple[int, int]] = field(default_factory=dict)
    mem: MemOp | None = None
    copies: dict[int, tuple[int, int]] = field(default_factory=dict)

    def is_nop(self) -> bool:
        return not (self.pe_ops or self.reads or self.writebacks or self.mem or self.copies)


class RegInput(NamedTuple):
    bank: int  # global
    reg: int


class MemInput(NamedTuple):
    vaddr: int
    lane: int  # global bank index the value lands in when loaded


@dataclass
class VliwProgram:
    config: ProcessorConfig
    instructions: list[VliwInstruction]
    input_layout: dict[int, RegInput | MemInput]
    output_location: tuple[int, int]  # (global bank, reg)
    meta: dict = field(default_factory=dict, compare=False)


def _fmt_operand(read: tuple[int, int] | None) -> str:
    return "-" if read is None else f"b{read[0]}:r{read[1]}"


def emit_asm(p: VliwProgram) -> str:
    """Deterministic canonical assembly; `parse_asm(emit_asm(p)) == p`."""
    lines = [f"cfg {p.config.fingerprint()}"]
    for slot in sorted(p.input_layout):
        loc = p.input_layout[slot]
        if isinstance(loc, RegInput):
            lines.append(f"in {slot} -> b{loc.bank}:r{loc.reg}")
        else:
            lines.append(f"in {slot} -> v{loc.vaddr}:l{loc.lane}")
    lines.append(f"out b{p.output_location[0]}:r{p.output_location[1]}")

    for instr in p.instructions:
        parts = []
        for slot in sorted(instr.pe_ops):
            op = instr.pe_ops[slot]
            if slot.level == 1:
                a = instr.reads.get((slot.tree, 2 * slot.pos))
                b = instr.reads.get((slot.tree, 2 * slot.pos + 1))
            else:
                a = b = None
            wb = instr.writebacks.get(slot)
            tail = f"->wb b{wb[0]}:r{wb[1]}" if wb else "->none"
            parts.append(
                f"t{slot.tree}.l{slot.level}.p{slot.pos}={op}"
                f"({_fmt_operand(a)},{_fmt_operand(b)}){tail}"
            )
        if instr.mem:
            parts.append(f"{instr.mem.kind} v{instr.mem.vaddr} r{instr.mem.reg}")
        for bank in sorted(instr.copies):
            src, dst = instr.copies[bank]
            parts.append(f"CP b{bank} r{src}->r{dst}")
        lines.append("I: " + (" ".join(parts) if parts else "nop"))
    return "\n".join(lines) + "\n"


_PE_RE = re.compile(
    r"^t(\d+)\.l(\d+)\.p(\d+)=(ADD|MUL|PASS_A|PASS_B)"
    r"\((-|b\d+:r\d+),(-|b\d+:r\d+)\)->(none|wb b\d+:r\d+)$"
)
_BR_RE = re.compile(r"^b(\d+):r(\d+)$")
_MEM_RE = re.compile(r"^(LD|ST) v(\d+) r(\d+)$")
_CP_RE = re.compile(r"^CP b(\d+) r(\d+)->r(\d+)$")
_IN_RE = re.compile(r"^in (\d+) -> (?:b(\d+):r(\d+)|v(\d+):l(\d+))$")
_OUT_RE = re.compile(r"^out b(\d+):r(\d+)$")
_CFG_RE = re.compile(r"^cfg T=(\d+) L=(\d+) P=(\d+) R=(\d+) MEM=(\d+)$")


def parse_asm(text: str, expected_config: ProcessorConfig | None = None) -> VliwProgram:
    """Parse canonical assembly back into a program.

    Raises ConfigMismatch when `expected_config` is given and differs from the
    embedded fingerprint. Structural bounds beyond parseability are left to
    machine.check_legality.
    """
    cfg: ProcessorConfig | None = None
    layout: dict[int, RegInput | MemInput] = {}
    out_loc: tuple[int, int] | None = None
    instrs: list[VliwInstruction] = []

    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip()
        if not line:
            continue
        if cfg is None:
            m = _CFG_RE.match(line)
            if not m:
                raise AsmSyntaxError("expected cfg header", lineno)
            t, l, p, r, mem = map(int, m.groups())
            try:
                cfg = ProcessorConfig(t, l, p, 2 * p, r, mem)
            except ValueError as e:
                raise AsmSyntaxError(f"bad config: {e}", lineno) from None
            if expected_config is not None and cfg != expected_config:
                raise ConfigMismatch(
                    f"program compiled for '{cfg.fingerprint()}', "
                    f"expected '{expected_config.fingerprint()}'"
                )
            continue
        if line.startswith("in "):
            m = _IN_RE.match(line)
            if not m:
                raise AsmSyntaxError("bad input layout line", lineno)
            slot = int(m.group(1))
            if slot in layout:
                raise AsmSyntaxError(f"duplicate layout for slot {slot}", lineno)
            if m.group(2) is not None:
                layout[slot] = RegInput(int(m.group(2)), int(m.group(3)))
            else:
                layout[slot] = MemInput(int(m.group(4)), int(m.group(5)))
            continue
        if line.startswith("out "):
            m = _OUT_RE.match(line)
            if not m:
                raise AsmSyntaxError("bad output line", lineno)
            if out_loc is not None:
                raise AsmSyntaxError("duplicate output line", lineno)
            out_loc = (int(m.group(1)), int(m.group(2)))
            continue
        if not line.startswith("I:"):
            raise AsmSyntaxError(f"unrecognized line {line!r}", lineno)

        body = line[2:].strip()
        instr = VliwInstruction()
        if body != "nop" and body:
            for fld in _tokenize_instr(body, lineno):
                if fld.startswith("t"):
                    m = _PE_RE.match(fld)
                    if not m:
                        raise AsmSyntaxError(f"bad PE field {fld!r}", lineno)
                    tree, level, pos = int(m.group(1)), int(m.group(2)), int(m.group(3))
                    slot = PeSlot(tree, level, pos)
                    if slot in instr.pe_ops:
                        raise AsmSyntaxError(f"duplicate PE slot {fld!r}", lineno)
                    instr.pe_ops[slot] = m.group(4)
                    for port_off, operand in ((0, m.group(5)), (1, m.group(6))):
                        if operand != "-":
                            if level != 1:
                                raise AsmSyntaxError("register operands only at level 1", lineno)
                            br = _BR_RE.match(operand)
                            instr.reads[(tree, 2 * pos + port_off)] = (int(br.group(1)), int(br.group(2)))
                    wb = m.group(7)
                    if wb != "none":
                        br = _BR_RE.match(wb[3:])
                        instr.writebacks[slot] = (int(br.group(1)), int(br.group(2)))
                elif fld.startswith(("LD", "ST")):
                    m = _MEM_RE.match(fld)
                    if not m:
                        raise AsmSyntaxError(f"bad memory field {fld!r}", lineno)
                    if instr.mem is not None:
                        raise AsmSyntaxError("more than one memory op", lineno)
                    instr.mem = MemOp(m.group(1), int(m.group(2)), int(m.group(3)))
                elif fld.startswith("CP"):
                    m = _CP_RE.match(fld)
                    if not m:
                        raise AsmSyntaxError(f"bad copy field {fld!r}", lineno)
                    bank = int(m.group(1))
                    if bank in instr.copies:
                        raise AsmSyntaxError(f"two copies on bank {bank}", lineno)
                    instr.copies[bank] = (int(m.group(2)), int(m.group(3)))
                else:
                    raise AsmSyntaxError(f"unrecognized field {fld!r}", lineno)
        instrs.append(instr)

    if cfg is None:
        raise AsmSyntaxError("missing cfg header", 1)
    if out_loc is None:
        raise AsmSyntaxError("missing out line")
    return VliwProgram(cfg, instrs, layout, out_loc)


_FIELD_RE = re.compile(
    r"t\d+\.l\d+\.p\d+=[A-Z_]+\([^)]*\)->(?:none|wb b\d+:r\d+)"
    r"|LD v\d+ r\d+|ST v\d+ r\d+|CP b\d+ r\d+->r\d+"
)


def _tokenize_instr(body: str, lineno: int) -> list[str]:
    fields = _FIELD_RE.findall(body)
    if " ".join(fields) != body:
        raise AsmSyntaxError(f"unparseable instruction body {body!r}", lineno)
    return fields
