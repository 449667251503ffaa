"""spnforge: compile sum-product networks to a tree-of-PEs VLIW processor
and measure effective operations/cycle on a cycle-accurate simulator."""

from .errors import SpnForgeError
from .ir import (
    NodeKind,
    SpnGraph,
    SpnNode,
    binarize,
    gen_random_spn,
    level_decompose,
    parse_spn,
    serialize_spn,
    validate,
)
from .isa import ProcessorConfig, VliwInstruction, VliwProgram
from .compiler import allocate_banks, emit_asm, pack_cones, parse_asm, schedule
from .machine import SimReport, check_legality, measure_throughput, run, step
from .reference import (
    EncodedSpn,
    count_effective_ops,
    encode_vectors,
    eval_forloop,
    eval_list,
)
from .simt import SimtConfig, SimtReport, scaling_sweep, simulate_simt

__version__ = "0.1.0"

__all__ = [
    "EncodedSpn",
    "NodeKind",
    "ProcessorConfig",
    "SimReport",
    "SimtConfig",
    "SimtReport",
    "SpnForgeError",
    "SpnGraph",
    "SpnNode",
    "VliwInstruction",
    "VliwProgram",
    "allocate_banks",
    "binarize",
    "check_legality",
    "count_effective_ops",
    "emit_asm",
    "encode_vectors",
    "eval_forloop",
    "eval_list",
    "gen_random_spn",
    "level_decompose",
    "measure_throughput",
    "pack_cones",
    "parse_asm",
    "parse_spn",
    "run",
    "schedule",
    "serialize_spn",
    "simulate_simt",
    "scaling_sweep",
    "step",
    "validate",
]
