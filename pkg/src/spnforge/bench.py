"""Benchmark harness: run graphs across machine presets and the SIMT model.

Produces Fig.-4-style throughput tables. Each (graph, preset) cell records
effective ops, cycles, ops/cycle, spills and conflicts; a geometric-mean row
per preset closes the table. Presets: "ptree", "pvect", "simt-<threads>".
All numeric work happens in the other modules; this one only composes them.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field

from .errors import SpnForgeError
from .ir import (
    SpnGraph,
    binarize,
    gen_random_spn,
    make_layered_spn,
    make_mixture_spn,
    parse_spn,
)
from .isa import ProcessorConfig
from .machine import measure_throughput
from .reference import encode_vectors
from .simt import SimtConfig, simulate_simt

_GENERATORS = {
    "random": gen_random_spn,
    "mixture": make_mixture_spn,
    "layered": make_layered_spn,
}


@dataclass(frozen=True)
class GraphSource:
    name: str
    path: str | None = None
    gen: dict | None = None  # kwargs for the generator
    kind: str = "random"

    def load(self) -> SpnGraph:
        if self.path is not None:
            with open(self.path, "r", encoding="utf-8") as f:
                return parse_spn(f.read())
        return _GENERATORS[self.kind](**self.gen)


@dataclass(frozen=True)
class BenchSpec:
    graphs: tuple[GraphSource, ...]
    presets: tuple[str, ...]
    seed: int = 0
    repetitions: int = 1

    def __post_init__(self):
        if not self.graphs or not self.presets:
            raise ValueError("need at least one graph and one preset")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


@dataclass(frozen=True)
class Cell:
    graph: str
    preset: str
    ops: int
    cycles: float
    ops_per_cycle: float
    spills: int
    conflicts: float
    error: str | None = None


@dataclass(frozen=True)
class BenchResult:
    cells: tuple[Cell, ...]
    geomeans: tuple[tuple[str, float], ...]  # (preset, geomean ops/cycle)

    @property
    def failed(self) -> bool:
        return any(c.error for c in self.cells)


def preset_config(name: str):
    if name == "ptree":
        return ProcessorConfig.ptree()
    if name == "pvect":
        return ProcessorConfig.pvect()
    if name.startswith("simt-"):
        return SimtConfig(num_threads=int(name[5:]))
    raise ValueError(f"unknown preset {name!r}")


def _run_cell(graph: SpnGraph, name: str, preset: str, inputs: list[float]) -> Cell:
    cfg = preset_config(preset)
    if isinstance(cfg, SimtConfig):
        enc = encode_vectors(binarize(graph))
        rep = simulate_simt(enc, cfg)
        return Cell(name, preset, enc.num_ops, rep.total_cycles, rep.ops_per_cycle,
                    0, rep.cycles_conflict_serialization)
    rep, prog = measure_throughput(graph, cfg, inputs, return_program=True)
    return Cell(name, preset, rep.effective_ops, rep.total_cycles, rep.ops_per_cycle,
                rep.spill_rows_used, prog.meta.get("conflict_deferrals", 0))


def run_bench(spec: BenchSpec) -> BenchResult:
    """Run every (graph, preset) cell; deterministic for a fixed spec."""
    cells: list[Cell] = []
    base: list[Cell] | None = None
    for _ in range(spec.repetitions):
        cells = []
        for gi, src in enumerate(spec.graphs):
            try:
                graph = src.load()
            except (OSError, SpnForgeError) as e:
                for preset in spec.presets:
                    cells.append(Cell(src.name, preset, 0, 0, 0.0, 0, 0, error=str(e)))
                continue
            rng = random.Random(spec.seed * 100003 + gi)
            inputs = [rng.random() for _ in range(graph.num_leaves)]
            for preset in spec.presets:
                try:
                    cells.append(_run_cell(graph, src.name, preset, inputs))
                except SpnForgeError as e:
                    cells.append(Cell(src.name, preset, 0, 0, 0.0, 0, 0, error=str(e)))
        if base is None:
            base = cells
        elif base != cells:
            raise AssertionError("benchmark repetition diverged; determinism broken")

    cells.sort(key=lambda c: (c.graph, c.preset))
    geo: list[tuple[str, float]] = []
    for preset in sorted(set(spec.presets)):
        vals = [c.ops_per_cycle for c in cells if c.preset == preset and c.ops_per_cycle > 0]
        geo.append((preset, math.exp(sum(math.log(v) for v in vals) / len(vals)) if vals else 0.0))
    return BenchResult(tuple(cells), tuple(geo))


def to_csv(result: BenchResult) -> str:
    lines = ["graph,preset,ops,cycles,ops_per_cycle,spills,conflicts"]
    for c in result.cells:
        cyc = int(c.cycles) if float(c.cycles).is_integer() else c.cycles
        conf = int(c.conflicts) if float(c.conflicts).is_integer() else c.conflicts
        lines.append(f"{c.graph},{c.preset},{c.ops},{cyc},{c.ops_per_cycle!r},{c.spills},{conf}")
    for preset, gm in result.geomeans:
        lines.append(f"geomean,{preset},,,{gm!r},,")
    return "\n".join(lines) + "\n"


def to_json(result: BenchResult) -> str:
    return json.dumps(
        {
            "cells": [c.__dict__ for c in result.cells],
            "geomeans": {p: g for p, g in result.geomeans},
        },
        sort_keys=True,
        indent=2,
    )
