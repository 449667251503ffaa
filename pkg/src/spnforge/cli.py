"""Command-line front end: spnforge {compile|run|bench|gen|simt}.

Every subcommand is a thin composition of module operations. Exit codes are
stable: 0 success, 1 input/compile/simulation error, 2 verification mismatch
(`run --check`). Set SPNFORGE_LOG=DEBUG for diagnostics on stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import bench as bench_mod
from .compiler import emit_asm, parse_asm, schedule
from .errors import SpnForgeError
from .fp32 import same_bits
from .ir import binarize, gen_random_spn, parse_spn, serialize_spn
from .isa import ProcessorConfig
from .machine import check_legality, run as machine_run
from .reference import encode_vectors, eval_list
from .simt import SimtConfig, scaling_sweep, sweep_to_csv

log = logging.getLogger("spnforge")


def _config_from_flags(args) -> ProcessorConfig:
    if args.preset:
        cfg = ProcessorConfig.ptree() if args.preset == "ptree" else ProcessorConfig.pvect()
    else:
        cfg = ProcessorConfig.ptree()
    trees = args.trees if args.trees is not None else cfg.num_trees
    levels = args.levels if args.levels is not None else cfg.levels
    pes = args.leaf_pes if args.leaf_pes is not None else cfg.leaf_pes_per_tree
    return ProcessorConfig(
        num_trees=trees,
        levels=levels,
        leaf_pes_per_tree=pes,
        banks_per_tree=2 * pes,
        regs_per_bank=args.regs_per_bank if args.regs_per_bank is not None else cfg.regs_per_bank,
        data_mem_bytes=args.mem_bytes if args.mem_bytes is not None else cfg.data_mem_bytes,
    )


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--preset", choices=["ptree", "pvect"], default=None)
    p.add_argument("--trees", type=int, default=None)
    p.add_argument("--levels", type=int, default=None)
    p.add_argument("--leaf-pes", type=int, default=None)
    p.add_argument("--regs-per-bank", type=int, default=None)
    p.add_argument("--mem-bytes", type=int, default=None)


def _read(path: str) -> str:
    with open(path, "r", encoding="utf-8") as f:
        return f.read()


def _write(path: str, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def cmd_compile(args) -> int:
    graph = parse_spn(_read(args.spn))
    cfg = _config_from_flags(args)
    prog = schedule(binarize(graph), cfg, bank_strategy=args.bank_strategy)
    out = args.output or (os.path.splitext(args.spn)[0] + ".vliw")
    _write(out, emit_asm(prog))
    meta = prog.meta
    print(
        f"{out}: {meta['instructions']} instructions, {meta['total_cycles']} cycles, "
        f"{meta['effective_ops']} ops, {meta['spill_stores']} spills, "
        f"{meta['nop_cycles']} nop cycles"
    )
    return 0


def cmd_run(args) -> int:
    prog = parse_asm(_read(args.asm))
    violations = check_legality(prog)
    if violations:
        for v in violations[:20]:
            print(f"illegal: {v.kind} at {v.where}: {v.message}", file=sys.stderr)
        return 1
    inputs = [float(line) for line in _read(args.inputs).split() if line.strip()]
    report = machine_run(prog, inputs, on_uninit="warn")
    print(report.to_json())
    if args.check:
        graph = binarize(parse_spn(_read(args.check)))
        expected = eval_list(graph, inputs)
        if not same_bits(expected, report.root_value):
            print(
                f"check failed: machine {report.root_value.hex()} != "
                f"reference {expected.hex()}",
                file=sys.stderr,
            )
            return 2
        log.info("check passed: root bit-exact with reference")
    return 0


def cmd_gen(args) -> int:
    g = gen_random_spn(
        num_leaves=args.leaves,
        num_internal=args.internal,
        max_fanin=args.max_fanin,
        sum_prob=args.sum_prob,
        seed=args.seed,
        reuse_prob=args.reuse_prob,
    )
    text = serialize_spn(g)
    if args.output:
        _write(args.output, text)
        print(f"{args.output}: {len(g.nodes)} nodes, {g.num_edges} edges")
    else:
        print(text)
    return 0


def cmd_bench(args) -> int:
    sources = []
    for path in args.graph or []:
        sources.append(bench_mod.GraphSource(name=os.path.basename(path), path=path))
    for i in range(args.gen_suite):
        if args.gen_shape == "mixture":
            gen = dict(num_leaves=args.gen_leaves,
                       num_components=max(1, args.gen_internal // (args.gen_leaves - 1)),
                       seed=args.seed + i)
        elif args.gen_shape == "layered":
            gen = dict(width=args.gen_leaves,
                       depth=max(1, args.gen_internal // args.gen_leaves),
                       seed=args.seed + i)
        else:
            gen = dict(num_leaves=args.gen_leaves,
                       num_internal=args.gen_internal,
                       max_fanin=args.gen_fanin,
                       sum_prob=0.5,
                       seed=args.seed + i,
                       reuse_prob=args.gen_reuse)
        sources.append(
            bench_mod.GraphSource(name=f"gen{i:02d}", gen=gen, kind=args.gen_shape)
        )
    spec = bench_mod.BenchSpec(
        graphs=tuple(sources),
        presets=tuple(args.presets.split(",")),
        seed=args.seed,
        repetitions=args.repetitions,
    )
    result = bench_mod.run_bench(spec)
    csv_text = bench_mod.to_csv(result)
    if args.output:
        _write(args.output + ".csv", csv_text)
        _write(args.output + ".json", bench_mod.to_json(result))
        print(f"wrote {args.output}.csv and {args.output}.json")
    else:
        print(csv_text, end="")
    for preset, gm in result.geomeans:
        log.info("geomean %s: %.3f ops/cycle", preset, gm)
    return 1 if result.failed else 0


def cmd_simt(args) -> int:
    graph = binarize(parse_spn(_read(args.spn)))
    enc = encode_vectors(graph)
    counts = [int(t) for t in args.threads.split(",")]
    cfg = SimtConfig(
        num_threads=counts[0],
        warp_size=args.warp_size,
        shared_banks=args.banks,
        sync_cost=args.sync_cost,
        base_op_cost=args.base_op_cost,
        divergence_penalty=args.divergence_penalty,
    )
    rows = scaling_sweep(enc, counts, cfg)
    text = sweep_to_csv(rows)
    if args.output:
        _write(args.output, text)
        print(f"wrote {args.output}")
    else:
        print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spnforge", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("compile", help="compile a .spn graph to VLIW assembly")
    p.add_argument("spn")
    _add_config_flags(p)
    p.add_argument("--bank-strategy", choices=["dsatur", "roundrobin"], default="dsatur")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(fn=cmd_compile)

    p = sub.add_parser("run", help="execute a compiled program on the simulator")
    p.add_argument("asm")
    p.add_argument("inputs", help="text file, one float per leaf slot line")
    p.add_argument("--check", metavar="SPN", default=None,
                   help="also evaluate this graph and require a bit-exact root")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("gen", help="generate a random SPN")
    p.add_argument("--leaves", type=int, default=64)
    p.add_argument("--internal", type=int, default=500)
    p.add_argument("--max-fanin", type=int, default=2)
    p.add_argument("--sum-prob", type=float, default=0.5)
    p.add_argument("--reuse-prob", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("bench", help="throughput table over graphs x presets")
    p.add_argument("--graph", action="append", default=None, help="an .spn file (repeatable)")
    p.add_argument("--gen-suite", type=int, default=0, help="number of generated graphs")
    p.add_argument("--gen-shape", choices=["mixture", "layered", "random"], default="mixture")
    p.add_argument("--gen-leaves", type=int, default=1024)
    p.add_argument("--gen-internal", type=int, default=6000)
    p.add_argument("--gen-fanin", type=int, default=2)
    p.add_argument("--gen-reuse", type=float, default=0.15)
    p.add_argument("--presets", default="ptree,pvect")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("-o", "--output", default=None, help="basename for .csv/.json outputs")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("simt", help="SIMT cost-model thread-count sweep")
    p.add_argument("spn")
    p.add_argument("--threads", default="1,2,4,8,16,32,64,128,256")
    p.add_argument("--warp-size", type=int, default=32)
    p.add_argument("--banks", type=int, default=32)
    p.add_argument("--sync-cost", type=float, default=20)
    p.add_argument("--base-op-cost", type=float, default=1)
    p.add_argument("--divergence-penalty", type=float, default=2)
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(fn=cmd_simt)
    return ap


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("SPNFORGE_LOG", "WARNING").upper(),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except SpnForgeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
