"""twopass command-line interface.

Exit codes: 0 success, 1 validation failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import contextlib
import math
import sys
from pathlib import Path

import numpy as np

from . import accuracy, fileformat, instrumented, tuning
from .bench import harness, topology as topo, workloads as wl
from .softmax import SERIAL, Algorithm, EmptyInputError, softmax_parallel
from .vector_exp import SEARCH_SPACE, exp_batch

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
DEFAULT_SEED = 0x5EED_2F00_0001

FORMATS_HELP = f"""
input file formats:
  binary  8-byte header then little-endian float32 values:
          bytes 0-3 magic {fileformat.MAGIC!r}, bytes 4-7 element count (uint32 LE)
  text    decimal numbers separated by whitespace or commas; '#' starts a comment
  auto    binary if the file starts with the magic, text otherwise
"""

BENCH_HELP = f"""
sizes are element counts: 4096, 64K, 16M, or multiples of the last-level cache
such as 4xLLC (converted with the workload's element size).

CSV columns: {harness.CSV_HEADER}
plot data (--format plot): the same columns separated by spaces, one gnuplot
data block per workload, cache boundaries written as '# boundary ...' lines.

cache topology comes from sysfs, or from an INI file given by --topology or
${topo.ENV_VAR}:
  [topology]
  l1_bytes = 32768
  l2_bytes = 1048576
  l3_bytes = 8650752
  core_count = 6
  logical_cpu_count = 12

workloads: {", ".join(wl.WORKLOADS)}
"""

TUNE_HELP = f"""
winners are stored in the tuning cache, one line per kernel and machine:
  <kernel>@<machine> = <unroll_factor> <accumulator_count>
cache path: ${tuning.ENV_VAR} if set, else ~/.cache/twopass/tuning.txt
kernels: {", ".join(tuning.KERNELS)}
"""


class UsageError(Exception):
    pass


def _count(text: str) -> int:
    v = float(text)
    if v != int(v) or v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return int(v)


def _f32_str(v) -> str:
    return np.format_float_positional(np.float32(v), unique=True, trim="-")


def _workloads(text: str) -> list[str]:
    if text == "all":
        return list(wl.WORKLOADS)
    if text == "softmax":
        return list(wl.SOFTMAX_WORKLOADS)
    if text == "stream":
        return list(wl.STREAM_WORKLOADS)
    names = [t for t in text.split(",") if t]
    for n in names:
        wl.get_workload(n)
    return names


@contextlib.contextmanager
def _out(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w") as f:
            yield f


# ---------------------------------------------------------------- softmax


def cmd_softmax(args) -> int:
    if args.input and args.values:
        raise UsageError("give either inline values or --input, not both")
    if args.input:
        x = fileformat.read_vector(args.input, args.format)
    elif args.values:
        x = fileformat.parse_text(" ".join(args.values))
    else:
        raise UsageError("no input: pass values inline or use --input PATH")
    if x.size == 0:
        raise EmptyInputError()
    if not np.all(np.isfinite(x)):
        raise UsageError("input contains NaN or infinity")
    y = np.empty_like(x)
    if args.threads > 1:
        softmax_parallel(x, y, args.algorithm, args.threads)
    else:
        SERIAL[Algorithm(args.algorithm)](x, y)
    if args.output:
        fileformat.write_vector(args.output, y, args.output_format)
    else:
        print("[" + ", ".join(_f32_str(v) for v in y) + "]")
    if args.check:
        ref = accuracy.oracle_softmax(x)
        mask = ref >= accuracy.FLT_MIN
        worst = float(accuracy.ulp_distance_array(y[mask], ref[mask]).max()) if mask.any() else 0.0
        print(f"sum = {math.fsum(y.astype(np.float64).tolist()):.9f}")
        print(f"max_ulp_vs_oracle = {worst:.3f}")
    return EXIT_OK


# ---------------------------------------------------------------- validate


def cmd_validate(args) -> int:
    do_exp = args.exp or not args.softmax
    do_softmax = args.softmax or not args.exp
    ok = True
    if do_exp:
        lo, hi = args.range
        if not lo < hi:
            raise UsageError(f"--range needs LO < HI, got {lo} {hi}")
        mode = "exhaustive" if args.exhaustive else "sampled"
        rep = accuracy.sweep_exp_accuracy(lo, hi, mode, count=args.sampled, seed=args.seed)
        print(accuracy.UlpReport.CSV_HEADER)
        print(rep.to_csv_row())
        passed = rep.max_ulp <= args.max_ulp
        print(f"exp: max_ulp {rep.max_ulp:.4f} (limit {args.max_ulp:g}) {'PASS' if passed else 'FAIL'}",
              file=sys.stderr)
        ok &= passed
    if do_softmax:
        print(accuracy.SoftmaxReport.CSV_HEADER)
        for i, n in enumerate(args.n):
            rep = accuracy.softmax_suite(n, args.trials, seed=args.seed + i)
            print(rep.to_csv_row())
            print(f"softmax n={n}: {'PASS' if rep.passed else 'FAIL'}", file=sys.stderr)
            ok &= rep.passed
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------- bench / sweep / scale


def _topology(args):
    return topo.detect_cache_topology(args.topology)


def _emit(records, args, topology):
    with _out(args.output) as f:
        if args.format == "plot":
            harness.write_plot_data(records, f, topology)
        else:
            harness.write_csv(records, f)
    plot = getattr(args, "plot_data", None)
    if plot:
        with open(plot, "w") as f:
            harness.write_plot_data(records, f, topology)


def _warn_frequency(args):
    if not args.quiet:
        for msg in harness.frequency_scaling_warnings():
            print(f"warning: {msg}", file=sys.stderr)


def _progress(args):
    if args.quiet:
        return None
    return lambda r: print(f"  {r.workload} n={r.size_elements} t={r.threads}: "
                           f"{r.time_per_element_s * 1e9:.3f} ns/elem", file=sys.stderr)


def cmd_bench(args) -> int:
    topology = _topology(args)
    _warn_frequency(args)
    n = harness.parse_size(args.size, topology, args.workload)
    cfg = harness.BenchConfig(args.workload, n, args.threads, args.min_runtime, args.repetitions,
                              args.eviction, seed=args.seed)
    _emit([harness.run_benchmark(cfg, topology)], args, topology)
    return EXIT_OK


def cmd_sweep(args) -> int:
    topology = _topology(args)
    _warn_frequency(args)
    names = _workloads(args.workloads)
    if args.sizes:
        sizes = [harness.parse_size(s, topology) for s in args.sizes.split(",")]
    elif args.max_size:
        sizes = harness.geometric_sizes(harness.parse_size(args.min_size, topology),
                                        harness.parse_size(args.max_size, topology), args.per_octave)
    else:
        sizes = harness.default_sweep_sizes(topology, args.per_octave,
                                            min_size=harness.parse_size(args.min_size, topology))
    for label, b in topology.boundaries():
        if not args.quiet:
            print(f"# boundary {label} = {b} bytes", file=sys.stderr)
    records = harness.run_size_sweep(names, sizes, threads=args.threads, min_runtime_seconds=args.min_runtime,
                                     repetitions=args.repetitions, eviction=args.eviction, topology=topology,
                                     seed=args.seed, progress=_progress(args))
    _emit(records, args, topology)
    llc4 = 4 * topology.llc_bytes // 4
    ratio = harness.two_pass_ratio(records, llc4)
    if ratio is not None and not args.quiet:
        print(f"two_pass/reload time ratio at >= 4xLLC: {ratio:.3f}", file=sys.stderr)
    return EXIT_OK


def cmd_scale(args) -> int:
    topology = _topology(args)
    _warn_frequency(args)
    names = _workloads(args.workloads)
    threads = ([int(t) for t in args.threads.split(",")] if args.threads
               else harness.scaling_thread_counts(topology))
    size = harness.parse_size(args.size, topology) if args.size else None
    records = harness.run_thread_scaling(names, threads, size=size, topology=topology,
                                         min_runtime_seconds=args.min_runtime, repetitions=args.repetitions,
                                         eviction=args.eviction, seed=args.seed, progress=_progress(args))
    _emit(records, args, topology)
    return EXIT_OK


# ---------------------------------------------------------------- tune / costmodel


def cmd_tune(args) -> int:
    kernels = args.kernel or list(tuning.KERNELS)
    rng = np.random.default_rng(args.seed)
    x = rng.normal(0.0, 10.0, args.size).astype(np.float32)
    y = np.empty_like(x)
    winners = {}
    print("kernel,unroll_factor,accumulator_count,best_seconds")
    for k in kernels:
        if k not in tuning.KERNELS:
            raise UsageError(f"unknown kernel {k!r}; choose from {', '.join(tuning.KERNELS)}")
        if k == "exp_batch":
            def run(p):
                exp_batch(x, y, p)
        else:
            fn = SERIAL[Algorithm(k.removeprefix("softmax_"))]

            def run(p, fn=fn):
                fn(x, y, p)
        winner, table = tuning.autotune(run, SEARCH_SPACE, args.repetitions)
        for p, t in table:
            print(f"{k},{p.unroll_factor},{p.accumulator_count},{t:.6e}")
        winners[k] = winner
        print(f"{k}: best unroll={winner.unroll_factor} accumulators={winner.accumulator_count}", file=sys.stderr)
    if not args.dry_run:
        path = tuning.store(winners)
        print(f"stored in {path}", file=sys.stderr)
    return EXIT_OK


_EXPECTED = {Algorithm.RECOMPUTE: (3, 1), Algorithm.RELOAD: (3, 2), Algorithm.TWO_PASS: (2, 1)}


def cmd_costmodel(args) -> int:
    ok = True
    print(f"{'algorithm':<12}{'N':>10}{'reads':>12}{'writes':>12}{'total':>12}  model")
    for n in args.n:
        for alg, (r, w) in _EXPECTED.items():
            t = instrumented.count(alg, n, args.seed)
            match = (t.reads, t.writes) == (r * n, w * n)
            ok &= match
            print(f"{alg.value:<12}{n:>10}{t.reads:>12}{t.writes:>12}{t.total:>12}  "
                  f"{r}N + {w}N = {r + w}N {'ok' if match else 'MISMATCH'}")
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------- parser


def _protocol_flags(p, runtime=5.0, reps=25):
    p.add_argument("--min-runtime", type=float, default=runtime, metavar="SECONDS",
                   help=f"wall time per repetition (default {runtime:g})")
    p.add_argument("--repetitions", type=_count, default=reps, help=f"repetitions; median reported (default {reps})")
    p.add_argument("--eviction", choices=("auto",) + harness.EVICTION_MODES, default="auto",
                   help="how the output buffer is evicted between iterations (default: clflush if available)")
    p.add_argument("--topology", metavar="INI", help=f"cache topology file (overrides sysfs and ${topo.ENV_VAR})")
    p.add_argument("--output", "-o", metavar="PATH", help="write records here instead of stdout")
    p.add_argument("--format", choices=("csv", "plot"), default="csv", help="record format (default csv)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="input data seed")
    p.add_argument("--quiet", "-q", action="store_true", help="no progress or warnings on stderr")


def build_parser() -> argparse.ArgumentParser:
    raw = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(prog="twopass", formatter_class=raw,
                                     description="Two-Pass and Three-Pass softmax, accuracy checks and benchmarks.",
                                     epilog="exit codes: 0 success, 1 validation failure, 2 usage or input error")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    algs = [a.value for a in Algorithm]

    p = sub.add_parser("softmax", help="compute softmax of a vector", formatter_class=raw, epilog=FORMATS_HELP)
    p.add_argument("values", nargs="*", help="inline decimal values, e.g. '1 2 3' or 1 2 3")
    p.add_argument("--input", "-i", metavar="PATH", help="read the vector from a file")
    p.add_argument("--format", choices=fileformat.FORMATS, default="auto", help="input file format (default auto)")
    p.add_argument("--algorithm", "-a", choices=algs, default=Algorithm.TWO_PASS.value)
    p.add_argument("--output", "-o", metavar="PATH", help="write Y to a file instead of printing it")
    p.add_argument("--output-format", choices=("binary", "text"), default="binary")
    p.add_argument("--threads", type=_count, default=1, help="partition across this many threads")
    p.add_argument("--check", action="store_true", help="print sum(Y) and the max ULP error against the oracle")
    p.set_defaults(func=cmd_softmax)

    p = sub.add_parser("validate", help="exp and softmax accuracy suites", formatter_class=raw,
                       epilog="with neither --exp nor --softmax both suites run.\n"
                              f"exp output: {accuracy.UlpReport.CSV_HEADER}\n"
                              f"softmax output: {accuracy.SoftmaxReport.CSV_HEADER}\n"
                              "softmax pass: algorithms agree within 8 ULP, |Y - oracle| <= 2^-17, "
                              "|sum(Y) - 1| <= N * 2^-20")
    p.add_argument("--exp", action="store_true", help="run the exp ULP sweep")
    p.add_argument("--softmax", action="store_true", help="run the softmax oracle suite")
    p.add_argument("--range", nargs=2, type=float, default=(-87.33, 0.0), metavar=("LO", "HI"),
                   help="exp input interval (default -87.33 0)")
    p.add_argument("--sampled", type=_count, default=10**7, metavar="COUNT", help="exp sample count (default 1e7)")
    p.add_argument("--exhaustive", action="store_true", help="evaluate every float32 in the range instead")
    p.add_argument("--max-ulp", type=float, default=2.0, help="exp pass threshold (default 2)")
    p.add_argument("--n", type=_count, nargs="+", default=[1000], help="softmax vector lengths (default 1000)")
    p.add_argument("--trials", type=_count, default=100, help="random vectors per length (default 100)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("bench", help="time one workload at one size", formatter_class=raw, epilog=BENCH_HELP)
    p.add_argument("--workload", "-w", required=True, choices=list(wl.WORKLOADS), metavar="NAME")
    p.add_argument("--size", "-n", default="4xLLC", help="element count (default 4xLLC)")
    p.add_argument("--threads", type=_count, default=1)
    _protocol_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", help="geometric size sweep across the cache hierarchy", formatter_class=raw,
                       epilog=BENCH_HELP + "\nwithout --max-size the sweep runs from --min-size to three sizes "
                                           "at or beyond 4xLLC.")
    p.add_argument("--workloads", default="softmax", help="comma list, or all / softmax / stream (default softmax)")
    p.add_argument("--min-size", default="256")
    p.add_argument("--max-size", default=None)
    p.add_argument("--sizes", help="explicit comma-separated sizes (overrides min/max)")
    p.add_argument("--per-octave", type=_count, default=2, help="sizes per doubling (default 2)")
    p.add_argument("--threads", type=_count, default=1)
    p.add_argument("--plot-data", metavar="PATH", help="also write gnuplot data with cache boundaries here")
    _protocol_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("scale", help="thread scaling at a fixed total size", formatter_class=raw,
                       epilog=BENCH_HELP + "\ndefault thread counts: 1, physical cores, logical CPUs.")
    p.add_argument("--workloads", default="softmax", help="comma list, or all / softmax / stream")
    p.add_argument("--threads", help="comma-separated thread counts")
    p.add_argument("--size", default=None, help="total element count (default 4xLLC)")
    p.add_argument("--plot-data", metavar="PATH", help="also write gnuplot data with cache boundaries here")
    _protocol_flags(p)
    p.set_defaults(func=cmd_scale)

    p = sub.add_parser("tune", help="search unroll/accumulator settings and cache the winners",
                       formatter_class=raw, epilog=TUNE_HELP)
    p.add_argument("--kernel", action="append", help="kernel to tune (repeatable; default all)")
    p.add_argument("--size", type=_count, default=1 << 16, help="vector length used for timing (default 65536)")
    p.add_argument("--repetitions", type=_count, default=5, help="best-of count per candidate (default 5)")
    p.add_argument("--dry-run", action="store_true", help="print the table without writing the cache")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("costmodel", help="count element reads and writes of each algorithm",
                       formatter_class=raw, epilog="expected: recompute 3N reads + 1N writes, "
                                                   "reload 3N + 2N, two_pass 2N + 1N")
    p.add_argument("--n", type=_count, nargs="+", default=[1024], help="vector lengths (default 1024)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_costmodel)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except EmptyInputError:
        print("error: empty input", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, fileformat.FormatError, topo.TopologyUnavailableError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
