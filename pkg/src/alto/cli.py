"""Command-line front end: convert, stats, bench, cp-als, cp-apr.

Machine-readable JSON goes to stdout, a short human summary to stderr.
Exit codes: 0 success, 1 usage, 2 input error, 3 numerical failure.
``ALTO_THREADS`` supplies the worker count when ``--threads`` is absent.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import statistics
import sys
import time


from . import __version__
from .cpd import (
    CpAlsConfig,
    CpAprConfig,
    cp_als,
    cp_apr_mu,
)
from .encoding import UnsupportedShapeError
from .kernels import (
    DEFAULT_TEMP_BUDGET_BYTES,
    flops_per_nonzero,
    mttkrp_with_choice,
)
from .cpd.apr import DEFAULT_FAST_MEMORY_BYTES
from .cpd.model import init_factors
from .partition import make_segments, overlap
from .tensor import (
    ALTO_MAGIC,
    AltoFormatError,
    AltoTensor,
    ParseError,
    compute_stats,
    parse_frostt,
    read_alto,
    write_alto,
    write_frostt,
)
from .validation import NumericalError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_NUMERICAL = 3

_INPUT_ERRORS = (
    ParseError,
    AltoFormatError,
    UnsupportedShapeError,
    FileNotFoundError,
    IsADirectoryError,
    PermissionError,
    ValueError,
    OSError,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _default_threads() -> int:
    env = os.environ.get("ALTO_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _parse_dims(text: str | None):
    if text is None:
        return None
    seps = "x" if "x" in text else ","
    try:
        dims = tuple(int(t) for t in text.replace(seps, " ").split())
    except ValueError:
        raise ValueError(f"cannot parse --dims {text!r}") from None
    if not dims:
        raise ValueError("--dims must name at least one mode length")
    return dims


def _sniff_is_alto(path: str) -> bool:
    with open(path, "rb") as f:
        return f.read(4) == ALTO_MAGIC


def _load_tensor(path: str, dims=None, timings: dict | None = None) -> AltoTensor:
    timings = timings if timings is not None else {}
    t0 = time.perf_counter()
    if _sniff_is_alto(path):
        if dims is not None:
            raise ValueError("--dims applies only to text input")
        alto = read_alto(path)
        timings["read_s"] = time.perf_counter() - t0
        return alto
    coo = parse_frostt(path, dims=dims)
    timings["parse_s"] = time.perf_counter() - t0
    alto = AltoTensor.from_coo(coo, timings=timings)
    return alto


def _atomic_write(path: str, writer) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    try:
        with open(tmp, "wb") as f:
            writer(f)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(report: dict, summary: str) -> None:
    json.dump(report, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    print(summary, file=sys.stderr)


def _report(command: str, args, config: dict, timing: dict, tensor, result: dict) -> dict:
    return {
        "command": command,
        "input": getattr(args, "input", None),
        "version": __version__,
        "config": config,
        "timing_s": timing,
        "tensor": {"dims": list(tensor.shape.dims), "nnz": tensor.nnz}
        if tensor is not None
        else None,
        "result": result,
    }


# ---------------------------------------------------------------------------
# convert


def _cmd_convert(args) -> int:
    timings: dict = {}
    out_format = args.format
    if out_format is None:
        out_format = "alto" if args.output.endswith(".alto") else "tns"
    alto = _load_tensor(args.input, dims=_parse_dims(args.dims), timings=timings)
    t0 = time.perf_counter()
    if out_format == "alto":
        _atomic_write(args.output, lambda f: write_alto(alto, f))
    else:
        coo = alto.to_coo()

        def writer(f):
            text = io.StringIO()
            write_frostt(coo, text)
            f.write(text.getvalue().encode())

        _atomic_write(args.output, writer)
    timings["write_s"] = time.perf_counter() - t0
    result = {
        "output": args.output,
        "format": out_format,
        "position_bits": alto.layout.word_bits,
        "index_bits": alto.layout.total_bits,
    }
    report = _report(
        "convert",
        args,
        {"dims": args.dims, "format": out_format},
        timings,
        alto,
        result,
    )
    _emit(
        report,
        f"convert: {args.input} -> {args.output} ({out_format}, "
        f"{alto.nnz} nonzeros, linearize {timings.get('linearize_s', 0):.3f}s, "
        f"sort {timings.get('sort_s', 0):.3f}s)",
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# stats


def _cmd_stats(args) -> int:
    timings: dict = {}
    alto = _load_tensor(args.input, dims=_parse_dims(args.dims), timings=timings)
    stats = compute_stats(alto, word_bits=args.word_bits)
    result = stats.to_json_dict()
    if args.partitions:
        t0 = time.perf_counter()
        segs = make_segments(alto, args.partitions)
        seg_payload = []
        for i, s in enumerate(segs.segments):
            seg_payload.append(
                {
                    "index": i,
                    "start": s.start,
                    "stop": s.stop,
                    "size": s.size,
                    "pos_first": s.pos_first,
                    "pos_last": s.pos_last,
                    "intervals": [list(iv) for iv in s.intervals],
                }
            )
        overlaps = []
        for i in range(len(segs.segments)):
            for j in range(i + 1, len(segs.segments)):
                per_mode = [
                    overlap(segs.segments[i], segs.segments[j], n)
                    for n in range(alto.ndim)
                ]
                if any(iv is not None for iv in per_mode):
                    overlaps.append(
                        {
                            "a": i,
                            "b": j,
                            "per_mode": [
                                list(iv) if iv is not None else None
                                for iv in per_mode
                            ],
                            "subspace_overlap": all(iv is not None for iv in per_mode),
                        }
                    )
        timings["partition_s"] = time.perf_counter() - t0
        result["partitions"] = {
            "num_segments": segs.num_segments,
            "segments": seg_payload,
            "overlaps": overlaps,
            "boundary_rows": [rows.tolist() for rows in segs.boundary_rows],
        }
    report = _report(
        "stats",
        args,
        {"word_bits": args.word_bits, "partitions": args.partitions, "dims": args.dims},
        timings,
        alto,
        result,
    )
    _emit(
        report,
        f"stats: dims={list(alto.shape.dims)} nnz={alto.nnz} "
        f"density={result['density']:.3g} reuse={result['overall_class']} "
        f"ratio={result['compression_ratio']:.3g}",
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench


def _cmd_bench(args) -> int:
    timings: dict = {}
    alto = _load_tensor(args.input, dims=_parse_dims(args.dims), timings=timings)
    threads = args.threads if args.threads is not None else _default_threads()
    partitions = args.partitions if args.partitions is not None else threads
    factors = init_factors(alto.shape, args.rank, args.seed).factors
    modes = range(alto.ndim) if args.mode == "all" else [int(args.mode)]
    fpn = flops_per_nonzero(alto.ndim, args.rank)
    per_mode = []
    for mode in modes:
        # untimed warm-up run to trigger jit compilation and view caches
        _, choice = mttkrp_with_choice(
            alto, factors, mode,
            workers=threads, num_segments=partitions,
            strategy=args.strategy, temp_budget_bytes=args.temp_budget_bytes,
        )
        times = []
        for _ in range(args.iters):
            t0 = time.perf_counter()
            mttkrp_with_choice(
                alto, factors, mode,
                workers=threads, num_segments=partitions,
                strategy=args.strategy, temp_budget_bytes=args.temp_budget_bytes,
            )
            times.append(time.perf_counter() - t0)
        median = statistics.median(times)
        per_mode.append(
            {
                "mode": mode,
                "median_s": median,
                "times_s": times,
                "strategy": choice.to_json_dict(),
                "nnz_per_s": alto.nnz / median if median > 0 else None,
                "flops_per_nonzero": fpn,
                "estimated_gflops": alto.nnz * fpn / median / 1e9
                if median > 0
                else None,
            }
        )
    config = {
        "kernel": args.kernel,
        "rank": args.rank,
        "mode": args.mode,
        "iters": args.iters,
        "threads": threads,
        "partitions": partitions,
        "strategy": args.strategy,
        "temp_budget_bytes": args.temp_budget_bytes,
        "seed": args.seed,
    }
    report = _report("bench", args, config, timings, alto, {"per_mode": per_mode})
    lines = ", ".join(
        f"mode {e['mode']}: {e['median_s'] * 1e3:.2f} ms ({e['strategy']['strategy']})"
        for e in per_mode
    )
    _emit(report, f"bench {args.kernel}: {lines}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# decomposition commands


def _model_payload(model, trace: dict) -> dict:
    payload = model.to_json_dict()
    payload["trace"] = trace
    return payload


def _write_model(path: str | None, payload: dict, report_result: dict) -> None:
    if path:
        data = json.dumps(payload, indent=2, sort_keys=True) + "\n"
        _atomic_write(path, lambda f: f.write(data.encode()))
        report_result["out"] = path
    else:
        report_result["model"] = payload


def _cmd_cp_als(args) -> int:
    timings: dict = {}
    alto = _load_tensor(args.input, dims=_parse_dims(args.dims), timings=timings)
    threads = args.threads if args.threads is not None else _default_threads()
    config = CpAlsConfig(
        rank=args.rank,
        max_iters=args.max_iters,
        fit_tol=args.tol,
        seed=args.seed,
        workers=threads,
        num_segments=args.partitions,
        strategy=args.strategy,
        temp_budget_bytes=args.temp_budget_bytes,
    )
    result = cp_als(alto, config)
    timings["decompose_s"] = result.wall_time_s
    trace = {
        "fit": result.fit_trace,
        "objective": result.objective_trace,
        "iterations": result.n_iters,
        "converged": result.converged,
        "strategies": [c.to_json_dict() for c in result.strategies],
        "wall_time_s": result.wall_time_s,
    }
    payload = _model_payload(result.model, trace)
    report_result = {
        "fit": result.fit,
        "iterations": result.n_iters,
        "converged": result.converged,
        "lambda": [float(w) for w in result.model.weights],
    }
    _write_model(args.out, payload, report_result)
    config_echo = {
        "rank": args.rank,
        "max_iters": args.max_iters,
        "tol": args.tol,
        "seed": args.seed,
        "threads": threads,
        "partitions": config.num_segments
        if config.num_segments is not None
        else threads,
        "strategy": args.strategy,
        "temp_budget_bytes": args.temp_budget_bytes,
    }
    report = _report("cp-als", args, config_echo, timings, alto, report_result)
    _emit(
        report,
        f"cp-als: rank={args.rank} iters={result.n_iters} fit={result.fit:.6f} "
        f"({result.wall_time_s:.2f}s)",
    )
    return EXIT_OK


def _cmd_cp_apr(args) -> int:
    timings: dict = {}
    alto = _load_tensor(args.input, dims=_parse_dims(args.dims), timings=timings)
    threads = args.threads if args.threads is not None else _default_threads()
    config = CpAprConfig(
        rank=args.rank,
        max_outer=args.max_outer,
        max_inner=args.max_inner,
        tau=args.tau,
        kappa=args.kappa,
        kappa_tol=args.kappa_tol,
        eps=args.eps,
        memory_mode=args.mem,
        fast_memory_bytes=args.fast_memory_bytes,
        seed=args.seed,
        workers=threads,
        num_segments=args.partitions,
        strategy=args.strategy,
        temp_budget_bytes=args.temp_budget_bytes,
    )
    result = cp_apr_mu(alto, config)
    timings["decompose_s"] = result.wall_time_s
    trace = {
        "kkt": result.kkt_trace,
        "inner_iters": result.inner_iters,
        "loglik": result.loglik_trace,
        "iterations": result.n_outer,
        "converged": result.converged,
        "memory_mode": result.memory_mode,
        "strategies": [c.to_json_dict() for c in result.strategies],
        "wall_time_s": result.wall_time_s,
    }
    payload = _model_payload(result.model, trace)
    report_result = {
        "final_kkt": result.final_kkt,
        "iterations": result.n_outer,
        "converged": result.converged,
        "memory_mode": result.memory_mode,
        "loglik": result.loglik_trace[-1],
        "lambda": [float(w) for w in result.model.weights],
    }
    _write_model(args.out, payload, report_result)
    config_echo = {
        "rank": args.rank,
        "max_outer": args.max_outer,
        "max_inner": args.max_inner,
        "tau": args.tau,
        "kappa": args.kappa,
        "kappa_tol": args.kappa_tol,
        "eps": args.eps,
        "mem": args.mem,
        "memory_mode_used": result.memory_mode,
        "fast_memory_bytes": args.fast_memory_bytes,
        "seed": args.seed,
        "threads": threads,
        "partitions": config.num_segments
        if config.num_segments is not None
        else threads,
        "strategy": args.strategy,
        "temp_budget_bytes": args.temp_budget_bytes,
    }
    report = _report("cp-apr", args, config_echo, timings, alto, report_result)
    _emit(
        report,
        f"cp-apr: rank={args.rank} outers={result.n_outer} "
        f"kkt={result.final_kkt:.3g} mem={result.memory_mode} "
        f"({result.wall_time_s:.2f}s)",
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> _Parser:
    parser = _Parser(
        prog="alto",
        description="Sparse tensor conversion, statistics, and decomposition "
        "on the linearized ALTO format.",
    )
    parser.add_argument("--version", action="version", version=f"alto {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("input", help="tensor file (.tns text or binary .alto)")
        p.add_argument(
            "--dims",
            default=None,
            help="override inferred mode lengths for text input, e.g. 4,8,2",
        )

    p = sub.add_parser("convert", help="convert between text and binary formats")
    add_common(p)
    p.add_argument("output", help="destination path")
    p.add_argument(
        "--format", choices=("tns", "alto"), default=None,
        help="output format (default: by extension, else tns)",
    )
    p.set_defaults(func=_cmd_convert)

    p = sub.add_parser("stats", help="density, reuse, and storage statistics")
    add_common(p)
    p.add_argument("--word-bits", type=int, default=64, choices=(8, 16, 32, 64))
    p.add_argument(
        "--partitions", type=int, default=None,
        help="also report L balanced line segments with intervals and overlaps",
    )
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("bench", help="time a kernel over the tensor")
    p.add_argument("kernel", choices=("mttkrp",))
    add_common(p)
    p.add_argument("--rank", type=int, default=16)
    p.add_argument("--mode", default="all", help="target mode index or 'all'")
    p.add_argument("--iters", type=int, default=3)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--partitions", type=int, default=None)
    p.add_argument(
        "--strategy",
        choices=("auto", "seq", "sequential", "recursive", "output"),
        default="auto",
    )
    p.add_argument("--temp-budget-bytes", type=int, default=DEFAULT_TEMP_BUDGET_BYTES)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("cp-als", help="least-squares decomposition")
    add_common(p)
    p.add_argument("--rank", type=int, default=16)
    p.add_argument("--max-iters", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--partitions", type=int, default=None)
    p.add_argument(
        "--strategy",
        choices=("auto", "seq", "sequential", "recursive", "output"),
        default="auto",
    )
    p.add_argument("--temp-budget-bytes", type=int, default=DEFAULT_TEMP_BUDGET_BYTES)
    p.add_argument("--out", default=None, help="write the model JSON here")
    p.set_defaults(func=_cmd_cp_als)

    p = sub.add_parser("cp-apr", help="Poisson decomposition for count data")
    add_common(p)
    p.add_argument("--rank", type=int, default=16)
    p.add_argument("--max-outer", type=int, default=200)
    p.add_argument("--max-inner", type=int, default=10)
    p.add_argument("--tau", type=float, default=1e-4)
    p.add_argument("--kappa", type=float, default=1e-2)
    p.add_argument("--kappa-tol", type=float, default=1e-10)
    p.add_argument("--eps", type=float, default=1e-10)
    p.add_argument("--mem", choices=("auto", "pre", "otf"), default="auto")
    p.add_argument(
        "--fast-memory-bytes", type=int, default=DEFAULT_FAST_MEMORY_BYTES
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--partitions", type=int, default=None)
    p.add_argument(
        "--strategy",
        choices=("auto", "seq", "sequential", "recursive", "output"),
        default="auto",
    )
    p.add_argument("--temp-budget-bytes", type=int, default=DEFAULT_TEMP_BUDGET_BYTES)
    p.add_argument("--out", default=None, help="write the model JSON here")
    p.set_defaults(func=_cmd_cp_apr)

    return parser


def _emit_error(kind: str, message: str) -> None:
    json.dump(
        {"error": {"type": kind, "message": message}},
        sys.stdout,
        indent=2,
        sort_keys=True,
    )
    sys.stdout.write("\n")
    print(f"error: {message}", file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        _emit_error("usage", str(exc))
        return EXIT_USAGE
    try:
        return args.func(args)
    except _INPUT_ERRORS as exc:
        _emit_error(type(exc).__name__, str(exc))
        return EXIT_INPUT
    except NumericalError as exc:
        _emit_error("NumericalError", str(exc))
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
