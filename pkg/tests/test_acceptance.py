"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with ``pytest tests/test_acceptance.py -v -s``).

Criterion 9 is expected to fail on the five-mode network-log shape: its
modes need 11+13+11+13+20 = 68 index bits, and a 64-bit position cannot
represent 1600*4200*1600*4200*868100 > 2^65 configurations under any
encoding, so the 64-bit claim for that shape is unsatisfiable. All other
assertions in that test hold.
"""

import io
import time
from contextlib import contextmanager
from fractions import Fraction

import numpy as np
import pytest

from alto import (
    AltoTensor,
    CooTensor,
    CpAlsConfig,
    CpAprConfig,
    KruskalModel,
    TensorStats,
    alto_metadata_bits,
    build_layout,
    coo_compression_ratio,
    cp_als,
    cp_apr_mu,
    make_mode_ordered_view,
    make_segments,
    mttkrp,
    mttkrp_output_oriented,
    mttkrp_recursive,
    mttkrp_sequential,
    parse_frostt,
    phi_kernel,
    precompute_krp_rows,
    select_krp_memory_mode,
    select_strategy,
)
from alto.cli import main as cli_main
from alto.encoding import decode_coords, delinearize, encode_coords, linearize
from alto.kernels import Strategy, mttkrp_with_choice
from alto.tensor import write_frostt
from conftest import (
    EXAMPLE_TNS,
    assert_monotone,
    dense_mttkrp_oracle,
    random_sparse,
)


@contextmanager
def criterion(num: int, label: str):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {num:>2}: FAIL - {label}", flush=True)
        raise
    print(f"ACCEPTANCE {num:>2}: PASS - {label}", flush=True)


@pytest.fixture(scope="module", autouse=True)
def warm_kernels():
    """Compile the jit kernels on a toy problem so the timed criteria
    measure algorithmic cost, not compiler startup."""
    coo = parse_frostt(io.StringIO(EXAMPLE_TNS), dims=(4, 8, 2))
    t = AltoTensor.from_coo(coo)
    factors = [np.ones((d, 2)) for d in (4, 8, 2)]
    for strategy in ("sequential", "recursive", "output"):
        mttkrp(t, factors, 0, workers=2, num_segments=2, strategy=strategy)
        phi_kernel(t, np.ones((4, 2)), factors, 0, workers=2, num_segments=2,
                   strategy=strategy)
        phi_kernel(t, np.ones((4, 2)), factors, 0, workers=2, num_segments=2,
                   strategy=strategy, krp_rows=precompute_krp_rows(t, factors, 0))
    yield


def test_criterion_01_worked_example_golden():
    with criterion(1, "worked example: layout, segments, compression"):
        t0 = time.perf_counter()
        coo = parse_frostt(io.StringIO(EXAMPLE_TNS), dims=(4, 8, 2))
        alto = AltoTensor.from_coo(coo)
        assert alto.layout.total_bits == 6
        segs = make_segments(alto, 2)
        assert [(s.pos_first, s.pos_last) for s in segs.segments] == [
            (2, 20),
            (25, 51),
        ]
        assert segs.segments[0].intervals == ((0, 3), (0, 3), (0, 1))
        assert segs.segments[1].intervals == ((1, 3), (2, 6), (0, 1))
        assert coo_compression_ratio((4, 8, 2), 8) == Fraction(3)
        elapsed = time.perf_counter() - t0
        assert elapsed < 1.0, f"took {elapsed:.3f}s"


def test_criterion_02_encoding_roundtrip_100k():
    with criterion(2, "100k random shape/coordinate encode-decode roundtrips"):
        rng = np.random.default_rng(2024)
        t0 = time.perf_counter()
        cases = 0
        while cases < 100_000:
            ndim = int(rng.integers(1, 7))
            dims = tuple(
                int(d) for d in rng.integers(1, 2**20, size=ndim, endpoint=True)
            )
            lay = build_layout(dims)
            m = int(rng.integers(100, 500))
            coords = np.stack(
                [rng.integers(0, d, size=m) for d in dims], axis=1
            ).astype(np.int64)
            packed = encode_coords(lay, coords)
            assert (decode_coords(lay, packed) == coords).all()
            # scalar path spot check on the first tuple
            c0 = tuple(int(v) for v in coords[0])
            assert delinearize(lay, linearize(lay, c0)) == c0
            cases += m
        elapsed = time.perf_counter() - t0
        assert elapsed < 10.0, f"took {elapsed:.3f}s for {cases} cases"


def test_criterion_03_mttkrp_oracle_equivalence():
    with criterion(3, "200+ random tensors: all kernels vs dense oracle at 1e-12"):
        rng = np.random.default_rng(3)
        ranks = [1, 2, 8, 16]
        t0 = time.perf_counter()
        tensors_checked = 0
        while tensors_checked < 200:
            ndim = int(rng.integers(3, 6))
            dims = tuple(int(d) for d in rng.integers(2, 21, size=ndim))
            nnz = int(rng.integers(10, 501))
            coo = random_sparse(rng, dims, nnz, kind="positive")
            t = AltoTensor.from_coo(coo)
            rank = ranks[tensors_checked % len(ranks)]
            factors = [rng.random((d, rank)) + 0.05 for d in dims]
            dense = coo.to_dense()
            mode = int(rng.integers(0, ndim))
            want = dense_mttkrp_oracle(dense, factors, mode)
            tol = 1e-12 * np.maximum(np.abs(want), np.abs(want).max() * 1e-6 + 1e-300)
            got = mttkrp_sequential(t, factors, mode)
            assert (np.abs(got - want) <= tol).all()
            for L in (1, 2, 4, 7):
                segs = make_segments(t, L)
                got = mttkrp_recursive(t, segs, factors, mode, workers=2)
                assert (np.abs(got - want) <= tol).all()
                view = make_mode_ordered_view(t, mode, L)
                got = mttkrp_output_oriented(t, view, factors, mode, workers=2)
                assert (np.abs(got - want) <= tol).all()
            tensors_checked += 1
        elapsed = time.perf_counter() - t0
        assert elapsed < 60.0, f"took {elapsed:.3f}s"


def test_criterion_04_strategy_threshold():
    with criterion(4, "strategy flips exactly at fiber reuse > 4"):
        rng = np.random.default_rng(4)

        def tensor_with_reuse(rows, nnz):
            coords = np.stack(
                [
                    np.arange(nnz) % rows,
                    rng.permutation(nnz),
                    rng.permutation(nnz),
                ],
                axis=1,
            )
            return AltoTensor.from_coo(
                CooTensor((rows, nnz, nnz), coords, np.ones(nnz))
            )

        low = tensor_with_reuse(10, 39)  # reuse 3.9
        high = tensor_with_reuse(10, 41)  # reuse 4.1
        factors_low = [np.ones((d, 2)) for d in low.shape.dims]
        factors_high = [np.ones((d, 2)) for d in high.shape.dims]
        _, c_low = mttkrp_with_choice(low, factors_low, 0, workers=4)
        _, c_high = mttkrp_with_choice(high, factors_high, 0, workers=4)
        assert c_low.strategy is Strategy.OUTPUT_ORIENTED
        assert c_low.fiber_reuse == pytest.approx(3.9)
        assert c_high.strategy is Strategy.RECURSIVE
        assert c_high.fiber_reuse == pytest.approx(4.1)
        # the boundary itself is not strictly above four
        exact = TensorStats.from_shape_nnz((10, 40, 40), 40)
        assert select_strategy(exact, 0, 4).strategy is Strategy.OUTPUT_ORIENTED


def test_criterion_05_cp_als_monotone_and_recovery():
    with criterion(5, "cp-als objective nonincreasing; exact rank-1 recovered"):
        rng = np.random.default_rng(5)
        t0 = time.perf_counter()
        for _ in range(20):
            dims = tuple(int(d) for d in rng.integers(3, 7, size=3))
            t = AltoTensor.from_coo(random_sparse(rng, dims, 45))
            res = cp_als(
                t,
                CpAlsConfig(rank=4, max_iters=25, fit_tol=1e-14,
                            seed=int(rng.integers(10_000))),
            )
            assert_monotone(res.objective_trace, "nonincreasing", rel=1e-9)
        for seed in range(5):
            true = KruskalModel(
                np.array([2.0]),
                [rng.random((4, 1)) + 0.1, rng.random((3, 1)) + 0.1,
                 rng.random((5, 1)) + 0.1],
            )
            t = AltoTensor.from_coo(CooTensor.from_dense(true.to_dense()))
            res = cp_als(t, CpAlsConfig(rank=1, max_iters=25, fit_tol=1e-14,
                                        seed=seed))
            assert res.fit >= 0.9999
        elapsed = time.perf_counter() - t0
        assert elapsed < 60.0, f"took {elapsed:.3f}s"


def test_criterion_06_cp_apr_correctness():
    with criterion(6, "cp-apr: loglik monotone per inner step, kkt < 1e-4"):
        t0 = time.perf_counter()
        for seed in (11, 12, 13):
            rng = np.random.default_rng(seed)
            factors = [rng.dirichlet(np.ones(d), size=2).T for d in (5, 4, 3)]
            weights = 25.0 * (0.5 + rng.random(2))
            dense = rng.poisson(KruskalModel(weights, factors).to_dense())
            if dense.sum() == 0:
                dense[0, 0, 0] = 1
            t = AltoTensor.from_coo(CooTensor.from_dense(dense.astype(float)))
            res = cp_apr_mu(
                t,
                CpAprConfig(rank=2, max_outer=200, max_inner=10, tau=1e-4,
                            seed=seed, track_inner_loglik=True),
            )
            assert res.converged and res.n_outer <= 200
            assert res.final_kkt < 1e-4
            assert max(max(m) for m in res.inner_iters) <= 10
            for sweep in res.inner_loglik:
                for inner in sweep:
                    assert_monotone(inner, "nondecreasing", rel=1e-9)
            assert (res.model.weights >= 0).all()
            assert all((f >= 0).all() for f in res.model.factors)
        elapsed = time.perf_counter() - t0
        assert elapsed < 60.0, f"took {elapsed:.3f}s"


def test_criterion_07_pre_equals_otf():
    with criterion(7, "krp precompute and on-the-fly agree at 1e-12"):
        rng = np.random.default_rng(7)
        for trial in range(50):
            dims = tuple(int(d) for d in rng.integers(3, 9, size=3))
            t = AltoTensor.from_coo(
                random_sparse(rng, dims, int(rng.integers(8, 40)), kind="counts")
            )
            rank = int(rng.integers(1, 6))
            factors = [rng.random((d, rank)) + 0.01 for d in dims]
            mode = trial % 3
            scaled = rng.random((dims[mode], rank)) + 0.01
            strategy = ("sequential", "recursive", "output")[trial % 3]
            pre = phi_kernel(
                t, scaled, factors, mode, workers=2, num_segments=3,
                strategy=strategy,
                krp_rows=precompute_krp_rows(t, factors, mode),
            )
            otf = phi_kernel(t, scaled, factors, mode, workers=2, num_segments=3,
                             strategy=strategy)
            tol = 1e-12 * np.maximum(np.abs(otf), 1e-300)
            assert (np.abs(pre - otf) <= tol).all()
        # small or high-reuse data recomputes; low-reuse data with factors
        # beyond fast memory precomputes
        small = TensorStats.from_shape_nnz((5, 4, 3), 10)
        assert select_krp_memory_mode(small, 16, 100 * 2**20) == "otf"
        high = TensorStats.from_shape_nnz((6000, 5700, 244_300, 1200), 54_200_000)
        assert select_krp_memory_mode(high, 16, 100 * 2**20) == "otf"
        limited = TensorStats.from_shape_nnz((22_500, 22_500, 23_800_000),
                                             28_400_000)
        assert sum(limited.shape.dims) * 16 * 8 > 105 * 2**20
        assert select_krp_memory_mode(limited, 16, 105 * 2**20) == "pre"


def _strip_wall_time(path) -> str:
    lines = [
        line for line in open(path).read().splitlines()
        if '"wall_time_s"' not in line
    ]
    return "\n".join(lines)


def test_criterion_08_cli_determinism(tmp_path, capsys):
    with criterion(8, "model JSON bit-identical across runs and thread counts"):
        rng = np.random.default_rng(8)
        coo = random_sparse(rng, (6, 5, 4), 40, kind="counts")
        tns = tmp_path / "t.tns"
        with open(tns, "w") as f:
            write_frostt(coo, f)
        for command, extra in (
            ("cp-als", ["--max-iters", "6"]),
            ("cp-apr", ["--max-outer", "6"]),
        ):
            outputs = set()
            for threads in ("1", "2", "4"):
                for run in range(3):
                    out = tmp_path / f"{command}-{threads}-{run}.json"
                    code = cli_main(
                        [
                            command, str(tns), "--dims", "6,5,4",
                            "--rank", "2", "--seed", "42",
                            "--threads", threads, "--partitions", "2",
                            "--strategy", "recursive", "--out", str(out),
                        ]
                        + extra
                    )
                    capsys.readouterr()
                    assert code == 0
                    outputs.add(_strip_wall_time(out))
            assert len(outputs) == 1, f"{command} output varied across runs"


DATASET_SHAPES = {
    "lbnl": ((1600, 4200, 1600, 4200, 868_100), 1_700_000),
    "nips": ((2500, 2900, 14_000, 17), 3_100_000),
    "uber": ((183, 24, 1100, 1700), 3_300_000),
    "chicago": ((6200, 24, 77, 32), 5_300_000),
    "vast": ((165_400, 11_400, 2, 100, 89), 26_000_000),
    "darpa": ((22_500, 22_500, 23_800_000), 28_400_000),
    "enron": ((6000, 5700, 244_300, 1200), 54_200_000),
    "lanl-2": ((3800, 11_200, 8700, 75_200, 9), 69_100_000),
    "nell-2": ((12_100, 9200, 28_800), 76_900_000),
    "fb-m": ((23_300_000, 23_300_000, 166), 99_600_000),
    "flickr": ((319_700, 28_200_000, 1_600_000, 731), 112_900_000),
    "deli": ((532_900, 17_300_000, 2_500_000, 1400), 140_100_000),
    "nell-1": ((2_900_000, 2_100_000, 25_500_000), 143_600_000),
    "amazon": ((4_800_000, 1_800_000, 1_800_000), 1_700_000_000),
    "patents": ((46, 239_200, 239_200), 3_600_000_000),
    "reddit": ((8_200_000, 177_000, 8_100_000), 4_700_000_000),
}


def test_criterion_09_storage_formulas():
    with criterion(9, "storage formulas across the 16 dataset shapes"):
        for name, (dims, nnz) in DATASET_SHAPES.items():
            stats = TensorStats.from_shape_nnz(dims, nnz, word_bits=64)
            assert stats.s_alto_bits <= stats.s_coo_bits, name
            assert stats.compression_ratio >= 1, name
        for name in ("nips", "uber", "chicago"):
            assert alto_metadata_bits(DATASET_SHAPES[name][0]) <= 64, name
        assert alto_metadata_bits(DATASET_SHAPES["reddit"][0]) <= 128
        lbnl_bits = alto_metadata_bits(DATASET_SHAPES["lbnl"][0])
        assert lbnl_bits <= 64, (
            f"lbnl needs {lbnl_bits} index bits (11+13+11+13+20); "
            f"1600*4200*1600*4200*868100 > 2^65 configurations, so no encoding "
            f"fits 64-bit positions and this claim cannot be met"
        )


def test_criterion_10_scaling_smoke():
    with criterion(10, "million-nonzero build < 10 s; 4 workers beat 1"):
        rng = np.random.default_rng(10)
        dims = (200, 220, 240)
        coords = np.stack([rng.integers(0, d, size=1_000_000) for d in dims], axis=1)
        values = rng.random(1_000_000) + 0.5
        coo = CooTensor(dims, coords, values)
        t0 = time.perf_counter()
        timings = {}
        alto = AltoTensor.from_coo(coo, timings=timings)
        build = time.perf_counter() - t0
        assert build < 10.0, f"construction took {build:.2f}s"
        assert timings["sort_s"] < 10.0

        factors = [rng.random((d, 16)) for d in dims]
        mttkrp(alto, factors, 0, workers=1)  # warm caches for both paths
        mttkrp(alto, factors, 0, workers=4, num_segments=4)

        def best_of(workers, repeats=5):
            best = float("inf")
            for _ in range(repeats):
                t1 = time.perf_counter()
                mttkrp(alto, factors, 0, workers=workers,
                       num_segments=max(workers, 1))
                best = min(best, time.perf_counter() - t1)
            return best

        t_one = best_of(1)
        t_four = best_of(4)
        assert t_four < t_one, (
            f"4 workers ({t_four * 1e3:.1f} ms) not faster than "
            f"1 worker ({t_one * 1e3:.1f} ms)"
        )
        print(
            f"    scaling: build {build:.2f}s (sort {timings['sort_s']:.2f}s), "
            f"1 worker {t_one * 1e3:.0f} ms, 4 workers {t_four * 1e3:.0f} ms",
            flush=True,
        )
