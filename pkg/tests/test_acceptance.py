"""End-to-end acceptance checks, one test per criterion.

Each test records a single PASS/FAIL line that pytest prints in an
"acceptance criteria" section at the end of the run.
"""

import itertools
import statistics
import time

import numpy as np
import pytest

from conftest import make_smooth
from ipcomp import (
    Archive,
    ErrorModel,
    FieldGrid,
    RetrievalPlan,
    bound_for_plan,
    compress,
    plan_for_error,
    plan_for_size,
    reconstruct,
    refine,
)
from ipcomp.bpcodec import (
    IDENTITY,
    ZLIB,
    backend_decode,
    backend_encode,
    decode_planes,
    encode_planes,
    merge,
    split,
    xor_decode,
    xor_encode,
)
from ipcomp.planner import BUCKETS
from ipcomp.quantizer import CODE_LIMIT, from_negabinary, suffix_uncertainty, to_negabinary

N_FIELDS = 20
EB_FACTORS = (1e-2, 1e-4, 1e-6)
E_FACTORS = (2**2, 2**6, 2**10, 2**16)


@pytest.fixture(scope="module")
def suite():
    """The smooth-field suite at 64^3 f64, compressed at every error bound.

    Building it is exactly the work of criterion 1, so it is timed here.
    """
    rng = np.random.default_rng(0)
    fields = [make_smooth((64, 64, 64), rng) for _ in range(N_FIELDS)]
    runs = []
    start = time.perf_counter()
    for x in fields:
        for factor in EB_FACTORS:
            eb = factor * float(np.ptp(x))
            archive = Archive(compress(FieldGrid.from_array(x), eb))
            grid, session = reconstruct(archive)
            err = float(np.abs(grid.as_array() - x).max())
            runs.append(dict(x=x, eb=eb, factor=factor, archive=archive, err=err, session=session))
    return runs, time.perf_counter() - start


def test_c01_full_fidelity(suite, report):
    runs, elapsed = suite
    worst = max(r["err"] / r["eb"] for r in runs)
    ok = all(r["err"] <= r["eb"] for r in runs) and elapsed < 60
    report(1, ok, f"{len(runs)} runs, worst err/eb {worst:.6f}, {elapsed:.1f} s")
    assert ok


def test_c02_progressive_soundness(suite, report):
    runs, _ = suite
    cases = failures = 0
    worst = 0.0
    for r in runs:
        model = r["archive"].error_model()
        for f in E_FACTORS:
            E = f * r["eb"]
            plan = plan_for_error(model, E)
            grid, _ = reconstruct(r["archive"], plan)
            err = float(np.abs(grid.as_array() - r["x"]).max())
            cases += 1
            failures += not (err <= E and bound_for_plan(model, plan) >= err)
            worst = max(worst, err / E)
    report(2, failures == 0, f"{cases} cases, {failures} failures, worst err/E {worst:.4f}")
    assert failures == 0


def integer_toy_model(rng):
    """Toy model whose tables are whole multiples of the DP unit."""
    levels = int(rng.integers(1, 5))
    scale = int(rng.choice([30, 100, 300, 1000]))
    steps = rng.integers(0, scale, (levels, 33))
    steps[:, 0] = 0
    delta = np.cumsum(steps, axis=1).astype(float)
    plane = rng.integers(0, int(rng.choice([20, 60, 200])), (levels, 32))
    base = rng.integers(10, 40, (levels, 1))
    sizes = np.concatenate([base, base + np.cumsum(plane, axis=1)], axis=1)[:, ::-1]
    return ErrorModel(delta, sizes, eb=0.5)


def exhaustive_tables(model, choices):
    """Error sum and byte total of every plan, as flat arrays over the product space."""
    grids = np.meshgrid(*[choices] * model.levels, indexing="ij")
    err = sum(model.delta[i][g] for i, g in enumerate(grids)).reshape(-1)
    size = sum(model.sizes[i][g] for i, g in enumerate(grids)).reshape(-1)
    return err, size


def test_c03_planner_optimality(report):
    rng = np.random.default_rng(3)
    choices = np.arange(0, 33, 4)
    mismatches = 0
    for _ in range(200):
        model = integer_toy_model(rng)
        err, size = exhaustive_tables(model, choices)
        # error mode: slack of exactly BUCKETS units
        E = model.eb + BUCKETS
        plan = plan_for_error(model, E, choices)
        best_bytes = size[err + model.eb <= E].min()
        mismatches += plan.nbytes != best_bytes
        # size mode: BUCKETS bytes above the mandatory load
        S = model.mandatory_size(choices) + BUCKETS
        plan = plan_for_size(model, S, choices)
        best_err = err[size <= S].min()
        mismatches += plan.bound - model.eb != best_err
    report(3, mismatches == 0, f"200 models x 2 modes, {mismatches} mismatches")
    assert mismatches == 0


def test_c04_incremental_equivalence(report):
    rng = np.random.default_rng(4)
    mismatches = cases = 0
    for i in range(10):
        x = make_smooth((32, 32, 32), rng)
        interp = ("linear", "cubic")[i % 2]
        archive = Archive(compress(FieldGrid.from_array(x), 1e-5 * np.ptp(x), interp))
        L = archive.header.levels
        for j in range(5):
            chain = [RetrievalPlan(tuple(int(k) for k in rng.integers(0, 33, L)))]
            for _ in range(1 + j % 2):
                chain.append(RetrievalPlan(tuple(int(rng.integers(k, 33)) for k in chain[-1].loaded)))
            grid, session = reconstruct(archive, chain[0])
            for plan in chain[1:]:
                grid, session = refine(archive, session, grid, plan)
            mismatches += grid.tobytes() != reconstruct(archive, chain[-1])[0].tobytes()
            cases += 1
    report(4, mismatches == 0, f"{cases} nested chains, {mismatches} mismatches")
    assert mismatches == 0


def test_c05_negabinary(report):
    rng = np.random.default_rng(5)
    q = rng.integers(-CODE_LIMIT, CODE_LIMIT + 1, 10**6)
    q[:4] = [1, -1, CODE_LIMIT, -CODE_LIMIT]
    round_trip = np.array_equal(from_negabinary(to_negabinary(q)), q)
    examples = int(to_negabinary(1)) == 0b01 and int(to_negabinary(-1)) == 0b11

    def brute(d):
        return max((abs(sum(b * (-2) ** k for k, b in enumerate(bits)))
                    for bits in itertools.product((0, 1), repeat=d)), default=0)

    enumeration = all(suffix_uncertainty(d) == brute(d) for d in range(15))
    below_sign_magnitude = all(suffix_uncertainty(d) <= 2**d - 1 for d in range(1, 33))
    ratios = [suffix_uncertainty(d) / (2**d - 1) for d in range(8, 33)]
    two_thirds = all(abs(r / (2 / 3) - 1) <= 0.05 for r in ratios)
    ok = round_trip and examples and enumeration and below_sign_magnitude and two_thirds
    report(5, ok, f"round trip {round_trip}, examples {examples}, enumeration {enumeration}, "
                  f"<= 2^d-1 {below_sign_magnitude}, ratio range [{min(ratios):.4f}, {max(ratios):.4f}]")
    assert ok


def test_c06_coding_lossless(report):
    rng = np.random.default_rng(6)
    c = rng.integers(0, 2**32, 10**5, dtype=np.uint64).astype(np.uint32)
    reference = split(c)
    exact = prefixes = True
    for backend in (IDENTITY, ZLIB):
        blocks = encode_planes(reference, backend)
        wire = {p: backend_decode(b) for p, b in enumerate(blocks)}
        exact &= all(backend_encode(wire[p], backend, c.size) == blocks[p] for p in wire)
        full = merge(xor_decode(decode_planes(dict(enumerate(blocks)), c.size), 32), 32)
        exact &= np.array_equal(full, c)
        for k in range(33):
            partial = {p: blocks[p] for p in range(k)}
            got = merge(xor_decode(decode_planes(partial, c.size), k), k)
            prefixes &= np.array_equal(got, merge(reference, k))
    ok = exact and prefixes
    report(6, ok, f"10^5 codewords x 2 backends, bit-exact {exact}, prefixes 0..32 {prefixes}")
    assert ok


def plane_entropy(bitplanes):
    bits = np.unpackbits(bitplanes.planes, axis=1, bitorder="little")[:, :bitplanes.count]
    p = bits.mean(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(p * np.log2(p) + (1 - p) * np.log2(1 - p))
    return np.nan_to_num(h) * bitplanes.count


def test_c07_entropy_direction(suite, report):
    runs, _ = suite
    wins = total = 0
    for r in runs:
        if r["factor"] != 1e-4:
            continue
        raw = coded = 0.0
        for words in r["session"].codewords.values():
            planes = split(words)
            raw += plane_entropy(planes)[8:].sum()
            coded += plane_entropy(xor_encode(planes))[8:].sum()
        wins += coded <= raw
        total += 1
    ok = wins >= 0.9 * total
    report(7, ok, f"prefix-XOR planes lower entropy on {wins}/{total} fields")
    assert ok


def test_c08_planner_overhead(report):
    rng = np.random.default_rng(8)
    x = make_smooth((128, 128, 128), rng)
    eb = 1e-4 * np.ptp(x)
    archive = Archive(compress(FieldGrid.from_array(x), eb))
    size = archive.header.payload_length / 4
    plan_times, recon_times = [], []
    for _ in range(5):
        t = time.perf_counter()
        model = archive.error_model()
        plan_for_error(model, 64 * eb)
        plan_for_size(model, size)
        plan_times.append((time.perf_counter() - t) / 2)
        t = time.perf_counter()
        reconstruct(archive, plan_for_error(model, 64 * eb))
        recon_times.append(time.perf_counter() - t)
    ratio = statistics.median(plan_times) / statistics.median(recon_times)
    ok = ratio < 0.01
    report(8, ok, f"planning {1e3 * statistics.median(plan_times):.2f} ms vs reconstruct "
                  f"{statistics.median(recon_times):.2f} s ({100 * ratio:.3f}%)")
    assert ok


def test_c09_rate_distortion_monotone(report):
    x = make_smooth((64, 64, 64), np.random.default_rng(0))
    eb = 1e-4 * np.ptp(x)
    archive = Archive(compress(FieldGrid.from_array(x), eb))
    model = archive.error_model()
    payload = archive.header.payload_length
    errors = []
    for i in range(1, 13):
        grid, _ = reconstruct(archive, plan_for_size(model, i * payload / 12))
        errors.append(float(np.abs(grid.as_array() - x).max()))
    loads = [plan_for_error(model, eb * 4.0**i).nbytes for i in range(12)]
    err_violations = sum(b > a for a, b in zip(errors, errors[1:]))
    load_violations = sum(b > a for a, b in zip(loads, loads[1:]))
    ok = err_violations == 0 and load_violations == 0
    report(9, ok, f"error violations {err_violations}, load violations {load_violations}; "
                  f"err/eb {errors[0] / eb:.1f} -> {errors[-1] / eb:.2f}")
    assert ok


def test_c10_compression_ratio(suite, report):
    runs, _ = suite
    ratios = [r["x"].nbytes / len(r["archive"].stream.getvalue()) for r in runs if r["factor"] == 1e-4]
    ok = min(ratios) >= 4
    report(10, ok, f"CR at eb=1e-4 range: min {min(ratios):.2f}, median {statistics.median(ratios):.2f}")
    assert ok
