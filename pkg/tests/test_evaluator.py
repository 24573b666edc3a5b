import csv
import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from probesched import kernels
from probesched.errors import InstanceError
from probesched.evaluator import (
    INF,
    CyclicSchedule,
    cycle_percentile,
    detection_time,
    evaluate,
    evaluate_probabilistic,
    export_cdf,
    geometric_quantile,
    load_schedule,
    memoryless_report,
    read_report_csv,
    reverse_cdf,
    save_schedule,
    simulate_memoryless,
    write_report_csv,
)
from probesched.instance import Instance, gen_random, gen_singletons


def brute_times(instance, schedule):
    """Per-element (Mt, Et) by enumerating every failure slot, exact fractions."""
    N = len(schedule)
    mt, et = [], []
    for e in range(instance.n):
        times = [detection_time(instance, schedule, e, t) for t in range(N)]
        mt.append(max(times))
        et.append(Fraction(sum(times), N) if all(math.isfinite(x) for x in times) else INF)
    return mt, et


class TestDetectionTime:
    def test_two_singletons(self):
        inst = gen_singletons(2)
        sched = CyclicSchedule((0, 1))
        assert detection_time(inst, sched, 0, 0) == 1
        assert detection_time(inst, sched, 0, 1) == 2

    def test_uncovered_is_inf(self):
        inst = gen_singletons(2)
        assert detection_time(inst, CyclicSchedule((0,)), 1, 0) == INF

    def test_slot_out_of_range(self):
        with pytest.raises(InstanceError):
            detection_time(gen_singletons(2), CyclicSchedule((0, 1)), 0, 2)

    @pytest.mark.parametrize("n", range(1, 9))
    def test_permutation(self, n):
        inst = gen_singletons(n)
        perm = tuple(np.random.default_rng(n).permutation(n).tolist())
        rep = evaluate(inst, CyclicSchedule(perm))
        assert rep.mt.tolist() == [n] * n
        assert rep.et.tolist() == [(n + 1) / 2] * n

    def test_abac(self):
        inst = gen_singletons(3)
        sched = CyclicSchedule((0, 1, 0, 2))
        mt, et = brute_times(inst, sched)
        assert mt == [2, 4, 4]
        assert et == [Fraction(3, 2), Fraction(5, 2), Fraction(5, 2)]
        rep = evaluate(inst, sched)
        assert rep.mt.tolist() == [2, 4, 4]
        assert rep.et.tolist() == [1.5, 2.5, 2.5]


class TestEvaluate:
    def test_uniform_round_robin(self):
        inst = gen_singletons(8)
        rep = evaluate(inst, CyclicSchedule(tuple(range(8))))
        assert (rep.EeEt, rep.EeMt, rep.MtEe) == (4.5, 8.0, 4.5)
        assert rep.MeMt == 8 * inst.weights.max()

    def test_uniform_round_robin_normalized(self):
        rep = evaluate(gen_singletons(8), CyclicSchedule(tuple(range(8))), normalized=True)
        assert (rep.EeEt, rep.EeMt, rep.MtEe, rep.MeMt, rep.EtMe, rep.MeEt) == (4.5, 8, 4.5, 8, 8, 4.5)

    def test_abac_uniform(self):
        rep = evaluate(gen_singletons(3), CyclicSchedule((0, 1, 0, 2)))
        assert rep.EeEt == pytest.approx(13 / 6, rel=1e-15)

    def test_uncovered_propagates_inf(self):
        rep = evaluate(gen_singletons(3), CyclicSchedule((0, 1)))
        assert rep.EeEt == INF and rep.MeMt == INF
        assert not rep.finite
        assert rep.infinite_elements == [2]

    def test_unknown_test_rejected(self):
        with pytest.raises(InstanceError):
            evaluate(gen_singletons(2), CyclicSchedule((0, 5)))

    def test_idle_slot(self):
        rep = evaluate(gen_singletons(1), CyclicSchedule((0, -1)))
        assert rep.mt.tolist() == [2] and rep.et.tolist() == [1.5]

    def test_series(self):
        inst = gen_singletons(3)
        rep = evaluate(inst, CyclicSchedule((0, 1, 0, 2)), keep_series=True)
        # failure at slot 1: A waits 2, B 1, C 3
        assert rep.ee_t[1] == pytest.approx(2.0)
        assert rep.me_t[1] == pytest.approx(1.0)

    def test_lookup_case_insensitive(self):
        rep = evaluate(gen_singletons(2), CyclicSchedule((0, 1)))
        assert rep["eemt"] == rep.EeMt
        with pytest.raises(InstanceError):
            rep["nope"]

    @settings(max_examples=60, deadline=None)
    @given(st.data())
    def test_gap_formula_matches_enumeration(self, data):
        n = data.draw(st.integers(1, 5))
        m = data.draw(st.integers(1, 5))
        seed = data.draw(st.integers(0, 10_000))
        inst = gen_random(n, m, 0.4, seed=seed)
        N = data.draw(st.integers(1, 64))
        cycle = tuple(data.draw(st.lists(st.integers(-1, m - 1), min_size=N, max_size=N)))
        sched = CyclicSchedule(cycle)
        rep = evaluate(inst, sched, keep_series=True)
        mt, et = brute_times(inst, sched)
        assert rep.mt.tolist() == [float(x) for x in mt]
        for got, want in zip(rep.et.tolist(), et):
            assert got == pytest.approx(float(want), rel=1e-14)
        assert rep.chains_hold()
        if rep.finite:
            # per-slot series against enumeration
            for t in range(N):
                times = [detection_time(inst, sched, e, t) for e in range(inst.n)]
                assert rep.ee_t[t] == pytest.approx(float(np.dot(inst.weights, times)), rel=1e-12)

    def test_backends_agree_bitwise(self):
        backends = kernels.backends()
        if len(backends) < 2:
            pytest.skip("compiled kernels not built")
        rng = np.random.default_rng(3)
        inst = gen_random(30, 12, 0.2, seed=3)
        cycle = rng.integers(-1, 12, size=500).astype(np.int64)
        outs = [
            mod.deterministic_profile(cycle, inst.test_indptr, inst.test_indices, np.ascontiguousarray(inst.weights))
            for mod in backends.values()
        ]
        for a, b in zip(outs[0], outs[1]):
            assert np.array_equal(np.asarray(a), np.asarray(b))

    def test_random_cycle_converges_to_memoryless(self):
        rng = np.random.default_rng(11)
        inst = gen_random(12, 6, 0.3, seed=11)
        q = rng.dirichlet(np.ones(inst.m))
        cycle = tuple(rng.choice(inst.m, size=100_000, p=q).tolist())
        rep = evaluate(inst, CyclicSchedule(cycle))
        target = memoryless_report(inst, q).EeEt
        assert abs(rep.EeEt - target) <= 0.10 * target


class TestProbabilistic:
    def test_ones_match_deterministic_bitwise(self):
        inst = gen_random(10, 5, 0.3, seed=2)
        sched = CyclicSchedule(tuple(np.random.default_rng(2).integers(0, 5, 40).tolist()))
        a = evaluate(inst, sched, normalized=True)
        b = evaluate_probabilistic(inst, sched, normalized=True)
        assert a.values() == b.values()
        assert np.array_equal(a.mt, b.mt) and np.array_equal(a.et, b.et)

    def test_single_half(self):
        inst = Instance.from_ids({"e": 1.0}, {"t": ["e"]}, {"t": {"e": 0.5}})
        rep = evaluate_probabilistic(inst, CyclicSchedule((0,)))
        assert rep.et.tolist() == [2.0] and rep.mt.tolist() == [2.0]

    def test_double_slot_half(self):
        inst = Instance.from_ids({"e": 1.0}, {"t": ["e"]}, {"t": {"e": 0.5}})
        rep = evaluate_probabilistic(inst, CyclicSchedule((0, 0)))
        assert rep.et.tolist() == [2.0]

    def test_undetectable_is_inf(self):
        inst = Instance.from_ids({"e": 1.0, "f": 1.0}, {"t": ["e", "f"]}, {"t": {"f": 0.0}})
        rep = evaluate_probabilistic(inst, CyclicSchedule((0,)))
        assert rep.infinite_elements == [1]

    def test_matches_series_expansion(self):
        # cycle [t, idle] with pi = 0.5: E from slot 0 = sum_k (2k-1) 0.5^k = 3, from slot 1 = 4
        inst = Instance.from_ids({"e": 1.0}, {"t": ["e"]}, {"t": {"e": 0.5}})
        rep = evaluate_probabilistic(inst, CyclicSchedule((0, -1)), keep_series=True)
        assert rep.ee_t.tolist() == pytest.approx([3.0, 4.0], rel=1e-15)
        assert rep.mt.tolist() == [4.0]

    def test_percentile(self):
        inst = gen_singletons(3)
        assert cycle_percentile(inst, CyclicSchedule((0, 1, 0, 2)), 100).tolist() == [2, 4, 4]


class TestMemoryless:
    def test_report_families_collapse(self):
        inst = gen_singletons(8)
        rep = memoryless_report(inst, np.full(8, 1 / 8), normalized=True)
        assert rep.EeEt == rep.MtEe == rep.EeMt == pytest.approx(8.0, rel=1e-15)
        assert rep.MeEt == rep.EtMe == rep.MeMt == pytest.approx(8.0, rel=1e-15)

    def test_simulate_single_test(self):
        inst = Instance.from_ids({"a": 1, "b": 1}, {"t": ["a", "b"]})
        stats = simulate_memoryless(inst, [1.0], 100, seed=1)
        assert stats.mean.tolist() == [1.0, 1.0]
        assert stats.percentiles[99].tolist() == [1.0, 1.0]

    def test_simulate_quarter_rate(self):
        inst = gen_singletons(4)
        Q = 0.25
        stats = simulate_memoryless(inst, np.full(4, Q), 100_000, seed=5)
        sigma = math.sqrt((1 - Q) / Q**2)
        assert np.all(np.abs(stats.mean - 4.0) <= 3 * sigma / math.sqrt(100_000))

    def test_simulate_p99_matches_geometric_tail(self):
        inst = gen_singletons(4)
        stats = simulate_memoryless(inst, np.full(4, 0.25), 100_000, seed=6)
        want = math.ceil(math.log(0.01) / math.log(0.75))
        assert geometric_quantile(0.25, 0.99) == want
        assert np.all(np.abs(stats.percentiles[99] - want) <= 1)

    def test_simulate_probabilistic(self):
        inst = Instance.from_ids({"e": 1.0}, {"t": ["e"]}, {"t": {"e": 0.5}})
        stats = simulate_memoryless(inst, [1.0], 50_000, seed=2)
        assert abs(stats.mean[0] - 2.0) < 4 * stats.stderr()[0]

    def test_simulate_uncovered_inf(self):
        stats = simulate_memoryless(gen_singletons(2), [1.0, 0.0], 10)
        assert stats.mean[1] == INF

    def test_seeded(self):
        inst = gen_random(6, 4, 0.4, seed=1)
        a = simulate_memoryless(inst, np.full(4, 0.25), 500, seed=9)
        b = simulate_memoryless(inst, np.full(4, 0.25), 500, seed=9)
        assert np.array_equal(a.mean, b.mean)


class TestExports:
    def test_reverse_cdf(self):
        assert reverse_cdf([1, 2, 2, 4]) == [(4.0, 0.25), (2.0, 0.75), (1.0, 1.0)]

    def test_single(self):
        assert reverse_cdf([3.5]) == [(3.5, 1.0)]

    def test_empty(self):
        with pytest.raises(ValueError):
            reverse_cdf([])

    def test_nonfinite(self):
        with pytest.raises(ValueError):
            reverse_cdf([1, INF])

    def test_export_file(self, tmp_path):
        path = tmp_path / "c.csv"
        export_cdf([1, 2, 2, 4], path)
        raw = path.read_bytes()
        assert b"\r" not in raw
        rows = list(csv.reader(raw.decode().splitlines()))
        assert rows[0] == ["value", "fraction_of_elements_at_least"]
        assert [tuple(map(float, r)) for r in rows[1:]] == [(4, 0.25), (2, 0.75), (1, 1.0)]

    def test_report_round_trip(self, tmp_path):
        inst = gen_singletons(3)
        rep = evaluate(inst, CyclicSchedule((0, 1, 0, 2)))
        write_report_csv(inst, rep, tmp_path / "r.csv")
        back = read_report_csv(tmp_path / "r.csv")
        assert back["objectives"] == rep.values()
        assert back["elements"]["e2"] == (4.0, 2.5)

    def test_schedule_round_trip(self, tmp_path):
        inst = gen_singletons(3)
        sched = CyclicSchedule((0, -1, 2), "kt")
        save_schedule(inst, sched, tmp_path / "s.json")
        assert load_schedule(inst, tmp_path / "s.json") == sched


@pytest.mark.parametrize("cycle", [(), (-2,)])
def test_schedule_rejects(cycle):
    with pytest.raises(InstanceError):
        CyclicSchedule(cycle)


def test_provenance_checked():
    with pytest.raises(InstanceError):
        CyclicSchedule((0,), "magic")


def test_test_frequencies():
    sched = CyclicSchedule((0, 1, 0, -1))
    assert sched.test_frequencies(3).tolist() == [2 / 3, 1 / 3, 0.0]
