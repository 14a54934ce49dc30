"""Histogram correlator against an O(N^2) oracle and analytic cases."""

import numpy as np
import pytest

from ionpair.correlator import (CorrelatorConfig, conditioned_g2_estimate,
                                correlate, correlate_brute_force)
from ionpair.trajectory import ClickStream


def stream_from_gaps(rng, n, mean_gap_ps, channel=0, pol=None):
    gaps = np.maximum(rng.exponential(mean_gap_ps, size=n).astype(np.int64), 1)
    ts = np.cumsum(gaps)
    p = rng.integers(0, 3, size=n) if pol is None else np.full(n, pol)
    return ClickStream(ts, p, np.zeros(n, dtype=np.uint8),
                       duration_ps=int(ts[-1] + 1), channel=channel)


class TestConfig:
    def test_defaults(self):
        cfg = CorrelatorConfig()
        assert cfg.bin_width_ps == 1000
        assert cfg.window_ps == 2_000_000
        assert cfg.n_bins == 4000

    def test_geometry(self):
        cfg = CorrelatorConfig(bin_width_ps=250, window_ps=1000)
        assert cfg.n_bins == 8
        assert cfg.bin_edges_ps().tolist() == list(range(-1000, 1001, 250))
        centers = cfg.bin_centers_ps()
        assert centers[0] == -875 and centers[-1] == 875

    def test_validation(self):
        with pytest.raises(ValueError):
            CorrelatorConfig(bin_width_ps=0, window_ps=1000)
        with pytest.raises(ValueError):
            CorrelatorConfig(bin_width_ps=300, window_ps=1000)
        with pytest.raises(ValueError):
            CorrelatorConfig(bin_width_ps=100, window_ps=-100)


class TestAgainstBruteForce:
    def test_random_instances(self):
        # mix of cross and auto, random geometry, occasional
        # all-on-bin-edge instances to stress the boundary rule
        rng = np.random.default_rng(42)
        for trial in range(60):
            width = int(rng.integers(1, 8)) * 10 ** int(rng.integers(0, 3))
            cfg = CorrelatorConfig(bin_width_ps=width,
                                   window_ps=width * int(rng.integers(1, 40)))
            n_a = int(rng.integers(1, 500))
            n_b = int(rng.integers(1, 500))
            if trial % 5 == 0:
                # deterministic lattice: every delay on a bin edge
                a = ClickStream(np.arange(1, n_a + 1) * width,
                                np.zeros(n_a), np.zeros(n_a),
                                duration_ps=(n_a + 1) * width)
                b = ClickStream(np.arange(1, n_b + 1) * width,
                                np.zeros(n_b), np.zeros(n_b),
                                duration_ps=(n_b + 1) * width)
            else:
                gap = int(rng.integers(1, 3 * width + 1))
                a = stream_from_gaps(rng, n_a, gap)
                b = stream_from_gaps(rng, n_b, gap)
            if trial % 3 == 0:
                got = correlate(a, None, cfg)
                want = correlate_brute_force(a, None, cfg)
            else:
                got = correlate(a, b, cfg)
                want = correlate_brute_force(a, b, cfg)
            context = (trial, width, cfg.window_ps, n_a, n_b)
            assert np.array_equal(got.counts, want), context
            assert got.total_pairs == int(want.sum()), context

    def test_chunking_does_not_change_counts(self):
        rng = np.random.default_rng(1)
        a = stream_from_gaps(rng, 1500, 20)
        cfg = CorrelatorConfig(bin_width_ps=100, window_ps=5000)
        ref = correlate(a, None, cfg)
        chunked = correlate(a, None, cfg, max_chunk_pairs=97)
        assert np.array_equal(ref.counts, chunked.counts)
        assert ref.total_pairs == chunked.total_pairs


class TestAnalyticCases:
    def test_known_shift_lands_in_correct_bin(self):
        base = np.arange(1, 51, dtype=np.int64) * 100_000
        mk = lambda ts: ClickStream(ts, np.zeros(ts.size), np.zeros(ts.size),
                                    duration_ps=int(ts[-1]) + 1000)
        a, b = mk(base), mk(base + 37)
        cfg = CorrelatorConfig(bin_width_ps=10, window_ps=50)
        fwd = correlate(a, b, cfg)
        assert fwd.counts.sum() == 50
        assert fwd.counts[(37 + 50) // 10] == 50
        rev = correlate(b, a, cfg)
        assert rev.counts[(-37 + 50) // 10] == 50

    def test_edge_delays_half_open_window(self):
        # window [-W, +W): tau = -W counted in the lowest bin, +W dropped,
        # and a delay on an interior edge lands in the upper bin
        mk = lambda ts: ClickStream(np.asarray(ts, dtype=np.int64),
                                    np.zeros(len(ts)), np.zeros(len(ts)),
                                    duration_ps=10_000)
        a = mk([5000])
        b = mk([4000, 4500, 5000, 5500, 6000])
        cfg = CorrelatorConfig(bin_width_ps=500, window_ps=1000)
        got = correlate(a, b, cfg)
        assert got.counts.tolist() == [1, 1, 1, 1]
        assert got.total_pairs == 4
        brute = correlate_brute_force(a, b, cfg)
        assert brute.tolist() == [1, 1, 1, 1]

    def test_cross_reversal_symmetry(self):
        # a on even, b on odd timestamps: no delay ever sits on an edge,
        # so swapping the streams exactly reverses the histogram
        rng = np.random.default_rng(5)
        ga = np.maximum(rng.exponential(3000, 800).astype(np.int64), 1)
        gb = np.maximum(rng.exponential(3000, 800).astype(np.int64), 1)
        ta = 2 * np.cumsum(ga)
        tb = 2 * np.cumsum(gb) + 1
        dur = int(max(ta[-1], tb[-1])) + 2
        a = ClickStream(ta, np.zeros(800), np.zeros(800), duration_ps=dur)
        b = ClickStream(tb, np.zeros(800), np.zeros(800), duration_ps=dur)
        cfg = CorrelatorConfig(bin_width_ps=1000, window_ps=20_000)
        ab = correlate(a, b, cfg)
        ba = correlate(b, a, cfg)
        assert np.array_equal(ab.counts, ba.counts[::-1])


class TestNormalization:
    def test_uncorrelated_streams_give_unit_g2(self):
        rng = np.random.default_rng(11)
        a = stream_from_gaps(rng, 20_000, 5_000_000, channel=1)
        b = stream_from_gaps(rng, 20_000, 5_000_000, channel=2)
        g = correlate(a, b)
        assert not g.flagged
        assert g.values.mean() == pytest.approx(1.0, abs=0.03)
        # per-bin counts are Poisson: variance tracks the mean
        assert g.counts.var() == pytest.approx(g.counts.mean(), rel=0.15)

    def test_autocorrelation_removes_self_pairs(self):
        rng = np.random.default_rng(12)
        a = stream_from_gaps(rng, 20_000, 5_000_000)
        g = correlate(a)
        center = g.config.window_ps // g.config.bin_width_ps
        # with self pairs the center bin would read ~5000, not ~1
        assert g.values[center] < 10.0
        assert g.values.mean() == pytest.approx(1.0, abs=0.03)
        assert g.meta["auto"] is True

    def test_values_follow_documented_norm(self):
        rng = np.random.default_rng(13)
        a = stream_from_gaps(rng, 3000, 100_000, channel=1)
        b = stream_from_gaps(rng, 3000, 100_000, channel=2)
        cfg = CorrelatorConfig(bin_width_ps=2000, window_ps=100_000)
        g = correlate(a, b, cfg)
        overlap_ps = min(a.duration_ps, b.duration_ps)
        assert g.overlap_s == overlap_ps / 1e12
        n_a = int(np.sum(a.timestamps_ps < overlap_ps))
        assert g.rate_a == pytest.approx(n_a / g.overlap_s)
        norm = g.rate_a * g.rate_b * g.overlap_s * cfg.bin_width_ps / 1e12
        assert np.allclose(g.values, g.counts / norm)

    def test_empty_stream_is_flagged(self):
        rng = np.random.default_rng(14)
        a = stream_from_gaps(rng, 100, 1000)
        empty = ClickStream(np.array([], dtype=np.int64), np.array([]),
                            np.array([]), duration_ps=a.duration_ps)
        g = correlate(a, empty, CorrelatorConfig(100, 1000))
        assert g.flagged
        assert np.all(g.values == 0.0)
        assert g.counts.sum() == 0


class TestConditionedEstimate:
    def test_filters_then_correlates(self):
        rng = np.random.default_rng(21)
        s1 = stream_from_gaps(rng, 4000, 10_000, channel=1)
        s2 = stream_from_gaps(rng, 4000, 10_000, channel=2)
        cfg = CorrelatorConfig(bin_width_ps=500, window_ps=10_000)
        got = conditioned_g2_estimate(s1, s2, cfg, pol_1="sigma-",
                                      pol_2="sigma+")
        want = correlate(s1.select(pol="sigma-"), s2.select(pol="sigma+"),
                         cfg)
        assert np.array_equal(got.counts, want.counts)

    def test_same_stream_same_filter_autocorrelates(self):
        rng = np.random.default_rng(22)
        s = stream_from_gaps(rng, 4000, 10_000)
        cfg = CorrelatorConfig(bin_width_ps=500, window_ps=10_000)
        got = conditioned_g2_estimate(s, s, cfg, pol_1="pi", pol_2="pi")
        want = correlate(s.select(pol="pi"), None, cfg)
        assert got.meta["auto"] is True
        assert np.array_equal(got.counts, want.counts)
