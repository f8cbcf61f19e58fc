import itertools
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from features import matkit, selection
from features.selection import CandidateSet, Measure, SelectionOutcome
from tests.conftest import psd, spd


def instance(rng, n=6, m=5, rank=2):
    return CandidateSet.from_matrices(spd(rng, n), [psd(rng, n, rank) for _ in range(m)])


class TestCandidateSet:
    def test_base_must_be_pd(self):
        with pytest.raises(matkit.SingularMatrixError):
            CandidateSet.from_matrices(np.zeros((3, 3)), [])

    def test_dimension_mismatch(self):
        with pytest.raises(matkit.DimensionError):
            CandidateSet.from_matrices(np.eye(3), [np.eye(4)])


class TestMaximalInfo:
    def test_no_features(self, rng):
        base = spd(rng, 4)
        assert_allclose(selection.maximal_info(CandidateSet.from_matrices(base, [])), base)

    def test_zero_feature(self, rng):
        base = spd(rng, 4)
        assert_allclose(selection.maximal_info(CandidateSet.from_matrices(base, [np.zeros((4, 4))])), base)

    def test_accumulation(self, rng):
        cs = instance(rng)
        expected = cs.base + sum(i.info for i in cs.infos)
        assert_allclose(selection.maximal_info(cs), expected, atol=1e-12)

    def test_fusion_conventions_agree(self, rng):
        cs = instance(rng, m=6)
        subset = [0, 2, 5]
        listing = selection.fused_information(cs, subset)
        weighted = selection.fused_information(cs, subset, "weighted")
        assert_allclose(listing, weighted, atol=1e-12)
        assert_allclose(listing, cs.base + sum(cs.infos[j].info for j in subset), atol=1e-12)
        with pytest.raises(ValueError):
            selection.fused_information(cs, subset, "sideways")


class TestLeverage:
    def test_single_feature(self, rng):
        cs = CandidateSet.from_matrices(spd(rng, 5), [psd(rng, 5)])
        prof = selection.leverage_profile(cs)
        assert_allclose(prof.scores, [5.0])
        assert_allclose(prof.pmf, [1.0])

    def test_identical_features(self, rng):
        m = psd(rng, 4)
        prof = selection.leverage_profile(CandidateSet.from_matrices(spd(rng, 4), [m, m, m]))
        assert_allclose(prof.pmf, 1 / 3)

    def test_dense_oracle(self, rng):
        cs = instance(rng, n=6, m=3)
        h = cs.base + sum(i.info for i in cs.infos)
        expected = [np.trace(np.linalg.inv(h) @ (cs.base / 3 + i.info)) for i in cs.infos]
        prof = selection.leverage_profile(cs)
        assert_allclose(prof.scores, expected, rtol=1e-10)
        assert prof.scores.sum() == pytest.approx(6.0)

    def test_empty_is_error(self, rng):
        with pytest.raises(ValueError):
            selection.leverage_profile(CandidateSet.from_matrices(spd(rng, 3), []))

    def test_scale_invariant(self, rng):
        cs = instance(rng)
        assert_allclose(selection.leverage_profile(cs.scaled(7.5)).pmf, selection.leverage_profile(cs).pmf,
                        rtol=1e-10)


class TestSampling:
    def test_single_candidate(self, rng):
        cs = CandidateSet.from_matrices(spd(rng, 3), [psd(rng, 3)], ids=[42])
        for sampler in (selection.sample_randomized, selection.sample_uniform):
            assert sampler(cs, 10, seed=1).ids == [42]

    def test_replay(self, rng):
        cs = instance(rng, m=8)
        a = selection.sample_randomized(cs, 5, seed=11)
        b = selection.sample_randomized(cs, 5, seed=11)
        assert a.ids == b.ids
        assert_allclose(a.info, b.info)

    def test_duplicates_collapse(self, rng):
        cs = instance(rng, m=3)
        out = selection.sample_uniform(cs, 50, seed=2)
        assert out.ids == [0, 1, 2] and out.q == 50
        assert_allclose(out.info, selection.maximal_info(cs), atol=1e-12)

    def test_empty_candidates(self, rng):
        cs = CandidateSet.from_matrices(spd(rng, 3), [])
        out = selection.sample_randomized(cs, 4, seed=0)
        assert out.ids == [] and out.indices == []
        assert_allclose(out.info, cs.base)

    def test_bad_q(self, rng):
        with pytest.raises(ValueError):
            selection.sample_uniform(instance(rng), 0)

    @pytest.mark.parametrize("strategy", ["randomized", "uniform"])
    def test_single_draw_frequencies(self, rng, strategy):
        cs = instance(rng, m=4)
        profile = selection.leverage_profile(cs)
        target = profile.pmf if strategy == "randomized" else np.full(4, 0.25)
        trials = 20000
        gen = np.random.default_rng(99)
        counts = np.zeros(4)
        for _ in range(trials):
            if strategy == "randomized":
                out = selection.sample_randomized(cs, 1, gen, profile)
            else:
                out = selection.sample_uniform(cs, 1, gen)
            counts[out.indices[0]] += 1
        freq = counts / trials
        sigma = np.sqrt(target * (1 - target) / trials)
        assert np.all(np.abs(freq - target) <= 4 * sigma)


def greedy_oracle(cs, k, measure):
    """Brute-force greedy: dense trial matrices at every step."""
    chosen = []
    for _ in range(k):
        best, best_val = None, math.inf
        for j in sorted(set(range(cs.size)) - set(chosen), key=lambda j: cs.infos[j].feature_id):
            h = selection.fused_information(cs, chosen + [j])
            val = matkit.spectral_functionals(h)[{"variance": 0, "entropy": 1, "spectral": 2}[measure]]
            if val < best_val - 1e-12 * abs(best_val):
                best, best_val = j, val
        chosen.append(best)
    return chosen


class TestGreedy:
    @pytest.mark.parametrize("measure", ["variance", "entropy", "spectral"])
    def test_all_selected(self, rng, measure):
        cs = instance(rng, m=4)
        out = selection.select_greedy(cs, 4, measure)
        assert sorted(out.ids) == [0, 1, 2, 3]
        assert_allclose(out.info, selection.maximal_info(cs), atol=1e-12)

    def test_dominant_first(self, rng):
        others = [psd(rng, 6) for _ in range(3)]
        dominant = sum(others) + np.eye(6)
        cs = CandidateSet.from_matrices(spd(rng, 6), others + [dominant])
        assert selection.select_greedy(cs, 1, Measure.ENTROPY).ids == [3]

    @pytest.mark.parametrize("measure", ["variance", "entropy", "spectral"])
    def test_matches_brute_force(self, rng, measure):
        for _ in range(5):
            cs = instance(rng, n=6, m=4, rank=3)
            out = selection.select_greedy(cs, 2, measure)
            assert out.ids == greedy_oracle(cs, 2, measure)

    def test_no_better_than_best_pair(self, rng):
        cs = instance(rng, n=6, m=4)
        out = selection.select_greedy(cs, 2, "entropy")
        best = min(matkit.spectral_functionals(selection.fused_information(cs, list(p))).neg_logdet
                   for p in itertools.combinations(range(4), 2))
        assert matkit.spectral_functionals(out.info).neg_logdet >= best - 1e-10

    def test_zero_budget(self, rng):
        cs = instance(rng)
        out = selection.select_greedy(cs, 0)
        assert out.ids == []
        assert_allclose(out.info, cs.base)

    def test_budget_range(self, rng):
        with pytest.raises(ValueError):
            selection.select_greedy(instance(rng, m=2), 3)


class TestSampleSize:
    def test_scalar(self):
        assert selection.sample_size(3, 0.5, 0.5) == math.ceil(24 * math.log(6)) == 44

    def test_superlinear(self):
        assert selection.sample_size(20, 0.5, 0.25) > 2 * selection.sample_size(10, 0.5, 0.25)

    @pytest.mark.parametrize("n,eps,delta", [(0, 0.5, 0.5), (3, 0.0, 0.5), (3, 1.0, 0.5), (3, 0.5, 0.75)])
    def test_ranges(self, n, eps, delta):
        with pytest.raises(ValueError):
            selection.sample_size(n, eps, delta)

    def test_budget_caps_at_candidates(self, rng):
        cs = instance(rng, m=5)
        assert selection.resolve_budget(cs, 0.5, 0.25) == 5
        assert selection.resolve_budget(cs, 0.5, 0.25, q=3) == 3


class TestBTilde:
    def test_single_feature(self, rng):
        cs = CandidateSet.from_matrices(spd(rng, 4), [psd(rng, 4)])
        assert_allclose(selection.b_tilde_matrices(cs)[0], np.eye(4), atol=1e-10)

    def test_identical_features(self, rng):
        m = psd(rng, 4)
        for b in selection.b_tilde_matrices(CandidateSet.from_matrices(spd(rng, 4), [m, m])):
            assert_allclose(b, np.eye(4) / 2, atol=1e-10)

    def test_identities(self, rng):
        cs = instance(rng, n=7, m=6)
        bt = selection.b_tilde_matrices(cs)
        assert_allclose(sum(bt), np.eye(7), atol=1e-10)
        assert_allclose([np.trace(b) for b in bt], selection.leverage_profile(cs).scores, rtol=1e-9)


class TestConeBound:
    def test_full_selection_holds(self, rng):
        cs = instance(rng, m=5)
        out = SelectionOutcome(cs.ids, list(range(5)), selection.maximal_info(cs), 5, "randomized",
                               infos=cs.infos)
        assert selection.zeta(cs, out, 0.5) == pytest.approx(5 / 6 * 0.5)
        bound = selection.verify_cone_bound(cs, out, 0.5, replicates=8, seed=1)
        assert bound.holds and math.isfinite(bound.chi_hat)

    def test_empty_selection_fails(self, rng):
        cs = instance(rng)
        out = SelectionOutcome([], [], cs.base, 3, "randomized")
        assert math.isinf(selection.zeta(cs, out, 0.5))
        assert not selection.verify_cone_bound(cs, out, 0.5).holds

    def test_chi_replay(self, rng):
        cs = instance(rng, m=8)
        assert selection.estimate_chi(cs, 10, 0.5, 16, seed=5) == selection.estimate_chi(cs, 10, 0.5, 16, seed=5)


class TestChernoffBound:
    def test_default_form(self):
        assert selection.chernoff_tail_bound(9, 100, 0.5) == pytest.approx(9 * math.exp(-100 * 0.25 / 18))

    def test_exact_is_tighter(self):
        assert selection.chernoff_tail_bound(9, 100, 0.5, exact=True) <= selection.chernoff_tail_bound(9, 100, 0.5)

    def test_range(self):
        with pytest.raises(ValueError):
            selection.chernoff_tail_bound(9, 100, 1.5)
