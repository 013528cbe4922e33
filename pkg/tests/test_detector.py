import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slotsync.channel import Codebook, EnsembleConfig, make_rng, sample_codebook
from slotsync.detector import (
    REJECT,
    BudgetExceededError,
    DetectorParams,
    detect_and_decode,
    detect_max_variant,
    detect_np_variant,
    dominance_check,
    exact_error_probabilities,
    output_chunks,
    rejection_margin,
)
from slotsync.probability import TypeDescriptor


def book(*words):
    words = np.array(words, dtype=np.int64)
    return Codebook(words, TypeDescriptor(np.bincount(words[0] - 1, minlength=2)))


LN2 = math.log(2)


class TestMargin:
    def test_detect(self, ch1, zero_params):
        m = rejection_margin(book([1]), ch1, [0], zero_params)
        assert m == pytest.approx(math.log(1.6) - math.log(0.95))
        assert m > 0

    def test_reject(self, ch1):
        m = rejection_margin(book([1]), ch1, [0], DetectorParams(0, LN2))
        assert m == pytest.approx(math.log(1.6) - math.log(1.9))
        assert detect_and_decode(book([1]), ch1, [0], DetectorParams(0, LN2)) == REJECT

    def test_very_negative_alpha_is_max_statistic(self, ch1):
        cb = book([1], [2])
        p = DetectorParams(-1e3, 0.1)
        want = math.log(0.8) - 0.1 - math.log(0.95)
        assert rejection_margin(cb, ch1, [0], p) == pytest.approx(want, abs=1e-12)

    def test_boundary_rejects(self):
        from slotsync.channel import validate_dmc

        dmc = validate_dmc([[0.5, 0.5], [0.5, 0.5]], 0)
        # the sum term underflows, leaving max W = Q0 exactly
        p = DetectorParams(-1e3, 0.0)
        assert rejection_margin(book([1]), dmc, [0], p) == 0.0
        assert detect_and_decode(book([1]), dmc, [0], p) == REJECT

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 12), st.integers(1, 4), st.floats(-2, 2), st.floats(-2, 2), st.integers(0, 2**32))
    def test_log_domain_matches_direct(self, n, M, alpha, beta, seed):
        from conftest import CH1_ROWS
        from slotsync.channel import validate_dmc

        dmc = validate_dmc(CH1_ROWS, 0)
        rng = make_rng(seed)
        cb = Codebook(rng.integers(1, 3, size=(M, n)), TypeDescriptor((n, 0)))
        y = rng.integers(0, 2, size=n)
        w = np.array([np.prod(dmc.w[x, y]) for x in cb.codewords])
        q0 = np.prod(dmc.w[0, y])
        direct = math.log(math.exp(n * alpha) * w.sum() + w.max()) - math.log(math.exp(n * beta) * q0)
        p = DetectorParams(alpha, beta)
        margin = rejection_margin(cb, dmc, y, p)
        assert margin == pytest.approx(direct, abs=1e-9)
        assert (detect_and_decode(cb, dmc, y, p) == REJECT) == (margin <= 0)


class TestDecisions:
    def test_ml_decode(self, ch1, zero_params):
        assert detect_and_decode(book([1], [2]), ch1, [1], zero_params) == 2

    def test_ties_to_lowest(self, ch1, zero_params):
        assert detect_and_decode(book([2, 1], [2, 1]), ch1, [1, 0], zero_params) == 1

    def test_np_variant(self, ch1, zero_params):
        assert detect_np_variant(book([1]), ch1, [1], zero_params) == 1

    def test_max_variant(self, ch1):
        assert detect_max_variant(book([1]), ch1, [0], DetectorParams(0, LN2)) == REJECT

    def test_max_variant_threshold(self, ch1):
        cb = book([2, 2])
        y = [1, 1]
        edge = math.log(0.8**2 / 0.05**2) / 2
        assert detect_max_variant(cb, ch1, y, DetectorParams(0, edge - 1e-9)) == 1
        assert detect_max_variant(cb, ch1, y, DetectorParams(0, edge + 1e-9)) == REJECT

    def test_np_single_codeword_is_likelihood_ratio(self, ch1):
        cb = book([1, 2, 2])
        for y in itertools.product(range(2), repeat=3):
            lr = sum(math.log(ch1.w[x, v] / ch1.w[0, v]) for x, v in zip([1, 2, 2], y))
            want = REJECT if lr <= 0.3 * 3 else 1
            assert detect_np_variant(cb, ch1, y, DetectorParams(0, 0.3)) == want


class TestExact:
    def test_empty_rejection(self, ch1, zero_params):
        assert exact_error_probabilities(book([1]), ch1, zero_params) == pytest.approx((1, 0, 0))

    def test_reject_zero(self, ch1):
        got = exact_error_probabilities(book([1]), ch1, DetectorParams(0, LN2))
        assert got == pytest.approx((0.05, 0.8, 0.8))

    def test_huge_beta(self, ch1):
        cb = book([1, 2, 1, 2], [2, 2, 1, 1])
        fa, md, de = exact_error_probabilities(cb, ch1, DetectorParams(0, 50))
        assert fa == 0 and md == pytest.approx(1) and de == pytest.approx(1)

    def test_budget(self, ch1, zero_params):
        with pytest.raises(BudgetExceededError):
            exact_error_probabilities(book([1] * 10), ch1, zero_params, budget=100)

    def test_chunks_cover_space(self):
        rows = np.vstack(list(output_chunks(3, 4, chunk=7)))
        assert [tuple(r) for r in rows] == list(itertools.product(range(3), repeat=4))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 3), st.floats(-1, 1), st.lists(st.floats(-1, 1), min_size=2, max_size=2, unique=True), st.integers(0, 2**32))
    def test_properties(self, n, M, alpha, betas, seed):
        from conftest import CH1_ROWS
        from slotsync.channel import validate_dmc

        dmc = validate_dmc(CH1_ROWS, 0)
        cb = sample_codebook(EnsembleConfig(dmc, TypeDescriptor.from_distribution([0.5, 0.5], n), n, M), make_rng(seed))
        lo, hi = sorted(betas)
        fa1, md1, de1 = exact_error_probabilities(cb, dmc, DetectorParams(alpha, lo))
        fa2, md2, de2 = exact_error_probabilities(cb, dmc, DetectorParams(alpha, hi))
        for v in (fa1, md1, de1, fa2, md2, de2):
            assert -1e-12 <= v <= 1 + 1e-12
        assert md1 <= de1 + 1e-12 and md2 <= de2 + 1e-12
        assert fa2 <= fa1 + 1e-12
        assert md2 >= md1 - 1e-12


class TestDominance:
    def test_self(self, ch1, zero_params):
        cb = book([1, 2], [2, 1])
        from slotsync.detector import _decide, _log_stats, Variant

        ys = np.array(list(itertools.product(range(2), repeat=2)))
        logw, logq0 = _log_stats(cb, ch1, ys)
        labels = _decide(logw, logq0, 2, zero_params, Variant.OPTIMAL)
        rep = dominance_check(cb, ch1, zero_params, labels)
        assert rep.premise and rep.lemma_holds
        assert (rep.fa, rep.md, rep.de) == pytest.approx((rep.fa_star, rep.md_star, rep.de_star))

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_swapped_cells(self, ch1, n):
        p = DetectorParams(0.1, 0.2)
        cb = sample_codebook(EnsembleConfig(ch1, TypeDescriptor.from_distribution([0.5, 0.5], n), n, 2), make_rng(n))

        def swapped(y):
            d = detect_and_decode(cb, ch1, y, p)
            return {0: 0, 1: 2, 2: 1}[d]

        rep = dominance_check(cb, ch1, p, swapped)
        assert rep.lemma_holds
        assert rep.de >= rep.de_star - 1e-12

    def test_random_labelings(self, ch1):
        rng = make_rng(11)
        ens = EnsembleConfig(ch1, TypeDescriptor((2, 1)), 3, 2)
        bad = 0
        for _ in range(1000):
            cb = sample_codebook(ens, rng)
            p = DetectorParams(*rng.uniform(-1, 1, size=2))
            rep = dominance_check(cb, ch1, p, rng.integers(0, 3, size=8))
            bad += not rep.lemma_holds
        assert bad == 0
