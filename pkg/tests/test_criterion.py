import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mzlaw.criterion import (CONVERGENT, DIVERGENT, FINITE, INFINITE, CriterionVerdict,
                             moment_series_check, tail_index, tail_series_classify)
from mzlaw.distributions import (CenteredUniform, LogCorrectedPareto, MomentSpec, ParetoTail,
                                 Rademacher, StPetersburg)
from mzlaw.errors import HypothesisError
from mzlaw.normalizer import NormalizingSeq, sequence_from_L
from mzlaw.svf import Factor, SlowVaryFn, iterated_log_weight, parse

ONE = SlowVaryFn()


def test_series_examples():
    r = tail_series_classify(Rademacher(), NormalizingSeq(1.0, ONE))
    assert r.verdict == CONVERGENT and r.partial_sums[-1] == 0.0
    # oracle: P(X > n) = 2^-k on [2^k, 2^{k+1}), so each dyadic block sums to exactly 1
    r = tail_series_classify(StPetersburg(), NormalizingSeq(1.0, ONE))
    assert r.verdict == DIVERGENT
    assert np.allclose(r.block_sums, 1.0, rtol=1e-12)
    assert r.partial_sums[-1] == pytest.approx(len(r.block_sums))
    seq = NormalizingSeq(1.0, parse("log*loglog4^1.1"))
    assert tail_series_classify(StPetersburg(), seq).verdict == CONVERGENT


def test_series_horizon_floor():
    with pytest.raises(ValueError):
        tail_series_classify(Rademacher(), NormalizingSeq(1.0, ONE), horizon=2**15)


def test_series_workers_identical():
    seq = sequence_from_L(1.5, SlowVaryFn.log(-1 / 3))
    a = tail_series_classify(LogCorrectedPareto(1.5, 3.0), seq, workers=1)
    b = tail_series_classify(LogCorrectedPareto(1.5, 3.0), seq, workers=4)
    assert a.block_sums == b.block_sums and a.to_csv() == b.to_csv()


def test_index_far_out():
    # P(|X| > n^(2/3)) = n^-1 for the symmetric x^-1.5 tail
    assert tail_index(ParetoTail(1.5), NormalizingSeq(1.5, ONE)) == pytest.approx(-1.0, abs=1e-9)


@pytest.mark.parametrize("dist,alpha,L,moment,series", [
    (Rademacher(), 1.0, ONE, FINITE, CONVERGENT),
    (LogCorrectedPareto(1.5, 3.0), 1.5, SlowVaryFn.log(-1 / 3), FINITE, CONVERGENT),
    (StPetersburg(), 1.0, ONE, INFINITE, DIVERGENT),
    (LogCorrectedPareto(1.5, 3.0), 1.5, SlowVaryFn.log((1 - 0.5) / 1.5), INFINITE, DIVERGENT),
    (StPetersburg(), 1.0, iterated_log_weight(0.1), FINITE, CONVERGENT),
    (CenteredUniform(), 1.8, SlowVaryFn.log(2.0), FINITE, CONVERGENT),
])
def test_moment_series_examples(dist, alpha, L, moment, series):
    v = moment_series_check(dist, MomentSpec(alpha, L))
    assert (v.moment_side, v.series_side) == (moment, series)
    assert v.agree and v.conclusive
    assert "monotone_from" in v.moment_diagnostics
    d = v.as_dict()
    assert d["agree"] is True


def test_monotone_hypothesis_refused():
    bad = SlowVaryFn(factors=(Factor(0, 0.0, -2.0),))
    with pytest.raises(HypothesisError):
        moment_series_check(ParetoTail(1.5), MomentSpec(1.0, bad), NormalizingSeq(1.0, ONE))


def test_alpha_mismatch_refused():
    with pytest.raises(HypothesisError):
        moment_series_check(ParetoTail(1.5), MomentSpec(1.2, ONE), NormalizingSeq(1.5, ONE))


def test_agree_semantics():
    assert CriterionVerdict(FINITE, CONVERGENT).agree
    assert not CriterionVerdict(FINITE, DIVERGENT).agree
    assert not CriterionVerdict("inconclusive", DIVERGENT).conclusive


@given(st.sampled_from([1.2, 1.5, 1.8, 2.5]), st.sampled_from([1.0, 1.2, 1.5, 1.8]),
       st.sampled_from([-2.0, -1.0, -0.5, 0.0, 0.5, 1.0]))
@settings(max_examples=40, deadline=None)
def test_agreement_matches_analytic_oracle(tail, alpha, q):
    # E|X|^a log^{aq}|X| with P(|X| > x) = x^-t is finite iff a < t, or a = t and a q < -1
    L = SlowVaryFn.log(q) if q else ONE
    v = moment_series_check(ParetoTail(tail), MomentSpec(alpha, L))
    finite = alpha < tail or (alpha == tail and alpha * q < -1)
    assert v.agree
    assert v.moment_side == (FINITE if finite else INFINITE)
