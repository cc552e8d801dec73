"""Alpha estimation: probability algebra, null correction, session protocols."""

from __future__ import annotations

import numpy as np
import pytest

from g2kit import (
    BudgetRow,
    ConfigurationError,
    CountSummary,
    DegenerateInputError,
    DerivedProbabilities,
    IncompleteSummaryError,
    RepeatedSetSeries,
    SchemaError,
    UncertaintyConfig,
    UndefinedAlphaError,
    alpha_from_probabilities,
    alpha_q_form,
    coincidence_photon_probability,
    derive_probabilities,
    estimate_session,
    null_correction,
    photon_probability,
)
from golden import SESSION_A, SESSION_B, SESSION_C, SESSION_D


def _probs(p1_ph, p2_ph, p12_ph, **kwargs):
    defaults = dict(
        p1_tot=p1_ph,
        p2_tot=p2_ph,
        p1_dark=0.0,
        p2_dark=0.0,
        p12_tot=p12_ph,
        p12_ph_negative=p12_ph < 0,
    )
    defaults.update(kwargs)
    return DerivedProbabilities(p1_ph=p1_ph, p2_ph=p2_ph, p12_ph=p12_ph, **defaults)


# ---------------------------------------------------------------------------
# probability algebra


def test_photon_probability_frozen_value():
    # oracle: (453500 - 50700) / 123807000 evaluated directly in float64
    assert photon_probability(453500.0, 50700.0, 1.23807e8) == 0.003253450935730613


def test_photon_probability_edges():
    assert photon_probability(100, 100, 1000) == 0.0
    with pytest.raises(DegenerateInputError):
        photon_probability(10, 1, 0)
    with pytest.raises(SchemaError):
        photon_probability(-1, 0, 10)


def test_coincidence_probability_with_zero_darks_is_raw():
    assert coincidence_photon_probability(1e-4, 0.01, 0.02, 0.0, 0.0) == 1e-4


def test_coincidence_probability_frozen_value():
    # oracle: straight-line accidental subtraction on the session-d counters,
    # p12_tot = 690/1.23733e8 and totals/darks over 1.23807e8 gates
    ts, tc = 1.23807e8, 1.23733e8
    p12 = coincidence_photon_probability(
        690.0 / tc, 453500.0 / ts, 474200.0 / ts, 50700.0 / ts, 140800.0 / ts
    )
    assert p12 == 3.0804326519153314e-07


def test_coincidence_probability_may_be_negative():
    p12 = coincidence_photon_probability(1e-8, 0.01, 0.01, 0.005, 0.005)
    assert p12 < 0.0


def test_alpha_fixed_point_for_independent_arms():
    assert alpha_from_probabilities(_probs(0.01, 0.02, 0.01 * 0.02)) == 1.0


def test_alpha_requires_positive_photon_probabilities():
    with pytest.raises(UndefinedAlphaError):
        alpha_from_probabilities(_probs(0.0, 0.02, 1e-6))
    with pytest.raises(UndefinedAlphaError):
        alpha_from_probabilities(_probs(0.01, -1e-5, 1e-6))


def test_alpha_q_form_trivial_and_golden():
    assert alpha_q_form(0.01 * 0.02, 0.01, 0.02, 0.0, 0.0) == 1.0
    for session in (SESSION_A, SESSION_B):
        nt, n1, n2, nc = session.means
        alpha = alpha_q_form(nc / nt, n1 / nt, n2 / nt, session.q1_dark, session.q2_dark)
        assert alpha == pytest.approx(session.frozen_alpha, rel=1e-12)


def test_alpha_q_form_rejects_degenerate_inputs():
    with pytest.raises(UndefinedAlphaError):
        alpha_q_form(1e-6, 0.01, 0.02, 1.0, 0.0)
    with pytest.raises(UndefinedAlphaError):
        alpha_q_form(1e-6, 0.01, 0.02, 0.0, -0.1)
    with pytest.raises(UndefinedAlphaError):
        alpha_q_form(1e-6, 0.0, 0.02, 0.1, 0.1)


def test_q_form_equals_subtract_then_divide():
    # the two algebraic routes agree whenever all probabilities share one
    # trigger normalisation
    rng = np.random.default_rng(20260817)
    for _ in range(200):
        n_trig = float(rng.integers(10_000, 10_000_000))
        dark1 = float(rng.integers(1, 5_000))
        dark2 = float(rng.integers(1, 5_000))
        ph1 = float(rng.integers(1, 50_000))
        ph2 = float(rng.integers(1, 50_000))
        n_coinc = float(rng.integers(1, 200))
        summary = CountSummary(
            n_trig=n_trig,
            n_tot_1=ph1 + dark1,
            n_tot_2=ph2 + dark2,
            n_dark_1=dark1,
            n_dark_2=dark2,
            n_coinc=n_coinc,
        )
        direct = alpha_from_probabilities(derive_probabilities(summary))
        q_form = alpha_q_form(
            n_coinc / n_trig,
            (ph1 + dark1) / n_trig,
            (ph2 + dark2) / n_trig,
            dark1 / (ph1 + dark1),
            dark2 / (ph2 + dark2),
        )
        assert q_form == pytest.approx(direct, rel=1e-12)


def test_alpha_strictly_increases_with_coincidences():
    def alpha_at(nc):
        summary = CountSummary(
            n_trig=1e6, n_tot_1=1e4, n_tot_2=1.2e4, n_dark_1=500, n_dark_2=600, n_coinc=nc
        )
        return alpha_from_probabilities(derive_probabilities(summary))

    values = [alpha_at(nc) for nc in (1.0, 5.0, 25.0, 125.0)]
    assert all(b > a for a, b in zip(values, values[1:]))


def test_alpha_invariant_under_counter_rescaling():
    base = dict(n_tot_1=1e4, n_tot_2=1.2e4, n_dark_1=500.0, n_dark_2=600.0, n_coinc=40.0)
    a_ref = alpha_from_probabilities(
        derive_probabilities(CountSummary(n_trig=1e6, **base))
    )
    for lam in (3.0, 0.5, 7.25):
        scaled = CountSummary(
            n_trig=1e6 * lam, **{k: v * lam for k, v in base.items()}
        )
        a = alpha_from_probabilities(derive_probabilities(scaled))
        assert a == pytest.approx(a_ref, rel=1e-12)


# ---------------------------------------------------------------------------
# null correction


def test_null_correction_factors_and_bookkeeping():
    summary = CountSummary(
        n_trig=100.0,
        n_tot_1=30.0,
        n_tot_2=40.0,
        n_dark_1=25.0,
        n_dark_2=10.0,
        n_null_1=20.0,
        n_null_2=5.0,
        n_coinc=2.0,
    )
    corrected, q1, q2 = null_correction(summary)
    assert (q1, q2) == (1.25, 100 / 95)
    assert corrected.n_trig_1 == 80.0 and corrected.n_trig_2 == 95.0
    assert corrected.n_tot_1 == 10.0 and corrected.n_tot_2 == 35.0
    assert corrected.n_dark_1 == 5.0 and corrected.n_dark_2 == 5.0
    assert corrected.n_null_1 == 0.0 and corrected.n_null_2 == 0.0


def test_null_correction_leaves_alpha_invariant():
    summary = CountSummary(
        n_trig=1e6,
        n_tot_1=2e4,
        n_tot_2=2.4e4,
        n_dark_1=3000.0,
        n_dark_2=2500.0,
        n_null_1=1200.0,
        n_null_2=800.0,
        n_coinc=55.0,
    )
    with_correction = alpha_from_probabilities(
        derive_probabilities(summary, apply_null_correction=True)
    )
    without = alpha_from_probabilities(
        derive_probabilities(summary, apply_null_correction=False)
    )
    assert with_correction == pytest.approx(without, rel=1e-12)
    # and the correction rescales the probabilities themselves
    probs = derive_probabilities(summary, apply_null_correction=True)
    raw = derive_probabilities(summary, apply_null_correction=False)
    q1, q2 = probs.null_factors
    assert probs.p1_ph == pytest.approx(raw.p1_ph * q1, rel=1e-12)
    assert probs.p12_ph == pytest.approx(raw.p12_ph * q1 * q2, rel=1e-12)


def test_null_correction_validation():
    with pytest.raises(SchemaError):  # nulls are a subset of darks
        null_correction(
            CountSummary(n_trig=100, n_tot_1=50, n_tot_2=50, n_dark_1=5, n_dark_2=5,
                         n_null_1=10, n_coinc=0)
        )
    with pytest.raises(DegenerateInputError):  # no gates left
        null_correction(
            CountSummary(n_trig=10, n_tot_1=50, n_tot_2=50, n_dark_1=20, n_dark_2=5,
                         n_null_1=10, n_coinc=0)
        )
    with pytest.raises(IncompleteSummaryError):
        null_correction(CountSummary(n_tot_1=50, n_tot_2=50, n_dark_1=5, n_dark_2=5))


# ---------------------------------------------------------------------------
# derive_probabilities


def test_trigger_priority_per_detector_then_singles_then_shared():
    base = dict(n_tot_1=100.0, n_tot_2=100.0, n_dark_1=0.0, n_dark_2=0.0, n_coinc=1.0)
    shared = derive_probabilities(CountSummary(n_trig=1000.0, **base))
    assert shared.p1_tot == 0.1
    singles = derive_probabilities(
        CountSummary(n_trig=1000.0, n_trig_singles=2000.0, n_trig_coinc=500.0, **base)
    )
    assert singles.p1_tot == 0.05
    assert singles.p12_tot == 1.0 / 500.0
    per_det = derive_probabilities(
        CountSummary(n_trig=1000.0, n_trig_singles=2000.0, n_trig_1=4000.0,
                     n_trig_2=2000.0, **base)
    )
    assert per_det.p1_tot == 0.025
    assert per_det.p2_tot == 0.05


def test_derive_probabilities_requires_counters():
    with pytest.raises(IncompleteSummaryError):
        derive_probabilities(CountSummary(n_trig=10, n_tot_1=1, n_coinc=0))
    with pytest.raises(IncompleteSummaryError):
        derive_probabilities(CountSummary(n_trig=10, n_tot_1=1, n_tot_2=1))
    with pytest.raises(IncompleteSummaryError):
        derive_probabilities(CountSummary(n_tot_1=1, n_tot_2=1, n_coinc=0))
    with pytest.raises(DegenerateInputError):
        derive_probabilities(
            CountSummary(n_trig=0.0, n_tot_1=1, n_tot_2=1, n_dark_1=0, n_dark_2=0, n_coinc=0)
        )


def test_negative_coincidence_probability_is_flagged_not_clamped():
    summary = CountSummary(
        n_trig=1e6, n_tot_1=1e4, n_tot_2=1e4, n_dark_1=5e3, n_dark_2=5e3, n_coinc=0.0
    )
    probs = derive_probabilities(summary)
    assert probs.p12_ph < 0.0
    assert probs.p12_ph_negative


# ---------------------------------------------------------------------------
# estimate_session


def test_three_phase_golden_sessions():
    for session in (SESSION_C, SESSION_D):
        est = estimate_session(session.summary(), "three_phase",
                               config=UncertaintyConfig(xi=2.0))
        assert est.alpha == pytest.approx(session.frozen_alpha, rel=1e-12)
        assert est.u_alpha == pytest.approx(session.frozen_u, rel=1e-12)
        assert est.protocol == "three_phase"
        assert est.xi == 2.0
        assert [r.quantity for r in est.budget] == [
            "n_trig_singles", "n1_tot", "n2_tot", "n1_dark", "n2_dark",
            "n_trig_coinc", "n_coinc",
        ]
        assert est.recompute_u() == pytest.approx(est.u_alpha, rel=1e-12)


def test_q_form_golden_sessions():
    for session in (SESSION_A, SESSION_B):
        est = estimate_session(
            session.summary(), "q_form", set_stats=session.stats()
        )
        assert est.alpha == pytest.approx(session.frozen_alpha, rel=1e-12)
        assert est.u_alpha == pytest.approx(session.frozen_u, rel=1e-12)
        assert [r.quantity for r in est.budget] == [
            "q1_dark", "q2_dark", "n_trig", "n1_tot", "n2_tot", "n_coinc",
        ]
        assert est.correlated_rows == (2, 3, 4, 5)
        assert est.recompute_u() == pytest.approx(est.u_alpha, rel=1e-12)
        # the dark-fraction rows carry the bounded uncertainties
        assert est.budget[0].uncertainty == pytest.approx(session.frozen_u_q[0], rel=1e-12)
        assert est.budget[1].uncertainty == pytest.approx(session.frozen_u_q[1], rel=1e-12)


def test_repeated_sets_protocol_accepts_a_series():
    # synthetic 5-set series; expectation computed from its exact means
    series = RepeatedSetSeries(
        n_trig=np.array([1e6, 1.01e6, 0.99e6, 1.02e6, 0.98e6]),
        n_tot_1=np.array([10_000.0, 10_100, 9_900, 10_200, 9_800]),
        n_tot_2=np.array([12_000.0, 12_120, 11_880, 12_240, 11_760]),
        n_coinc=np.array([5.0, 6.0, 4.0, 7.0, 3.0]),
    )
    summary = CountSummary(q_dark_1=0.05, q_dark_2=0.04)
    est = estimate_session(summary, "repeated_sets", set_stats=series)
    m = series.as_matrix().mean(axis=0)
    expected = alpha_q_form(m[3] / m[0], m[1] / m[0], m[2] / m[0], 0.05, 0.04)
    assert est.alpha == pytest.approx(expected, rel=1e-12)
    assert est.recompute_u() == pytest.approx(est.u_alpha, rel=1e-12)


def test_estimate_session_argument_validation():
    with pytest.raises(ConfigurationError):
        estimate_session(SESSION_C.summary(), "bogus_protocol")
    with pytest.raises(IncompleteSummaryError):
        estimate_session(None, "three_phase")
    with pytest.raises(IncompleteSummaryError):
        estimate_session(SESSION_A.summary(), "q_form")  # no stats
    with pytest.raises(IncompleteSummaryError):
        estimate_session(None, "q_form", set_stats=SESSION_A.stats())
    with pytest.raises(DegenerateInputError):
        estimate_session(
            CountSummary(q_dark_1=0.0, q_dark_2=0.0),
            "q_form",
            set_stats=SESSION_A.stats().__class__(
                means=np.array([0.0, 1.0, 1.0, 0.0]),
                u=np.ones(4),
                correlation=np.eye(4),
            ),
        )


def test_poissonian_fixed_point_survives_dark_subtraction():
    # p12_ph constructed to equal p1_ph * p2_ph exactly, darks nonzero
    n_trig = 1e6
    p1_ph, p2_ph = 8e-3, 1.5e-2
    p1_dark, p2_dark = 2e-3, 5e-3
    p1_tot, p2_tot = p1_ph + p1_dark, p2_ph + p2_dark
    p12_tot = (
        p1_ph * p2_ph + p1_tot * p2_dark + p1_dark * p2_tot - p1_dark * p2_dark
    )
    summary = CountSummary(
        n_trig=n_trig,
        n_tot_1=p1_tot * n_trig,
        n_tot_2=p2_tot * n_trig,
        n_dark_1=p1_dark * n_trig,
        n_dark_2=p2_dark * n_trig,
        n_coinc=p12_tot * n_trig,
    )
    est = estimate_session(summary, "three_phase")
    assert est.alpha == pytest.approx(1.0, rel=1e-12)


def test_model_notes_flag_large_probabilities_and_negative_coincidences():
    big = CountSummary(
        n_trig=1000.0, n_tot_1=200.0, n_tot_2=10.0, n_dark_1=0.0, n_dark_2=0.0,
        n_coinc=2.0,
    )
    est = estimate_session(big, "three_phase")
    assert any("exceeds 0.1" in note for note in est.notes)

    negative = CountSummary(
        n_trig=1e6, n_tot_1=1e4, n_tot_2=1e4, n_dark_1=5e3, n_dark_2=5e3, n_coinc=0.0
    )
    est = estimate_session(negative, "three_phase")
    assert est.p12_ph_negative
    assert est.alpha < 0.0
    assert any("negative" in note for note in est.notes)


# ---------------------------------------------------------------------------
# budget rows


def test_budget_row_contribution_is_derived_and_checked():
    row = BudgetRow("n_coinc", 43.0, 13.1, -0.00146)
    assert row.contribution == pytest.approx(0.00146 * 13.1)
    with pytest.raises(SchemaError):
        BudgetRow("n_coinc", 43.0, 13.1, -0.00146, contribution=0.5)
    with pytest.raises(SchemaError):
        BudgetRow("n_coinc", 43.0, -1.0, 0.001)
