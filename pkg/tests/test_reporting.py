"""Estimate documents: formatting, CSV round trips, and consistency checks."""

from __future__ import annotations

import csv

import numpy as np
import pytest

from g2kit import (
    AlphaEstimate,
    CountSummary,
    FormatError,
    SchemaError,
    all_pairs_consistent,
    consistency_check,
    estimate_session,
    format_measurement,
    parse_estimate_file,
    render_budget_csv,
    render_budget_text,
    render_comparison_csv,
    render_comparison_text,
    summary_line,
    write_estimate_file,
)
from g2kit.reporting import parse_estimate_text
from golden import SESSION_A, SESSION_B, SESSION_C, SESSION_D


def _mean_estimate(session):
    return estimate_session(
        session.summary(), "q_form", set_stats=session.stats(), label=session.label
    )


def _three_phase_estimate(session):
    return estimate_session(session.summary(), "three_phase", label=session.label)


# ---------------------------------------------------------------------------
# measurement formatting


@pytest.mark.parametrize(
    "value, uncertainty, expected",
    [
        # two significant figures on u, value rounded to the same place
        (0.012988396404332133, 0.007648082200571961, ("0.0130", "0.0076")),
        (0.03515985385626553, 0.04850686424672877, ("0.035", "0.049")),
        (1234.567, 12.3, ("1235", "12")),
        # rounding 0.00996 -> 0.010 promotes the leading digit one place
        (0.1234, 0.00996, ("0.123", "0.010")),
        # zero uncertainty falls back to plain rendering
        (1.0, 0.0, ("1", "0")),
    ],
)
def test_format_measurement(value, uncertainty, expected):
    assert format_measurement(value, uncertainty) == expected


def test_summary_lines_match_the_published_rounding():
    assert summary_line(_mean_estimate(SESSION_A)) == "alpha = 0.0130 +/- 0.0076 (k=1)"
    assert summary_line(_three_phase_estimate(SESSION_D)) == (
        "alpha = 0.035 +/- 0.049 (k=1)"
    )


def test_budget_text_lists_every_row_and_ends_with_the_summary():
    text = render_budget_text(_mean_estimate(SESSION_A))
    lines = text.splitlines()
    assert lines[0] == "session: session-a"
    assert "protocol: q_form" in lines
    assert any(line.startswith("quantity") for line in lines)
    for quantity in ("q1_dark", "q2_dark", "n_trig", "n1_tot", "n2_tot", "n_coinc"):
        assert any(line.startswith(quantity) for line in lines)
    assert lines[-1] == "alpha = 0.0130 +/- 0.0076 (k=1)"


# ---------------------------------------------------------------------------
# CSV estimate documents


def _assert_estimates_equal(parsed: AlphaEstimate, original: AlphaEstimate):
    assert parsed.alpha == original.alpha
    assert parsed.u_alpha == original.u_alpha
    assert parsed.protocol == original.protocol
    assert parsed.budget == original.budget
    assert parsed.correlated_rows == original.correlated_rows
    assert parsed.xi == original.xi
    assert parsed.label == original.label
    assert parsed.notes == original.notes
    assert parsed.p12_ph_negative == original.p12_ph_negative
    if original.correlation is None:
        assert parsed.correlation is None
    else:
        np.testing.assert_array_equal(parsed.correlation, original.correlation)


def test_csv_round_trip_preserves_full_precision_mean_protocol():
    original = _mean_estimate(SESSION_B)
    parsed = parse_estimate_text(render_budget_csv(original))
    _assert_estimates_equal(parsed, original)


def test_csv_round_trip_preserves_full_precision_three_phase():
    original = _three_phase_estimate(SESSION_C)
    parsed = parse_estimate_text(render_budget_csv(original))
    _assert_estimates_equal(parsed, original)


def test_estimate_file_round_trip(tmp_path):
    original = _three_phase_estimate(SESSION_D)
    path = tmp_path / "estimate.csv"
    write_estimate_file(path, original)
    _assert_estimates_equal(parse_estimate_file(path), original)
    with pytest.raises(FormatError, match="cannot read"):
        parse_estimate_file(tmp_path / "absent.csv")


def test_negative_coincidence_flag_survives_the_round_trip():
    summary = CountSummary(
        n_trig_singles=1000.0,
        n_trig_coinc=1000.0,
        n_tot_1=500.0,
        n_tot_2=500.0,
        n_dark_1=400.0,
        n_dark_2=400.0,
        n_coinc=0.0,
    )
    original = estimate_session(summary, "three_phase", label="noisy")
    assert original.p12_ph_negative
    assert original.alpha < 0
    parsed = parse_estimate_text(render_budget_csv(original))
    _assert_estimates_equal(parsed, original)


@pytest.mark.parametrize(
    "text",
    [
        "",  # nothing at all
        "# k: 1\nvalue,oops\n",  # wrong header
        "# protocol: three_phase\nquantity,value,uncertainty,sensitivity,contribution\n",
        (
            "# protocol: three_phase\n"
            "quantity,value,uncertainty,sensitivity,contribution\n"
            "n_trig,10,1,0.5,0.5\n"
        ),  # missing final alpha row
        (
            "# protocol: three_phase\n"
            "quantity,value,uncertainty,sensitivity,contribution\n"
            "alpha,not_a_number,0.1,,\n"
        ),  # bad float
        (
            "# protocol: three_phase\n"
            "quantity,value,uncertainty,sensitivity,contribution\n"
            "n_trig,10,1,0.5\n"
            "alpha,0.1,0.1,,\n"
        ),  # short budget row
        "# just words without separator\nquantity,value,uncertainty,sensitivity,contribution\nalpha,0.1,0.1,,\n",
        (
            "quantity,value,uncertainty,sensitivity,contribution\n"
            "alpha,0.1,0.1,,\n"
        ),  # missing protocol metadata
    ],
)
def test_malformed_estimate_documents_are_rejected(text):
    with pytest.raises(FormatError):
        parse_estimate_text(text)


def test_tampered_budget_row_is_refused_by_both_renderers():
    estimate = _three_phase_estimate(SESSION_C)
    row = estimate.budget[0]
    object.__setattr__(row, "contribution", row.contribution * 2 + 1.0)
    with pytest.raises(SchemaError, match="contribution"):
        render_budget_csv(estimate)
    with pytest.raises(SchemaError, match="contribution"):
        render_budget_text(estimate)


# ---------------------------------------------------------------------------
# consistency and comparison


def _bare(alpha, u, label=None):
    return AlphaEstimate(alpha=alpha, u_alpha=u, protocol="three_phase", label=label)


def test_consistency_check_math():
    assert not consistency_check(_bare(0.0, 0.001), _bare(0.1, 0.001), k=1.0)
    assert not consistency_check(_bare(0.0, 0.001), _bare(0.1, 0.001), k=2.0)
    # boundary case is inclusive: |d| = 0.005 = sqrt(0.003^2 + 0.004^2)
    assert consistency_check(_bare(0.0, 0.003), _bare(0.005, 0.004), k=1.0)
    assert consistency_check(_bare(0.02, 0.01), _bare(0.02, 0.01), k=1.0)


def test_all_golden_sessions_agree_pairwise_at_k1():
    estimates = [
        _mean_estimate(SESSION_A),
        _mean_estimate(SESSION_B),
        _three_phase_estimate(SESSION_C),
        _three_phase_estimate(SESSION_D),
    ]
    assert all_pairs_consistent(estimates, k=1.0)


def test_comparison_text_reports_each_session_and_each_pair():
    estimates = [_mean_estimate(SESSION_A), _three_phase_estimate(SESSION_C)]
    text = render_comparison_text(estimates)
    assert "session-a" in text
    assert "session-c" in text
    assert "k=1: consistent" in text
    assert "INCONSISTENT" not in text
    clashing = render_comparison_text([_bare(0.0, 0.001, "x"), _bare(0.5, 0.001, "y")])
    assert "INCONSISTENT" in clashing


def test_comparison_csv_structure():
    estimates = [
        _mean_estimate(SESSION_A),
        _three_phase_estimate(SESSION_C),
        _bare(0.9, 0.001, "outlier"),
    ]
    rows = list(csv.reader(render_comparison_csv(estimates).splitlines()))
    assert rows[0] == ["session", "protocol", "alpha", "u_alpha"]
    assert [r[0] for r in rows[1:4]] == ["session-a", "session-c", "outlier"]
    assert float(rows[1][2]) == estimates[0].alpha
    assert rows[4] == []
    assert rows[5] == [
        "session_a", "session_b", "abs_difference", "combined_u",
        "consistent_k1", "consistent_k2",
    ]
    pair_rows = rows[6:]
    assert len(pair_rows) == 3
    verdicts = {(r[0], r[1]): r[4] for r in pair_rows}
    assert verdicts[("session-a", "session-c")] == "true"
    assert verdicts[("session-a", "outlier")] == "false"
    assert verdicts[("session-c", "outlier")] == "false"


def test_unnamed_estimates_get_positional_names():
    text = render_comparison_text([_bare(0.01, 0.01), _bare(0.02, 0.01)])
    assert "estimate-1" in text
    assert "estimate-2" in text


def test_empty_comparison_is_rejected():
    with pytest.raises(FormatError):
        render_comparison_text([])
    with pytest.raises(FormatError):
        render_comparison_csv([])
