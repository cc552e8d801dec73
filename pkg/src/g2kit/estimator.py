"""Multi-photon suppression estimation for heralded single-photon sources.

The figure of merit ``alpha`` approximates the heralded second-order
correlation at zero delay.  With per-gate detection probabilities measured
behind a beam splitter it is

    alpha = p12_ph / (p1_ph * p2_ph)

where ``p_i_ph = (n_tot_i - n_dark_i) / n_trig_i`` is the per-gate photon
detection probability of detector ``i`` and ``p12_ph`` is the two-detector
photon coincidence probability after subtracting accidental combinations of
dark counts with anything else:

    p12_ph = p12_tot - p1_tot*p2_dark - p1_dark*p2_tot + p1_dark*p2_dark

An equivalent form uses the dark fractions ``q_i = p_i_dark / p_i_tot``:

    alpha = (p12_tot - p1_tot*p2_tot*(q1 + q2 - q1*q2))
            / (p1_tot*(1 - q1) * p2_tot*(1 - q2))

Blocking of a gate by an early dark count (a "null" event) rescales both
numerator and denominator by the same factor, so alpha is exactly invariant
under the null-event correction; the correction is still applied so that the
reported per-gate probabilities refer to gates that could have detected a
photon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import (
    ConfigurationError,
    DegenerateInputError,
    IncompleteSummaryError,
    SchemaError,
    UndefinedAlphaError,
)
from .histogram import CountSummary

PROTOCOLS = ("repeated_sets", "three_phase", "q_form")


@dataclass(frozen=True)
class DerivedProbabilities:
    """Per-gate probabilities derived from a count summary.

    ``p1_ph``/``p2_ph``/``p12_ph`` include the null-event rescaling when it
    was applied; the total and dark probabilities always refer to the raw
    per-trigger normalisation.
    """

    p1_tot: float
    p2_tot: float
    p1_dark: float
    p2_dark: float
    p1_ph: float
    p2_ph: float
    p12_tot: float
    p12_ph: float
    p12_ph_negative: bool
    null_factors: tuple[float, float] = (1.0, 1.0)


@dataclass(frozen=True)
class BudgetRow:
    """One uncertainty-budget line: contribution = |sensitivity| * uncertainty."""

    quantity: str
    value: float
    uncertainty: float
    sensitivity: float
    contribution: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        # normalize numpy scalars so the document renderers emit plain floats
        for name in ("value", "uncertainty", "sensitivity"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.uncertainty < 0:
            raise SchemaError(f"uncertainty of {self.quantity} cannot be negative")
        expected = abs(self.sensitivity) * self.uncertainty
        if self.contribution is None:
            object.__setattr__(self, "contribution", expected)
        else:
            object.__setattr__(self, "contribution", float(self.contribution))
            if not math.isclose(self.contribution, expected, rel_tol=1e-9, abs_tol=1e-300):
                raise SchemaError(
                    f"contribution of {self.quantity} must equal |sensitivity|*uncertainty "
                    f"({self.contribution} vs {expected})"
                )


@dataclass(frozen=True)
class AlphaEstimate:
    """An alpha value with its k=1 standard uncertainty and budget."""

    alpha: float
    u_alpha: float
    protocol: str
    budget: tuple[BudgetRow, ...] = ()
    correlation: np.ndarray | None = None
    correlated_rows: tuple[int, ...] = ()
    xi: float | None = None
    p12_ph_negative: bool = False
    label: str | None = None
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "u_alpha", float(self.u_alpha))
        if self.xi is not None:
            object.__setattr__(self, "xi", float(self.xi))
        if self.protocol not in PROTOCOLS:
            raise ConfigurationError(
                f"unknown protocol {self.protocol!r}, expected one of {PROTOCOLS}"
            )
        if self.u_alpha < 0:
            raise SchemaError("u_alpha cannot be negative")

    def recompute_u(self) -> float:
        """Recombine the budget rows into u(alpha) under the protocol's law.

        Correlated rows (named by ``correlated_rows``) combine through the
        stored correlation matrix with signed contributions; all other rows
        add in quadrature.
        """
        signed = np.array([r.sensitivity * r.uncertainty for r in self.budget])
        corr_idx = list(self.correlated_rows)
        total = 0.0
        if corr_idx:
            if self.correlation is None:
                raise ConfigurationError("correlated_rows set without a correlation matrix")
            c = signed[corr_idx]
            total += float(c @ np.asarray(self.correlation) @ c)
        rest = [i for i in range(len(self.budget)) if i not in corr_idx]
        total += float(np.sum(signed[rest] ** 2))
        return math.sqrt(total)


# ---------------------------------------------------------------------------
# probability algebra


def photon_probability(n_tot: float, n_dark: float, n_trig: float) -> float:
    """Per-gate photon detection probability (n_tot - n_dark) / n_trig."""
    if n_trig <= 0:
        raise DegenerateInputError(f"trigger count must be positive, got {n_trig}")
    if n_tot < 0 or n_dark < 0:
        raise SchemaError("counts cannot be negative")
    return (n_tot - n_dark) / n_trig


def coincidence_photon_probability(
    p12_tot: float, p1_tot: float, p2_tot: float, p1_dark: float, p2_dark: float
) -> float:
    """Two-detector photon coincidence probability.

    Subtracts dark-anything accidentals from the raw coincidence probability;
    the result may be negative within statistical noise and is returned
    unclamped.
    """
    return p12_tot - p1_tot * p2_dark - p1_dark * p2_tot + p1_dark * p2_dark


def alpha_from_probabilities(probs: DerivedProbabilities) -> float:
    """alpha = p12_ph / (p1_ph * p2_ph)."""
    if probs.p1_ph <= 0 or probs.p2_ph <= 0:
        raise UndefinedAlphaError(
            "alpha is undefined: per-detector photon probabilities must be positive "
            f"(got {probs.p1_ph:.6g}, {probs.p2_ph:.6g})"
        )
    return probs.p12_ph / (probs.p1_ph * probs.p2_ph)


def alpha_q_form(
    p12_tot: float, p1_tot: float, p2_tot: float, q1_dark: float, q2_dark: float
) -> float:
    """alpha written in terms of total probabilities and dark fractions.

    Algebraically identical to the subtract-then-divide route whenever all
    probabilities share one trigger normalisation.
    """
    for i, q in ((1, q1_dark), (2, q2_dark)):
        if not 0.0 <= q < 1.0:
            raise UndefinedAlphaError(
                f"alpha is undefined: q{i}_dark must lie in [0, 1), got {q}"
            )
    if p1_tot <= 0 or p2_tot <= 0:
        raise UndefinedAlphaError(
            f"alpha is undefined: total probabilities must be positive "
            f"(got {p1_tot:.6g}, {p2_tot:.6g})"
        )
    numerator = p12_tot - p1_tot * p2_tot * (q1_dark + q2_dark - q1_dark * q2_dark)
    denominator = p1_tot * (1.0 - q1_dark) * p2_tot * (1.0 - q2_dark)
    return numerator / denominator


# ---------------------------------------------------------------------------
# null-event correction


def null_correction(summary: CountSummary) -> tuple[CountSummary, float, float]:
    """Remove gates blocked by a pre-peak count from the per-detector books.

    Returns the corrected summary plus the rescaling factors
    ``q_i = n_trig / (n_trig - n_null_i)``.  Null events are subtracted from
    the trigger, dark and total counters of their detector; alpha computed
    from the corrected probabilities equals the uncorrected value exactly.
    """
    if summary.n_trig is None:
        raise IncompleteSummaryError("null correction requires the shared n_trig")
    n_trig = summary.n_trig
    nulls = []
    darks = []
    for det in (1, 2):
        null = getattr(summary, f"n_null_{det}")
        if null is None:
            null = 0.0
        dark = summary.dark_count(det)
        if null > dark:
            raise SchemaError(
                f"n_null_{det} = {null} exceeds the dark count {dark}; "
                "null events are a subset of dark counts"
            )
        if null >= n_trig:
            raise DegenerateInputError(
                f"n_null_{det} = {null} leaves no usable gates out of {n_trig}"
            )
        nulls.append(null)
        darks.append(dark)
    q1 = n_trig / (n_trig - nulls[0])
    q2 = n_trig / (n_trig - nulls[1])
    corrected = replace(
        summary,
        n_trig_1=n_trig - nulls[0],
        n_trig_2=n_trig - nulls[1],
        n_tot_1=summary.n_tot_1 - nulls[0],
        n_tot_2=summary.n_tot_2 - nulls[1],
        n_dark_1=darks[0] - nulls[0],
        n_dark_2=darks[1] - nulls[1],
        n_null_1=0.0,
        n_null_2=0.0,
        q_dark_1=None,
        q_dark_2=None,
    )
    return corrected, q1, q2


def _has_nulls(summary: CountSummary) -> bool:
    return bool(summary.n_null_1) or bool(summary.n_null_2)


def derive_probabilities(
    summary: CountSummary, apply_null_correction: bool = True
) -> DerivedProbabilities:
    """Compute all per-gate probabilities for one session.

    Totals normalise by the singles trigger count (per-detector counts win
    over ``n_trig_singles``, which wins over the shared ``n_trig``); the
    coincidence probability normalises by ``n_trig_coinc`` or ``n_trig``.
    When null counts are present and correction is requested, the photon
    probabilities are rescaled by ``q_i`` and the coincidence photon
    probability by ``q1*q2``.
    """
    for det in (1, 2):
        if getattr(summary, f"n_tot_{det}") is None:
            raise IncompleteSummaryError(f"n_tot_{det} is required")
    if summary.n_coinc is None:
        raise IncompleteSummaryError("n_coinc is required")

    def singles_trigger(det: int) -> float:
        per_det = getattr(summary, f"n_trig_{det}")
        if per_det is not None:
            return per_det
        if summary.n_trig_singles is not None:
            return summary.n_trig_singles
        if summary.n_trig is not None:
            return summary.n_trig
        raise IncompleteSummaryError("no trigger count available for singles")

    trig_coinc = summary.n_trig_coinc if summary.n_trig_coinc is not None else summary.n_trig
    if trig_coinc is None:
        raise IncompleteSummaryError("no trigger count available for coincidences")
    if trig_coinc <= 0:
        raise DegenerateInputError("coincidence trigger count must be positive")

    q_factors = (1.0, 1.0)
    work = summary
    if apply_null_correction and _has_nulls(summary):
        work, q1, q2 = null_correction(summary)
        q_factors = (q1, q2)

    trig = (singles_trigger(1), singles_trigger(2))
    for det, t in zip((1, 2), trig):
        if t <= 0:
            raise DegenerateInputError(f"trigger count for detector {det} must be positive")

    # raw per-trigger probabilities of the (possibly corrected) counters
    def tot(det):
        return getattr(work, f"n_tot_{det}")

    trig_w = (work.trigger_count(1) if work.n_trig_1 is not None else trig[0],
              work.trigger_count(2) if work.n_trig_2 is not None else trig[1])
    p_tot = (tot(1) / trig_w[0], tot(2) / trig_w[1])
    p_dark = (work.dark_count(1) / trig_w[0], work.dark_count(2) / trig_w[1])
    p_ph = (
        photon_probability(tot(1), work.dark_count(1), trig_w[0]),
        photon_probability(tot(2), work.dark_count(2), trig_w[1]),
    )

    # accidental subtraction on the *uncorrected* probability set, then the
    # exact null rescaling of the coincidence term
    raw_trig = (singles_trigger(1), singles_trigger(2))
    raw_p_tot = (summary.n_tot_1 / raw_trig[0], summary.n_tot_2 / raw_trig[1])
    raw_p_dark = (
        summary.dark_count(1) / raw_trig[0],
        summary.dark_count(2) / raw_trig[1],
    )
    p12_tot = summary.n_coinc / trig_coinc
    p12_ph = coincidence_photon_probability(
        p12_tot, raw_p_tot[0], raw_p_tot[1], raw_p_dark[0], raw_p_dark[1]
    )
    p12_ph *= q_factors[0] * q_factors[1]
    return DerivedProbabilities(
        p1_tot=p_tot[0],
        p2_tot=p_tot[1],
        p1_dark=p_dark[0],
        p2_dark=p_dark[1],
        p1_ph=p_ph[0],
        p2_ph=p_ph[1],
        p12_tot=p12_tot,
        p12_ph=p12_ph,
        p12_ph_negative=p12_ph < 0.0,
        null_factors=q_factors,
    )


# ---------------------------------------------------------------------------
# session-level estimation


def estimate_session(
    summary: CountSummary | None,
    protocol: str,
    config=None,
    set_stats=None,
    label: str | None = None,
    apply_null_correction: bool = True,
) -> AlphaEstimate:
    """Estimate alpha and its k=1 uncertainty for one measurement session.

    * ``three_phase``: alpha from the summary's counters via the explicit
      dark subtraction; uncertainty from independent Poisson-scaled counter
      uncertainties.
    * ``q_form`` / ``repeated_sets``: alpha from counter means and dark
      fractions; uncertainty from the empirical covariance of the repeated
      sets plus the bounded dark-fraction uncertainties.  ``repeated_sets``
      accepts a :class:`~g2kit.uncertainty.RepeatedSetSeries` as
      ``set_stats``; ``q_form`` wants ready-made
      :class:`~g2kit.uncertainty.SetStatistics`.
    """
    from . import uncertainty as unc

    if config is None:
        config = unc.UncertaintyConfig()
    if protocol not in PROTOCOLS:
        raise ConfigurationError(
            f"unknown protocol {protocol!r}, expected one of {PROTOCOLS}"
        )

    if protocol == "three_phase":
        if summary is None:
            raise IncompleteSummaryError("three_phase requires a count summary")
        probs = derive_probabilities(summary, apply_null_correction=apply_null_correction)
        alpha = alpha_from_probabilities(probs)
        u_alpha, rows = unc.u_independent(summary, config)
        return AlphaEstimate(
            alpha=alpha,
            u_alpha=u_alpha,
            protocol=protocol,
            budget=tuple(rows),
            xi=config.xi,
            p12_ph_negative=probs.p12_ph_negative,
            label=label,
            notes=_model_notes(probs),
        )

    # mean-based protocols
    if set_stats is None:
        raise IncompleteSummaryError(
            f"{protocol} requires repeated-set statistics (means, uncertainties, correlation)"
        )
    if isinstance(set_stats, unc.RepeatedSetSeries):
        stats = unc.SetStatistics.from_series(set_stats)
    else:
        stats = set_stats
    if summary is None:
        raise IncompleteSummaryError(f"{protocol} requires dark fractions in the summary")
    q1 = summary.dark_fraction(1)
    q2 = summary.dark_fraction(2)
    m_trig, m_tot1, m_tot2, m_coinc = stats.means
    if m_trig <= 0 or m_tot1 <= 0 or m_tot2 <= 0:
        raise DegenerateInputError("counter means must be positive")
    p1_tot = m_tot1 / m_trig
    p2_tot = m_tot2 / m_trig
    p12_tot = m_coinc / m_trig
    alpha = alpha_q_form(p12_tot, p1_tot, p2_tot, q1, q2)

    u_p, mean_rows = unc.u_correlated(stats, q1, q2, config)
    u_q1 = unc.u_q_bound(q1, m_tot1, stats.u[1])
    u_q2 = unc.u_q_bound(q2, m_tot2, stats.u[2])
    dq1, dq2 = unc.q_form_dark_fraction_partials(stats.means, q1, q2)
    q_rows = [
        BudgetRow("q1_dark", q1, u_q1, dq1),
        BudgetRow("q2_dark", q2, u_q2, dq2),
    ]
    u_alpha = unc.u_total_correlated(u_p, q_rows[0].contribution, q_rows[1].contribution)
    budget = tuple(q_rows) + tuple(mean_rows)

    p1_ph = p1_tot * (1 - q1)
    p2_ph = p2_tot * (1 - q2)
    p12_ph = alpha * p1_ph * p2_ph
    probs = DerivedProbabilities(
        p1_tot=p1_tot,
        p2_tot=p2_tot,
        p1_dark=p1_tot * q1,
        p2_dark=p2_tot * q2,
        p1_ph=p1_ph,
        p2_ph=p2_ph,
        p12_tot=p12_tot,
        p12_ph=p12_ph,
        p12_ph_negative=p12_ph < 0.0,
    )
    return AlphaEstimate(
        alpha=alpha,
        u_alpha=u_alpha,
        protocol=protocol,
        budget=budget,
        correlation=stats.correlation,
        correlated_rows=(2, 3, 4, 5),
        p12_ph_negative=probs.p12_ph_negative,
        label=label,
        notes=_model_notes(probs),
    )


def _model_notes(probs: DerivedProbabilities) -> tuple[str, ...]:
    notes = []
    largest = max(probs.p1_tot, probs.p2_tot)
    if largest > 0.1:
        notes.append(
            f"per-gate detection probability {largest:.3g} exceeds 0.1; "
            "the accidental-subtraction model assumes small probabilities"
        )
    if probs.p12_ph_negative:
        notes.append(
            "coincidence photon probability is negative after accidental "
            "subtraction (statistically compatible with zero)"
        )
    return tuple(notes)
