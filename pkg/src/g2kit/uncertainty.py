"""Uncertainty propagation for alpha estimates.

Two propagation laws cover the supported acquisition styles:

* **Correlated counter means** (``q_form`` / ``repeated_sets``): the four
  counters (triggers, two totals, coincidences) are averaged over repeated
  acquisition sets; their empirical standard deviations of the mean combine
  through the empirical correlation matrix.  The dark fractions enter with a
  conservative bound u(q) = q * u(n_tot) / n_tot.
* **Independent counters** (``three_phase``): each counter appears once and
  carries a Poisson-scaled uncertainty xi * sqrt(N) (plain sqrt(N) for the
  dark counters measured in long dedicated runs), combined in quadrature
  with analytic sensitivities.

All sensitivities are exact partial derivatives; a central finite-difference
helper is provided so tests can cross-check them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .estimator import BudgetRow
from .exceptions import (
    DegenerateInputError,
    DegenerateStatisticsError,
    IncompleteSummaryError,
    SchemaError,
    UndefinedAlphaError,
)
from .histogram import CountSummary

#: order of the correlated counters throughout this module
MEAN_COUNTER_NAMES = ("n_trig", "n1_tot", "n2_tot", "n_coinc")


@dataclass(frozen=True)
class UncertaintyConfig:
    """Knobs for the uncertainty evaluation.

    ``xi`` widens the Poisson standard deviation of counters whose rates are
    not strictly stationary; dark counters default to plain Poisson because
    they come from long dedicated acquisitions.  Counters observed at zero
    get a one-count uncertainty floor so that a null observation still
    carries its Poisson information.
    """

    xi: float = 2.0
    dark_uncertainty_scaled_by_xi: bool = False
    zero_count_floor: bool = True
    finite_difference_rel_step: float = 1e-6

    def __post_init__(self):
        if self.xi < 1.0:
            raise SchemaError(f"xi must be >= 1, got {self.xi}")
        if not 0 < self.finite_difference_rel_step < 1e-2:
            raise SchemaError("finite_difference_rel_step must lie in (0, 1e-2)")


@dataclass(frozen=True)
class RepeatedSetSeries:
    """Per-set counter vectors from a repeated-acquisition session."""

    n_trig: np.ndarray
    n_tot_1: np.ndarray
    n_tot_2: np.ndarray
    n_coinc: np.ndarray

    def __post_init__(self):
        arrays = {}
        for name in ("n_trig", "n_tot_1", "n_tot_2", "n_coinc"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim != 1:
                raise SchemaError(f"{name} must be one-dimensional")
            if not np.all(np.isfinite(arr)):
                raise SchemaError(f"{name} contains non-finite values")
            if np.any(arr < 0):
                raise SchemaError(f"{name} contains negative counts")
            arrays[name] = arr
        lengths = {a.size for a in arrays.values()}
        if len(lengths) != 1:
            raise SchemaError("all counter series must have the same number of sets")
        (n_sets,) = lengths
        if n_sets < 2:
            raise DegenerateStatisticsError(
                f"need at least 2 acquisition sets to estimate spread, got {n_sets}"
            )
        for name, arr in arrays.items():
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_sets(self) -> int:
        return self.n_trig.size

    def as_matrix(self) -> np.ndarray:
        """Sets-by-counters matrix in :data:`MEAN_COUNTER_NAMES` order."""
        return np.column_stack([self.n_trig, self.n_tot_1, self.n_tot_2, self.n_coinc])


@dataclass(frozen=True)
class SetStatistics:
    """Means, standard uncertainties and correlation of the four counters."""

    means: np.ndarray
    u: np.ndarray
    correlation: np.ndarray
    n_sets: int | None = None

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float)
        u = np.asarray(self.u, dtype=float)
        corr = np.asarray(self.correlation, dtype=float)
        if means.shape != (4,) or u.shape != (4,):
            raise SchemaError("means and u must each hold the four counters")
        if corr.shape != (4, 4):
            raise SchemaError("correlation must be a 4x4 matrix")
        if not (np.all(np.isfinite(means)) and np.all(np.isfinite(u)) and np.all(np.isfinite(corr))):
            raise DegenerateStatisticsError("statistics contain non-finite values")
        if np.any(u < 0):
            raise SchemaError("uncertainties cannot be negative")
        if not np.allclose(corr, corr.T, atol=1e-12):
            raise SchemaError("correlation matrix must be symmetric")
        if not np.allclose(np.diag(corr), 1.0, atol=1e-9):
            raise SchemaError("correlation matrix diagonal must be 1")
        if np.any(np.abs(corr) > 1.0 + 1e-9):
            raise SchemaError("correlation coefficients must lie in [-1, 1]")
        for arr in (means, u, corr):
            arr.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "correlation", corr)

    @classmethod
    def from_series(cls, series: RepeatedSetSeries) -> "SetStatistics":
        """Means, standard deviations of the mean, and correlations of a series."""
        matrix = series.as_matrix()
        n = series.n_sets
        means = matrix.mean(axis=0)
        std = matrix.std(axis=0, ddof=1)
        if np.any(std == 0):
            flat = [MEAN_COUNTER_NAMES[i] for i in np.flatnonzero(std == 0)]
            raise DegenerateStatisticsError(
                f"counter(s) {', '.join(flat)} are constant across sets; "
                "correlations are undefined"
            )
        u = std / math.sqrt(n)
        corr = np.corrcoef(matrix, rowvar=False)
        return cls(means=means, u=u, correlation=corr, n_sets=n)


def correlation_matrix(series: RepeatedSetSeries) -> np.ndarray:
    """Empirical 4x4 correlation matrix of the repeated-set counters."""
    return SetStatistics.from_series(series).correlation


# ---------------------------------------------------------------------------
# correlated-mean propagation


def _q_form_terms(means, q1: float, q2: float):
    n_trig, n1, n2, nc = (float(x) for x in means)
    if n_trig <= 0 or n1 <= 0 or n2 <= 0:
        raise DegenerateInputError("counter means must be positive")
    if not (0 <= q1 < 1 and 0 <= q2 < 1):
        raise DegenerateInputError("dark fractions must lie in [0, 1)")
    t = nc * n_trig / (n1 * n2)
    g = q1 + q2 - q1 * q2
    d = (1.0 - q1) * (1.0 - q2)
    return n_trig, n1, n2, nc, t, g, d


def q_form_counter_partials(means, q1: float, q2: float) -> np.ndarray:
    """d alpha / d counter-mean, in :data:`MEAN_COUNTER_NAMES` order."""
    n_trig, n1, n2, nc, t, g, d = _q_form_terms(means, q1, q2)
    return np.array(
        [
            nc / (n1 * n2 * d),
            -t / (n1 * d),
            -t / (n2 * d),
            n_trig / (n1 * n2 * d),
        ]
    )


def q_form_dark_fraction_partials(means, q1: float, q2: float) -> tuple[float, float]:
    """d alpha / d q1, d alpha / d q2 at the counter means."""
    _, _, _, _, t, g, d = _q_form_terms(means, q1, q2)
    common = t - g - d
    return (1.0 - q2) * common / d**2, (1.0 - q1) * common / d**2


def u_correlated(
    stats: SetStatistics, q1: float, q2: float, config: UncertaintyConfig | None = None
) -> tuple[float, list[BudgetRow]]:
    """Counter-mean part of u(alpha) with full correlations.

    Returns the combined contribution and one budget row per counter; the
    rows keep the *signed* sensitivities so the quadratic form can be
    reassembled from the budget alone.
    """
    partials = q_form_counter_partials(stats.means, q1, q2)
    rows = [
        BudgetRow(name, float(m), float(u), float(s))
        for name, m, u, s in zip(MEAN_COUNTER_NAMES, stats.means, stats.u, partials)
    ]
    c = partials * stats.u
    variance = float(c @ stats.correlation @ c)
    if variance < 0:
        # an indefinite empirical correlation matrix can push the quadratic
        # form slightly negative; only roundoff-scale excursions are tolerated
        if variance < -1e-18:
            raise DegenerateStatisticsError(
                f"correlation matrix yields negative variance {variance:.3e}"
            )
        variance = 0.0
    return math.sqrt(variance), rows


def u_q_bound(q: float, n_tot_mean: float, u_n_tot: float) -> float:
    """Bound on u(q) from the spread of the total counter: q * u(n)/n."""
    if n_tot_mean <= 0:
        raise DegenerateInputError("total counter mean must be positive")
    if q < 0 or u_n_tot < 0:
        raise SchemaError("dark fraction and uncertainty must be non-negative")
    return q * u_n_tot / n_tot_mean


def u_total_correlated(u_means: float, u_q1_contrib: float, u_q2_contrib: float) -> float:
    """Combine the counter-mean term with the two dark-fraction terms."""
    return math.sqrt(u_means**2 + u_q1_contrib**2 + u_q2_contrib**2)


# ---------------------------------------------------------------------------
# independent-counter propagation

#: order of the independent counters: shared/singles triggers, totals,
#: darks, coincidence-phase triggers, coincidences
INDEPENDENT_COUNTER_NAMES = (
    "n_trig_singles",
    "n1_tot",
    "n2_tot",
    "n1_dark",
    "n2_dark",
    "n_trig_coinc",
    "n_coinc",
)
_DARK_INDICES = (3, 4)


def alpha_from_counters(counters) -> float:
    """alpha from the seven independent counters.

    With counters (t_s, n1, n2, d1, d2, t_c, nc):

        alpha = (t_s**2 * nc / t_c - (n1*d2 + n2*d1 - d1*d2))
                / ((n1 - d1) * (n2 - d2))
    """
    t_s, n1, n2, d1, d2, t_c, nc = (float(x) for x in counters)
    if t_s <= 0 or t_c <= 0:
        raise DegenerateInputError("trigger counters must be positive")
    m = (n1 - d1) * (n2 - d2)
    if m <= 0:
        raise UndefinedAlphaError(
            "alpha is undefined: photon counts (total minus dark) must be positive"
        )
    a = t_s**2 * nc / t_c
    b = n1 * d2 + n2 * d1 - d1 * d2
    return (a - b) / m


def independent_counter_partials(counters) -> np.ndarray:
    """d alpha / d counter for the seven independent counters."""
    t_s, n1, n2, d1, d2, t_c, nc = (float(x) for x in counters)
    if t_s <= 0 or t_c <= 0:
        raise DegenerateInputError("trigger counters must be positive")
    m = (n1 - d1) * (n2 - d2)
    if m <= 0:
        raise UndefinedAlphaError(
            "alpha is undefined: photon counts (total minus dark) must be positive"
        )
    a = t_s**2 * nc / t_c
    alpha = alpha_from_counters(counters)
    return np.array(
        [
            2.0 * t_s * nc / (t_c * m),
            -d2 / m - alpha / (n1 - d1),
            -d1 / m - alpha / (n2 - d2),
            (alpha - 1.0) / (n1 - d1),
            (alpha - 1.0) / (n2 - d2),
            -a / (t_c * m),
            t_s**2 / (t_c * m),
        ]
    )


def counter_uncertainties(counters, config: UncertaintyConfig) -> np.ndarray:
    """Poisson-scaled standard uncertainties of the independent counters."""
    u = np.empty(7)
    for i, value in enumerate(counters):
        value = float(value)
        if value < 0:
            raise SchemaError("counts cannot be negative")
        base = math.sqrt(value)
        if config.zero_count_floor:
            base = max(base, 1.0)
        scale = config.xi
        if i in _DARK_INDICES and not config.dark_uncertainty_scaled_by_xi:
            scale = 1.0
        u[i] = scale * base
    return u


def summary_counters(summary: CountSummary) -> tuple[float, ...]:
    """Extract the seven independent counters from a summary.

    Per-phase trigger counts fall back to the shared ``n_trig`` when the
    acquisition used a single run for singles and coincidences.
    """
    t_s = summary.n_trig_singles if summary.n_trig_singles is not None else summary.n_trig
    t_c = summary.n_trig_coinc if summary.n_trig_coinc is not None else summary.n_trig
    missing = []
    if t_s is None:
        missing.append("n_trig_singles (or n_trig)")
    if t_c is None:
        missing.append("n_trig_coinc (or n_trig)")
    for name in ("n_tot_1", "n_tot_2", "n_coinc"):
        if getattr(summary, name) is None:
            missing.append(name)
    if missing:
        raise IncompleteSummaryError(
            "summary lacks counters required for independent propagation: "
            + ", ".join(missing)
        )
    return (
        float(t_s),
        float(summary.n_tot_1),
        float(summary.n_tot_2),
        float(summary.dark_count(1)),
        float(summary.dark_count(2)),
        float(t_c),
        float(summary.n_coinc),
    )


def u_independent(
    summary: CountSummary, config: UncertaintyConfig | None = None
) -> tuple[float, list[BudgetRow]]:
    """u(alpha) for independent counters, plus the per-counter budget."""
    if config is None:
        config = UncertaintyConfig()
    counters = summary_counters(summary)
    partials = independent_counter_partials(counters)
    u = counter_uncertainties(counters, config)
    rows = [
        BudgetRow(name, value, float(uu), float(s))
        for name, value, uu, s in zip(INDEPENDENT_COUNTER_NAMES, counters, u, partials)
    ]
    u_alpha = math.sqrt(float(np.sum((partials * u) ** 2)))
    return u_alpha, rows


# ---------------------------------------------------------------------------
# cross-checking


def finite_difference_partial(func, values, index: int, rel_step: float = 1e-6) -> float:
    """Central finite-difference estimate of d func / d values[index]."""
    values = [float(v) for v in values]
    x = values[index]
    h = abs(x) * rel_step if x != 0 else rel_step
    hi = list(values)
    lo = list(values)
    hi[index] = x + h
    lo[index] = x - h
    return (func(hi) - func(lo)) / (2.0 * h)
