"""Trigger-relative detection histograms, region bookkeeping and coincidences.

Detector events are binned by their delay from the most recent prior trigger.
Three half-open regions partition the analysis of each detector's histogram:

* ``peak``            photon arrival region,
* ``dark_reference``  a peak-width window sampling the dark level,
* ``null``            the pre-peak region, whose counts block the gate
                      before the photon can arrive.

From the region counts the per-detector photon and dark totals follow as
``n_ph = n_peak - n_dark_eq_peak`` and ``n_dark = n_tot - n_ph``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import (
    BoundsError,
    ConfigurationError,
    EmptyTriggerError,
    NoPeakError,
    RegionLayoutError,
    SchemaError,
)
from .timetag import TRIGGER_CHANNEL, TimeTagStream

DARK_REFERENCE_GUARD_BINS = 2
DARK_LEVEL_REFINEMENTS = 2


@dataclass(frozen=True)
class DetectionHistogram:
    """Counts of one detector's events binned by delay from the trigger."""

    detector_id: int
    bin_width_ps: int
    origin_ps: int
    counts: np.ndarray
    trigger_count: int

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        if self.bin_width_ps < 1:
            raise ConfigurationError(f"bin_width_ps must be >= 1, got {self.bin_width_ps}")
        if counts.ndim != 1 or counts.size == 0:
            raise ConfigurationError("histogram needs a 1-d, non-empty counts array")
        if self.trigger_count < 0:
            raise SchemaError("trigger_count cannot be negative")

    @property
    def n_bins(self) -> int:
        return int(self.counts.size)

    @property
    def window_ps(self) -> tuple[int, int]:
        return (self.origin_ps, self.origin_ps + self.n_bins * self.bin_width_ps)

    @property
    def bin_edges_ps(self) -> np.ndarray:
        return self.origin_ps + self.bin_width_ps * np.arange(self.n_bins + 1, dtype=np.int64)

    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class RegionSpec:
    """Half-open trigger-relative intervals [start, end) in picoseconds."""

    peak: tuple[int, int]
    dark_reference: tuple[int, int]
    null: tuple[int, int]

    def __post_init__(self):
        for name, (lo, hi) in (
            ("peak", self.peak),
            ("dark_reference", self.dark_reference),
            ("null", self.null),
        ):
            if hi < lo:
                raise RegionLayoutError(f"{name} interval [{lo}, {hi}) is inverted")
        if self.peak[1] <= self.peak[0]:
            raise RegionLayoutError("peak region must be non-empty")
        if self.dark_reference[1] - self.dark_reference[0] != self.peak[1] - self.peak[0]:
            raise RegionLayoutError(
                "dark_reference width must equal the peak width "
                f"({self.dark_reference} vs {self.peak})"
            )
        if self.null[1] != self.peak[0]:
            raise RegionLayoutError(
                f"null region must end where the peak starts ({self.null} vs {self.peak})"
            )
        if not (self.null[1] <= self.peak[0] <= self.peak[1] <= self.dark_reference[0]):
            raise RegionLayoutError(
                f"regions must be ordered null < peak < dark_reference, got "
                f"{self.null}, {self.peak}, {self.dark_reference}"
            )


@dataclass(frozen=True)
class CountSummary:
    """Counter bookkeeping for one measurement session.

    Fields are floats so repeated-set means fit; single-run values are
    integral.  Unused fields stay ``None``.  ``n_trig`` is the shared
    valid-gate count; three-phase sessions split it into ``n_trig_singles``
    (singles phases) and ``n_trig_coinc`` (coincidence phase).  Per-detector
    trigger counts appear after null correction.
    """

    n_trig: float | None = None
    n_tot_1: float | None = None
    n_tot_2: float | None = None
    n_peak_1: float | None = None
    n_peak_2: float | None = None
    n_dark_eq_peak_1: float | None = None
    n_dark_eq_peak_2: float | None = None
    n_null_1: float | None = None
    n_null_2: float | None = None
    n_coinc: float | None = None
    n_trig_singles: float | None = None
    n_trig_coinc: float | None = None
    n_trig_1: float | None = None
    n_trig_2: float | None = None
    n_dark_1: float | None = None
    n_dark_2: float | None = None
    q_dark_1: float | None = None
    q_dark_2: float | None = None

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            if value is None:
                continue
            if not math.isfinite(value):
                raise SchemaError(f"{name} must be finite, got {value}")
            if value < 0 and not name.startswith("q_dark"):
                raise SchemaError(f"{name} cannot be negative, got {value}")
        for det in (1, 2):
            tot = getattr(self, f"n_tot_{det}")
            if tot is None:
                continue
            for part in ("n_peak", "n_dark_eq_peak", "n_null"):
                value = getattr(self, f"{part}_{det}")
                if value is not None and value > tot:
                    raise SchemaError(
                        f"{part}_{det} = {value} exceeds n_tot_{det} = {tot}"
                    )
        for det in (1, 2):
            q = getattr(self, f"q_dark_{det}")
            if q is not None and not 0.0 <= q < 1.0:
                raise SchemaError(f"q_dark_{det} must lie in [0, 1), got {q}")

    # -- derived counters -------------------------------------------------

    def photon_count(self, detector: int) -> float:
        """Peak counts above the dark level: n_peak - n_dark_eq_peak."""
        peak = getattr(self, f"n_peak_{detector}")
        dark_eq = getattr(self, f"n_dark_eq_peak_{detector}")
        if peak is None or dark_eq is None:
            raise _missing(f"n_peak_{detector}/n_dark_eq_peak_{detector}")
        return peak - dark_eq

    def dark_count(self, detector: int) -> float:
        """Non-photon counts: explicit n_dark if set, else n_tot - photon."""
        explicit = getattr(self, f"n_dark_{detector}")
        if explicit is not None:
            return explicit
        tot = getattr(self, f"n_tot_{detector}")
        if tot is None:
            raise _missing(f"n_tot_{detector}")
        q = getattr(self, f"q_dark_{detector}")
        if q is not None:
            return q * tot
        return tot - self.photon_count(detector)

    def dark_fraction(self, detector: int) -> float:
        """Fraction of detector counts not attributed to photons."""
        q = getattr(self, f"q_dark_{detector}")
        if q is not None:
            return q
        tot = getattr(self, f"n_tot_{detector}")
        if tot is None:
            raise _missing(f"n_tot_{detector}")
        if tot == 0:
            raise _missing(f"nonzero n_tot_{detector}")
        return self.dark_count(detector) / tot

    def trigger_count(self, detector: int) -> float:
        per_det = getattr(self, f"n_trig_{detector}")
        if per_det is not None:
            return per_det
        if self.n_trig is None:
            raise _missing("n_trig")
        return self.n_trig


def _missing(what: str):
    from .exceptions import IncompleteSummaryError

    return IncompleteSummaryError(f"count summary is missing {what}")


def build_histogram(
    stream: TimeTagStream,
    detector_id: int,
    window_ps: tuple[int, int],
    bin_width_ps: int = 1000,
) -> DetectionHistogram:
    """Bin one detector's events by offset from the most recent prior trigger.

    ``window_ps`` is the half-open trigger-relative interval covered by the
    histogram; its width must be an integer multiple of ``bin_width_ps``.
    Events with no prior trigger, or whose offset falls outside the window,
    are ignored.
    """
    start, end = int(window_ps[0]), int(window_ps[1])
    if bin_width_ps < 1:
        raise ConfigurationError(f"bin_width_ps must be >= 1, got {bin_width_ps}")
    if end <= start:
        raise ConfigurationError(f"window [{start}, {end}) is empty")
    n_bins, rem = divmod(end - start, bin_width_ps)
    if rem:
        raise ConfigurationError(
            f"window width {end - start} ps is not a multiple of bin_width_ps {bin_width_ps}"
        )
    triggers = stream.channel_events(TRIGGER_CHANNEL)
    if triggers.size == 0:
        raise EmptyTriggerError("stream contains no trigger (channel 0) records")
    events = stream.channel_events(detector_id)
    counts = np.zeros(n_bins, dtype=np.int64)
    if events.size:
        idx = np.searchsorted(triggers, events, side="right") - 1
        valid = idx >= 0
        offsets = events[valid] - triggers[idx[valid]]
        bins = (offsets - start) // bin_width_ps
        inside = (offsets >= start) & (offsets < end)
        counts = np.bincount(bins[inside], minlength=n_bins).astype(np.int64)
    return DetectionHistogram(
        detector_id=detector_id,
        bin_width_ps=bin_width_ps,
        origin_ps=start,
        counts=counts,
        trigger_count=int(triggers.size),
    )


def _longest_run(mask: np.ndarray, counts: np.ndarray) -> tuple[int, int] | None:
    """Longest contiguous True run; ties broken by higher total counts."""
    best = None
    best_len = 0
    best_sum = -1
    i = 0
    n = mask.size
    while i < n:
        if mask[i]:
            j = i
            while j < n and mask[j]:
                j += 1
            run_len = j - i
            run_sum = int(counts[i:j].sum())
            if run_len > best_len or (run_len == best_len and run_sum > best_sum):
                best, best_len, best_sum = (i, j), run_len, run_sum
            i = j
        else:
            i += 1
    return best


def auto_regions(hist: DetectionHistogram, threshold_sigma: float = 5.0) -> RegionSpec:
    """Locate peak, dark-reference and null regions from the histogram shape.

    The peak is the longest contiguous run of bins exceeding
    ``mean_dark + threshold_sigma * sqrt(mean_dark)``; the dark level is
    re-estimated from non-peak bins over two refinement passes.  The dark
    reference is the first peak-width window starting two bins after the peak,
    and the null region spans from the window start to the peak start.
    """
    counts = hist.counts.astype(np.float64)
    n = counts.size
    peak = None
    mean_dark = float(counts.mean())
    for _ in range(1 + DARK_LEVEL_REFINEMENTS):
        threshold = mean_dark + threshold_sigma * math.sqrt(max(mean_dark, 0.0))
        candidate = _longest_run(counts > threshold, hist.counts)
        if candidate is None:
            break
        peak = candidate
        outside = np.ones(n, dtype=bool)
        outside[peak[0] : peak[1]] = False
        if not outside.any():
            raise NoPeakError(
                "every bin sits above the dark threshold; supply manual regions"
            )
        mean_dark = float(counts[outside].mean())
    if peak is None:
        raise NoPeakError(
            "no bins exceed the dark threshold "
            f"(mean_dark={mean_dark:.3g}, threshold_sigma={threshold_sigma}); "
            "supply manual regions"
        )
    p0, p1 = peak
    width = p1 - p0
    ref0 = p1 + DARK_REFERENCE_GUARD_BINS
    ref1 = ref0 + width
    if ref1 > n:
        raise RegionLayoutError(
            f"dark reference bins [{ref0}, {ref1}) exceed the {n}-bin window; "
            "supply manual regions or widen the window"
        )
    w = hist.bin_width_ps
    o = hist.origin_ps
    return RegionSpec(
        peak=(o + p0 * w, o + p1 * w),
        dark_reference=(o + ref0 * w, o + ref1 * w),
        null=(o, o + p0 * w),
    )


def _region_slice(hist: DetectionHistogram, interval: tuple[int, int], name: str):
    lo, hi = int(interval[0]), int(interval[1])
    w = hist.bin_width_ps
    for edge in (lo, hi):
        if (edge - hist.origin_ps) % w:
            raise BoundsError(
                f"{name} boundary {edge} ps does not align to the {w} ps bin grid"
            )
    b0 = (lo - hist.origin_ps) // w
    b1 = (hi - hist.origin_ps) // w
    if not 0 <= b0 <= b1 <= hist.n_bins:
        raise BoundsError(
            f"{name} interval [{lo}, {hi}) falls outside the histogram window "
            f"{hist.window_ps}"
        )
    return slice(b0, b1)


def region_counts(hist: DetectionHistogram, regions: RegionSpec) -> dict[str, int]:
    """Counts inside each region of one detector's histogram."""
    return {
        "peak": int(hist.counts[_region_slice(hist, regions.peak, "peak")].sum()),
        "dark_eq_peak": int(
            hist.counts[_region_slice(hist, regions.dark_reference, "dark_reference")].sum()
        ),
        "null": int(hist.counts[_region_slice(hist, regions.null, "null")].sum()),
    }


def extract_counts(
    hist_1: DetectionHistogram,
    hist_2: DetectionHistogram,
    regions_1: RegionSpec,
    regions_2: RegionSpec,
    n_coinc: int | None = None,
) -> CountSummary:
    """Assemble the session count summary from two region-tagged histograms."""
    r1 = region_counts(hist_1, regions_1)
    r2 = region_counts(hist_2, regions_2)
    shared = hist_1.trigger_count == hist_2.trigger_count
    return CountSummary(
        n_trig=hist_1.trigger_count if shared else None,
        n_trig_1=None if shared else hist_1.trigger_count,
        n_trig_2=None if shared else hist_2.trigger_count,
        n_tot_1=hist_1.total(),
        n_tot_2=hist_2.total(),
        n_peak_1=r1["peak"],
        n_peak_2=r2["peak"],
        n_dark_eq_peak_1=r1["dark_eq_peak"],
        n_dark_eq_peak_2=r2["dark_eq_peak"],
        n_null_1=r1["null"],
        n_null_2=r2["null"],
        n_coinc=n_coinc,
    )


def with_three_phase_triggers(summary: CountSummary, n_trig_singles, n_trig_coinc):
    """Copy a summary with split trigger counts for three-phase sessions."""
    return replace(summary, n_trig_singles=n_trig_singles, n_trig_coinc=n_trig_coinc)


def count_coincidences(
    stream: TimeTagStream,
    mode: str = "same_gate",
    window_ps: tuple[int, int] | None = None,
    tau_window_ps: tuple[int, int] | None = None,
    detector_pair: tuple[int, int] = (1, 2),
) -> int:
    """Count two-detector coincidences.

    ``same_gate`` counts triggers for which both detectors fire inside that
    trigger's detection window ``window_ps``.  ``delay_window`` counts greedy
    earliest-first pairs whose signed delay t2 - t1 lies in ``tau_window_ps``,
    each event used at most once.
    """
    d1, d2 = detector_pair
    if mode == "same_gate":
        if window_ps is None:
            raise ConfigurationError("same_gate mode requires window_ps")
        lo, hi = int(window_ps[0]), int(window_ps[1])
        if hi <= lo:
            raise ConfigurationError(f"window [{lo}, {hi}) is empty")
        triggers = stream.channel_events(TRIGGER_CHANNEL)
        if triggers.size == 0:
            raise EmptyTriggerError("stream contains no trigger (channel 0) records")
        t1 = stream.channel_events(d1)
        t2 = stream.channel_events(d2)
        has_1 = _fires_in_gate(triggers, t1, lo, hi)
        has_2 = _fires_in_gate(triggers, t2, lo, hi)
        return int(np.count_nonzero(has_1 & has_2))
    if mode == "delay_window":
        if tau_window_ps is None:
            raise ConfigurationError("delay_window mode requires tau_window_ps")
        tau_lo, tau_hi = int(tau_window_ps[0]), int(tau_window_ps[1])
        if tau_hi <= tau_lo:
            raise ConfigurationError(f"delay window [{tau_lo}, {tau_hi}) is empty")
        t1 = stream.channel_events(d1)
        t2 = stream.channel_events(d2)
        return _greedy_delay_pairs(t1, t2, tau_lo, tau_hi)
    raise ConfigurationError(f"unknown coincidence mode {mode!r}")


def _fires_in_gate(triggers, events, lo, hi):
    """Per-trigger flag: does any event fall in [trigger+lo, trigger+hi),
    attributed to its most recent prior trigger?"""
    flags = np.zeros(triggers.size, dtype=bool)
    if events.size == 0:
        return flags
    idx = np.searchsorted(triggers, events, side="right") - 1
    valid = idx >= 0
    offsets = events[valid] - triggers[idx[valid]]
    inside = (offsets >= lo) & (offsets < hi)
    flags[idx[valid][inside]] = True
    return flags


def _greedy_delay_pairs(t1, t2, tau_lo, tau_hi):
    """Earliest-first pairing of t1 events with t2 events, one use each."""
    pairs = 0
    j = 0
    n2 = t2.size
    for t in t1:
        lo = t + tau_lo
        while j < n2 and t2[j] < lo:
            j += 1
        if j >= n2:
            break
        if t2[j] < t + tau_hi:
            pairs += 1
            j += 1
    return pairs
