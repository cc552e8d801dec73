"""High-level analysis pipeline: streams or counts documents to estimates.

``analyze_stream`` drives the full chain — histogramming, region detection,
coincidence counting, protocol dispatch — on one merged time-tag stream.
``analyze_counts`` runs the estimation layer directly on a parsed counts
document.  Both return the estimate plus the intermediate products needed
for rendering and plotting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import CountsDocument, RunConfig
from .estimator import AlphaEstimate, estimate_session
from .exceptions import (
    ConfigurationError,
    DataError,
    DegenerateStatisticsError,
    EmptyTriggerError,
)
from .histogram import (
    CountSummary,
    DetectionHistogram,
    RegionSpec,
    auto_regions,
    build_histogram,
    count_coincidences,
    extract_counts,
    with_three_phase_triggers,
)
from .timetag import DETECTOR_CHANNELS, TRIGGER_CHANNEL, TimeTagStream
from .uncertainty import RepeatedSetSeries


@dataclass(frozen=True)
class AnalysisResult:
    """Estimate plus the intermediates that produced it."""

    estimate: AlphaEstimate
    summary: CountSummary
    histograms: tuple[DetectionHistogram, DetectionHistogram] | None = None
    regions: tuple[RegionSpec, RegionSpec] | None = None
    series: RepeatedSetSeries | None = None


def _resolve_regions(config: RunConfig, hist: DetectionHistogram) -> RegionSpec:
    if config.regions.mode == "manual":
        return config.regions.manual_spec(config.io.window_start_ps)
    return auto_regions(hist, threshold_sigma=config.regions.threshold_sigma)


def _count_pair_coincidences(stream: TimeTagStream, config: RunConfig) -> int:
    io_cfg = config.io
    if io_cfg.coincidence_mode == "same_gate":
        return count_coincidences(stream, mode="same_gate", window_ps=io_cfg.window_ps)
    return count_coincidences(
        stream, mode="delay_window", tau_window_ps=(io_cfg.tau_lo_ps, io_cfg.tau_hi_ps)
    )


def _session_summary(
    stream: TimeTagStream,
    config: RunConfig,
    regions: tuple[RegionSpec, RegionSpec] | None = None,
):
    hists = tuple(
        build_histogram(
            stream, det, config.io.window_ps, bin_width_ps=config.io.bin_width_ps
        )
        for det in DETECTOR_CHANNELS
    )
    if regions is None:
        regions = tuple(_resolve_regions(config, h) for h in hists)
    n_coinc = _count_pair_coincidences(stream, config)
    summary = extract_counts(hists[0], hists[1], regions[0], regions[1], n_coinc=n_coinc)
    return hists, regions, summary


def _time_slice(stream: TimeTagStream, start_ps: int, end_ps: int) -> TimeTagStream:
    lo = int(np.searchsorted(stream.timestamps_ps, np.uint64(start_ps), side="left"))
    hi = int(np.searchsorted(stream.timestamps_ps, np.uint64(end_ps), side="left"))
    return stream[lo:hi]


def _repeated_set_series(stream: TimeTagStream, config: RunConfig, regions) -> RepeatedSetSeries:
    if len(stream) == 0:
        raise EmptyTriggerError("stream contains no records")
    set_ps = int(round(config.protocol.set_duration_s * 1e12))
    span = int(stream.timestamps_ps[-1]) + 1
    n_sets = span // set_ps
    if n_sets < 2:
        raise DegenerateStatisticsError(
            f"stream spans {span / 1e12:.3g} s: fewer than 2 sets of "
            f"{config.protocol.set_duration_s:g} s (shrink protocol.set_duration_s)"
        )
    vectors = {"n_trig": [], "n_tot_1": [], "n_tot_2": [], "n_coinc": []}
    for k in range(int(n_sets)):
        chunk = _time_slice(stream, k * set_ps, (k + 1) * set_ps)
        triggers = int(np.count_nonzero(chunk.channels == TRIGGER_CHANNEL))
        if triggers == 0:
            raise EmptyTriggerError(f"acquisition set {k} contains no triggers")
        _, _, set_summary = _session_summary(chunk, config, regions=regions)
        vectors["n_trig"].append(set_summary.n_trig)
        vectors["n_tot_1"].append(set_summary.n_tot_1)
        vectors["n_tot_2"].append(set_summary.n_tot_2)
        vectors["n_coinc"].append(set_summary.n_coinc)
    return RepeatedSetSeries(
        n_trig=np.array(vectors["n_trig"], dtype=float),
        n_tot_1=np.array(vectors["n_tot_1"], dtype=float),
        n_tot_2=np.array(vectors["n_tot_2"], dtype=float),
        n_coinc=np.array(vectors["n_coinc"], dtype=float),
    )


def analyze_stream(
    stream: TimeTagStream, config: RunConfig, label: str | None = None
) -> AnalysisResult:
    """Full analysis of one merged (trigger + both detectors) stream."""
    protocol = config.protocol.name
    if protocol == "q_form":
        raise ConfigurationError(
            "protocol q_form consumes published counter means; analyze a counts "
            "document instead, or use repeated_sets on raw streams"
        )
    hists, regions, summary = _session_summary(stream, config)
    if protocol == "three_phase":
        n_singles = config.protocol.n_trig_singles
        n_coinc_trig = config.protocol.n_trig_coinc
        summary = with_three_phase_triggers(
            summary,
            summary.n_trig if n_singles is None else n_singles,
            summary.n_trig if n_coinc_trig is None else n_coinc_trig,
        )
        estimate = estimate_session(
            summary,
            "three_phase",
            config=config.uncertainty,
            label=label,
            apply_null_correction=config.protocol.apply_null_correction,
        )
        return AnalysisResult(estimate, summary, hists, regions)

    series = _repeated_set_series(stream, config, regions)
    estimate = estimate_session(
        summary,
        "repeated_sets",
        config=config.uncertainty,
        set_stats=series,
        label=label,
        apply_null_correction=config.protocol.apply_null_correction,
    )
    return AnalysisResult(estimate, summary, hists, regions, series=series)


def analyze_counts(
    doc: CountsDocument, config: RunConfig, label: str | None = None
) -> AnalysisResult:
    """Run the configured protocol on a parsed counts document."""
    protocol = config.protocol.name
    label = label if label is not None else doc.label
    if protocol == "three_phase":
        estimate = estimate_session(
            doc.summary,
            "three_phase",
            config=config.uncertainty,
            label=label,
            apply_null_correction=config.protocol.apply_null_correction,
        )
        return AnalysisResult(estimate, doc.summary)
    if doc.stats is None:
        raise DataError(
            f"protocol {protocol} needs counter-mean statistics "
            "(u_n_trig, u_n1_tot, u_n2_tot, u_n_coinc) in the counts document"
        )
    estimate = estimate_session(
        doc.summary,
        protocol,
        config=config.uncertainty,
        set_stats=doc.stats,
        label=label,
        apply_null_correction=config.protocol.apply_null_correction,
    )
    return AnalysisResult(estimate, doc.summary)
