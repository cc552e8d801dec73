"""Command-line interface: ``g2kit simulate | analyze | report``.

Exit codes: 0 success, 1 usage/configuration, 2 data/format, 3 degenerate
statistics.  The environment variable ``G2KIT_SEED`` overrides the
configured simulation seed.
"""

from __future__ import annotations

import argparse
import os
import re
import sys
from dataclasses import replace

from . import __version__
from .config import load_run_config, parse_counts_file
from .exceptions import ConfigurationError, DataError, G2KitError
from .pipeline import analyze_counts, analyze_stream
from .reporting import (
    parse_estimate_file,
    render_budget_text,
    render_comparison_csv,
    render_comparison_text,
    write_estimate_file,
)
from .timetag import merge_streams, read_stream_file, write_stream_file

SEED_ENV_VAR = "G2KIT_SEED"


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems through the exit-code-1 path."""

    def error(self, message):
        raise ConfigurationError(message)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="g2kit",
        description=(
            "Measure the multi-photon component of a heralded single-photon "
            "source from time-tagged data, with full uncertainty budgets and "
            "a Monte-Carlo ground-truth simulator."
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run the Monte-Carlo source simulator")
    p_sim.add_argument("--config", required=True, help="INI run configuration")
    p_sim.add_argument("--out", required=True, help="output directory")

    p_ana = sub.add_parser("analyze", help="estimate alpha from streams or counters")
    p_ana.add_argument("--config", required=True, help="INI run configuration")
    p_ana.add_argument("--ch0", help="trigger stream file (channel 0)")
    p_ana.add_argument("--ch1", help="detector 1 stream file")
    p_ana.add_argument("--ch2", help="detector 2 stream file")
    p_ana.add_argument("--counts", help="counts document instead of streams")
    p_ana.add_argument("--csv", help="write the full-precision budget CSV here")
    p_ana.add_argument("--label", help="session label for reports")
    p_ana.add_argument("--plots", help="directory for rendered figures")

    p_rep = sub.add_parser("report", help="compare estimate files across sessions")
    p_rep.add_argument("estimates", nargs="+", help="estimate CSV files from analyze")
    p_rep.add_argument("--csv", help="write the delimited comparison here")
    p_rep.add_argument("--plots", help="directory for rendered figures")
    return parser


def _cmd_simulate(args) -> int:
    from .simulator import simulate

    run = load_run_config(args.config)
    sim_config = run.simulate
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            sim_config = replace(sim_config, rng_seed=int(env_seed))
        except ValueError as exc:
            raise ConfigurationError(f"{SEED_ENV_VAR} must be an integer: {exc}") from exc
    result = simulate(sim_config)

    out_dir = args.out
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out_dir}: {exc}") from exc
    suffix = ".csv" if run.io.format == "csv" else ".ttag"
    streams = {
        "ch0": result.trigger_stream,
        "ch1": result.detector_streams[0],
        "ch2": result.detector_streams[1],
    }
    file_names = {}
    for name, stream in streams.items():
        file_name = name + suffix
        header = replace(result.header, record_count=len(stream))
        write_stream_file(os.path.join(out_dir, file_name), header, stream)
        file_names[name] = file_name

    truth = result.truth
    truth_lines = [
        f"valid_gate_count = {truth.valid_gate_count}",
        f"true_herald_gate_count = {truth.true_herald_gate_count}",
        f"heralded_photons_emitted = {truth.heralded_photons_emitted}",
        f"background_photons_emitted = {truth.background_photons_emitted}",
        f"expected_background_per_gate = {truth.expected_background_per_gate!r}",
        f"expected_dark_per_gate_1 = {truth.expected_dark_per_gate[0]!r}",
        f"expected_dark_per_gate_2 = {truth.expected_dark_per_gate[1]!r}",
        f"detector_events_1 = {truth.detector_event_counts[0]}",
        f"detector_events_2 = {truth.detector_event_counts[1]}",
        f"alpha_prediction = {truth.alpha_prediction!r}",
    ]
    with open(os.path.join(out_dir, "truth.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(truth_lines) + "\n")
    manifest = [
        "[manifest]",
        f"rng_seed = {sim_config.rng_seed}",
        f"duration_s = {sim_config.duration_s!r}",
        f"format = {run.io.format}",
        f"trigger_file = {file_names['ch0']}",
        f"detector1_file = {file_names['ch1']}",
        f"detector2_file = {file_names['ch2']}",
        "truth_file = truth.txt",
    ]
    with open(os.path.join(out_dir, "manifest.ini"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(manifest) + "\n")
    print(f"wrote {len(streams)} streams to {out_dir} (seed {sim_config.rng_seed})")
    print(f"predicted alpha = {truth.alpha_prediction:.6g}")
    return 0


def _safe_name(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", label).strip("_") or "session"


def _cmd_analyze(args) -> int:
    run = load_run_config(args.config)
    stream_args = (args.ch0, args.ch1, args.ch2)
    use_streams = any(a is not None for a in stream_args)
    if use_streams and args.counts:
        raise ConfigurationError("give either stream files or --counts, not both")
    if not use_streams and not args.counts:
        raise ConfigurationError("give --ch0/--ch1/--ch2 stream files or --counts")

    if use_streams:
        missing = [f"--ch{i}" for i, a in enumerate(stream_args) if a is None]
        if missing:
            raise ConfigurationError(f"missing stream arguments: {', '.join(missing)}")
        parts = [read_stream_file(path)[1] for path in stream_args]
        stream = merge_streams(parts)
        result = analyze_stream(stream, run, label=args.label)
    else:
        doc = parse_counts_file(args.counts)
        result = analyze_counts(doc, run, label=args.label)

    print(render_budget_text(result.estimate), end="")
    if args.csv:
        write_estimate_file(args.csv, result.estimate)
    if args.plots:
        from . import plots

        os.makedirs(args.plots, exist_ok=True)
        if result.histograms is not None and result.regions is not None:
            for hist, regions in zip(result.histograms, result.regions):
                plots.save_histogram_figure(
                    os.path.join(args.plots, f"histogram_det{hist.detector_id}.png"),
                    hist,
                    regions,
                )
        plots.save_budget_figure(os.path.join(args.plots, "budget.png"), result.estimate)
    return 0


def _cmd_report(args) -> int:
    estimates = [parse_estimate_file(path) for path in args.estimates]
    print(render_comparison_text(estimates), end="")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(render_comparison_csv(estimates))
    if args.plots:
        from . import plots

        os.makedirs(args.plots, exist_ok=True)
        plots.save_comparison_figure(
            os.path.join(args.plots, "comparison.png"), estimates
        )
        for i, estimate in enumerate(estimates):
            name = _safe_name(estimate.label or f"estimate-{i + 1}")
            plots.save_budget_figure(
                os.path.join(args.plots, f"budget_{i + 1}_{name}.png"), estimate
            )
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "analyze":
            return _cmd_analyze(args)
        return _cmd_report(args)
    except G2KitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
