"""g2kit: multi-photon suppression metrology for heralded single-photon sources.

The toolkit measures the coincidence-to-singles ratio ``alpha`` (the
zero-delay second-order correlation of the heralded field, in the
small-probability limit) from time-tagged detector data, propagates full
measurement uncertainty budgets, and ships a Monte-Carlo simulator of the
source/detector chain that serves as a ground-truth oracle for the analysis
pipeline.
"""

__version__ = "0.1.0"

from .config import (
    CountsDocument,
    IOConfig,
    ProtocolConfig,
    RegionConfig,
    RunConfig,
    load_run_config,
    parse_counts_file,
    parse_counts_text,
)
from .estimator import (
    AlphaEstimate,
    BudgetRow,
    DerivedProbabilities,
    alpha_from_probabilities,
    alpha_q_form,
    coincidence_photon_probability,
    derive_probabilities,
    estimate_session,
    null_correction,
    photon_probability,
)
from .exceptions import (
    BoundsError,
    ConfigurationError,
    DataError,
    DegenerateInputError,
    DegenerateStatisticsError,
    EmptyTriggerError,
    FormatError,
    G2KitError,
    IncompleteSummaryError,
    NoPeakError,
    OrderingError,
    RegionLayoutError,
    SchemaError,
    UndefinedAlphaError,
)
from .histogram import (
    CountSummary,
    DetectionHistogram,
    RegionSpec,
    auto_regions,
    build_histogram,
    count_coincidences,
    extract_counts,
    region_counts,
    with_three_phase_triggers,
)
from .pipeline import AnalysisResult, analyze_counts, analyze_stream
from .reporting import (
    all_pairs_consistent,
    consistency_check,
    format_measurement,
    parse_estimate_file,
    render_budget_csv,
    render_budget_text,
    render_comparison_csv,
    render_comparison_text,
    summary_line,
    write_estimate_file,
)
from .simulator import (
    DetectorConfig,
    SimulationConfig,
    SimulationResult,
    SimulationTruth,
    predict_alpha,
    simulate,
)
from .timetag import (
    StreamHeader,
    TimeTagRecord,
    TimeTagStream,
    merge_streams,
    parse_stream,
    read_stream_file,
    write_stream,
    write_stream_file,
)
from .uncertainty import (
    RepeatedSetSeries,
    SetStatistics,
    UncertaintyConfig,
    correlation_matrix,
    finite_difference_partial,
    u_correlated,
    u_independent,
    u_q_bound,
    u_total_correlated,
)

__all__ = [
    "__version__",
    # config
    "CountsDocument",
    "IOConfig",
    "ProtocolConfig",
    "RegionConfig",
    "RunConfig",
    "load_run_config",
    "parse_counts_file",
    "parse_counts_text",
    # estimator
    "AlphaEstimate",
    "BudgetRow",
    "DerivedProbabilities",
    "alpha_from_probabilities",
    "alpha_q_form",
    "coincidence_photon_probability",
    "derive_probabilities",
    "estimate_session",
    "null_correction",
    "photon_probability",
    # exceptions
    "BoundsError",
    "ConfigurationError",
    "DataError",
    "DegenerateInputError",
    "DegenerateStatisticsError",
    "EmptyTriggerError",
    "FormatError",
    "G2KitError",
    "IncompleteSummaryError",
    "NoPeakError",
    "OrderingError",
    "RegionLayoutError",
    "SchemaError",
    "UndefinedAlphaError",
    # histogram
    "CountSummary",
    "DetectionHistogram",
    "RegionSpec",
    "auto_regions",
    "build_histogram",
    "count_coincidences",
    "extract_counts",
    "region_counts",
    "with_three_phase_triggers",
    # pipeline
    "AnalysisResult",
    "analyze_counts",
    "analyze_stream",
    # reporting
    "all_pairs_consistent",
    "consistency_check",
    "format_measurement",
    "parse_estimate_file",
    "render_budget_csv",
    "render_budget_text",
    "render_comparison_csv",
    "render_comparison_text",
    "summary_line",
    "write_estimate_file",
    # simulator
    "DetectorConfig",
    "SimulationConfig",
    "SimulationResult",
    "SimulationTruth",
    "predict_alpha",
    "simulate",
    # timetag
    "StreamHeader",
    "TimeTagRecord",
    "TimeTagStream",
    "merge_streams",
    "parse_stream",
    "read_stream_file",
    "write_stream",
    "write_stream_file",
    # uncertainty
    "RepeatedSetSeries",
    "SetStatistics",
    "UncertaintyConfig",
    "correlation_matrix",
    "finite_difference_partial",
    "u_correlated",
    "u_independent",
    "u_q_bound",
    "u_total_correlated",
]
