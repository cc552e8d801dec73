"""Run configuration (INI) and the structured counts document.

The INI file has four command-scoped sections — ``[io]``, ``[regions]``,
``[protocol]``, ``[uncertainty]`` — plus ``[simulate]`` for the simulator.
All sections are optional and every key has a default; unknown keys are
rejected so typos surface instead of silently using defaults.

A *counts document* is a flat ``key = value`` text file carrying the session
counters directly (the alternative to analyzing raw streams).  Recognised
keys:

===================== =====================================================
``n_trig``            shared valid-gate count
``n_trig_singles``    valid gates of the singles phases (three-phase runs)
``n_trig_coinc``      valid gates of the coincidence phase
``n1_tot, n2_tot``    total counts per detector
``n1_dark, n2_dark``  dark counts per detector
``n1_peak`` etc.      optional region counters (``peak``, ``dark_eq_peak``,
                      ``null`` per detector)
``q1_dark, q2_dark``  dark fractions (mean-based protocols)
``n_coinc``           coincidences (may be a non-integer mean)
``u_n_trig`` etc.     standard uncertainties of the four counter means
``c_01`` ... ``c_23`` correlation coefficients between counter means, in
                      the order (n_trig, n1_tot, n2_tot, n_coinc)
``label``             free-text session label
===================== =====================================================
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError, FormatError
from .histogram import CountSummary, RegionSpec
from .simulator import DetectorConfig, SimulationConfig
from .uncertainty import SetStatistics, UncertaintyConfig

PROTOCOL_NAMES = ("repeated_sets", "three_phase", "q_form")
COINCIDENCE_MODES = ("same_gate", "delay_window")


@dataclass(frozen=True)
class IOConfig:
    """Stream windowing and coincidence-counting options."""

    format: str = "binary"
    window_start_ps: int = 0
    window_end_ps: int = 30_000
    bin_width_ps: int = 1000
    coincidence_mode: str = "same_gate"
    tau_lo_ps: int | None = None
    tau_hi_ps: int | None = None

    def __post_init__(self):
        if self.format not in ("binary", "csv"):
            raise ConfigurationError(f"io.format must be binary or csv, got {self.format!r}")
        if self.window_end_ps <= self.window_start_ps:
            raise ConfigurationError("io window is empty")
        if self.bin_width_ps < 1:
            raise ConfigurationError("io.bin_width_ps must be >= 1")
        if self.coincidence_mode not in COINCIDENCE_MODES:
            raise ConfigurationError(
                f"io.coincidence_mode must be one of {COINCIDENCE_MODES}"
            )
        if self.coincidence_mode == "delay_window" and (
            self.tau_lo_ps is None or self.tau_hi_ps is None
        ):
            raise ConfigurationError("delay_window mode requires io.tau_lo_ps and io.tau_hi_ps")

    @property
    def window_ps(self) -> tuple[int, int]:
        return (self.window_start_ps, self.window_end_ps)


@dataclass(frozen=True)
class RegionConfig:
    """Auto-detection threshold or explicit manual regions."""

    mode: str = "auto"
    threshold_sigma: float = 5.0
    peak_start_ps: int | None = None
    peak_end_ps: int | None = None
    dark_start_ps: int | None = None
    dark_end_ps: int | None = None

    def __post_init__(self):
        if self.mode not in ("auto", "manual"):
            raise ConfigurationError(f"regions.mode must be auto or manual, got {self.mode!r}")
        if self.threshold_sigma <= 0:
            raise ConfigurationError("regions.threshold_sigma must be positive")
        if self.mode == "manual":
            missing = [
                k
                for k in ("peak_start_ps", "peak_end_ps", "dark_start_ps", "dark_end_ps")
                if getattr(self, k) is None
            ]
            if missing:
                raise ConfigurationError(
                    "manual regions require " + ", ".join(missing)
                )

    def manual_spec(self, window_start_ps: int) -> RegionSpec:
        """Build the explicit RegionSpec (null spans window start to peak)."""
        return RegionSpec(
            peak=(self.peak_start_ps, self.peak_end_ps),
            dark_reference=(self.dark_start_ps, self.dark_end_ps),
            null=(window_start_ps, self.peak_start_ps),
        )


@dataclass(frozen=True)
class ProtocolConfig:
    """Which estimation protocol to run and its session parameters."""

    name: str = "three_phase"
    set_duration_s: float = 100.0
    n_trig_singles: float | None = None
    n_trig_coinc: float | None = None
    apply_null_correction: bool = True

    def __post_init__(self):
        if self.name not in PROTOCOL_NAMES:
            raise ConfigurationError(
                f"protocol.name must be one of {PROTOCOL_NAMES}, got {self.name!r}"
            )
        if self.set_duration_s <= 0:
            raise ConfigurationError("protocol.set_duration_s must be positive")


@dataclass(frozen=True)
class RunConfig:
    io: IOConfig = field(default_factory=IOConfig)
    regions: RegionConfig = field(default_factory=RegionConfig)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    uncertainty: UncertaintyConfig = field(default_factory=UncertaintyConfig)
    simulate: SimulationConfig = field(default_factory=SimulationConfig)


_SECTION_KEYS = {
    "io": {
        "format": str,
        "window_start_ps": int,
        "window_end_ps": int,
        "bin_width_ps": int,
        "coincidence_mode": str,
        "tau_lo_ps": int,
        "tau_hi_ps": int,
    },
    "regions": {
        "mode": str,
        "threshold_sigma": float,
        "peak_start_ps": int,
        "peak_end_ps": int,
        "dark_start_ps": int,
        "dark_end_ps": int,
    },
    "protocol": {
        "name": str,
        "set_duration_s": float,
        "n_trig_singles": float,
        "n_trig_coinc": float,
        "apply_null_correction": bool,
    },
    "uncertainty": {
        "xi": float,
        "dark_uncertainty_scaled_by_xi": bool,
        "zero_count_floor": bool,
        "finite_difference_rel_step": float,
    },
}

_SIMULATE_KEYS = {
    "duration_s": float,
    "pair_rate_hz": float,
    "herald_efficiency": float,
    "herald_dark_rate_hz": float,
    "signal_transmittance": float,
    "signal_delay_ps": int,
    "jitter_sigma_ps": float,
    "switch_open_ps": int,
    "sleep_time_ps": int,
    "background_rate_hz": float,
    "splitter_ratio": float,
    "rng_seed": int,
}
_DETECTOR_KEYS = {
    "mode": str,
    "efficiency": float,
    "gate_window_ps": int,
    "dark_rate_hz": float,
    "dead_time_ps": int,
}


def _parse_bool(raw: str, context: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"{context}: expected a boolean, got {raw!r}")


def _coerce(raw: str, kind, context: str):
    raw = raw.strip()
    try:
        if kind is bool:
            return _parse_bool(raw, context)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigurationError(f"{context}: {exc}") from exc


def _section_kwargs(parser: configparser.ConfigParser, section: str, allowed: dict) -> dict:
    if not parser.has_section(section):
        return {}
    kwargs = {}
    for key, raw in parser.items(section):
        if key not in allowed:
            raise ConfigurationError(
                f"unknown key {key!r} in [{section}] "
                f"(allowed: {', '.join(sorted(allowed))})"
            )
        kwargs[key] = _coerce(raw, allowed[key], f"[{section}] {key}")
    return kwargs


def _simulate_config(parser: configparser.ConfigParser) -> SimulationConfig:
    if not parser.has_section("simulate"):
        return SimulationConfig()
    kwargs = {}
    det_kwargs: dict[int, dict] = {1: {}, 2: {}}
    for key, raw in parser.items("simulate"):
        if key in _SIMULATE_KEYS:
            kwargs[key] = _coerce(raw, _SIMULATE_KEYS[key], f"[simulate] {key}")
            continue
        matched = False
        for det in (1, 2):
            prefix = f"detector{det}_"
            if key.startswith(prefix):
                sub = key[len(prefix):]
                if sub not in _DETECTOR_KEYS:
                    raise ConfigurationError(
                        f"unknown key {key!r} in [simulate] "
                        f"(detector keys: {', '.join(sorted(_DETECTOR_KEYS))})"
                    )
                det_kwargs[det][sub] = _coerce(
                    raw, _DETECTOR_KEYS[sub], f"[simulate] {key}"
                )
                matched = True
                break
        if not matched:
            raise ConfigurationError(
                f"unknown key {key!r} in [simulate] "
                f"(allowed: {', '.join(sorted(_SIMULATE_KEYS))} plus detector1_*/detector2_*)"
            )
    kwargs["detectors"] = (
        DetectorConfig(**det_kwargs[1]),
        DetectorConfig(**det_kwargs[2]),
    )
    return SimulationConfig(**kwargs)


def load_run_config(path) -> RunConfig:
    """Load and validate the INI run configuration."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh, source=str(path))
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config {path}: {exc}") from exc
    known = set(_SECTION_KEYS) | {"simulate"}
    for section in parser.sections():
        if section not in known:
            raise ConfigurationError(
                f"unknown section [{section}] (allowed: {', '.join(sorted(known))})"
            )
    return RunConfig(
        io=IOConfig(**_section_kwargs(parser, "io", _SECTION_KEYS["io"])),
        regions=RegionConfig(**_section_kwargs(parser, "regions", _SECTION_KEYS["regions"])),
        protocol=ProtocolConfig(
            **_section_kwargs(parser, "protocol", _SECTION_KEYS["protocol"])
        ),
        uncertainty=UncertaintyConfig(
            **_section_kwargs(parser, "uncertainty", _SECTION_KEYS["uncertainty"])
        ),
        simulate=_simulate_config(parser),
    )


# ---------------------------------------------------------------------------
# counts documents


@dataclass(frozen=True)
class CountsDocument:
    """Parsed counts file: counters plus optional mean statistics."""

    summary: CountSummary
    stats: SetStatistics | None = None
    label: str | None = None


_COUNT_KEY_TO_FIELD = {
    "n_trig": "n_trig",
    "n_trig_singles": "n_trig_singles",
    "n_trig_coinc": "n_trig_coinc",
    "n1_tot": "n_tot_1",
    "n2_tot": "n_tot_2",
    "n1_dark": "n_dark_1",
    "n2_dark": "n_dark_2",
    "n1_peak": "n_peak_1",
    "n2_peak": "n_peak_2",
    "n1_dark_eq_peak": "n_dark_eq_peak_1",
    "n2_dark_eq_peak": "n_dark_eq_peak_2",
    "n1_null": "n_null_1",
    "n2_null": "n_null_2",
    "n_coinc": "n_coinc",
    "q1_dark": "q_dark_1",
    "q2_dark": "q_dark_2",
}
_U_KEYS = ("u_n_trig", "u_n1_tot", "u_n2_tot", "u_n_coinc")
_CORR_KEYS = ("c_01", "c_02", "c_03", "c_12", "c_13", "c_23")
_STAT_SOURCE_KEYS = ("n_trig", "n1_tot", "n2_tot", "n_coinc")


def parse_counts_text(text: str, source: str = "<counts>") -> CountsDocument:
    """Parse a flat ``key = value`` counts document."""
    values: dict[str, float] = {}
    label = None
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(
                f"{source}: expected 'key = value'", line_number=lineno
            )
        key, _, raw_value = line.partition("=")
        key = key.strip().lower()
        raw_value = raw_value.strip()
        if key == "label":
            label = raw_value
            continue
        if key not in _COUNT_KEY_TO_FIELD and key not in _U_KEYS and key not in _CORR_KEYS:
            raise FormatError(f"{source}: unknown key {key!r}", line_number=lineno)
        if key in values:
            raise FormatError(f"{source}: duplicate key {key!r}", line_number=lineno)
        try:
            values[key] = float(raw_value)
        except ValueError as exc:
            raise FormatError(f"{source}: {exc}", line_number=lineno) from exc

    summary = CountSummary(
        **{
            field_name: values[key]
            for key, field_name in _COUNT_KEY_TO_FIELD.items()
            if key in values
        }
    )

    stats = None
    u_present = [k for k in _U_KEYS if k in values]
    if not u_present and any(k in values for k in _CORR_KEYS):
        raise FormatError(
            f"{source}: correlation coefficients require the u_* uncertainties"
        )
    if u_present:
        missing = [k for k in _U_KEYS if k not in values]
        if missing:
            raise FormatError(
                f"{source}: incomplete mean statistics, missing {', '.join(missing)}"
            )
        missing_means = [k for k in _STAT_SOURCE_KEYS if k not in values]
        if missing_means:
            raise FormatError(
                f"{source}: mean statistics need {', '.join(missing_means)}"
            )
        corr = np.eye(4)
        for key in _CORR_KEYS:
            if key in values:
                l, m = int(key[2]), int(key[3])
                corr[l, m] = corr[m, l] = values[key]
        stats = SetStatistics(
            means=np.array([values[k] for k in _STAT_SOURCE_KEYS]),
            u=np.array([values[k] for k in _U_KEYS]),
            correlation=corr,
        )
    return CountsDocument(summary=summary, stats=stats, label=label)


def parse_counts_file(path) -> CountsDocument:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read counts file {path}: {exc}") from exc
    return parse_counts_text(text, source=str(path))
