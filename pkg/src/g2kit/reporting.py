"""Rendering and parsing of estimate documents, and cross-session comparison.

Budget tables carry the columns ``quantity,value,uncertainty,sensitivity,
contribution``.  The CSV form keeps full float precision and embeds the
estimate metadata (label, protocol, alpha, correlations, ...) as ``# key:
value`` comment lines, ending with an ``alpha`` row; the human-readable form
rounds uncertainties to two significant figures and values to the matching
decimal place.  Consistency between two estimates a, b is judged by
``|alpha_a - alpha_b| <= k * sqrt(u_a**2 + u_b**2)``.
"""

from __future__ import annotations

import csv
import io
import math

import numpy as np

from .estimator import AlphaEstimate, BudgetRow
from .exceptions import FormatError, SchemaError

BUDGET_COLUMNS = ("quantity", "value", "uncertainty", "sensitivity", "contribution")
_CORR_KEY_PAIRS = tuple(
    (f"c_{l}{m}", l, m) for l in range(4) for m in range(l + 1, 4)
)


def format_measurement(value: float, uncertainty: float) -> tuple[str, str]:
    """Render a value/uncertainty pair with two significant figures on the
    uncertainty and the value rounded to the matching decimal place."""
    if not (math.isfinite(value) and math.isfinite(uncertainty)) or uncertainty <= 0:
        return (f"{value:.6g}", f"{uncertainty:.2g}")
    last_digit_place = math.floor(math.log10(abs(uncertainty))) - 1
    u_rounded = round(uncertainty, -last_digit_place)
    # rounding can promote e.g. 0.0099 -> 0.010; recompute its place
    if u_rounded > 0:
        last_digit_place = max(
            last_digit_place, math.floor(math.log10(u_rounded)) - 1
        )
        u_rounded = round(uncertainty, -last_digit_place)
    v_rounded = round(value, -last_digit_place)
    decimals = max(0, -last_digit_place)
    if abs(v_rounded) >= 1e16 or decimals > 12:
        return (f"{value:.6g}", f"{uncertainty:.2g}")
    return (f"{v_rounded:.{decimals}f}", f"{u_rounded:.{decimals}f}")


def summary_line(estimate: AlphaEstimate) -> str:
    """One-line result: ``alpha = <v> +/- <u> (k=1)``."""
    v, u = format_measurement(estimate.alpha, estimate.u_alpha)
    return f"alpha = {v} +/- {u} (k=1)"


def _verify_rows(estimate: AlphaEstimate) -> None:
    for row in estimate.budget:
        expected = abs(row.sensitivity) * row.uncertainty
        if not math.isclose(row.contribution, expected, rel_tol=1e-9, abs_tol=1e-300):
            raise SchemaError(
                f"budget row {row.quantity}: contribution {row.contribution} "
                f"!= |sensitivity|*uncertainty {expected}"
            )


def render_budget_text(estimate: AlphaEstimate) -> str:
    """Human-readable budget table plus the summary line."""
    _verify_rows(estimate)
    header = ["quantity", "value", "uncertainty", "sensitivity", "contribution"]
    body = []
    for row in estimate.budget:
        v, u = format_measurement(row.value, row.uncertainty)
        body.append(
            [row.quantity, v, u, f"{row.sensitivity:.4g}", f"{row.contribution:.2g}"]
        )
    widths = [
        max(len(header[i]), *(len(r[i]) for r in body)) if body else len(header[i])
        for i in range(5)
    ]
    lines = []
    if estimate.label:
        lines.append(f"session: {estimate.label}")
    lines.append(f"protocol: {estimate.protocol}")
    if estimate.xi is not None:
        lines.append(f"xi: {estimate.xi:g}")
    lines.append("  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip())
    lines.append("  ".join("-" * w for w in widths))
    for r in body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    for note in estimate.notes:
        lines.append(f"note: {note}")
    lines.append(summary_line(estimate))
    return "\n".join(lines) + "\n"


def render_budget_csv(estimate: AlphaEstimate) -> str:
    """Full-precision CSV budget document (parseable by parse_estimate_text)."""
    _verify_rows(estimate)
    out = io.StringIO()
    if estimate.label:
        out.write(f"# label: {estimate.label}\n")
    out.write(f"# protocol: {estimate.protocol}\n")
    out.write("# k: 1\n")
    if estimate.xi is not None:
        out.write(f"# xi: {estimate.xi!r}\n")
    if estimate.p12_ph_negative:
        out.write("# p12_ph_negative: true\n")
    if estimate.correlated_rows:
        out.write(
            "# correlated_rows: " + ",".join(str(i) for i in estimate.correlated_rows) + "\n"
        )
    if estimate.correlation is not None:
        corr = np.asarray(estimate.correlation)
        for key, l, m in _CORR_KEY_PAIRS:
            out.write(f"# {key}: {float(corr[l, m])!r}\n")
    for note in estimate.notes:
        out.write(f"# note: {note}\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(BUDGET_COLUMNS)
    for row in estimate.budget:
        writer.writerow(
            [row.quantity, repr(row.value), repr(row.uncertainty), repr(row.sensitivity),
             repr(row.contribution)]
        )
    writer.writerow(["alpha", repr(estimate.alpha), repr(estimate.u_alpha), "", ""])
    return out.getvalue()


def write_estimate_file(path, estimate: AlphaEstimate) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render_budget_csv(estimate))


def parse_estimate_text(text: str, source: str = "<estimate>") -> AlphaEstimate:
    """Parse an estimate CSV document back into an AlphaEstimate."""
    meta: dict[str, str] = {}
    notes: list[str] = []
    data_lines: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            body = stripped.lstrip("#").strip()
            if ":" not in body:
                raise FormatError(f"{source}: malformed metadata line", line_number=lineno)
            key, _, value = body.partition(":")
            key = key.strip().lower()
            value = value.strip()
            if key == "note":
                notes.append(value)
            else:
                meta[key] = value
            continue
        data_lines.append(line)
    if not data_lines:
        raise FormatError(f"{source}: no budget table found")
    rows = list(csv.reader(data_lines))
    header = tuple(c.strip() for c in rows[0])
    if header != BUDGET_COLUMNS:
        raise FormatError(
            f"{source}: expected header {','.join(BUDGET_COLUMNS)}, got {','.join(header)}"
        )
    if len(rows) < 2 or rows[-1][0] != "alpha":
        raise FormatError(f"{source}: missing final alpha row")

    def _float(cell: str, what: str) -> float:
        try:
            return float(cell)
        except ValueError as exc:
            raise FormatError(f"{source}: bad {what}: {cell!r}") from exc

    budget = []
    for cells in rows[1:-1]:
        if len(cells) != 5:
            raise FormatError(f"{source}: budget rows need 5 columns, got {len(cells)}")
        budget.append(
            BudgetRow(
                quantity=cells[0],
                value=_float(cells[1], "value"),
                uncertainty=_float(cells[2], "uncertainty"),
                sensitivity=_float(cells[3], "sensitivity"),
                contribution=_float(cells[4], "contribution"),
            )
        )
    final = rows[-1]
    alpha = _float(final[1], "alpha")
    u_alpha = _float(final[2], "u_alpha")

    correlated_rows: tuple[int, ...] = ()
    if "correlated_rows" in meta:
        correlated_rows = tuple(int(x) for x in meta["correlated_rows"].split(",") if x)
    correlation = None
    corr_items = [(key, l, m) for key, l, m in _CORR_KEY_PAIRS if key in meta]
    if corr_items:
        correlation = np.eye(4)
        for key, l, m in corr_items:
            correlation[l, m] = correlation[m, l] = _float(meta[key], key)
    xi = float(meta["xi"]) if "xi" in meta else None
    protocol = meta.get("protocol")
    if protocol is None:
        raise FormatError(f"{source}: missing protocol metadata")
    return AlphaEstimate(
        alpha=alpha,
        u_alpha=u_alpha,
        protocol=protocol,
        budget=tuple(budget),
        correlation=correlation,
        correlated_rows=correlated_rows,
        xi=xi,
        p12_ph_negative=meta.get("p12_ph_negative", "").lower() == "true",
        label=meta.get("label"),
        notes=tuple(notes),
    )


def parse_estimate_file(path) -> AlphaEstimate:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read estimate file {path}: {exc}") from exc
    return parse_estimate_text(text, source=str(path))


# ---------------------------------------------------------------------------
# cross-session comparison


def consistency_check(a: AlphaEstimate, b: AlphaEstimate, k: float = 1.0) -> bool:
    """|alpha_a - alpha_b| <= k * sqrt(u_a**2 + u_b**2)."""
    return abs(a.alpha - b.alpha) <= k * math.hypot(a.u_alpha, b.u_alpha)


def _estimate_name(estimate: AlphaEstimate, index: int) -> str:
    return estimate.label or f"estimate-{index + 1}"


def render_comparison_text(estimates) -> str:
    """Session matrix of alpha +/- u plus pairwise consistency at k=1 and k=2."""
    estimates = list(estimates)
    if not estimates:
        raise FormatError("no estimates to compare")
    names = [_estimate_name(e, i) for i, e in enumerate(estimates)]
    lines = ["session results (k=1):"]
    width = max(len(n) for n in names)
    for name, est in zip(names, estimates):
        v, u = format_measurement(est.alpha, est.u_alpha)
        lines.append(f"  {name.ljust(width)}  alpha = {v} +/- {u}  [{est.protocol}]")
    if len(estimates) > 1:
        lines.append("")
        lines.append("pairwise consistency |alpha_a - alpha_b| <= k*sqrt(u_a^2 + u_b^2):")
        for i in range(len(estimates)):
            for j in range(i + 1, len(estimates)):
                a, b = estimates[i], estimates[j]
                delta = abs(a.alpha - b.alpha)
                combined = math.hypot(a.u_alpha, b.u_alpha)
                verdicts = []
                for k in (1, 2):
                    ok = consistency_check(a, b, k)
                    verdicts.append(f"k={k}: {'consistent' if ok else 'INCONSISTENT'}")
                lines.append(
                    f"  {names[i]} vs {names[j]}: |d| = {delta:.4g}, "
                    f"sqrt(u_a^2+u_b^2) = {combined:.4g} -> " + "; ".join(verdicts)
                )
    return "\n".join(lines) + "\n"


def render_comparison_csv(estimates) -> str:
    """Delimited comparison: per-session rows then pairwise consistency rows."""
    estimates = list(estimates)
    if not estimates:
        raise FormatError("no estimates to compare")
    names = [_estimate_name(e, i) for i, e in enumerate(estimates)]
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["session", "protocol", "alpha", "u_alpha"])
    for name, est in zip(names, estimates):
        writer.writerow([name, est.protocol, repr(est.alpha), repr(est.u_alpha)])
    writer.writerow([])
    writer.writerow(
        ["session_a", "session_b", "abs_difference", "combined_u",
         "consistent_k1", "consistent_k2"]
    )
    for i in range(len(estimates)):
        for j in range(i + 1, len(estimates)):
            a, b = estimates[i], estimates[j]
            writer.writerow(
                [
                    names[i],
                    names[j],
                    repr(abs(a.alpha - b.alpha)),
                    repr(math.hypot(a.u_alpha, b.u_alpha)),
                    str(consistency_check(a, b, 1.0)).lower(),
                    str(consistency_check(a, b, 2.0)).lower(),
                ]
            )
    return out.getvalue()


def all_pairs_consistent(estimates, k: float = 1.0) -> bool:
    estimates = list(estimates)
    return all(
        consistency_check(estimates[i], estimates[j], k)
        for i in range(len(estimates))
        for j in range(i + 1, len(estimates))
    )
