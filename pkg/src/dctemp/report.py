"""Plain-text rendering of a batch of analysis results."""

from __future__ import annotations

from typing import Sequence

from .analysis import ALPHA, AnalysisResult, summarize_batch


def _fmt(v: float | None, spec: str = ".3f") -> str:
    return "n/a" if v is None else format(v, spec)


def emit_report(results: Sequence[AnalysisResult], alpha: float = ALPHA) -> str:
    """Quartiles per window, overall mean with CI, ANOVA, regression and direction tally."""
    summary = summarize_batch(results, alpha=alpha)
    if summary.n_results == 0:
        skipped = f" ({summary.n_skipped} skipped)" if summary.n_skipped else ""
        return f"no analyses{skipped}\n"

    lines = [
        f"analyses: {summary.n_results} (skipped: {summary.n_skipped})",
        f"mean sensitivity: {summary.mean_sensitivity:.2f} %/degC "
        f"(95% CI +/- {summary.ci_half_width:.2f})",
    ]
    if summary.anova_f is not None:
        lines.append(f"ANOVA across window lengths: F = {summary.anova_f:.3f}, p = {summary.anova_p:.4f}")
    else:
        lines.append("ANOVA across window lengths: n/a")
    lines.append(
        "sensitivity vs before-temperature: "
        f"slope {_fmt(summary.regression_slope)} %/degC per degC, R^2 = {_fmt(summary.regression_r2, '.4f')}"
    )
    lines.append("")
    lines.append("sensitivity by window [%/degC]")
    lines.append(f"{'window':>8} {'n':>5} {'mean':>8} {'q1':>8} {'median':>8} {'q3':>8}")
    for w, s in summary.per_window.items():
        lines.append(f"{w:>7g}h {s.n:>5d} {s.mean:>8.3f} {s.q1:>8.3f} {s.median:>8.3f} {s.q3:>8.3f}")
    lines.append("")
    lines.append(f"correlation direction (significance at alpha = {alpha:g})")
    for w, t in summary.tally.items():
        lines.append(
            f"{w:g}h: {t.positive} positive, {t.negative} negative "
            f"(significant: {t.positive_significant} positive, {t.negative_significant} negative)"
        )
    for note in summary.notes:
        lines.append(f"note: {note}")
    return "\n".join(lines) + "\n"
