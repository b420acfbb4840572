"""Result document assembly and plain-text effect tables.

Hazard differences are rendered with one decimal, survival-probability
percentage points with two; every rendered number also appears, unrounded,
in the JSON document.
"""

from __future__ import annotations

import json
import math

ROW_LABELS = {
    "DE": "Direct effect",
    "IEM": "Indirect effect through the mediator trajectory",
    "IED": "Indirect effect through the death process",
    "TE": "Total effect",
    "DE_plus_IEM": "Sum of direct effect and indirect effect through the mediator",
}
ROW_ORDER = ("DE", "IEM", "IED", "TE", "DE_plus_IEM")

MODE_HEADINGS = {
    "conditional_on_survival": "Without competing risks",
    "competing_risks": "Accounting for competing risks",
}

HAZARD_DECIMALS = 1
SURVIVAL_DECIMALS = 2


def format_point_ci(point, lower, upper, decimals):
    """Render ``point (lower, upper)`` at the given precision."""
    return f"{point:.{decimals}f} ({lower:.{decimals}f}, {upper:.{decimals}f})"


def _cell(table, scale, name, decimals):
    if table is None or name not in getattr(table, scale):
        return "-"
    iv = table.interval(scale, name)
    return format_point_ci(iv.point, iv.lower, iv.upper, decimals)


def render_text_table(tables, horizon):
    """Column-aligned effect table; ``tables`` maps mode name to its results.

    With both modes present the conditional block comes first, mirroring a
    side-by-side without/with competing risks comparison; the death-process
    row renders as ``-`` where it is undefined.
    """
    mode_order = [m for m in ("conditional_on_survival", "competing_risks") if m in tables]
    headers = ["Effect"]
    for mode in mode_order:
        headers.append(f"Hazard difference (per 100,000 py)")
        headers.append(f"Survival probability difference at {horizon:g}y (%)")

    rows = []
    for name in ROW_ORDER:
        row = [ROW_LABELS[name]]
        for mode in mode_order:
            row.append(_cell(tables[mode], "hazard_diff", name, HAZARD_DECIMALS))
            row.append(_cell(tables[mode], "surv_prob_diff", name, SURVIVAL_DECIMALS))
        rows.append(row)

    widths = [max(len(headers[c]), *(len(r[c]) for r in rows)) for c in range(len(headers))]
    lines = []
    if len(mode_order) > 1:
        group = [" " * widths[0]]
        for i, mode in enumerate(mode_order):
            span = widths[1 + 2 * i] + widths[2 + 2 * i] + 2
            group.append(MODE_HEADINGS[mode].ljust(span))
        lines.append("  ".join(group).rstrip())
    elif mode_order:
        lines.append(MODE_HEADINGS[mode_order[0]])
    lines.append("  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip())
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


def _interval_doc(iv):
    def clean(x):
        return None if (isinstance(x, float) and math.isnan(x)) else x
    return {"point": iv.point, "lower": iv.lower, "upper": iv.upper,
            "plugin": clean(iv.plugin)}


def effects_document(tables):
    doc = {}
    for mode, table in tables.items():
        doc[mode] = {
            "hazard_diff_per_100000_person_years": {
                name: _interval_doc(iv) for name, iv in table.hazard_diff.items()},
            "survival_probability_diff_percent": {
                name: _interval_doc(iv) for name, iv in table.surv_prob_diff.items()},
            "diagnostics": table.diagnostics,
        }
    return doc


def results_document(config_doc, contrast, positivity, tables, seed, metadata=None):
    """Machine-readable results: every effect, scale, CI, diagnostic, and the
    resolved configuration.  Timestamps live only under ``metadata``."""
    return {
        "seed": seed,
        "config": config_doc,
        "contrast": contrast,
        "positivity": positivity,
        "results": effects_document(tables),
        "metadata": metadata or {},
    }


def dump_json(doc, path):
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path == "-":
        return text
    with open(path, "w") as fh:
        fh.write(text)
    return text
