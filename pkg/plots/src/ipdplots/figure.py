"""Figure assembly on matplotlib's object API (no pyplot global state).

Output is vector (SVG or PDF) with timestamps stripped and text kept as
text, so identical CSV inputs render byte-identical files. Data is drawn
exactly as read: no reordering, no re-aggregation, NaN entries become
curve gaps.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib
from matplotlib.figure import Figure

from .reader import ModeSeries, SchemaError, load_series

# fixed palette (matplotlib tab10 hues), keyed by the mechanism names
MODE_ORDER = ("TPP-S", "TPP", "DP-S", "DP", "TPPDP-S", "TPPDP", "NONE")
MODE_COLORS = {
    "TPP-S": "#1f77b4",
    "TPP": "#ff7f0e",
    "DP-S": "#2ca02c",
    "DP": "#d62728",
    "TPPDP-S": "#9467bd",
    "TPPDP": "#8c564b",
    "NONE": "#7f7f7f",
}
FALLBACK_COLORS = ("#e377c2", "#bcbd22", "#17becf", "#000000")
BAND_ALPHA = 0.25
PERCENT_RANGE = (0.0, 100.0)

_STABLE_RC = {
    "svg.fonttype": "none",
    "svg.hashsalt": "ipdplots",
    "path.simplify": False,
}


@dataclass(frozen=True)
class PlotSpec:
    """One figure: a metric, its input aggregate CSVs, and styling.

    y_range None means automatic: [0, 100] for percentage metrics (names
    ending in _pct), free scaling otherwise.
    """

    metric: str
    inputs: tuple[Path, ...]
    out: Path
    title: str | None = None
    ylabel: str | None = None
    y_range: tuple[float, float] | None = None


def _ordered(series: list[ModeSeries]) -> list[ModeSeries]:
    """Canonical legend order for known modes; unknown modes keep their
    input order after the known ones."""
    known = len(MODE_ORDER)

    def rank(item: tuple[int, ModeSeries]) -> tuple[int, int]:
        i, s = item
        return (MODE_ORDER.index(s.mode) if s.mode in MODE_ORDER else known, i)

    return [s for _, s in sorted(enumerate(series), key=rank)]


def _colors(series: list[ModeSeries]) -> dict[str, str]:
    fallback = iter(FALLBACK_COLORS)
    out = {}
    for s in series:
        out[s.mode] = MODE_COLORS.get(s.mode) or next(fallback, "#000000")
    return out


def _resolve_y_range(spec: PlotSpec) -> tuple[float, float] | None:
    if spec.y_range is not None:
        return spec.y_range
    if spec.metric.endswith("_pct"):
        return PERCENT_RANGE
    return None


def render(spec: PlotSpec) -> Path:
    """Draw one curve plus its confidence band per input CSV and write the
    figure to spec.out. Returns the output path."""
    if not spec.inputs:
        raise SchemaError("no input CSVs given")
    series = _ordered(load_series(spec.inputs, spec.metric))
    colors = _colors(series)

    fig = Figure(figsize=(8.0, 5.0), dpi=100)
    ax = fig.add_subplot()
    for s in series:
        color = colors[s.mode]
        ax.fill_between(s.episodes, s.ci_low, s.ci_high,
                        color=color, alpha=BAND_ALPHA, linewidth=0)
        ax.plot(s.episodes, s.mean, color=color, label=s.mode, linewidth=1.6)
    ax.set_xlabel("episode")
    ax.set_ylabel(spec.ylabel if spec.ylabel is not None else spec.metric)
    if spec.title:
        ax.set_title(spec.title)
    y_range = _resolve_y_range(spec)
    if y_range is not None:
        ax.set_ylim(*y_range)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best")

    out = Path(spec.out)
    fmt = out.suffix.lower().lstrip(".") or "svg"
    if fmt == "svg":
        metadata = {"Date": None}
    elif fmt == "pdf":
        metadata = {"CreationDate": None}
    else:
        raise SchemaError(f"unsupported output format {fmt!r}; use .svg or .pdf")
    out.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context(_STABLE_RC):
        fig.savefig(out, format=fmt, metadata=metadata)
    return out
