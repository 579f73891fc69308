"""Command line for rendering figures from aggregate experiment CSVs."""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .figure import PlotSpec, render
from .reader import SchemaError


@click.command(name="plot")
@click.option("--metric", required=True,
              help="metric column value to plot, e.g. cooperation_pct")
@click.option("--in", "inputs", multiple=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="aggregate CSV, one mechanism combination each (repeatable)")
@click.argument("more_inputs", nargs=-1,
                type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", required=True, type=click.Path(dir_okay=False, path_type=Path),
              help="output figure path (.svg or .pdf)")
@click.option("--title", default=None)
@click.option("--ylabel", default=None, help="y-axis label (default: the metric name)")
@click.option("--y-range", type=(float, float), default=None,
              help="y-axis bounds (default: 0 100 for *_pct metrics, free otherwise)")
def main(metric, inputs, more_inputs, out, title, ylabel, y_range):
    """Render one metric as rolling-mean curves with shaded 95% confidence
    bands, one line per mechanism combination.

    Input CSVs follow --in; shell globs work because trailing paths are
    collected too: `plot --metric cooperation_pct --in runs/*_aggregate.csv
    --out coop.svg`.
    """
    all_inputs = tuple(inputs) + tuple(more_inputs)
    if not all_inputs:
        click.echo("error: no input CSVs given (use --in)", err=True)
        sys.exit(2)
    spec = PlotSpec(metric=metric, inputs=all_inputs, out=out,
                    title=title, ylabel=ylabel, y_range=y_range)
    try:
        path = render(spec)
    except SchemaError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(2)
    except OSError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(1)
    click.echo(str(path))


if __name__ == "__main__":
    main()
