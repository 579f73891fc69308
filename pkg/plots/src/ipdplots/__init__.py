"""Figure rendering for aggregate experiment CSVs: rolling-mean curves with
shaded 95% confidence bands, one line per mechanism combination. Reads only
the documented aggregate CSV schema; purely presentational."""

__version__ = "0.1.0"
