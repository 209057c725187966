import csv
import datetime as dt

import pytest


def write_rows(path, rows, header=None):
    """Write raw panel CSV rows: (date, symbol, o, h, l, c, turnover, volume)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header or ["date", "symbol", "open", "high", "low",
                              "close", "turnover", "volume"])
        for row in rows:
            w.writerow(row)
    return path


def simple_rows(n_days, symbols, close_of=None):
    """Well-formed rows with deterministic distinct values per (day, symbol)."""
    close_of = close_of or (lambda t, i: 100.0 + t + 10.0 * i)
    start = dt.date(2021, 1, 1)
    rows = []
    for t in range(n_days):
        date = (start + dt.timedelta(days=t)).isoformat()
        for i, sym in enumerate(symbols):
            c = close_of(t, i)
            rows.append([date, sym, c - 0.5, c + 1.0, c - 1.0, c, 5000.0, 1e6])
    return rows


@pytest.fixture
def panel_csv(tmp_path):
    def build(n_days=25, symbols=("AAA", "BBB"), close_of=None, name="panel.csv"):
        return write_rows(tmp_path / name, simple_rows(n_days, symbols, close_of))

    return build
