"""OHLCV panel ingestion, returns, lookback windows, and synthetic panels.

A panel is a dense dates x symbols x features block of day-level market
data. Rows missing from the source file are forward-filled and flagged
invalid so downstream code can exclude them per window.
"""

from __future__ import annotations

import csv
import datetime as _dt
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DataError,
    InsufficientHistoryError,
    ParseError,
    SyntheticSpecError,
)

FEATURES = ("open", "high", "low", "close", "turnover", "volume")
CLOSE = FEATURES.index("close")
CSV_COLUMNS = ("date", "symbol") + FEATURES


@dataclass
class Panel:
    """Aligned market data grid.

    values has shape (days, N, F) with F = len(FEATURES); valid marks
    (day, stock) cells that were actually observed rather than filled.
    """

    dates: list[str]
    symbols: list[str]
    values: np.ndarray
    valid: np.ndarray

    @property
    def n_days(self) -> int:
        return len(self.dates)

    @property
    def n_stocks(self) -> int:
        return len(self.symbols)

    def validate(self) -> None:
        if sorted(self.dates) != self.dates or len(set(self.dates)) != len(self.dates):
            raise DataError("panel dates must be strictly increasing")
        if len(set(self.symbols)) != len(self.symbols):
            raise DataError("duplicate symbols in panel")
        if self.values.shape != (self.n_days, self.n_stocks, len(FEATURES)):
            raise DataError(f"panel values shape {self.values.shape} inconsistent")
        if not np.all(np.isfinite(self.values)):
            raise DataError("panel contains non-finite values")
        close = self.values[:, :, CLOSE]
        bad = np.argwhere((close <= 0) & self.valid)
        if bad.size:
            t, i = bad[0]
            raise DataError(
                f"non-positive close for symbol {self.symbols[i]} on {self.dates[t]}"
            )


@dataclass
class WindowBatch:
    """One training example: the cross-section of a single label day.

    X holds the z-scored lookback features ending the day before t;
    r holds the realized day-t returns for the same stocks.
    """

    t: str
    X: np.ndarray  # (N_t, L, F)
    r: np.ndarray  # (N_t,)
    symbols: list[str] = field(default_factory=list)


def load_panel(path, min_days: int | None = None) -> Panel:
    """Parse a `date,symbol,open,high,low,close,turnover,volume` CSV.

    Dates are sorted ascending and symbols lexicographically; (date, symbol)
    pairs absent from the file are forward-filled from the stock's previous
    observation (back-filled at the start) and flagged invalid.
    """
    rows: dict[tuple[str, str], np.ndarray] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise ParseError(f"{path}: header missing columns {missing}")
        idx = {c: header.index(c) for c in CSV_COLUMNS}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < len(header):
                raise ParseError(f"{path}: line {lineno}: expected "
                                 f"{len(header)} fields, got {len(row)}")
            date = row[idx["date"]].strip()
            symbol = row[idx["symbol"]].strip()
            try:
                _dt.date.fromisoformat(date)
            except ValueError:
                raise ParseError(
                    f"{path}: line {lineno}: bad ISO date {date!r}"
                ) from None
            if not symbol:
                raise ParseError(f"{path}: line {lineno}: empty symbol")
            try:
                feats = np.array(
                    [float(row[idx[c]]) for c in FEATURES], dtype=np.float64
                )
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from None
            if not np.all(np.isfinite(feats)):
                raise ParseError(f"{path}: line {lineno}: non-finite value")
            if (date, symbol) in rows:
                raise ParseError(
                    f"{path}: line {lineno}: duplicate row for {symbol} on {date}"
                )
            rows[(date, symbol)] = feats

    if not rows:
        raise ParseError(f"{path}: no data rows")
    dates = sorted({d for d, _ in rows})
    symbols = sorted({s for _, s in rows})
    if min_days is not None and len(dates) < min_days:
        raise InsufficientHistoryError(
            f"{path}: {len(dates)} dates, need at least {min_days}"
        )

    values = np.full((len(dates), len(symbols), len(FEATURES)), np.nan)
    valid = np.zeros((len(dates), len(symbols)), dtype=bool)
    date_pos = {d: t for t, d in enumerate(dates)}
    sym_pos = {s: i for i, s in enumerate(symbols)}
    for (d, s), feats in rows.items():
        values[date_pos[d], sym_pos[s]] = feats
        valid[date_pos[d], sym_pos[s]] = True

    # Fill masked cells: carry the last observation forward, and the first
    # observation backward over any leading gap.
    for i in range(len(symbols)):
        obs = np.flatnonzero(valid[:, i])
        last = obs[0]
        values[:last, i] = values[last, i]
        for t in range(last + 1, len(dates)):
            if valid[t, i]:
                last = t
            else:
                values[t, i] = values[last, i]

    panel = Panel(dates=dates, symbols=symbols, values=values, valid=valid)
    panel.validate()
    return panel


def save_panel_csv(panel: Panel, path) -> int:
    """Write a panel back to the CSV schema; returns the row count.

    Only valid cells are emitted. Floats use repr so the file is
    byte-stable across runs.
    """
    n = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for t, date in enumerate(panel.dates):
            for i, sym in enumerate(panel.symbols):
                if not panel.valid[t, i]:
                    continue
                writer.writerow(
                    [date, sym] + [repr(float(v)) for v in panel.values[t, i]]
                )
                n += 1
    return n


def compute_returns(panel: Panel) -> np.ndarray:
    """One-day close-to-close returns, shape (days-1, N).

    Row k is the return realized on day k+1 of the panel:
    (close[k+1] - close[k]) / close[k].
    """
    close = panel.values[:, :, CLOSE]
    return (close[1:] - close[:-1]) / close[:-1]


def zscore_window(window: np.ndarray) -> np.ndarray:
    """Z-score along the time axis (axis 0); zero-variance series map to 0."""
    mean = window.mean(axis=0, keepdims=True)
    std = window.std(axis=0, keepdims=True)
    out = np.zeros_like(window)
    np.divide(window - mean, std, out=out, where=std > 0)
    return out


def make_windows(panel: Panel, L: int) -> list[WindowBatch]:
    """Build one WindowBatch per eligible label day.

    Label day t (0-based) ranges over [L+1, days-1]; its feature window
    covers days t-L .. t-1, so the count is exactly days - L - 1. Stocks
    with any masked day inside [t-L, t] are dropped from that batch.
    Features are z-scored per stock per feature over the window.
    """
    if L < 1:
        raise InsufficientHistoryError(f"lookback L={L} must be >= 1")
    if panel.n_days < L + 2:
        raise InsufficientHistoryError(
            f"panel has {panel.n_days} days, need at least {L + 2} for L={L}"
        )
    returns = compute_returns(panel)
    batches = []
    for t in range(L + 1, panel.n_days):
        ok = panel.valid[t - L : t + 1].all(axis=0)
        sel = np.flatnonzero(ok)
        window = panel.values[t - L : t, sel, :]  # (L, N_t, F)
        X = np.ascontiguousarray(zscore_window(window).transpose(1, 0, 2))
        r = returns[t - 1, sel].copy()
        batches.append(
            WindowBatch(
                t=panel.dates[t],
                X=X,
                r=r,
                symbols=[panel.symbols[i] for i in sel],
            )
        )
    return batches


@dataclass
class SyntheticSpec:
    """Recipe for a synthetic panel with planted lagged cross-stock links."""

    n_stocks: int
    n_days: int
    leaders: list[int] = field(default_factory=list)
    followers: list[tuple[int, int, int, float]] = field(default_factory=list)
    noise_sigma: float = 0.01
    seed: int = 0

    def validate(self) -> None:
        if self.n_stocks < 2 or self.n_days < 3:
            raise SyntheticSpecError("need n_stocks >= 2 and n_days >= 3")
        if self.noise_sigma <= 0:
            raise SyntheticSpecError("noise_sigma must be positive")
        for i in self.leaders:
            if not 0 <= i < self.n_stocks:
                raise SyntheticSpecError(f"leader index {i} out of range")
        for fol, lead, lag, beta in self.followers:
            if fol == lead:
                raise SyntheticSpecError(
                    f"follower {fol} cannot follow itself"
                )
            if not (0 <= fol < self.n_stocks and 0 <= lead < self.n_stocks):
                raise SyntheticSpecError(
                    f"follower tuple ({fol},{lead}) index out of range"
                )
            if not 1 <= lag <= 5:
                raise SyntheticSpecError(f"lag {lag} outside [1, 5]")
            if not 0.0 <= beta <= 1.0:
                raise SyntheticSpecError(f"beta {beta} outside [0, 1]")


def generate_synthetic(spec: SyntheticSpec) -> Panel:
    """Generate a panel whose followers echo their leader's lagged return.

    All stocks receive i.i.d. Gaussian(0, noise_sigma) shocks; a follower's
    day-t return adds beta times its leader's day-(t-lag) return on top of
    its own shock. Prices compound multiplicatively from 100; open is the
    previous close, high/low bracket close by 1%, volume and turnover are
    constant. Deterministic for a given seed.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    D, N = spec.n_days, spec.n_stocks
    eps = rng.normal(0.0, spec.noise_sigma, size=(D, N))
    ret = eps.copy()  # ret[t, i] is the day-t return; row 0 is unused
    for fol, lead, lag, beta in spec.followers:
        for t in range(1, D):
            if t - lag >= 1:
                ret[t, fol] = beta * ret[t - lag, lead] + eps[t, fol]
    # Guard the close > 0 invariant under extreme sigma draws.
    ret = np.maximum(ret, -0.95)

    close = np.empty((D, N))
    close[0] = 100.0
    for t in range(1, D):
        close[t] = close[t - 1] * (1.0 + ret[t])

    values = np.empty((D, N, len(FEATURES)))
    values[:, :, FEATURES.index("open")] = np.vstack([close[:1], close[:-1]])
    values[:, :, FEATURES.index("high")] = 1.01 * close
    values[:, :, FEATURES.index("low")] = 0.99 * close
    values[:, :, CLOSE] = close
    values[:, :, FEATURES.index("turnover")] = 1.0e4
    values[:, :, FEATURES.index("volume")] = 1.0e6

    start = _dt.date(2020, 1, 1)
    dates = [(start + _dt.timedelta(days=t)).isoformat() for t in range(D)]
    symbols = [f"S{i:03d}" for i in range(N)]
    panel = Panel(
        dates=dates,
        symbols=symbols,
        values=values,
        valid=np.ones((D, N), dtype=bool),
    )
    panel.validate()
    return panel
