import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphtrend.data import (
    CLOSE,
    FEATURES,
    Panel,
    SyntheticSpec,
    compute_returns,
    generate_synthetic,
    load_panel,
    make_windows,
    save_panel_csv,
    zscore_window,
)
from graphtrend.errors import (
    DataError,
    InsufficientHistoryError,
    ParseError,
    SyntheticSpecError,
)

from conftest import simple_rows, write_rows


def test_load_panel_shapes(panel_csv):
    panel = load_panel(panel_csv(n_days=25))
    assert panel.n_stocks == 2
    assert panel.n_days == 25
    assert panel.values.shape == (25, 2, 6)
    assert panel.valid.all()


def test_load_panel_zero_close_names_symbol_and_date(tmp_path):
    rows = simple_rows(3, ["AAA", "BBB"])
    rows[3][5] = 0.0  # day 1, BBB close
    path = write_rows(tmp_path / "bad.csv", rows)
    with pytest.raises(DataError, match="BBB.*2021-01-02"):
        load_panel(path)


def test_load_panel_sorts_out_of_order_dates(tmp_path):
    # Hand-built 3-day, 1-symbol fixture written in scrambled order.
    rows = [
        ["2021-01-03", "AAA", 1.0, 2.0, 0.5, 30.0, 1.0, 1.0],
        ["2021-01-01", "AAA", 1.0, 2.0, 0.5, 10.0, 1.0, 1.0],
        ["2021-01-02", "AAA", 1.0, 2.0, 0.5, 20.0, 1.0, 1.0],
    ]
    panel = load_panel(write_rows(tmp_path / "scrambled.csv", rows))
    assert panel.dates == ["2021-01-01", "2021-01-02", "2021-01-03"]
    assert panel.values[:, 0, CLOSE].tolist() == [10.0, 20.0, 30.0]


def test_load_panel_malformed_row_names_line(tmp_path):
    rows = simple_rows(3, ["AAA"])
    rows[1][5] = "oops"
    path = write_rows(tmp_path / "bad.csv", rows)
    with pytest.raises(ParseError, match="line 3"):
        load_panel(path)


def test_load_panel_rejects_short_history(panel_csv):
    with pytest.raises(InsufficientHistoryError):
        load_panel(panel_csv(n_days=10), min_days=22)


def test_load_panel_missing_column(tmp_path):
    rows = [["2021-01-01", "AAA", 1, 2, 0.5, 10, 1]]
    path = write_rows(tmp_path / "cols.csv", rows,
                      header=["date", "symbol", "open", "high", "low",
                              "close", "turnover"])
    with pytest.raises(ParseError, match="volume"):
        load_panel(path)


def test_load_panel_forward_fills_missing_rows(tmp_path):
    rows = simple_rows(4, ["AAA", "BBB"])
    # Drop BBB on day index 2.
    rows = [r for r in rows if not (r[0] == "2021-01-03" and r[1] == "BBB")]
    panel = load_panel(write_rows(tmp_path / "gap.csv", rows))
    b = panel.symbols.index("BBB")
    assert not panel.valid[2, b]
    assert panel.values[2, b, CLOSE] == panel.values[1, b, CLOSE]
    assert np.isfinite(panel.values).all()


def test_compute_returns_hand_values(tmp_path):
    closes = [100.0, 110.0, 99.0]
    rows = simple_rows(3, ["AAA"], close_of=lambda t, i: closes[t])
    panel = load_panel(write_rows(tmp_path / "r.csv", rows))
    r = compute_returns(panel)
    assert r.shape == (2, 1)
    assert r[0, 0] == pytest.approx(0.10, abs=1e-15)
    assert r[1, 0] == pytest.approx(-0.10, abs=1e-15)


def test_compute_returns_constant_close(tmp_path):
    rows = simple_rows(5, ["AAA"], close_of=lambda t, i: 42.0)
    panel = load_panel(write_rows(tmp_path / "c.csv", rows))
    assert np.all(compute_returns(panel) == 0.0)


def test_make_windows_count_25_days(panel_csv):
    panel = load_panel(panel_csv(n_days=25))
    batches = make_windows(panel, L=20)
    assert len(batches) == 4  # days - L - 1


def test_make_windows_boundary_and_insufficient(panel_csv):
    panel = load_panel(panel_csv(n_days=22))
    assert len(make_windows(panel, L=20)) == 1
    short = load_panel(panel_csv(n_days=21, name="short.csv"))
    with pytest.raises(InsufficientHistoryError):
        make_windows(short, L=20)


def test_make_windows_alignment(panel_csv):
    panel = load_panel(panel_csv(n_days=25))
    batches = make_windows(panel, L=20)
    returns = compute_returns(panel)
    # First label day is index L+1 = 21; its label is that day's return.
    assert batches[0].t == panel.dates[21]
    np.testing.assert_allclose(batches[0].r, returns[20])
    assert batches[-1].t == panel.dates[24]


def test_make_windows_normalization(panel_csv):
    panel = load_panel(panel_csv(n_days=30))
    for batch in make_windows(panel, L=20):
        mu = batch.X.mean(axis=1)
        sd = batch.X.std(axis=1)
        assert np.abs(mu).max() < 1e-9
        # turnover/volume are constant series, normalized to exactly 0
        for i in range(batch.X.shape[0]):
            for f in range(batch.X.shape[2]):
                assert sd[i, f] == pytest.approx(1.0, abs=1e-9) or sd[i, f] == 0.0


def test_make_windows_zero_variance_guard():
    w = np.ones((10, 3, 2))
    assert np.all(zscore_window(w) == 0.0)


def test_make_windows_excludes_gapped_stocks(tmp_path):
    rows = simple_rows(13, ["AAA", "BBB"])
    rows = [r for r in rows if not (r[0] == "2021-01-08" and r[1] == "BBB")]
    panel = load_panel(write_rows(tmp_path / "gap.csv", rows))
    batches = make_windows(panel, L=10)
    # Day index 7 is invalid for BBB, inside the window of both label days.
    assert all(b.symbols == ["AAA"] for b in batches)


@settings(max_examples=30, deadline=None)
@given(
    n_days=st.integers(min_value=4, max_value=40),
    L=st.integers(min_value=2, max_value=10),
)
def test_window_count_property(n_days, L, tmp_path_factory):
    if n_days < L + 2:
        return
    tmp = tmp_path_factory.mktemp("wins")
    rows = simple_rows(n_days, ["AAA", "BBB", "CCC"])
    panel = load_panel(write_rows(tmp / "p.csv", rows))
    assert len(make_windows(panel, L)) == n_days - L - 1


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(min_value=-0.5, max_value=0.5), min_size=2, max_size=40))
def test_returns_reconstruct_closes(rets):
    closes = [100.0]
    for r in rets:
        closes.append(closes[-1] * (1.0 + r))
    values = np.zeros((len(closes), 1, len(FEATURES)))
    values[:, 0, :] = 1.0
    values[:, 0, CLOSE] = closes
    panel = Panel(
        dates=[f"2021-01-{d + 1:02d}" if d < 27 else f"2021-02-{d - 26:02d}"
               for d in range(len(closes))],
        symbols=["AAA"],
        values=values,
        valid=np.ones((len(closes), 1), dtype=bool),
    )
    r = compute_returns(panel)[:, 0]
    rebuilt = 100.0 * np.cumprod(1.0 + r)
    np.testing.assert_allclose(rebuilt, closes[1:], rtol=1e-12)


def test_synthetic_deterministic():
    spec = SyntheticSpec(n_stocks=5, n_days=50, leaders=[0],
                         followers=[(1, 0, 1, 0.8)], noise_sigma=0.01, seed=7)
    a, b = generate_synthetic(spec), generate_synthetic(spec)
    assert a.dates == b.dates and a.symbols == b.symbols
    assert np.array_equal(a.values, b.values)


def test_synthetic_planted_lag_correlation():
    spec = SyntheticSpec(n_stocks=4, n_days=1000, leaders=[0],
                         followers=[(1, 0, 1, 0.8)], noise_sigma=0.01, seed=3)
    panel = generate_synthetic(spec)
    r = compute_returns(panel)
    lead, fol = r[:-1, 0], r[1:, 1]
    corr = np.corrcoef(lead, fol)[0, 1]
    assert corr > 0.5


def test_synthetic_beta_zero_independent():
    spec = SyntheticSpec(n_stocks=4, n_days=1000, leaders=[0],
                         followers=[(1, 0, 1, 0.0)], noise_sigma=0.01, seed=11)
    panel = generate_synthetic(spec)
    r = compute_returns(panel)
    corr = np.corrcoef(r[:-1, 0], r[1:, 1])[0, 1]
    assert abs(corr) < 0.1


def test_synthetic_self_follower_rejected():
    spec = SyntheticSpec(n_stocks=4, n_days=10, followers=[(2, 2, 1, 0.5)])
    with pytest.raises(SyntheticSpecError):
        generate_synthetic(spec)


def test_synthetic_feature_construction():
    spec = SyntheticSpec(n_stocks=3, n_days=20, seed=1)
    panel = generate_synthetic(spec)
    close = panel.values[:, :, CLOSE]
    open_ = panel.values[:, :, FEATURES.index("open")]
    np.testing.assert_allclose(open_[1:], close[:-1])
    np.testing.assert_allclose(panel.values[:, :, 1], 1.01 * close)
    np.testing.assert_allclose(panel.values[:, :, 2], 0.99 * close)
    assert np.all(panel.values[:, :, 4] == 1.0e4)
    assert np.all(panel.values[:, :, 5] == 1.0e6)


def test_panel_csv_round_trip(tmp_path):
    spec = SyntheticSpec(n_stocks=3, n_days=12, leaders=[0],
                         followers=[(1, 0, 2, 0.5)], seed=5)
    panel = generate_synthetic(spec)
    path = tmp_path / "round.csv"
    n = save_panel_csv(panel, path)
    assert n == 3 * 12
    back = load_panel(path)
    assert back.dates == panel.dates
    assert back.symbols == panel.symbols
    np.testing.assert_array_equal(back.values, panel.values)
