"""Topk-Drop portfolio simulation and ranking/portfolio metrics.

Metrics follow the usual cross-sectional conventions: IC is the mean daily
Pearson correlation between scores and realized returns, ICIR divides by
the population std of the daily series, and the Rank variants use average
ranks. Portfolio statistics annualize with 252 trading days.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

TRADING_DAYS_PER_YEAR = 252


def daily_pearson(preds: np.ndarray, actuals: np.ndarray) -> float:
    """Cross-sectional Pearson correlation; nan when either side is constant."""
    p = np.asarray(preds, dtype=np.float64)
    a = np.asarray(actuals, dtype=np.float64)
    p = p - p.mean()
    a = a - a.mean()
    denom = math.sqrt(float((p * p).sum()) * float((a * a).sum()))
    if denom == 0.0:
        return float("nan")
    return float((p * a).sum() / denom)


def average_ranks(v: np.ndarray) -> np.ndarray:
    """Ranks 1..N with ties assigned the average of their positions."""
    v = np.asarray(v, dtype=np.float64)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v), dtype=np.float64)
    i = 0
    sv = v[order]
    while i < len(v):
        j = i
        while j + 1 < len(v) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def daily_spearman(preds: np.ndarray, actuals: np.ndarray) -> float:
    return daily_pearson(average_ranks(preds), average_ranks(actuals))


@dataclass
class RankingMetrics:
    ic: float
    icir: float
    rank_ic: float
    rank_icir: float
    days_used: int
    flags: list[str] = field(default_factory=list)


def _mean_over_std(series: list[float]) -> float:
    arr = np.asarray(series, dtype=np.float64)
    std = arr.std()  # population std
    if std == 0.0:
        return float("nan")
    return float(arr.mean() / std)


def ranking_metrics(preds_by_day, actuals_by_day) -> RankingMetrics:
    """Aggregate daily cross-sectional correlations.

    Accepts aligned (days, N) arrays or sequences of per-day vectors; cells
    that are NaN on either side are excluded from that day. Days with fewer
    than 3 usable stocks or zero variance are skipped and flagged.
    """
    if len(preds_by_day) != len(actuals_by_day):
        raise ConfigError("preds and actuals must cover the same days")
    if len(preds_by_day) < 2:
        raise ConfigError("need at least 2 days of predictions")
    daily_ic: list[float] = []
    daily_ric: list[float] = []
    flags: list[str] = []
    for d, (p, a) in enumerate(zip(preds_by_day, actuals_by_day)):
        p = np.asarray(p, dtype=np.float64)
        a = np.asarray(a, dtype=np.float64)
        ok = np.isfinite(p) & np.isfinite(a)
        if ok.sum() < 3:
            flags.append(f"day {d}: fewer than 3 scorable stocks, skipped")
            continue
        ic = daily_pearson(p[ok], a[ok])
        if not np.isfinite(ic):
            flags.append(f"day {d}: zero variance, IC undefined, skipped")
            continue
        daily_ic.append(ic)
        daily_ric.append(daily_spearman(p[ok], a[ok]))
    if not daily_ic:
        return RankingMetrics(float("nan"), float("nan"), float("nan"),
                              float("nan"), 0, flags)
    return RankingMetrics(
        ic=float(np.mean(daily_ic)),
        icir=_mean_over_std(daily_ic),
        rank_ic=float(np.mean(daily_ric)),
        rank_icir=_mean_over_std(daily_ric),
        days_used=len(daily_ic),
        flags=flags,
    )


def topk_drop_rebalance(
    prev: set[str],
    scores: dict[str, float],
    m: int,
    n_drop: int,
) -> set[str]:
    """One Topk-Drop step under the overlap constraint |new & prev| >= m - n_drop.

    Stocks are ranked by score descending, ties broken by identifier
    ascending. At most n_drop incumbents that fell out of the top-m are
    replaced by the best-ranked non-incumbents; on an empty previous
    portfolio this reduces to the plain top-m.
    """
    if m <= 0:
        raise ConfigError("m must be positive")
    if not 0 <= n_drop <= m:
        raise ConfigError("need 0 <= n_drop <= m")
    ranked = sorted(scores, key=lambda s: (-scores[s], s))
    # held stocks without a score today rank behind everything else
    unscored = sorted(s for s in prev if s not in scores)
    ranked_all = ranked + unscored

    incumbents = [s for s in ranked_all if s in prev]
    outsiders = [s for s in ranked_all if s not in prev]
    top = set(ranked_all[:m])
    out_of_top = [s for s in incumbents if s not in top]
    d = min(n_drop, len(out_of_top))
    dropped = set(out_of_top[len(out_of_top) - d :])
    kept = [s for s in incumbents if s not in dropped]
    need = m - len(kept)
    return set(kept) | set(outsiders[:need])


@dataclass
class PortfolioState:
    """Backtest output: final holdings plus the full daily history."""

    holdings: set[str]
    equity: float
    history: list[float]                 # net daily returns
    equity_curve: list[float]            # starts at 1.0, length days + 1
    holdings_by_day: list[list[str]]
    turnover_by_day: list[float]
    flags: list[str] = field(default_factory=list)


def run_backtest(
    scores_by_day: np.ndarray,
    returns_by_day: np.ndarray,
    symbols: list[str],
    m: int,
    n_drop: int,
    cost: float,
) -> PortfolioState:
    """Daily Topk-Drop loop with proportional costs on both trade legs.

    scores_by_day[t] must be computed from information through day t-1;
    returns_by_day[t] are the day-t realized returns. Each replaced
    position charges cost on the sell and the buy leg, i.e. the day's
    return is reduced by cost * (replaced / m) * 2. NaN scores make a
    stock unscorable that day; NaN returns of held stocks count as 0 and
    are flagged.
    """
    scores_by_day = np.asarray(scores_by_day, dtype=np.float64)
    returns_by_day = np.asarray(returns_by_day, dtype=np.float64)
    if scores_by_day.shape != returns_by_day.shape:
        raise ConfigError("scores and returns must have the same shape")
    days, N = scores_by_day.shape
    if len(symbols) != N:
        raise ConfigError("symbol list does not match score columns")
    if m > N:
        raise ConfigError(f"m={m} larger than universe {N}")
    pos = {s: i for i, s in enumerate(symbols)}

    holdings: set[str] = set()
    equity = 1.0
    history: list[float] = []
    curve = [1.0]
    holdings_by_day: list[list[str]] = []
    turnover_by_day: list[float] = []
    flags: list[str] = []
    for t in range(days):
        scorable = {
            s: float(scores_by_day[t, i])
            for s, i in pos.items()
            if np.isfinite(scores_by_day[t, i])
        }
        if len(scorable) < m:
            flags.append(f"day {t}: only {len(scorable)} scorable stocks, held previous portfolio")
            new = set(holdings)
        else:
            new = topk_drop_rebalance(holdings, scorable, m, n_drop)
        replaced = len(new - holdings)
        turnover = replaced / m
        if new:
            rets = []
            for s in sorted(new):
                rv = returns_by_day[t, pos[s]]
                if not np.isfinite(rv):
                    flags.append(f"day {t}: NaN return for held {s}, counted as 0")
                    rv = 0.0
                rets.append(float(rv))
            gross = float(np.mean(rets))
        else:
            gross = 0.0
        net = gross - cost * turnover * 2.0
        equity *= 1.0 + net
        history.append(net)
        curve.append(equity)
        holdings_by_day.append(sorted(new))
        turnover_by_day.append(turnover)
        holdings = new
    return PortfolioState(
        holdings=holdings,
        equity=equity,
        history=history,
        equity_curve=curve,
        holdings_by_day=holdings_by_day,
        turnover_by_day=turnover_by_day,
        flags=flags,
    )


def equal_weight_benchmark(returns_by_day: np.ndarray) -> np.ndarray:
    """Daily mean return over all stocks with a finite return."""
    r = np.asarray(returns_by_day, dtype=np.float64)
    out = np.zeros(r.shape[0])
    for t in range(r.shape[0]):
        row = r[t][np.isfinite(r[t])]
        out[t] = row.mean() if row.size else 0.0
    return out


@dataclass
class PortfolioMetrics:
    arr: float
    avol: float
    mdd: float
    asr: float
    ir: float
    flags: list[str] = field(default_factory=list)


def max_drawdown(equity_curve) -> float:
    """Worst peak-to-trough drop of the curve; 0 for non-decreasing curves."""
    eq = np.asarray(equity_curve, dtype=np.float64)
    if eq.size < 1:
        raise ConfigError("empty equity curve")
    running_max = np.maximum.accumulate(eq)
    return float(((eq - running_max) / running_max).min())


def portfolio_metrics(
    daily_returns,
    equity_curve,
    benchmark_returns=None,
) -> PortfolioMetrics:
    """ARR, AVol, MDD, ASR, IR for a net daily return series.

    ARR is the 252-day scaled mean; AVol the 252-day scaled population
    std; IR compares against the supplied benchmark series. Zero-vol
    series yield NaN ratios with a flag.
    """
    r = np.asarray(daily_returns, dtype=np.float64)
    if r.size < 2:
        raise ConfigError("need at least 2 daily returns")
    flags: list[str] = []
    arr = float(r.mean() * TRADING_DAYS_PER_YEAR)
    avol = float(r.std() * math.sqrt(TRADING_DAYS_PER_YEAR))
    mdd = max_drawdown(equity_curve)
    if avol == 0.0:
        flags.append("zero volatility: ASR undefined")
        asr = float("nan")
    else:
        asr = arr / avol
    if benchmark_returns is None:
        flags.append("no benchmark: IR undefined")
        ir = float("nan")
    else:
        excess = r - np.asarray(benchmark_returns, dtype=np.float64)
        std = excess.std()
        if std == 0.0:
            flags.append("zero excess volatility: IR undefined")
            ir = float("nan")
        else:
            ir = float(excess.mean() / std * math.sqrt(TRADING_DAYS_PER_YEAR))
    return PortfolioMetrics(arr=arr, avol=avol, mdd=mdd, asr=asr, ir=ir, flags=flags)


@dataclass
class MetricsReport:
    """The nine headline statistics plus the equity curve."""

    ic: float
    icir: float
    rank_ic: float
    rank_icir: float
    arr: float
    avol: float
    mdd: float
    asr: float
    ir: float
    equity_curve: list[float]
    flags: list[str] = field(default_factory=list)

    FIELD_ORDER = ("ic", "icir", "rank_ic", "rank_icir",
                   "arr", "avol", "mdd", "asr", "ir")

    def to_json_dict(self) -> dict:
        """Exactly the nine metric fields plus equity_curve; NaN maps to null."""

        def jsonable(x: float):
            return None if not np.isfinite(x) else float(x)

        out = {name: jsonable(getattr(self, name)) for name in self.FIELD_ORDER}
        out["equity_curve"] = [float(v) for v in self.equity_curve]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=False)


def build_report(
    ranking: RankingMetrics,
    portfolio: PortfolioMetrics,
    equity_curve,
) -> MetricsReport:
    return MetricsReport(
        ic=ranking.ic,
        icir=ranking.icir,
        rank_ic=ranking.rank_ic,
        rank_icir=ranking.rank_icir,
        arr=portfolio.arr,
        avol=portfolio.avol,
        mdd=portfolio.mdd,
        asr=portfolio.asr,
        ir=portfolio.ir,
        equity_curve=[float(v) for v in equity_curve],
        flags=ranking.flags + portfolio.flags,
    )
