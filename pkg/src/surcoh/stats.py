"""Group summaries, method agreement, surprisal-coherence relation and
BPRS severity trendlines, as plot-ready records.

Aggregation is session-first: per-session means are computed before group
means so every session carries equal weight, regardless of how talkative
its subject was.  The severity trendline is a sliding-window mean over
integer BPRS centers in the observed 18-67 range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

BPRS_TREND_RANGE = (18, 67)
DEFAULT_WINDOW_HALFWIDTH = 5
DEFAULT_MIN_SUPPORT = 3


class DegenerateVariance(ValueError):
    """A correlation or regression input has zero variance."""


@dataclass(frozen=True)
class SessionInfo:
    diagnosis: str
    bprs_total: int | None


@dataclass(frozen=True)
class SessionMean:
    session_id: str
    group: str
    bprs_total: int | None
    metric: str
    mean: float
    n_values: int


@dataclass(frozen=True)
class GroupSummary:
    group: str
    metric: str
    mean: float
    std: float
    n_sessions: int
    n_values: int


@dataclass(frozen=True)
class MethodAgreement:
    pearson_r: float
    spearman_rho: float
    pairs: list[tuple[str, int, float, float]]  # session, utterance, lda, embed


@dataclass(frozen=True)
class GroupRelation:
    group: str
    slope: float | None
    intercept: float | None
    r: float | None
    n_sessions: int
    degenerate: bool


@dataclass(frozen=True)
class TrendPoint:
    bprs_center: int
    window_lo: int
    window_hi: int
    mean: float
    n_sessions: int


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def _sample_std(values: Sequence[float]) -> float:
    if len(values) < 2:
        return 0.0
    mu = _mean(values)
    return math.sqrt(math.fsum((v - mu) ** 2 for v in values) / (len(values) - 1))


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    if len(xs) != len(ys) or len(xs) < 2:
        raise ValueError("pearson needs two equal-length series of >= 2 points")
    mx, my = _mean(xs), _mean(ys)
    sxy = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    sxx = math.fsum((x - mx) ** 2 for x in xs)
    syy = math.fsum((y - my) ** 2 for y in ys)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateVariance("a series is constant; correlation undefined")
    return sxy / math.sqrt(sxx * syy)


def _ranks(values: Sequence[float]) -> list[float]:
    """Average ranks (1-based); ties share the mean of their rank span."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        rank = (i + j) / 2.0 + 1.0
        for t in range(i, j + 1):
            ranks[order[t]] = rank
        i = j + 1
    return ranks


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    return pearson(_ranks(xs), _ranks(ys))


def ols(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float, float]:
    """Least squares of y on x: (slope, intercept, pearson r)."""
    if len(xs) != len(ys) or len(xs) < 2:
        raise ValueError("ols needs two equal-length series of >= 2 points")
    mx, my = _mean(xs), _mean(ys)
    sxx = math.fsum((x - mx) ** 2 for x in xs)
    if sxx == 0.0:
        raise DegenerateVariance("predictor is constant; slope undefined")
    sxy = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    slope = sxy / sxx
    intercept = my - slope * mx
    syy = math.fsum((y - my) ** 2 for y in ys)
    r = 0.0 if syy == 0.0 else sxy / math.sqrt(sxx * syy)
    return slope, intercept, r


def session_means(
    values: Iterable[tuple[str, float]],
    sessions: Mapping[str, SessionInfo],
    metric: str,
) -> list[SessionMean]:
    """Mean of the per-unit values of each session, in session order."""
    grouped: dict[str, list[float]] = {}
    order: list[str] = []
    for session_id, value in values:
        if session_id not in sessions:
            raise KeyError(f"score references unknown session {session_id!r}")
        if session_id not in grouped:
            grouped[session_id] = []
            order.append(session_id)
        grouped[session_id].append(value)
    return [
        SessionMean(
            session_id=sid,
            group=sessions[sid].diagnosis,
            bprs_total=sessions[sid].bprs_total,
            metric=metric,
            mean=_mean(grouped[sid]),
            n_values=len(grouped[sid]),
        )
        for sid in order
    ]


def group_means(
    values: Iterable[tuple[str, float]],
    sessions: Mapping[str, SessionInfo],
    metric: str,
) -> tuple[list[SessionMean], list[GroupSummary]]:
    """Session-level means plus their per-diagnosis summary (sessions
    weighted equally)."""
    per_session = session_means(values, sessions, metric)
    by_group: dict[str, list[SessionMean]] = {}
    for sm in per_session:
        by_group.setdefault(sm.group, []).append(sm)
    summaries = [
        GroupSummary(
            group=group,
            metric=metric,
            mean=_mean([sm.mean for sm in members]),
            std=_sample_std([sm.mean for sm in members]),
            n_sessions=len(members),
            n_values=sum(sm.n_values for sm in members),
        )
        for group, members in sorted(by_group.items())
    ]
    return per_session, summaries


def method_agreement(
    lda_scores: Mapping[tuple[str, int], float],
    embed_scores: Mapping[tuple[str, int], float],
) -> MethodAgreement:
    """Correlate the two coherence methods over co-scored utterances."""
    keys = sorted(set(lda_scores) & set(embed_scores))
    if len(keys) < 3:
        raise ValueError(f"need >= 3 utterances scored by both methods, got {len(keys)}")
    xs = [lda_scores[k] for k in keys]
    ys = [embed_scores[k] for k in keys]
    return MethodAgreement(
        pearson_r=pearson(xs, ys),
        spearman_rho=spearman(xs, ys),
        pairs=[(sid, uidx, x, y) for (sid, uidx), x, y in zip(keys, xs, ys)],
    )


def group_relation(
    x_session_means: Sequence[SessionMean],
    y_session_means: Sequence[SessionMean],
    min_sessions: int = 3,
) -> list[GroupRelation]:
    """Per-group OLS of the y metric on the x metric over session means.

    Groups with fewer than min_sessions joined sessions are not reported;
    a group with a constant predictor is reported as degenerate.
    """
    x_by_sid = {sm.session_id: sm for sm in x_session_means}
    by_group: dict[str, list[tuple[float, float]]] = {}
    for sm in y_session_means:
        other = x_by_sid.get(sm.session_id)
        if other is None:
            continue
        by_group.setdefault(sm.group, []).append((other.mean, sm.mean))
    results = []
    for group, points in sorted(by_group.items()):
        if len(points) < min_sessions:
            continue
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        try:
            slope, intercept, r = ols(xs, ys)
        except DegenerateVariance:
            results.append(
                GroupRelation(group, None, None, None, len(points), degenerate=True)
            )
            continue
        results.append(
            GroupRelation(group, slope, intercept, r, len(points), degenerate=False)
        )
    return results


def severity_trend(
    metric_session_means: Sequence[SessionMean],
    window_halfwidth: int = DEFAULT_WINDOW_HALFWIDTH,
    min_support: int = DEFAULT_MIN_SUPPORT,
) -> list[TrendPoint]:
    """Windowed mean of the session metric per integer BPRS center,
    diagnosis ignored.  Sessions without a BPRS total are skipped."""
    with_bprs = [sm for sm in metric_session_means if sm.bprs_total is not None]
    if not with_bprs:
        raise ValueError("no session carries a BPRS total")
    lo, hi = BPRS_TREND_RANGE
    points = []
    for center in range(lo, hi + 1):
        in_window = [
            sm.mean for sm in with_bprs if abs(sm.bprs_total - center) <= window_halfwidth
        ]
        if len(in_window) < min_support:
            continue
        points.append(
            TrendPoint(
                bprs_center=center,
                window_lo=center - window_halfwidth,
                window_hi=center + window_halfwidth,
                mean=_mean(in_window),
                n_sessions=len(in_window),
            )
        )
    return points
