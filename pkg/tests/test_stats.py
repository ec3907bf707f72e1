import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from surcoh.stats import (
    DegenerateVariance,
    GroupSummary,
    SessionInfo,
    group_means,
    group_relation,
    method_agreement,
    ols,
    pearson,
    session_means,
    severity_trend,
    spearman,
)

SESSIONS = {
    "h1": SessionInfo("HC", 20),
    "h2": SessionInfo("HC", 25),
    "z1": SessionInfo("SZ", 40),
    "z2": SessionInfo("SZ", 55),
}


class TestGroupMeans:
    def test_mean_of_two_sessions(self):
        values = [("h1", 0.30), ("h2", 0.26)]
        _, summaries = group_means(values, SESSIONS, "coherence")
        (hc,) = summaries
        assert hc.group == "HC"
        assert math.isclose(hc.mean, 0.28, rel_tol=1e-12)
        assert hc.n_sessions == 2

    def test_session_first_weighting(self):
        # h1 contributes many values, h2 one; sessions still weigh equally
        values = [("h1", 1.0)] * 9 + [("h2", 3.0)]
        _, summaries = group_means(values, SESSIONS, "m")
        assert summaries[0].mean == 2.0

    def test_single_session_group(self):
        values = [("z1", 5.0), ("z1", 7.0)]
        _, summaries = group_means(values, SESSIONS, "m")
        (sz,) = summaries
        assert sz.mean == 6.0
        assert sz.std == 0.0

    def test_two_groups_two_rows(self):
        values = [("h1", 1.0), ("z1", 2.0), ("h2", 3.0), ("z2", 4.0)]
        _, summaries = group_means(values, SESSIONS, "m")
        assert [s.group for s in summaries] == ["HC", "SZ"]

    def test_unknown_session_rejected(self):
        with pytest.raises(KeyError, match="unknown session"):
            group_means([("nope", 1.0)], SESSIONS, "m")

    def test_permutation_invariance(self):
        values = [("h1", 1.0), ("h2", 2.0), ("z1", 3.0), ("h1", 4.0)]
        _, a = group_means(values, SESSIONS, "m")
        _, b = group_means(list(reversed(values)), SESSIONS, "m")
        assert a == b


class TestCorrelations:
    def test_exact_linearity(self):
        result = method_agreement(
            {("s", 0): 0.1, ("s", 1): 0.2, ("s", 2): 0.3},
            {("s", 0): 0.2, ("s", 1): 0.4, ("s", 2): 0.6},
        )
        assert math.isclose(result.pearson_r, 1.0, rel_tol=1e-12)
        assert math.isclose(result.spearman_rho, 1.0, rel_tol=1e-12)

    def test_constant_method_degenerate(self):
        with pytest.raises(DegenerateVariance):
            method_agreement(
                {("s", 0): 0.5, ("s", 1): 0.5, ("s", 2): 0.5},
                {("s", 0): 0.2, ("s", 1): 0.4, ("s", 2): 0.6},
            )

    def test_too_few_pairs_rejected(self):
        with pytest.raises(ValueError, match=">= 3"):
            method_agreement({("s", 0): 0.1}, {("s", 0): 0.2})

    def test_noisy_linear_relation_recovered(self):
        rng = np.random.default_rng(77)
        xs = rng.uniform(0, 1, 50)
        ys = 0.5 * xs + rng.normal(0, 0.01, 50)
        lda = {("s", i): float(x) for i, x in enumerate(xs)}
        emb = {("s", i): float(y) for i, y in enumerate(ys)}
        result = method_agreement(lda, emb)
        assert result.pearson_r > 0.95

    def test_pairs_matched_on_keys(self):
        result = method_agreement(
            {("a", 0): 0.1, ("a", 1): 0.2, ("b", 0): 0.3, ("c", 9): 0.9},
            {("a", 0): 0.1, ("a", 1): 0.3, ("b", 0): 0.5},
        )
        assert len(result.pairs) == 3

    @given(
        st.lists(
            st.tuples(st.integers(-100, 100), st.integers(-100, 100)),
            min_size=3,
            max_size=30,
        )
    )
    def test_spearman_invariant_under_monotone_transform(self, points):
        # integer inputs keep the transforms strictly monotone in float
        xs = [float(p[0]) for p in points]
        ys = [float(p[1]) for p in points]
        if len(set(xs)) < 2 or len(set(ys)) < 2:
            return
        rho = spearman(xs, ys)
        rho2 = spearman([math.exp(x / 50.0) for x in xs], [y**3 for y in ys])
        assert abs(rho - rho2) < 1e-9
        assert -1.0 - 1e-12 <= rho <= 1.0 + 1e-12


class TestGroupRelation:
    def sm(self, sid, group, mean, metric="x"):
        from surcoh.stats import SessionMean

        return SessionMean(sid, group, 30, metric, mean, 1)

    def test_exact_line(self):
        xs = [self.sm(f"s{i}", "HC", x) for i, x in enumerate([1.0, 2.0, 3.0])]
        ys = [self.sm(f"s{i}", "HC", y, "y") for i, y in enumerate([3.0, 5.0, 7.0])]
        (rel,) = group_relation(xs, ys)
        assert math.isclose(rel.slope, 2.0, rel_tol=1e-12)
        assert math.isclose(rel.intercept, 1.0, rel_tol=1e-12)
        assert math.isclose(rel.r, 1.0, rel_tol=1e-12)

    def test_imposed_negative_relation(self):
        rng = np.random.default_rng(5)
        xs, ys = [], []
        for i in range(20):
            x = float(rng.uniform(40, 60))
            xs.append(self.sm(f"s{i}", "HC", x))
            ys.append(self.sm(f"s{i}", "HC", 0.9 - 0.01 * x + float(rng.normal(0, 0.01)), "y"))
        (rel,) = group_relation(xs, ys)
        assert rel.slope < 0

    def test_imposed_positive_relation(self):
        rng = np.random.default_rng(6)
        xs, ys = [], []
        for i in range(20):
            x = float(rng.uniform(40, 60))
            xs.append(self.sm(f"s{i}", "SZ", x))
            ys.append(self.sm(f"s{i}", "SZ", 0.1 + 0.01 * x + float(rng.normal(0, 0.01)), "y"))
        (rel,) = group_relation(xs, ys)
        assert rel.slope > 0

    def test_degenerate_predictor_flagged(self):
        xs = [self.sm(f"s{i}", "HC", 2.0) for i in range(4)]
        ys = [self.sm(f"s{i}", "HC", float(i), "y") for i in range(4)]
        (rel,) = group_relation(xs, ys)
        assert rel.degenerate
        assert rel.slope is None

    def test_small_group_not_reported(self):
        xs = [self.sm("s0", "HC", 1.0), self.sm("s1", "HC", 2.0)]
        ys = [self.sm("s0", "HC", 1.0, "y"), self.sm("s1", "HC", 2.0, "y")]
        assert group_relation(xs, ys) == []

    def test_ols_residuals_orthogonal_to_predictor(self):
        rng = np.random.default_rng(8)
        xs = [float(x) for x in rng.uniform(-1, 1, 40)]
        ys = [2.0 * x + float(e) for x, e in zip(xs, rng.normal(0, 0.3, 40))]
        slope, intercept, _ = ols(xs, ys)
        residuals = [y - (slope * x + intercept) for x, y in zip(xs, ys)]
        assert abs(math.fsum(r * x for r, x in zip(residuals, xs))) < 1e-9


class TestSeverityTrend:
    def sm(self, sid, bprs, mean):
        from surcoh.stats import SessionMean

        return SessionMean(sid, "HC", bprs, "m", mean, 1)

    def test_constant_metric_constant_trend(self):
        means = [self.sm(f"s{i}", 18 + i, 4.25) for i in range(50)]
        points = severity_trend(means)
        assert points
        assert all(p.mean == 4.25 for p in points)

    def test_metric_equal_to_bprs_window_means(self):
        bprs_values = [20, 22, 24, 26, 28, 30, 35, 40, 45, 50, 55, 60, 65]
        means = [self.sm(f"s{i}", b, float(b)) for i, b in enumerate(bprs_values)]
        points = severity_trend(means, window_halfwidth=5, min_support=3)
        for p in points:
            in_window = [b for b in bprs_values if abs(b - p.bprs_center) <= 5]
            assert len(in_window) >= 3
            assert math.isclose(p.mean, sum(in_window) / len(in_window), rel_tol=1e-12)

    def test_low_support_window_omitted(self):
        means = [self.sm("s0", 20, 1.0), self.sm("s1", 21, 2.0), self.sm("s2", 60, 3.0)]
        points = severity_trend(means, window_halfwidth=5, min_support=3)
        assert all(p.n_sessions >= 3 for p in points)
        assert not any(p.bprs_center >= 50 for p in points)

    def test_no_bprs_rejected(self):
        means = [self.sm("s0", None, 1.0)]
        with pytest.raises(ValueError, match="BPRS"):
            severity_trend(means)

    def test_order_independent(self):
        means = [self.sm(f"s{i}", 18 + (i * 7) % 50, float(i)) for i in range(30)]
        assert severity_trend(means) == severity_trend(list(reversed(means)))
