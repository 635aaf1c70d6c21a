import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats

from scpt.analysis import (
    betainc_regularized,
    cumulative_explained_variance,
    point_biserial,
    rank_directions,
    t_two_sided_p,
    write_cev_csv,
    write_direction_csv,
    write_gnuplot,
)
from scpt.errors import AllZero, DegenerateInput


class TestIncompleteBeta:
    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.05, 200), st.floats(0.05, 200), st.floats(0, 1))
    def test_matches_scipy(self, a, b, x):
        assert betainc_regularized(a, b, x) == pytest.approx(special.betainc(a, b, x), abs=1e-12)

    @pytest.mark.parametrize("df", [1, 2, 5, 30, 198, 5000])
    def test_t_tail(self, df):
        for t in (0.0, 0.3, 1.0, 2.5, 8.0, 40.0):
            assert t_two_sided_p(t, df) == pytest.approx(2 * stats.t.sf(t, df), rel=1e-9, abs=1e-300)


class TestPointBiserial:
    def test_perfect(self):
        r, p = point_biserial([0, 0, 1, 1], [0, 0, 1, 1])
        assert r == 1.0 and 0 < p < 1e-300 * 10

    def test_sign_symmetry(self):
        r1, p1 = point_biserial([0, 1, 0, 1], [1, 2, 1, 2.5])
        r2, p2 = point_biserial([1, 0, 1, 0], [1, 2, 1, 2.5])
        assert r1 == pytest.approx(-r2) and p1 == pytest.approx(p2)

    def test_matches_scipy(self, rng):
        for _ in range(50):
            n = rng.integers(5, 300)
            y = rng.integers(0, 2, n)
            y[:2] = [0, 1]
            s = rng.standard_normal(n) + 0.5 * y * rng.random()
            r, p = point_biserial(y, s)
            ref = stats.pointbiserialr(y, s)
            assert r == pytest.approx(ref.statistic, abs=1e-12)
            assert p == pytest.approx(ref.pvalue, rel=1e-8)

    @pytest.mark.parametrize("labels,scores", [
        ([0, 1, 1], [2, 2, 2]),
        ([1, 1, 1], [1, 2, 3]),
        ([0, 2, 1], [1, 2, 3]),
        ([0, 1], [1, 2]),
        ([0, 1, 1], [1, 2]),
    ])
    def test_degenerate(self, labels, scores):
        with pytest.raises(DegenerateInput):
            point_biserial(labels, scores)


class TestCEV:
    def test_examples(self):
        np.testing.assert_allclose(cumulative_explained_variance([2, 1]), [0.8, 1.0])
        np.testing.assert_array_equal(cumulative_explained_variance([1, 0]), [1.0, 1.0])
        with pytest.raises(AllZero):
            cumulative_explained_variance([0, 0])
        with pytest.raises(ValueError):
            cumulative_explained_variance([1, 2])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0, 1e6), min_size=1, max_size=30))
    def test_monotone_to_one(self, vals):
        sigma = np.sort(vals)[::-1]
        if sigma[0] == 0:
            return
        c = cumulative_explained_variance(sigma)
        assert np.all(np.diff(c) >= 0) and c[-1] == 1.0 and np.all((c >= 0) & (c <= 1))


class TestRankDirections:
    def test_planted_direction_ranks_first(self, rng):
        n, d = 120, 6
        y = rng.integers(0, 2, n)
        X = 0.05 * rng.standard_normal((n, d))
        X[:, 0] += 3.0 * (2 * y - 1)  # dominant axis carries the label
        rep = rank_directions(X, y, 3)
        assert rep.direction[0] == 0 and rep.abs_r[0] > 0.99
        assert np.all(np.diff(rep.abs_r) <= 0)
        assert rep.top.sum() == 3 and list(rep.rank) == list(range(1, d + 1))

    def test_all_flagged_when_s_is_full(self, rng):
        rep = rank_directions(rng.standard_normal((30, 4)), np.arange(30) % 2, 4)
        assert rep.top.all()

    def test_null_calibration(self):
        rng = np.random.default_rng(2024)
        ps = []
        for _ in range(10):
            X = rng.standard_normal((200, 20))
            y = rng.integers(0, 2, 200)
            ps.extend(rank_directions(X, y, 20).p_value)
        assert len(ps) == 200
        assert abs(np.mean(np.array(ps) < 0.05) - 0.05) <= 0.04

    def test_needs_both_classes(self, rng):
        with pytest.raises(DegenerateInput):
            rank_directions(rng.standard_normal((10, 3)), np.zeros(10), 2)

    def test_writers(self, tmp_path, rng):
        rep = rank_directions(rng.standard_normal((20, 3)), np.arange(20) % 2, 2)
        write_direction_csv(rep, tmp_path / "d.csv")
        write_cev_csv(cumulative_explained_variance(np.sort(rep.sigma)[::-1]), tmp_path / "c.csv")
        write_gnuplot({"k": [1, 2], "v": [0.5, 1.0]}, tmp_path / "g.dat")
        assert (tmp_path / "d.csv").read_text().splitlines()[0] == "direction,abs_r_pb,p_value,rank,top_s"
        assert len((tmp_path / "c.csv").read_text().splitlines()) == 4
        assert (tmp_path / "g.dat").read_text() == "# k v\n1 0.5\n2 1\n"
