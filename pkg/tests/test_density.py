import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from myobundle.config import DensityDataBounds
from myobundle.density import (
    DensityGrid,
    coefficients,
    default_eps_mass,
    lemma41_bounds,
    moment,
    moment_bounds,
)
from myobundle.exceptions import DegenerateDensity


def grid_of(f, n=64, L=1.0, family="plus", keep_last=False):
    y = np.linspace(0, 1, n + 1)
    l = np.linspace(0, L, n + 1)
    vals = np.asarray(f(y[:, None], l[None, :]), dtype=float) * np.ones((n + 1, n + 1))
    if not keep_last:
        vals[:, -1] = 0.0
    return DensityGrid(vals, y, l, family)


class TestDensityGrid:
    def test_from_function_zeroes_last_column(self):
        g = DensityGrid.from_function(lambda y, l: 1.0 + 0 * l, 8, 8, 1.0, "plus")
        assert g.values.shape == (9, 9)
        assert np.all(g.values[:, -1] == 0.0)
        assert np.all(g.values[:, :-1] == 1.0)

    def test_values_read_only(self):
        g = DensityGrid.from_function(lambda y, l: 1.0 + 0 * l, 8, 8, 1.0, "plus")
        with pytest.raises(ValueError):
            g.values[0, 0] = 5.0

    def test_shape_and_family_checked(self):
        y = np.linspace(0, 1, 9)
        with pytest.raises(ValueError):
            DensityGrid(np.zeros((9, 5)), y, y, "plus")
        with pytest.raises(ValueError):
            DensityGrid(np.zeros((9, 9)), y, y, "up")

    def test_spacings(self):
        g = DensityGrid.from_function(lambda y, l: 0 * l, 10, 20, 2.0, "minus")
        assert g.dy == pytest.approx(0.1)
        assert g.dl == pytest.approx(0.1)
        assert g.L_upper == 2.0

    def test_l2_norm_of_constant(self):
        g = grid_of(lambda y, l: 2.0 + 0 * l, keep_last=True)
        assert g.l2_norm() == pytest.approx(2.0)
        assert g.total_mass() == pytest.approx(2.0)

    def test_csv_round_trip(self, tmp_path):
        g = grid_of(lambda y, l: np.exp(-y) * (1 - l), n=12)
        path = tmp_path / "rho.csv"
        g.to_csv(path)
        header = path.read_text().splitlines()[0].split(",")
        assert header[0] == "y\\l" and len(header) == 14
        back = DensityGrid.from_csv(path, "plus")
        assert np.array_equal(back.values, g.values)
        assert np.array_equal(back.l_nodes, g.l_nodes)
        assert np.array_equal(back.y_nodes, g.y_nodes)


class TestMoment:
    def test_zero(self):
        g = grid_of(lambda y, l: 0 * l)
        assert np.all(moment(g, 1) == 0) and np.all(moment(g, 3) == 0)

    @pytest.mark.parametrize("n", [32, 64, 128])
    def test_constant_first_moment(self, n):
        beta = 1.7
        g = grid_of(lambda y, l: beta + 0 * l, n=n, keep_last=True)
        dl = 1.0 / n
        assert np.allclose(moment(g, 1), beta / 2, atol=beta * dl**2)

    def test_third_moment_of_l_converges_at_order_two(self):
        errs = []
        for n in (16, 32, 64, 128):
            g = grid_of(lambda y, l: l + 0 * y, n=n, keep_last=True)
            errs.append(np.max(np.abs(moment(g, 3) - 0.2)))
        ratios = np.array(errs[:-1]) / np.array(errs[1:])
        assert np.all(np.abs(ratios - 4) < 0.1)

    def test_rejects_other_orders(self):
        with pytest.raises(ValueError):
            moment(grid_of(lambda y, l: 0 * l), 2)

    def test_linear_in_values(self, rng):
        a = grid_of(lambda y, l: rng.random((len(y[:, 0]), len(l[0]))))
        b = grid_of(lambda y, l: rng.random((len(y[:, 0]), len(l[0]))))
        combo = a.with_values(2.0 * a.values - 0.5 * b.values)
        for j in (1, 3):
            assert np.allclose(moment(combo, j), 2.0 * moment(a, j) - 0.5 * moment(b, j), rtol=1e-13)


class TestCoefficients:
    def test_constant_density_values(self):
        g = grid_of(lambda y, l: 1.0 + 0 * l, n=128, keep_last=True)
        c = coefficients(g, g.with_values(g.values))
        dl = 1 / 128
        assert np.allclose(c.mu1_plus, 0.5, atol=dl**2)
        assert np.allclose(c.mu3_plus, 0.25, atol=dl**2)
        assert np.allclose(c.D_plus, 1 / 8, atol=dl**2)
        assert np.allclose(c.D_minus, 1 / 8, atol=dl**2)
        assert np.allclose(c.C, 1 / 4, atol=dl**2)

    def test_constants_scale(self):
        g = grid_of(lambda y, l: 1.0 - l)
        a = coefficients(g, g, C0=1.0, D0=1.0)
        b = coefficients(g, g, C0=3.0, D0=0.5)
        assert np.allclose(b.C, 3 * a.C) and np.allclose(b.D_plus, 0.5 * a.D_plus)

    def test_vanishing_family_is_degenerate(self):
        g = grid_of(lambda y, l: 1.0 - l)
        with pytest.raises(DegenerateDensity):
            coefficients(g, g.with_values(np.zeros_like(g.values)))

    def test_degenerate_reports_first_node(self):
        g = grid_of(lambda y, l: 1.0 - l)
        vals = g.values.copy()
        vals[5:9] = 0.0
        with pytest.raises(DegenerateDensity) as ei:
            coefficients(g, g.with_values(vals))
        assert ei.value.y_node == 5
        assert ei.value.y == pytest.approx(5 / 64)

    def test_eps_mass_threshold(self):
        g = grid_of(lambda y, l: 1.0 - l)
        tiny = g.with_values(1e-9 * g.values)
        coefficients(g, tiny)
        with pytest.raises(DegenerateDensity):
            coefficients(g, tiny, eps_mass=1e-6)

    def test_mismatched_grids(self):
        with pytest.raises(ValueError):
            coefficients(grid_of(lambda y, l: 1 - l, n=16), grid_of(lambda y, l: 1 - l, n=32))

    @settings(max_examples=40, deadline=None)
    @given(c=st.floats(0.01, 100.0), seed=st.integers(0, 2**31 - 1))
    def test_homogeneous_of_degree_one(self, c, seed):
        r = np.random.default_rng(seed)
        p = grid_of(lambda y, l: 0.1 + r.random((33, 33)), n=32)
        m = grid_of(lambda y, l: 0.1 + r.random((33, 33)), n=32, family="minus")
        a = coefficients(p, m)
        b = coefficients(p.with_values(c * p.values), m.with_values(c * m.values))
        for name in ("C", "D_plus", "D_minus"):
            assert np.allclose(getattr(b, name), c * getattr(a, name), rtol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_symmetric_under_swap(self, seed):
        r = np.random.default_rng(seed)
        p = grid_of(lambda y, l: 0.1 + r.random((33, 33)), n=32)
        m = grid_of(lambda y, l: 0.1 + r.random((33, 33)), n=32, family="minus")
        a = coefficients(p, m)
        b = coefficients(m, p)
        assert np.allclose(a.D_plus, b.D_minus, rtol=1e-14)
        assert np.allclose(a.D_minus, b.D_plus, rtol=1e-14)
        assert np.allclose(a.C, b.C, rtol=1e-14)


class TestLemma41Bounds:
    def test_moment_bounds(self):
        lo, hi = moment_bounds(1.0, 1.0, 0.4, 1.0, 1)
        assert lo == pytest.approx(0.2**2 / 2 * 0.5)
        assert hi == pytest.approx(1.0)

    def test_collapsed_bounds_still_ordered(self):
        lo, hi = lemma41_bounds(DensityDataBounds(1.0, 1.0, 1.0, 1.0 + 1e-9))
        assert 0 < lo < hi

    def test_bracket_constant_density_example(self):
        # alpha0 = beta0 = 1 on [0, 1]: C = 1/4, D = 1/8
        lo, hi = lemma41_bounds(DensityDataBounds(1.0, 1.0, 0.999999, 1.0))
        assert lo <= 1 / 8 <= hi and lo <= 1 / 4 <= hi

    def test_monotone_in_beta0(self):
        b = [lemma41_bounds(DensityDataBounds(1.0, beta, 0.4, 1.0)) for beta in (1.0, 2.0, 4.0)]
        uppers = [u for _, u in b]
        lowers = [l for l, _ in b]
        assert uppers[0] < uppers[1] < uppers[2]
        # the lower bound on D involves the largest first moment of the other family
        assert lowers[0] >= lowers[1] >= lowers[2]

    def test_scales_with_constants(self):
        b = DensityDataBounds(1.0, 1.0, 0.4, 1.0)
        lo, hi = lemma41_bounds(b)
        lo2, hi2 = lemma41_bounds(b, C0=2.0, D0=2.0)
        assert lo2 == pytest.approx(2 * lo) and hi2 == pytest.approx(2 * hi)

    def test_default_eps_mass(self):
        b = DensityDataBounds(1.0, 1.0, 0.4, 1.0)
        assert default_eps_mass(b) == pytest.approx(1e-4 * 0.01)

    @settings(max_examples=100, deadline=None)
    @given(
        alpha0=st.floats(0.2, 2.0),
        ratio=st.floats(1.0, 3.0),
        L_lower=st.floats(0.2, 0.8),
        seed=st.integers(0, 2**31 - 1),
    )
    def test_admissible_densities_inside_bounds(self, alpha0, ratio, L_lower, seed):
        """Random densities with rho >= alpha0/2 on l <= L_lower/2, rho <= 2 beta0, support in [0, 1]."""
        beta0 = alpha0 * ratio
        n = 64
        r = np.random.default_rng(seed)
        bounds = DensityDataBounds(alpha0, beta0, L_lower, 1.0)
        l = np.linspace(0, 1, n + 1)

        def sample():
            v = r.uniform(0.0, 2 * beta0, (n + 1, n + 1))
            low = l <= L_lower / 2
            v[:, low] = r.uniform(alpha0 / 2, 2 * beta0, (n + 1, int(low.sum())))
            return v

        p = grid_of(lambda y, l_: sample(), n=n)
        m = grid_of(lambda y, l_: sample(), n=n, family="minus")
        c = coefficients(p, m)
        lo, hi = lemma41_bounds(bounds)
        q = 10 * (1 / n) ** 2
        for arr in (c.C, c.D_plus, c.D_minus):
            assert arr.min() >= lo * (1 - q)
            assert arr.max() <= hi * (1 + q)
