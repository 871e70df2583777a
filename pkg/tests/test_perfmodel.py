import math
import re

import numpy as np
import pydot
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from thermoperf.errors import DimensionError, DomainError, RangeError
from thermoperf.heatsim import ContactConditions, MaterialSample, SensorParams, surface_temperature
from thermoperf.matdb import Category, MaterialDatabase, MaterialRecord, builtin_appendix_table
from thermoperf.perfmodel import (
    BinaryMap,
    EffusivityGrid,
    F1Matrix,
    MinDifference,
    binary_map,
    build_node_graph,
    erfc2_integral,
    f1_matrix,
    f1_pair,
    material_pair_avg_f1,
    matrix_match,
    min_distinguishable_difference,
    noncentrality_lambda,
    read_matrix,
    to_dot,
    write_matrix,
)

SENSOR = SensorParams()
COND = ContactConditions()


class TestGrid:
    def test_defaults(self):
        g = EffusivityGrid()
        assert len(g) == 500 and g.width == 80.0
        assert g.bounds()[0] == (0.0, 80.0) and g.bounds()[-1] == (39920.0, 40000.0)
        assert g.midpoints()[0] == 40.0

    def test_stride_subgrid(self):
        g = EffusivityGrid(stride=10)
        assert len(g) == 50 and g.width == 80.0
        np.testing.assert_allclose(g.midpoints()[:3], [40.0, 840.0, 1640.0])

    @pytest.mark.parametrize("kw", [{"e_min": 10, "e_max": 10}, {"e_min": -1}, {"n_intervals": 1}, {"stride": 0}])
    def test_validation(self, kw):
        with pytest.raises(DomainError):
            EffusivityGrid(**kw)


class TestLambda:
    def test_equal_effusivity(self):
        assert noncentrality_lambda(SENSOR, 700.0, 700.0, COND, 0.05) == 0.0

    def test_integral_against_quad(self):
        a, x = SENSOR.alpha_sens, SENSOR.thermistor_depth
        g = lambda t: special.erfc(x / (2 * math.sqrt(a * t))) ** 2 if t > 0 else 0.0
        val, _ = integrate.quad(g, 0, 2.0, epsabs=0, epsrel=1e-12, limit=200)
        assert erfc2_integral(SENSOR, 2.0) == pytest.approx(val, rel=1e-8)

    def test_against_riemann_sum(self):
        # the closed form replaces sum_i Delta_i^2 / sigma^2 by an integral
        e1, e2, sigma = 1000.0, 2000.0, 0.05
        t = np.arange(1, SENSOR.n_samples(2.0) + 1) / SENSOR.sample_rate
        ts1 = surface_temperature(SENSOR, MaterialSample(e1), COND)
        ts2 = surface_temperature(SENSOR, MaterialSample(e2), COND)
        prof = special.erfc(SENSOR.thermistor_depth / (2 * np.sqrt(SENSOR.alpha_sens * t)))
        riemann = np.sum(((ts1 - ts2) * prof) ** 2) / sigma**2
        assert noncentrality_lambda(SENSOR, e1, e2, COND, sigma) == pytest.approx(riemann, rel=5e-3)

    def test_scales_with_surface_gap_squared(self):
        base = noncentrality_lambda(SENSOR, 500.0, 3000.0, COND, 0.05)
        # doubling the sensor-ambient gap doubles every T_surf difference
        wide = ContactConditions(t_sens0=45.0, t_obj0=25.0)
        assert noncentrality_lambda(SENSOR, 500.0, 3000.0, wide, 0.05) == pytest.approx(4 * base, rel=1e-12)

    def test_sigma_must_be_positive(self):
        with pytest.raises(DomainError):
            noncentrality_lambda(SENSOR, 500.0, 3000.0, COND, 0.0)


class TestF1Pair:
    def test_equal(self):
        assert f1_pair(SENSOR, 1234.0, 1234.0, COND, 0.05) == pytest.approx(0.5, abs=1e-12)

    def test_foam_vs_metal(self):
        assert f1_pair(SENSOR, 100.0, 30000.0, COND, 0.05) > 0.999

    @given(e1=st.floats(1, 4e4), e2=st.floats(1, 4e4), sigma=st.floats(0.01, 0.1))
    @settings(max_examples=60, deadline=None)
    def test_symmetric_and_bounded(self, e1, e2, sigma):
        a = f1_pair(SENSOR, e1, e2, COND, sigma)
        assert a == f1_pair(SENSOR, e2, e1, COND, sigma)
        assert 0.5 - 1e-12 <= a <= 1.0

    @pytest.mark.parametrize("e1", [200.0, 5000.0, 25000.0])
    def test_grows_as_partner_moves_away(self, e1):
        up = [f1_pair(SENSOR, e1, e1 + d, COND, 0.05) for d in np.linspace(0, 15000, 40)]
        down = [f1_pair(SENSOR, e1, e1 - d, COND, 0.05) for d in np.linspace(0, e1 * 0.99, 40)]
        assert np.all(np.diff(up) >= -1e-12)
        assert np.all(np.diff(down) >= -1e-12)

    @given(e1=st.floats(50, 4e4), e2=st.floats(50, 4e4))
    @settings(max_examples=40, deadline=None)
    def test_condition_monotonicity(self, e1, e2):
        f = lambda cond, s: f1_pair(SENSOR, e1, e2, cond, s)
        by_time = [f(ContactConditions(t_contact=t), 0.05) for t in (1.0, 2.0, 3.0, 4.0)]
        by_sigma = [f(COND, s) for s in (0.01, 0.05, 0.10)]
        by_gap = [f(ContactConditions(t_sens0=25.0 + g), 0.05) for g in (5.0, 10.0, 15.0)]
        assert np.all(np.diff(by_time) >= -1e-12)
        assert np.all(np.diff(by_sigma) <= 1e-12)
        assert np.all(np.diff(by_gap) >= -1e-12)


class TestMinDifference:
    @pytest.mark.parametrize("e", [300.0, 892.0, 5000.0, 20000.0])
    def test_bisection_contract(self, e):
        md = min_distinguishable_difference(SENSOR, e, COND, 0.05)
        assert md.found
        d = md.delta
        up = lambda dd: f1_pair(SENSOR, e, e + dd, COND, 0.05) if e + dd <= 4e4 else 0.0
        down = lambda dd: f1_pair(SENSOR, e, e - dd, COND, 0.05) if dd < e else 0.0
        assert max(up(d), down(d)) >= 0.9
        assert max(up(0.999 * d), down(0.999 * d)) < 0.9

    def test_lower_side_reached_first(self):
        md = min_distinguishable_difference(SENSOR, 10000.0, COND, 0.05)
        assert md.direction == "down"

    def test_sentinel_when_unreachable(self):
        md = min_distinguishable_difference(SENSOR, 30000.0, ContactConditions(t_sens0=25.5, t_contact=0.05), 0.5)
        assert not md.found
        assert md.value() == math.inf
        assert md.csv_field() == MinDifference.INDISTINGUISHABLE

    @pytest.mark.parametrize("kw", [{"phi": 0.5}, {"phi": 1.0}, {"e": 0.0}, {"e": 5e4}])
    def test_validation(self, kw):
        args = {"e": 1000.0, "phi": 0.9} | kw
        with pytest.raises(DomainError):
            min_distinguishable_difference(SENSOR, args["e"], COND, 0.05, args["phi"])

    def test_condition_trends(self):
        es = [500.0, 3000.0, 12000.0, 30000.0]
        for e in es:
            lo_noise = min_distinguishable_difference(SENSOR, e, COND, 0.01).value()
            hi_noise = min_distinguishable_difference(SENSOR, e, COND, 0.10).value()
            short = min_distinguishable_difference(SENSOR, e, ContactConditions(t_contact=1.0), 0.05).value()
            long_ = min_distinguishable_difference(SENSOR, e, ContactConditions(t_contact=4.0), 0.05).value()
            assert hi_noise >= lo_noise
            assert long_ <= short


@pytest.fixture(scope="module")
def small_matrix():
    return f1_matrix(SENSOR, EffusivityGrid(n_intervals=40), COND, 0.05)


class TestMatrix:
    def test_symmetric_half_diagonal(self, small_matrix):
        s = small_matrix.scores
        assert np.array_equal(s, s.T)
        assert np.all(np.diag(s) == 0.5)
        assert np.all((s >= 0.5 - 1e-12) & (s <= 1.0))

    def test_entries_are_midpoint_pairs(self, small_matrix):
        mids = small_matrix.grid.midpoints()
        assert small_matrix.scores[3, 17] == f1_pair(SENSOR, mids[3], mids[17], COND, 0.05)

    def test_parallel_matches_serial(self, small_matrix):
        par = f1_matrix(SENSOR, EffusivityGrid(n_intervals=40), COND, 0.05, workers=2)
        assert np.array_equal(par.scores, small_matrix.scores)

    def test_shape_check(self):
        with pytest.raises(DimensionError):
            F1Matrix(EffusivityGrid(n_intervals=4), np.zeros((3, 3)), SENSOR, COND, 0.05)

    def test_serialization_round_trip(self, small_matrix, tmp_path):
        write_matrix(small_matrix, tmp_path / "m")
        back = read_matrix(tmp_path / "m.json")
        assert np.array_equal(back.scores, small_matrix.scores)
        assert back.grid == small_matrix.grid and back.sensor == SENSOR and back.cond == COND
        header = (tmp_path / "m.csv").read_text().splitlines()[0].split(",")
        assert [float(h) for h in header] == list(small_matrix.grid.midpoints())
        bm = binary_map(small_matrix)
        write_matrix(bm, tmp_path / "b")
        back_bm = read_matrix(tmp_path / "b.csv")
        assert np.array_equal(back_bm.bits, bm.bits) and back_bm.phi == 0.9


class TestBinaryMap:
    def grid4(self):
        return EffusivityGrid(n_intervals=4)

    def test_all_half(self):
        m = F1Matrix(self.grid4(), np.full((4, 4), 0.5), SENSOR, COND, 0.05)
        bm = binary_map(m)
        assert np.all(bm.bits == 0) and bm.indistinguishable_fraction() == 1.0

    def test_all_one(self):
        m = F1Matrix(self.grid4(), np.ones((4, 4)), SENSOR, COND, 0.05)
        iu = np.triu_indices(4, 1)
        assert np.all(binary_map(m).bits[iu] == 1)

    def test_threshold_inclusive(self):
        m = F1Matrix(self.grid4(), np.full((4, 4), 0.9), SENSOR, COND, 0.05)
        assert np.all(binary_map(m, 0.9).bits == 1)

    def test_idempotent(self, small_matrix):
        once = binary_map(small_matrix)
        assert np.array_equal(binary_map(once).bits, once.bits)


class TestMatch:
    def bits(self, arr):
        return BinaryMap(EffusivityGrid(n_intervals=len(arr)), np.array(arr))

    def test_identity(self, small_matrix):
        bm = binary_map(small_matrix)
        assert matrix_match(bm, bm) == 100.0

    def test_complement(self, small_matrix):
        bm = binary_map(small_matrix)
        comp = BinaryMap(bm.grid, 1 - bm.bits)
        assert matrix_match(bm, comp) == 0.0

    def test_one_cell_of_six(self):
        a = np.zeros((4, 4), dtype=int)
        b = a.copy()
        b[1, 3] = b[3, 1] = 1
        assert matrix_match(self.bits(a), self.bits(b)) == pytest.approx(100 * (1 - 1 / 6))

    def test_size_mismatch(self):
        with pytest.raises(DimensionError):
            matrix_match(self.bits(np.zeros((4, 4))), self.bits(np.zeros((5, 5))))

    @given(st.integers(2, 12).flatmap(lambda n: st.tuples(
        st.lists(st.integers(0, 1), min_size=n * n, max_size=n * n),
        st.lists(st.integers(0, 1), min_size=n * n, max_size=n * n), st.just(n))))
    @settings(max_examples=60, deadline=None)
    def test_symmetric_and_hundred_iff_equal(self, data):
        xa, xb, n = data
        a = np.triu(np.array(xa).reshape(n, n), 1)
        b = np.triu(np.array(xb).reshape(n, n), 1)
        a, b = a + a.T, b + b.T
        ma, mb = self.bits(a), self.bits(b)
        assert matrix_match(ma, mb) == matrix_match(mb, ma)
        assert (matrix_match(ma, mb) == 100.0) == np.array_equal(a, b)


def rec(name, lo, hi, cat=Category.METALS_ALLOYS, e_id=None):
    return MaterialRecord(name, cat, lo, hi, e_id)


@pytest.fixture(scope="module")
def full():
    return f1_matrix(SENSOR, EffusivityGrid(), COND, 0.05)


@pytest.fixture(scope="module")
def graph():
    m = f1_matrix(SENSOR, EffusivityGrid(n_intervals=100), COND, 0.05)
    return build_node_graph(builtin_appendix_table(), m)


class TestPairAverage:
    def test_copper_vs_stainless_two_ways(self, full):
        db = builtin_appendix_table()
        cu, ss = db["Copper"], db["Stainless Steel"]
        via_matrix = material_pair_avg_f1(full, cu, ss)
        mids = full.grid.midpoints()
        ia = mids[(mids >= cu.e_min) & (mids <= cu.e_max)]
        ib = mids[(mids >= ss.e_min) & (mids <= ss.e_max)]
        fresh = np.mean([[f1_pair(SENSOR, x, y, COND, 0.05) for y in ib] for x in ia])
        assert via_matrix == pytest.approx(fresh, abs=1e-12)

    def test_single_cells(self, small_matrix):
        mids = small_matrix.grid.midpoints()
        a = rec("a", mids[2] - 10, mids[2] + 10)
        b = rec("b", mids[9] - 10, mids[9] + 10)
        assert material_pair_avg_f1(small_matrix, a, b) == small_matrix.scores[2, 9]
        assert material_pair_avg_f1(small_matrix, a, a) == 0.5

    def test_snaps_sub_resolution_range(self, small_matrix):
        mids = small_matrix.grid.midpoints()
        a = rec("a", mids[4] + 100, mids[4] + 120)   # covers no midpoint
        b = rec("b", mids[30] - 5, mids[30] + 5)
        assert material_pair_avg_f1(small_matrix, a, b) == small_matrix.scores[4, 30]

    def test_outside_grid(self, small_matrix):
        with pytest.raises(RangeError):
            material_pair_avg_f1(small_matrix, rec("a", 5e4, 6e4), rec("b", 100, 200))


class TestNodeGraph:
    def test_edges_are_below_threshold(self, graph):
        assert graph.edges
        for i, j, avg in graph.edges:
            assert i < j and avg < 0.9

    def test_far_apart_pair_has_no_edge(self):
        m = f1_matrix(SENSOR, EffusivityGrid(n_intervals=100), COND, 0.05)
        db = MaterialDatabase((rec("foam", 50, 400, Category.COMPOSITES_FOAMS_NATURAL),
                               rec("copper", 23049.18, 36761.16)))
        assert material_pair_avg_f1(m, *db.records) > 0.999
        assert build_node_graph(db, m).edges == []

    def test_fraction_is_edges_over_pairs(self, graph):
        assert graph.n_pairs == 66
        assert graph.indistinguishable_fraction() == len(graph.edges) / 66

    def test_dot_output(self, graph):
        dot = to_dot(graph)
        assert dot.startswith("graph materials {") and dot.rstrip().endswith("}")
        assert "->" not in dot
        widths = [float(w) for w in re.findall(r"\bwidth=([0-9.]+)", dot)]
        assert len(widths) == 12 and min(widths) == 0.2 and max(widths) == 2.0
        pens = [float(w) for w in re.findall(r"penwidth=([0-9.]+)", dot)]
        assert len(pens) == len(graph.edges)
        assert all(0.5 <= p <= 5.0 for p in pens)
        # thicker edge for the less distinguishable pair
        order = np.argsort([avg for _, _, avg in graph.edges])
        assert np.all(np.diff(np.array(pens)[order]) <= 1e-4)
        assert 'fillcolor="gold"' in dot and 'fillcolor="sandybrown"' in dot

    def test_dot_parses_with_networkx(self, graph):
        parsed = pydot.graph_from_dot_data(to_dot(graph))[0]
        assert parsed.get_type() == "graph"
        assert len(parsed.get_nodes()) == 12 + 1  # plus the default node style entry
        assert len(parsed.get_edges()) == len(graph.edges)
