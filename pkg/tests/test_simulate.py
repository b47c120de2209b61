import numpy as np
import pytest

from ppshare.errors import ValidationError
from ppshare.geometry import (CovariateField, PointPattern,
                              build_integration_grid, unit_square_window)
from ppshare.gp import GPParams, fix_phi
from ppshare.simulate import (LOGNORM, UNIF, IntensitySpec, shared_weights,
                              simulate_by_thinning, simulate_case_control,
                              simulate_shared_pair, uniform_thin)


@pytest.fixture(scope="module")
def square():
    w = unit_square_window(10, 10, {"x1": (4.5, 0.6), "x2": (3.5, 0.6),
                                    "x3": (3.0, 0.7)}, seed=7)
    return w, build_integration_grid(w, 100), CovariateField(w)


class TestSharedWeights:
    def test_unif(self):
        assert shared_weights(UNIF, 0.3) == (0.3, 0.7)

    def test_lognorm(self):
        w1, w2 = shared_weights(LOGNORM, 0.4)
        assert w1 == 0.4 and w2 == pytest.approx(2.5)

    def test_unif_range(self):
        with pytest.raises(ValidationError):
            shared_weights(UNIF, 1.2)

    def test_lognorm_positive(self):
        with pytest.raises(ValidationError):
            shared_weights(LOGNORM, 0.0)

    def test_unknown_weighting(self):
        with pytest.raises(ValidationError):
            shared_weights("other", 0.5)


class TestThinning:
    def test_homogeneous_mean(self, square):
        # [TRIVIAL: homogeneous Poisson, rate 100 on unit area -> mean 100]
        w, grid, _ = square
        counts = [len(simulate_by_thinning(w, lambda p: np.full(len(p), 100.0),
                                           120.0, s, grid=grid))
                  for s in range(200)]
        assert abs(np.mean(counts) - 100) <= 3 * np.sqrt(100 / 200)

    def test_zero_intensity_empty(self, square):
        w, grid, _ = square
        pat = simulate_by_thinning(w, lambda p: np.zeros(len(p)), 1.0, 0,
                                   grid=grid)
        assert len(pat) == 0

    def test_lambda_max_violation_names_node(self, square):
        w, grid, _ = square
        with pytest.raises(ValidationError, match="exceeds lambda_max"):
            simulate_by_thinning(w, lambda p: np.full(len(p), 5.0), 4.0, 0,
                                 grid=grid)

    def test_per_unit_counts_match_quadrature(self, square):
        # [DERIVED: oracle = quadrature of the closed-form intensity per unit]
        w, grid, field = square
        betas = np.array([1.0, 0.5, 0.5])

        def intensity(points):
            z = field.at(points)
            return np.exp(betas[0] + z[:, :2] @ betas[1:])

        node_vals = intensity(grid.nodes)
        lam_max = node_vals.max() * 1.2
        want = {}
        for uid in set(grid.unit_ids):
            m = np.array([u == uid for u in grid.unit_ids])
            want[uid] = float(np.sum(grid.weights[m] * node_vals[m]))
        n_rep = 200
        got = {uid: 0 for uid in want}
        for s in range(n_rep):
            pat = simulate_by_thinning(w, intensity, lam_max, s, grid=grid)
            if len(pat):
                owners = w.owning_units(pat.points)
                for o in owners:
                    got[w.units[o].id] += 1
        bad = 0
        for uid, mu in want.items():
            se = np.sqrt(max(mu, 1e-12) / n_rep)
            if abs(got[uid] / n_rep - mu) > 3 * se + 1e-9:
                bad += 1
        # ~0.3% of units may fall outside a 3-SE band by chance
        assert bad <= max(2, int(0.01 * len(want)))

    def test_determinism(self, square):
        w, grid, _ = square
        a = simulate_by_thinning(w, lambda p: np.full(len(p), 50.0), 60.0, 9,
                                 grid=grid)
        b = simulate_by_thinning(w, lambda p: np.full(len(p), 50.0), 60.0, 9,
                                 grid=grid)
        assert np.array_equal(a.points, b.points)

    def test_candidate_budget_guard(self, square):
        w, grid, _ = square
        with pytest.raises(ValidationError, match="too peaked"):
            simulate_by_thinning(w, lambda p: np.full(len(p), 1.0), 1e9, 0)

    def test_nonpositive_lambda_max(self, square):
        w, _, _ = square
        with pytest.raises(ValidationError):
            simulate_by_thinning(w, lambda p: np.zeros(len(p)), 0.0, 0)


class TestUniformThin:
    def test_keep_all(self):
        pts = np.random.default_rng(0).uniform(size=(100, 2))
        pat = PointPattern(pts)
        assert np.array_equal(uniform_thin(pat, 1.0, 0).points, pts)

    def test_binomial_band(self):
        # [TRIVIAL: binomial mean/sd at keep_prob=0.5]
        pts = np.random.default_rng(1).uniform(size=(10000, 2))
        kept = len(uniform_thin(PointPattern(pts), 0.5, 2))
        assert abs(kept - 5000) <= 3 * 50

    def test_large_subsample_scale(self):
        # [PAPER: 1,453,832 points at 10% -> about 145,383 kept; the study's
        #  own realization kept 145,783, inside the same 3-sd band]
        n = 1_453_832
        pts = np.random.default_rng(2).uniform(size=(n, 2))
        kept = len(uniform_thin(PointPattern(pts), 0.1, 3))
        sd = np.sqrt(n * 0.1 * 0.9)
        assert abs(kept - 145_383) <= 3 * sd
        assert abs(145_783 - 145_383) <= 3 * sd

    def test_bad_keep_prob(self):
        pat = PointPattern(np.zeros((1, 2)))
        for bad in (0.0, -0.1, 1.5):
            with pytest.raises(ValidationError):
                uniform_thin(pat, bad, 0)


class TestCaseControl:
    def test_zero_case_betas_match_control(self, square):
        # [TRIVIAL: exp(0)=1 so both intensities coincide]
        w, grid, field = square
        c1, c2 = [], []
        for s in range(50):
            control, case = simulate_case_control(
                w, field, [4.5, 0.2], [0.0, 0.0], seed=s,
                control_cols=["x3"], case_cols=["x1"], grid=grid)
            c1.append(len(control))
            c2.append(len(case))
        m1, m2 = np.mean(c1), np.mean(c2)
        se = np.sqrt((np.var(c1) + np.var(c2)) / 50)
        assert abs(m1 - m2) <= 3 * se

    def test_log2_intercept_doubles_count(self, square):
        # [TRIVIAL: multiplicative intercept]
        w, grid, field = square
        base, double = [], []
        for s in range(60):
            _, case_a = simulate_case_control(
                w, field, [4.0, 0.2], [-1.0, 0.1], seed=s,
                control_cols=["x3"], case_cols=["x1"], grid=grid)
            _, case_b = simulate_case_control(
                w, field, [4.0, 0.2], [-1.0 + np.log(2), 0.1], seed=10_000 + s,
                control_cols=["x3"], case_cols=["x1"], grid=grid)
            base.append(len(case_a))
            double.append(len(case_b))
        ratio = np.mean(double) / np.mean(base)
        se = ratio * np.sqrt(1 / (np.mean(double) * 60) + 1 / (np.mean(base) * 60))
        assert abs(ratio - 2.0) <= 4 * se

    def test_beta_length_validation(self, square):
        w, grid, field = square
        with pytest.raises(ValidationError):
            simulate_case_control(w, field, [1.0], [0.0, 0.0], seed=0,
                                  control_cols=["x3"], case_cols=["x1"],
                                  grid=grid)

    def test_determinism(self, square):
        w, grid, field = square
        a = simulate_case_control(w, field, [4.0, 0.2], [-1.0, 0.1], seed=5,
                                  control_cols=["x3"], case_cols=["x1"],
                                  grid=grid)
        b = simulate_case_control(w, field, [4.0, 0.2], [-1.0, 0.1], seed=5,
                                  control_cols=["x3"], case_cols=["x1"],
                                  grid=grid)
        assert np.array_equal(a[0].points, b[0].points)
        assert np.array_equal(a[1].points, b[1].points)


class TestSharedPair:
    def spec(self, delta, weighting, sigma=1.0, phi=0.5):
        return IntensitySpec(beta1=[0.4, 0.3], beta2=[0.2, 0.3],
                             cols1=["x1", "x2"], cols2=["x3"], delta=delta,
                             gp=GPParams(sigma, phi), weighting=weighting)

    def test_table3_truth_counts_positive(self, square):
        # [PAPER: Table 3 truth row, delta=0.3]
        w, grid, field = square
        spec = IntensitySpec(beta1=[0.12, 0.06], beta2=[0.1, 0.25],
                             cols1=["x1", "x2"], cols2=["x3"], delta=0.3,
                             gp=GPParams(1.7, fix_phi(grid.nodes)),
                             weighting=UNIF)
        big = unit_square_window(10, 10, {"x1": (30.0, 5.0), "x2": (45.0, 8.0),
                                          "x3": (24.0, 4.0)}, seed=7)
        bgrid = build_integration_grid(big, 100)
        sim = simulate_shared_pair(big, CovariateField(big), spec, None,
                                   bgrid, 0)
        assert len(sim.pattern1) > 0 and len(sim.pattern2) > 0

    def test_delta_one_removes_shared_from_process2(self, square):
        # [TRIVIAL: exponent zero]
        w, grid, field = square
        sim = simulate_shared_pair(w, field, self.spec(1.0, UNIF), None,
                                   grid, 3)
        z = field.at(grid.nodes)
        want = 0.2 + z[:, 2] * 0.3
        assert np.allclose(sim.log_intensity2, want)

    def test_unif_vs_lognorm_differ_only_through_w2(self, square):
        # [DERIVED: lambda2 ratio = lambda(s)^{(1/delta)-(1-delta)} pointwise]
        w, grid, field = square
        a = simulate_shared_pair(w, field, self.spec(0.3, UNIF), None, grid, 4)
        b = simulate_shared_pair(w, field, self.spec(0.3, LOGNORM), None,
                                 grid, 4)
        assert np.array_equal(a.gp_at_nodes, b.gp_at_nodes)
        assert np.array_equal(a.pattern1.points, b.pattern1.points)
        want = (1 / 0.3 - 0.7) * a.gp_at_nodes
        assert np.allclose(b.log_intensity2 - a.log_intensity2, want)

    def test_determinism(self, square):
        w, grid, field = square
        a = simulate_shared_pair(w, field, self.spec(0.4, UNIF), None, grid, 6)
        b = simulate_shared_pair(w, field, self.spec(0.4, UNIF), None, grid, 6)
        assert np.array_equal(a.pattern1.points, b.pattern1.points)
        assert np.array_equal(a.pattern2.points, b.pattern2.points)

    def test_spec_validation(self):
        with pytest.raises(ValidationError):
            IntensitySpec(beta1=[0.1], beta2=[0.1], cols1=["x1", "x2"],
                          cols2=[], delta=0.5, gp=GPParams(1, 1))
        with pytest.raises(ValidationError):
            IntensitySpec(beta1=[0.1, 0.2], beta2=[0.1], cols1=["x1", "x2"],
                          cols2=["x3"], delta=0.5, gp=GPParams(1, 1))
        with pytest.raises(ValidationError):
            IntensitySpec(beta1=[0.1, 0.2], beta2=[0.1], cols1=["x1", "x2"],
                          cols2=[], delta=1.5, gp=GPParams(1, 1),
                          weighting=UNIF)
