import numpy as np
import pytest
from scipy.special import expit
from scipy.stats import chisquare, invgamma, kstest

from ppshare.density import fit_kde
from ppshare.errors import NumericalError, ValidationError
from ppshare.geometry import (CovariateField, PointPattern,
                              build_integration_grid, build_knots,
                              unit_square_window)
from ppshare.inference import (Chain, MCMCConfig, SamplerModel,
                               adaptive_metropolis, build_case_nhpp_model,
                               build_case_parametric_model,
                               build_shared_model, diagnostics, ess,
                               fit_logistic, mcse, run_mcmc, summarize, waic)
from ppshare.model import logistic_design
from ppshare.simulate import simulate_case_control, uniform_thin


@pytest.fixture(scope="module")
def setup():
    w = unit_square_window(10, 10, {"x1": (4.5, 0.6), "x2": (3.5, 0.6),
                                    "x3": (3.0, 0.7)}, seed=7)
    return w, build_integration_grid(w, 100), CovariateField(w)


class TestFitLogistic:
    def test_intercept_only_mle(self):
        # [TRIVIAL: closed-form intercept MLE log(n1/n0) = log(1/3)]
        labels = np.concatenate([np.ones(100), np.zeros(300)])
        design = np.ones((400, 1))
        fs = fit_logistic(design, labels)
        assert fs.params["b0"].point == pytest.approx(np.log(1 / 3), abs=1e-8)

    def test_balanced_intercept_zero(self):
        # [TRIVIAL: equal counts -> 0]
        labels = np.concatenate([np.ones(50), np.zeros(50)])
        fs = fit_logistic(np.ones((100, 1)), labels)
        assert fs.params["b0"].point == pytest.approx(0.0, abs=1e-10)

    def test_gradient_at_mle(self):
        # [DERIVED: analytic score at the returned optimum]
        rng = np.random.default_rng(0)
        x = np.column_stack([np.ones(500), rng.normal(size=(500, 2))])
        eta = x @ [0.3, 1.0, -0.5]
        y = (rng.random(500) < expit(eta)).astype(float)
        fs = fit_logistic(x, y)
        beta = np.array([fs.params[f"b{i}"].point for i in range(3)])
        grad = x.T @ (y - expit(x @ beta))
        assert np.max(np.abs(grad)) < 1e-6

    def test_separation_error(self):
        x = np.column_stack([np.ones(40), np.r_[np.ones(20), -np.ones(20)]])
        y = np.r_[np.ones(20), np.zeros(20)]
        with pytest.raises(NumericalError, match="separation"):
            fit_logistic(x, y)

    def test_rank_deficiency_error(self):
        x = np.column_stack([np.ones(50), np.ones(50)])
        y = np.r_[np.ones(25), np.zeros(25)]
        with pytest.raises(NumericalError, match="rank"):
            fit_logistic(x, y)

    def test_aic_formula(self):
        # [TRIVIAL: AIC = 2p - 2 loglik at the intercept-only MLE]
        labels = np.concatenate([np.ones(100), np.zeros(300)])
        fs = fit_logistic(np.ones((400, 1)), labels)
        p_hat = 0.25
        loglik = 100 * np.log(p_hat) + 300 * np.log(1 - p_hat)
        assert fs.score["aic"] == pytest.approx(2 - 2 * loglik, rel=1e-10)

    def test_recovers_known_coefficients(self, setup):
        # [DERIVED: logistic route on simulated case-control data]
        w, grid, field = setup
        control, case = simulate_case_control(
            w, field, [6.3, 0.0], [-10.0, 1.7, 0.8], seed=1,
            control_cols=["x3"], case_cols=["x1", "x2"], grid=grid)
        labels, design = logistic_design(case, control, field, ["x1", "x2"])
        fs = fit_logistic(design, labels)
        assert fs.params["b1"].covers(1.7)
        assert fs.params["b2"].covers(0.8)


def gaussian_model(dim=1):
    names = [f"x{i}" for i in range(dim)]
    return SamplerModel(names, np.zeros(dim),
                        lambda t: float(-0.5 * t @ t), lambda t: t)


class TestAdaptiveMetropolis:
    def test_standard_normal_target(self):
        # [TRIVIAL: known target; 20,000 kept draws]
        chain = run_mcmc(gaussian_model(), MCMCConfig(24000, 4000, seed=1))
        x = chain.column("x0")
        assert abs(x.mean()) < 3 * mcse(x)
        assert abs(x.var() - 1.0) < 0.1

    def test_chain_reproducibility(self, setup):
        w, grid, field = setup
        control, case = simulate_case_control(
            w, field, [4.0, 0.2], [-1.0, 0.3], seed=3,
            control_cols=["x3"], case_cols=["x1"], grid=grid)
        m = build_case_parametric_model(control, case, field, grid,
                                        ["x1"], ["x3"])
        cfg = MCMCConfig(600, 100, seed=11)
        a = run_mcmc(m, cfg)
        b = run_mcmc(m, cfg)
        assert np.array_equal(a.draws, b.draws)
        c = run_mcmc(m, MCMCConfig(600, 100, seed=12))
        assert not np.array_equal(a.draws, c.draws)

    def test_nonfinite_init_rejected(self):
        m = SamplerModel(["x0"], np.array([np.inf]),
                         lambda t: float(-0.5 * t @ t), lambda t: t)
        with pytest.raises(NumericalError):
            run_mcmc(m, MCMCConfig(500, 100))

    def test_prior_only_sigma_matches_invgamma(self):
        # [DERIVED: log-scale sampling with Jacobian reproduces IG(2, 0.5)]
        def logpost(t):
            s = np.exp(t[0])
            return float(-3 * np.log(s) - 0.5 / s + t[0])

        m = SamplerModel(["sigma"], np.array([np.log(0.25)]), logpost,
                         lambda t: np.exp(t))
        chain = run_mcmc(m, MCMCConfig(60000, 10000, seed=5))
        stat = kstest(chain.column("sigma"),
                      invgamma(a=2, scale=0.5).cdf)
        assert stat.pvalue > 0.001

    def test_detailed_balance_grid_target(self):
        # bimodal 1-D target; adaptation frozen after burn-in, then a
        # chi-squared goodness-of-fit on binned draws
        def logpost(t):
            x = t[0]
            return float(np.logaddexp(-0.5 * (x + 2) ** 2,
                                      -0.5 * (x - 2) ** 2))

        m = SamplerModel(["x"], np.array([0.0]), logpost, lambda t: t)
        chain = run_mcmc(m, MCMCConfig(80000, 10000, seed=9))
        draws = chain.column("x")
        edges = np.linspace(-6, 6, 13)
        grid = np.linspace(-8, 8, 4001)
        dens = np.exp([logpost([g]) for g in grid])
        dens /= np.trapezoid(dens, grid)
        probs = np.array([
            np.trapezoid(dens[(grid >= a) & (grid <= b)],
                         grid[(grid >= a) & (grid <= b)])
            for a, b in zip(edges[:-1], edges[1:])])
        inside = (draws >= edges[0]) & (draws <= edges[-1])
        counts, _ = np.histogram(draws[inside], edges)
        # thin by the autocorrelation time so counts are near-independent
        neff = ess(draws)
        scale = neff / counts.sum()
        stat = chisquare(counts * scale, probs / probs.sum() * counts.sum() * scale)
        assert stat.pvalue > 0.001

    def test_delta_and_sigma_supports(self, setup):
        # UNIF delta draws stay in [0,1]; sigma draws stay positive
        w, grid, field = setup
        rng = np.random.default_rng(13)
        p1 = PointPattern(rng.uniform(size=(60, 2)), w)
        p2 = PointPattern(rng.uniform(size=(80, 2)), w)
        knots = build_knots(w, 9)
        m = build_shared_model((p1, p2), field, grid, knots,
                               ["x1", "x2"], ["x3"])
        chain = run_mcmc(m, MCMCConfig(800, 200, seed=2))
        assert ((chain.column("delta") >= 0) & (chain.column("delta") <= 1)).all()
        assert (chain.column("sigma") > 0).all()

    def test_block_updates_reproducible_and_valid(self, setup):
        w, grid, field = setup
        rng = np.random.default_rng(14)
        p1 = PointPattern(rng.uniform(size=(60, 2)), w)
        p2 = PointPattern(rng.uniform(size=(80, 2)), w)
        knots = build_knots(w, 9)
        m = build_shared_model((p1, p2), field, grid, knots,
                               ["x1", "x2"], ["x3"])
        cfg = MCMCConfig(800, 200, seed=3, block_updates=True)
        a = run_mcmc(m, cfg)
        b = run_mcmc(m, cfg)
        assert np.array_equal(a.draws, b.draws)
        assert ((a.column("delta") >= 0) & (a.column("delta") <= 1)).all()

    def test_summary_brackets_point(self):
        chain = run_mcmc(gaussian_model(2), MCMCConfig(3000, 500, seed=4))
        fs = summarize(chain)
        for ps in fs.params.values():
            assert ps.lower <= ps.point <= ps.upper


class TestInit:
    def make(self, setup):
        w, grid, field = setup
        rng = np.random.default_rng(15)
        p1 = PointPattern(rng.uniform(size=(50, 2)), w)
        p2 = PointPattern(rng.uniform(size=(60, 2)), w)
        return build_shared_model((p1, p2), field, grid, build_knots(w, 9),
                                  ["x1", "x2"], ["x3"])

    def test_natural_round_trip(self, setup):
        m = self.make(setup)
        nat = m.to_natural(m.init)
        assert np.allclose(m.to_natural(m.from_natural(nat)), nat, atol=1e-10)

    def test_named_init_respected(self, setup):
        m = self.make(setup)
        chain = run_mcmc(m, MCMCConfig(300, 100, seed=6,
                                       init={"delta": 0.7, "sigma": 2.0}))
        assert chain.draws.shape[0] > 0

    def test_unknown_init_name_rejected(self, setup):
        m = self.make(setup)
        with pytest.raises(ValidationError, match="unknown parameters"):
            run_mcmc(m, MCMCConfig(300, 100, init={"nope": 1.0}))

    def test_prior_draw_init(self, setup):
        m = self.make(setup)
        chain = run_mcmc(m, MCMCConfig(300, 100, seed=7, init="prior-draw"))
        assert chain.draws.shape[0] > 0

    def test_bad_init_type_rejected(self):
        with pytest.raises(ValidationError):
            MCMCConfig(300, 100, init=[1.0, 2.0])

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            MCMCConfig(100, 100)
        with pytest.raises(ValidationError):
            MCMCConfig(100, 10, thin=0)


class TestESS:
    def test_iid_near_n(self):
        # [DERIVED: iid draws -> ESS about n]
        vals = [ess(np.random.default_rng(s).standard_normal(10000))
                for s in range(5)]
        assert abs(np.mean(vals) - 10000) / 10000 < 0.1

    def test_ar1_rho09(self):
        # [DERIVED: AR(1) integrated autocorrelation time (1+rho)/(1-rho)=19]
        vals = []
        for s in range(5):
            rng = np.random.default_rng(s)
            n = 40000
            x = np.empty(n)
            x[0] = rng.standard_normal()
            e = rng.standard_normal(n) * np.sqrt(1 - 0.81)
            for i in range(1, n):
                x[i] = 0.9 * x[i - 1] + e[i]
            vals.append(ess(x))
        want = 40000 / 19
        assert abs(np.mean(vals) - want) / want < 0.25

    def test_constant_chain(self):
        assert ess(np.full(500, 3.3)) == 1.0

    def test_short_chain_rejected(self):
        with pytest.raises(ValidationError):
            ess(np.zeros(99))


class TestMCSE:
    def test_iid_scale(self):
        # [DERIVED: sigma/sqrt(n) = 0.01 for iid N(0,1), n=10,000]
        vals = [mcse(np.random.default_rng(s).standard_normal(10000))
                for s in range(5)]
        assert abs(np.mean(vals) - 0.01) / 0.01 < 0.3

    def test_linearity(self):
        x = np.random.default_rng(1).standard_normal(5000)
        assert mcse(7 * x) == pytest.approx(7 * mcse(x), rel=1e-12)

    def test_constant_chain(self):
        assert mcse(np.full(500, 1.0)) == 0.0


class TestWAIC:
    def test_identical_draws_zero_penalty(self):
        # [TRIVIAL: zero posterior variance]
        ll = np.tile(np.array([-1.0, -2.0, -0.5]), (200, 1))
        assert waic(ll) == pytest.approx(-2 * (-3.5), rel=1e-10)

    def test_translation_equivariance(self):
        # [TRIVIAL: adding c to every term shifts WAIC by -2nc]
        rng = np.random.default_rng(2)
        ll = rng.normal(-1.0, 0.1, size=(300, 7))
        c = 0.37
        assert waic(ll + c) == pytest.approx(waic(ll) - 2 * 7 * c, rel=1e-9)

    def test_nonfinite_rejected(self):
        ll = np.zeros((200, 3))
        ll[0, 0] = np.nan
        with pytest.raises(NumericalError):
            waic(ll)

    def test_too_few_draws(self):
        with pytest.raises(ValidationError):
            waic(np.zeros((50, 3)))

    def test_true_covariate_beats_noise(self, setup):
        # [DERIVED: paired WAIC comparison over seeded replicates]
        w, grid, field = setup
        wins = 0
        n_rep = 20
        for s in range(n_rep):
            control, case = simulate_case_control(
                w, field, [5.0, 0.2], [-2.0, 0.8], seed=s,
                control_cols=["x3"], case_cols=["x1"], grid=grid)
            kde = fit_kde(uniform_thin(control, 0.9, s), 0.1)
            scores = {}
            for key, cols in (("true", ["x1"]), ("noise", ["x3"])):
                m = build_case_nhpp_model(case, field, grid, kde, cols)
                ch = run_mcmc(m, MCMCConfig(1500, 500, seed=100 + s))
                scores[key] = waic(m.pointwise(ch.draws))
            wins += scores["true"] < scores["noise"]
        assert wins >= int(0.8 * n_rep)


class TestDiagnostics:
    def test_structure_and_values(self):
        chain = run_mcmc(gaussian_model(2), MCMCConfig(2000, 500, seed=8))
        d = diagnostics(chain)
        assert set(d) == {"accept_rates", "ess", "mcse", "warnings"}
        for name in chain.names:
            assert d["ess"][name] > 10
            assert d["mcse"][name] > 0
            assert 0 < d["accept_rates"][name] <= 1

    def test_never_accepted_warning(self):
        chain = Chain(["a"], np.zeros((10, 1)), np.array([0.0]), 0,
                      MCMCConfig(200, 100))
        assert chain.warnings() == ["parameter 'a' never accepted after burn-in"]
