import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate
from scipy.stats import multivariate_normal, norm, spearmanr

from plasmode.copula import (
    GaussianCopulaSynthesizer,
    MarginalSpec,
    SynthesisParams,
    attainable_range,
    bootstrap_rows,
    bvn_cdf,
    cell_probabilities,
    implied_spearman,
    read_synthesis_params,
    sample,
    solve_intermediate,
)
from plasmode.exceptions import DegenerateInputError, InfeasibleCorrelationError
from plasmode.graph import NodeTable

BIN = MarginalSpec("a", ("0", "1"), (0.5, 0.5))
BIN2 = MarginalSpec("b", ("0", "1"), (0.5, 0.5))


def plackett_bvn(h, k, rho):
    """Independent oracle: Plackett's identity dF/drho = phi2(h, k; rho)."""
    def dens(r):
        return math.exp(-(h * h - 2 * r * h * k + k * k) / (2 * (1 - r * r))) / (2 * math.pi * math.sqrt(1 - r * r))
    val, _ = integrate.quad(dens, 0.0, rho, epsabs=1e-13, epsrel=1e-13)
    return norm.cdf(h) * norm.cdf(k) + val


def marginals(draw_probs):
    return MarginalSpec("m", tuple(str(i) for i in range(len(draw_probs))), tuple(draw_probs))


prob_vectors = st.lists(st.floats(0.05, 1.0), min_size=2, max_size=5).map(lambda v: tuple(np.array(v) / sum(v)))


class TestBvn:
    def test_examples(self):
        assert bvn_cdf(0, 0, 0) == pytest.approx(0.25, abs=1e-15)
        assert bvn_cdf(0, 0, 0.5) == pytest.approx(1 / 3, abs=1e-12)
        assert bvn_cdf(math.inf, math.inf, 0.3) == 1.0

    def test_domain(self):
        with pytest.raises(ValueError):
            bvn_cdf(0, 0, 1.5)

    def test_limits(self):
        assert bvn_cdf(0.3, 0.7, 1.0) == pytest.approx(norm.cdf(0.3))
        assert bvn_cdf(0.3, 0.7, -1.0) == pytest.approx(max(0, norm.cdf(0.3) + norm.cdf(0.7) - 1))

    def test_against_plackett_quadrature(self, rng):
        for _ in range(300):
            h, k = rng.uniform(-4, 4, 2)
            rho = rng.uniform(-0.99, 0.99)
            assert bvn_cdf(h, k, rho) == pytest.approx(plackett_bvn(h, k, rho), abs=1e-7)

    def test_against_scipy(self, rng):
        for _ in range(100):
            h, k = rng.uniform(-3, 3, 2)
            rho = rng.uniform(-0.95, 0.95)
            ref = multivariate_normal(cov=[[1, rho], [rho, 1]]).cdf([h, k])
            assert bvn_cdf(h, k, rho) == pytest.approx(ref, abs=1e-6)


class TestImpliedSpearman:
    def test_zero_latent_gives_zero(self):
        m1 = MarginalSpec("x", ("a", "b", "c"), (0.2, 0.5, 0.3))
        m2 = MarginalSpec("y", ("a", "b"), (0.7, 0.3))
        assert implied_spearman(m1, m2, 0.0) == pytest.approx(0.0, abs=1e-12)

    def test_binary_sheppard(self):
        assert implied_spearman(BIN, BIN2, 0.5) == pytest.approx(2 / math.pi * math.asin(0.5), abs=1e-9)

    def test_comonotone_limit(self):
        m = MarginalSpec("x", ("a", "b", "c"), (0.2, 0.5, 0.3))
        # identical marginals, comonotone: both variables equal, Spearman 1
        assert implied_spearman(m, m, 1.0) == pytest.approx(1.0, abs=1e-9)
        assert implied_spearman(m, m, 0.999999) == pytest.approx(1.0, abs=1e-3)

    @given(prob_vectors, prob_vectors, st.floats(-0.95, 0.95))
    def test_symmetry_and_table_margins(self, p, q, rho):
        mi, mj = marginals(p), marginals(q)
        assert implied_spearman(mi, mj, rho) == pytest.approx(implied_spearman(mj, mi, rho), abs=1e-10)
        cells = cell_probabilities(mi, mj, rho)
        assert np.allclose(cells.sum(axis=1), p, atol=1e-7)
        assert np.allclose(cells.sum(axis=0), q, atol=1e-7)

    @given(prob_vectors, prob_vectors)
    def test_monotone_in_latent(self, p, q):
        grid = np.linspace(-0.99, 0.99, 41)
        vals = [implied_spearman(marginals(p), marginals(q), r) for r in grid]
        assert np.all(np.diff(vals) >= -1e-10)


class TestSolveIntermediate:
    def test_all_zero_targets(self):
        params = SynthesisParams((BIN, BIN2, MarginalSpec("c", ("x", "y", "z"), (0.2, 0.3, 0.5))), np.eye(3))
        inter = solve_intermediate(params)
        assert np.array_equal(inter.matrix, np.eye(3)) and inter.repair_delta == 0.0

    def test_sheppard_inverse(self):
        params = SynthesisParams((BIN, BIN2), np.array([[1, 1 / 3], [1 / 3, 1]]))
        assert solve_intermediate(params).matrix[0, 1] == pytest.approx(0.5, abs=1e-3)

    def test_infeasible_pair(self):
        m1 = MarginalSpec("a", ("0", "1"), (0.9, 0.1))
        m2 = MarginalSpec("b", ("0", "1"), (0.1, 0.9))
        with pytest.raises(InfeasibleCorrelationError) as exc:
            solve_intermediate(SynthesisParams((m1, m2), np.array([[1, 0.9], [0.9, 1]])))
        lo, hi = attainable_range(m1, m2)
        assert exc.value.pair == ("a", "b")
        assert exc.value.attainable == pytest.approx((lo, hi))
        assert hi < 0.9

    @given(prob_vectors, prob_vectors, st.floats(-0.6, 0.6))
    def test_residual_within_tolerance(self, p, q, target):
        mi, mj = marginals(p), MarginalSpec("n", tuple(str(i) for i in range(len(q))), q)
        lo, hi = attainable_range(mi, mj)
        if not lo + 1e-3 < target < hi - 1e-3:
            return
        inter = solve_intermediate(SynthesisParams((mi, mj), np.array([[1, target], [target, 1]])))
        assert abs(implied_spearman(mi, mj, inter.raw[0, 1]) - target) <= 1e-3

    def test_non_psd_targets_are_repaired_and_reported(self):
        margs = tuple(MarginalSpec(n, ("0", "1", "2"), (1 / 3, 1 / 3, 1 / 3)) for n in "abc")
        target = np.array([[1, 0.8, -0.8], [0.8, 1, 0.8], [-0.8, 0.8, 1]])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            inter = solve_intermediate(SynthesisParams(margs, target))
        assert np.linalg.eigvalsh(inter.matrix).min() > 0
        assert np.allclose(np.diag(inter.matrix), 1.0)
        assert inter.repair_delta > 0 and inter.adjusted_pairs()


class TestSample:
    def test_marginal_frequencies(self):
        margs = (MarginalSpec("a", ("x", "y", "z"), (0.2, 0.3, 0.5)), MarginalSpec("b", ("u", "v"), (0.65, 0.35)))
        params = SynthesisParams(margs, np.array([[1, 0.3], [0.3, 1]]))
        t = sample(params, solve_intermediate(params), 10_000, seed=1)
        for m in margs:
            freq = np.bincount(t.codes(m.name), minlength=len(m.levels)) / 10_000
            assert np.allclose(freq, m.probs, atol=0.02)
        assert t.levels_of("a") == ("x", "y", "z")

    def test_binary_spearman(self):
        params = SynthesisParams((BIN, BIN2), np.array([[1, 1 / 3], [1 / 3, 1]]))
        t = sample(params, solve_intermediate(params), 10_000, seed=2)
        assert spearmanr(t.codes("a"), t.codes("b"))[0] == pytest.approx(1 / 3, abs=0.03)

    def test_identity_independence(self):
        margs = tuple(MarginalSpec(n, ("0", "1", "2"), (0.3, 0.3, 0.4)) for n in "abcd")
        params = SynthesisParams(margs, np.eye(4))
        t = sample(params, solve_intermediate(params), 10_000, seed=3)
        rho = spearmanr(np.column_stack([t.codes(n) for n in "abcd"]))[0]
        assert np.abs(rho[np.triu_indices(4, 1)]).max() <= 0.03

    def test_pure_function_of_seed(self):
        params = SynthesisParams((BIN, BIN2), np.array([[1, 0.2], [0.2, 1]]))
        inter = solve_intermediate(params)
        assert sample(params, inter, 50, 9).equals(sample(params, inter, 50, 9))

    def test_shipped_parameters_load(self):
        from importlib.resources import files
        p = read_synthesis_params(files("plasmode") / "data" / "synthesis" / "school003.json")
        assert p.source == "user-supplied"
        assert p.target_spearman[0, 1] == pytest.approx(0.17)
        assert p.names == ["Z", "Male", "Grade", "Race", "Father", "Screen", "Motivation", "Belonging", "Fit"]

    def test_estimator_wrapper(self):
        syn = GaussianCopulaSynthesizer(SynthesisParams((BIN, BIN2), np.eye(2)), random_state=0).fit()
        assert syn.sample(10).n_nodes == 10 and "params" in syn.get_params()


class TestBootstrap:
    def test_examples(self):
        t = NodeTable.from_labels({"a": ["x"]})
        assert bootstrap_rows(t, 5, 0).labels("a") == ["x"] * 5
        t2 = NodeTable.from_labels({"a": ["x", "y"], "b": ["p", "q"]})
        big = bootstrap_rows(t2, 50_000, 1)
        assert np.mean(big.codes("a")) == pytest.approx(0.5, abs=0.01)
        assert np.array_equal(big.codes("a"), big.codes("b"))  # rows kept jointly
        assert bootstrap_rows(t2, 2, 4).equals(bootstrap_rows(t2, 2, 4))

    def test_empty(self):
        with pytest.raises(DegenerateInputError):
            bootstrap_rows(NodeTable({}), 3)
