"""Acceptance suite: one pass/fail line per criterion, at the stated tolerances."""
import itertools
import math
import time
import warnings
from importlib.resources import files

import numpy as np
import pytest
from scipy.stats import chi2, spearmanr

from plasmode.copula import MarginalSpec, SynthesisParams, read_synthesis_params, sample, solve_intermediate
from plasmode.datagen import PotentialOutcomes, gen_attributes, gen_outcomes, read_exposure_model, read_outcome_model
from plasmode.datagen import SchoolData
from plasmode.ergm import ErgmModel, SamplerConfig, TermSpec, change_statistics, mple_fit, simulate, state_trace
from plasmode.estimands import individual_apo, population_truth
from plasmode.graph import Graph
from plasmode.harness import StudyConfig, run_study

from builders import study_dict
from conftest import random_attrs, random_graph, record_criterion
from ergm_oracles import brute_statistics

DATA = files("plasmode") / "data"
SCHOOLS = ("003", "028", "106", "122", "173")
BASE_SIZES = (99, 88, 71, 101, 86)


def _shipped_dict(names, size, n_replicates, scheme, seed, scenarios, ergm=None, per_type=6):
    return {
        "school_types": [
            {"name": n, "base_size": size, "ergm": ergm.to_dict() if ergm else f"ergm/school{n}.json",
             "synthesis": f"synthesis/school{n}.json"}
            for n in names
        ],
        "replicates_per_type": per_type,
        "size_mode": "fixed",
        "exposure_scheme": scheme,
        "exposure_model": "exposure_model.json",
        "outcome_model": "outcome_model.json",
        "exposure_overrides": {"sigma2_b": 0.0},
        "scenarios": scenarios,
        "alphas": [0.2, 0.5, 0.8],
        "n_replicates": n_replicates,
        "seed": seed,
    }


# -- 1 ---------------------------------------------------------------------

def test_criterion_1_ground_truth_constants():
    t0 = time.time()
    outcome = read_outcome_model(DATA / "outcome_model.json")
    expo = read_exposure_model(DATA / "exposure_model.json")
    rng = np.random.default_rng(1)
    schools = []
    for k, (name, n) in enumerate(zip(SCHOOLS, BASE_SIZES)):
        synth = read_synthesis_params(DATA / "synthesis" / f"school{name}.json")
        attrs, _ = gen_attributes(2, synth, expo, n, seed=k)
        # isolate-free friendship network: a ring plus random chords
        edges = {(i, (i + 1) % n) for i in range(n)} | {tuple(sorted(rng.choice(n, 2, replace=False))) for _ in range(2 * n)}
        graph = Graph(n, [(min(e), max(e)) for e in edges])
        y, oracle, b_y = gen_outcomes(graph, attrs, outcome, seed=100 + k)
        schools.append(SchoolData(k, 0, graph, attrs.with_column("Y", y), oracle, 0.0, b_y))
    truth = population_truth(schools)
    expected = {("DE", 0.2): 0.305563, ("DE", 0.5): 0.282361, ("DE", 0.8): 0.259160,
                ("IE", (0.5, 0.2)): 0.123806, ("IE", (0.8, 0.2)): 0.247612, ("IE", (0.8, 0.5)): 0.123806}
    published = {("DE", 0.2): 0.307, ("DE", 0.5): 0.284, ("DE", 0.8): 0.263,
             ("IE", (0.5, 0.2)): 0.120, ("IE", (0.8, 0.2)): 0.241, ("IE", (0.8, 0.5)): 0.120}
    exact = {("DE", 0.2): outcome.true_de(0.2), ("DE", 0.5): outcome.true_de(0.5), ("DE", 0.8): outcome.true_de(0.8),
             ("IE", (0.5, 0.2)): outcome.true_ie(0.5, 0.2), ("IE", (0.8, 0.2)): outcome.true_ie(0.8, 0.2),
             ("IE", (0.8, 0.5)): outcome.true_ie(0.8, 0.5)}
    worst_exact = worst_table = worst_published = 0.0
    for key, value in expected.items():
        got = truth.de[key[1]] if key[0] == "DE" else truth.ie[key[1]]
        worst_exact = max(worst_exact, abs(got - exact[key]))
        worst_table = max(worst_table, abs(got - value))
        worst_published = max(worst_published, abs(got - published[key]))
    elapsed = time.time() - t0
    # the tabled constants are the analytic ones rounded to 6 decimals (e.g. 0.2823615 -> 0.282361),
    # so they can match only to half a unit in the 6th place; exactness (1e-9) is against the analytic form
    ok = worst_exact <= 1e-9 and worst_table <= 5e-7 + 1e-12 and worst_published <= 0.01
    assert record_criterion(1, ok, f"max |truth - analytic| = {worst_exact:.1e} (<=1e-9), "
                                   f"max |truth - tabled 6dp| = {worst_table:.1e}, "
                                   f"max |truth - published value| = {worst_published:.4f} (<=0.01), {elapsed:.1f}s")


# -- 2 ---------------------------------------------------------------------

def test_criterion_2_estimand_oracle_equivalence():
    t0 = time.time()
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        degrees = np.arange(6)  # d = 0..5
        oracle = PotentialOutcomes(rng.normal(size=6), degrees, *rng.normal(size=3))
        for node, alpha, z in itertools.product(range(6), (0.2, 0.5, 0.8), (0, 1)):
            d = degrees[node]
            brute = sum(np.prod([alpha if v else 1 - alpha for v in zs]) * oracle(node, z, sum(zs))
                        for zs in itertools.product((0, 1), repeat=d))
            worst = max(worst, abs(individual_apo(oracle, node, z, alpha) - brute))
    elapsed = time.time() - t0
    ok = worst <= 1e-12 and elapsed < 10
    assert record_criterion(2, ok, f"max |APO - 2^d enumeration| = {worst:.1e} (<=1e-12) over 100 oracles, "
                                   f"d<=5, {elapsed:.1f}s (<10s)")


# -- 3 ---------------------------------------------------------------------

def test_criterion_3_change_statistic_oracle():
    t0 = time.time()
    rng = np.random.default_rng(3)
    terms = (TermSpec("Edges"), TermSpec("NodeFactor", "Sex", "M"), TermSpec("UniformHomophily", "Grade"),
             TermSpec("AbsDiff", "Grade"), TermSpec("GWDegree", decay=1.0), TermSpec("GWESP", decay=1.0))
    worst, checked = 0.0, 0
    for _ in range(200):
        n = int(rng.integers(2, 9))
        g, a = random_graph(n, rng.random(), rng), random_attrs(n, rng)
        for i, j in itertools.combinations(range(n), 2):
            plus = g if g.has_edge(i, j) else g.toggled(i, j)
            minus = g.toggled(i, j) if g.has_edge(i, j) else g
            diff = brute_statistics(plus, a, terms) - brute_statistics(minus, a, terms)
            worst = max(worst, float(np.max(np.abs(change_statistics(g, a, terms, i, j) - diff))))
            checked += 1
    elapsed = time.time() - t0
    ok = worst <= 1e-12 and elapsed < 30
    assert record_criterion(3, ok, f"6 term kinds, 200 graphs (n<=8), {checked} dyads: max deviation "
                                   f"{worst:.1e} (<=1e-12), {elapsed:.1f}s (<30s)")


# -- 4 ---------------------------------------------------------------------

def test_criterion_4_sampler_correctness():
    t0 = time.time()
    model = ErgmModel((TermSpec("Edges"),), [-2.0])
    draws = simulate(model, None, 100, SamplerConfig(seed=4), n_draws=200)
    density = float(np.mean([g.n_edges / g.n_dyads for g in draws]))
    target = math.exp(-2) / (1 + math.exp(-2))
    dens_ok = abs(density - 0.1192) <= 0.01

    # detailed balance on n = 4: stationary law over all 64 graphs is a product of Bernoullis
    n_prop, every = 1_000_000, 50
    codes = state_trace(model, None, 4, SamplerConfig(burn_in=1000, proposal="uniform", seed=5), n_prop, every)
    counts = np.bincount(codes, minlength=64)
    k = np.array([bin(c).count("1") for c in range(64)])
    expected = codes.size * target**k * (1 - target) ** (6 - k)
    stat = float(np.sum((counts - expected) ** 2 / expected))
    p_value = float(chi2.sf(stat, 63))
    elapsed = time.time() - t0
    ok = dens_ok and p_value > 0.01 and elapsed < 120
    assert record_criterion(4, ok, f"mean density {density:.4f} vs 0.1192+-0.01; n=4 chi2={stat:.1f} on 63 df, "
                                   f"p={p_value:.3f} (>0.01) from {n_prop} proposals; {elapsed:.1f}s (<120s)")


# -- 5 ---------------------------------------------------------------------

def test_criterion_5_mple_recovery():
    t0 = time.time()
    rng = np.random.default_rng(5)
    from plasmode.graph import NodeTable
    attrs = NodeTable.from_labels({"g": rng.choice(list("abcd"), 200)})
    terms = (TermSpec("Edges"), TermSpec("UniformHomophily", "g"))
    truth = np.array([-3.0, 1.0])
    model = ErgmModel(terms, truth)
    estimates, covered = [], []
    for s in range(50):
        g = simulate(model, attrs, 200, SamplerConfig(seed=1000 + s))
        res = mple_fit(g, attrs, terms)
        estimates.append(res.model.theta)
        covered.append(np.abs(res.model.theta - truth) <= 3 * res.se)
    mean = np.mean(estimates, axis=0)
    cover = np.mean(covered, axis=0)
    elapsed = time.time() - t0
    ok = np.all(np.abs(mean - truth) <= 0.1) and np.all(cover >= 0.9) and elapsed < 300
    assert record_criterion(5, ok, f"mean theta-hat {np.round(mean, 3).tolist()} vs [-3, 1] (+-0.1); "
                                   f"within-3SE rates {cover.tolist()} (>=0.9); {elapsed:.1f}s (<300s)")


# -- 6 ---------------------------------------------------------------------

def test_criterion_6_copula_fidelity():
    t0 = time.time()
    b = MarginalSpec("a", ("0", "1"), (0.5, 0.5))
    b2 = MarginalSpec("b", ("0", "1"), (0.5, 0.5))
    rho = solve_intermediate(SynthesisParams((b, b2), np.array([[1, 1 / 3], [1 / 3, 1]]))).matrix[0, 1]
    rho_ok = abs(rho - 0.5) <= 0.002

    params = read_synthesis_params(DATA / "synthesis" / "school003.json")
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always")
        inter = solve_intermediate(params)
    table = sample(params, inter, 20_000, seed=6)
    codes = np.column_stack([table.codes(nm) for nm in params.names])
    emp = spearmanr(codes)[0]
    adjusted = set(inter.adjusted_pairs())
    dev = np.abs(emp - params.target_spearman)
    iu = [(i, j) for i, j in zip(*np.triu_indices(len(params.names), 1))
          if (params.names[i], params.names[j]) not in adjusted]
    worst = max(dev[i, j] for i, j in iu)
    elapsed = time.time() - t0
    ok = rho_ok and worst <= 0.03 and elapsed < 120
    assert record_criterion(6, ok, f"binary Sheppard inverse rho={rho:.4f} (0.500+-0.002); School 003 9-variable "
                                   f"max |Spearman - target| = {worst:.4f} (<=0.03); PD-repair adjusted pairs: "
                                   f"{sorted(adjusted) or 'none'} (repair delta {inter.repair_delta:.2e}); "
                                   f"{elapsed:.1f}s (<120s)")


# -- 7 ---------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_7_desk_scale_estimator_accuracy():
    t0 = time.time()
    cfg = StudyConfig.from_dict(_shipped_dict(("003", "028"), 60, 100, 2, 7, {"none": []}))
    study = run_study(cfg)
    rows = {m: study.metrics.lookup("none", m, "DE(0.5)") for m in ("IPW", "REG", "DR-BC")}
    elapsed = time.time() - t0
    ok = (abs(rows["REG"]["bias"]) <= 0.02 and abs(rows["DR-BC"]["bias"]) <= 0.02
          and abs(rows["IPW"]["bias"]) <= 0.03 and rows["REG"]["mse"] <= rows["IPW"]["mse"] and elapsed < 1800)
    detail = "; ".join(f"{m} bias {r['bias']:+.4f} (se {r['bias_se']:.4f}) MSE {r['mse']:.4f}" for m, r in rows.items())
    assert record_criterion(7, ok, f"DE(0.5), no unmeasured confounding, S=100, 2 types x 6 x 60 nodes: {detail}; "
                                   f"needs |bias| REG,DR<=0.02, IPW<=0.03, MSE(REG)<=MSE(IPW); {elapsed:.0f}s (<1800s)")


# -- 8 ---------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_8_homophily_confounding_ordering():
    t0 = time.time()
    # race drives exposure and outcome (shipped models) and tie formation (uniform homophily)
    ergm = ErgmModel((TermSpec("Edges"), TermSpec("UniformHomophily", "Race"), TermSpec("UniformHomophily", "Grade")),
                     [-3.5, 1.5, 1.0])
    cfg = StudyConfig.from_dict(_shipped_dict(("003", "028"), 60, 100, 2, 8,
                                              {"none": [], "homophily": ["Race"]}, ergm=ergm))
    study = run_study(cfg)
    none = study.metrics.lookup("none", "REG", "DE(0.5)")
    homo = study.metrics.lookup("homophily", "REG", "DE(0.5)")
    errs = {s: np.array([r.estimates[("REG", s)].de[0.5] - r.truth.de[0.5] for r in study.replicates if r.ok])
            for s in ("none", "homophily")}
    # MC standard error of the difference in |bias|, from the paired replicate errors
    sign_h, sign_n = np.sign(errs["homophily"].mean()), np.sign(errs["none"].mean())
    paired = sign_h * errs["homophily"] - sign_n * errs["none"]
    gap = abs(homo["bias"]) - abs(none["bias"])
    se = float(paired.std(ddof=1) / math.sqrt(paired.size))
    elapsed = time.time() - t0
    ok = gap > 2 * se
    assert record_criterion(8, ok, f"|bias(REG)| DE(0.5): homophily {abs(homo['bias']):.4f} vs none "
                                   f"{abs(none['bias']):.4f}; gap {gap:.4f} vs 2 MC SE {2 * se:.4f}; S=100, {elapsed:.0f}s")


# -- 9 ---------------------------------------------------------------------

def test_criterion_9_determinism(tmp_path):
    cfg = StudyConfig.from_dict(study_dict(n_replicates=3, scenarios={"none": [], "regular": ["Father"],
                                                                      "homophily": ["Race"]}))
    run_study(cfg, output_dir=tmp_path / "a")
    run_study(cfg, output_dir=tmp_path / "b")
    a = (tmp_path / "a" / "metrics.csv").read_bytes()
    b = (tmp_path / "b" / "metrics.csv").read_bytes()
    assert record_criterion(9, a == b, f"two run_study calls with identical config/seed -> metrics.csv "
                                       f"{'byte-identical' if a == b else 'DIFFERENT'} ({len(a)} bytes)")
