"""Generation of the replicated multilevel study population.

A school of a given type gets a size, synthetic covariates and exposure,
an ERGM network conditional on those covariates, and outcomes from the
linear interference model with a school random intercept.
"""
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit

from ._validation import check_count, check_seed
from .copula import SynthesisParams, sample as copula_sample, solve_intermediate
from .ergm import ErgmModel, SamplerConfig, simulate
from .exceptions import DegenerateInputError, SpecificationError
from .graph import Graph, NodeTable

EXPOSURE = "Z"
OUTCOME = "Y"
SIZE_MODES = ("poisson-once", "fixed")
MAX_REDRAWS = 100


def covariate_column(table, term):
    """Values of a covariate term: ``"col=level"`` is an indicator, ``"col"`` numeric."""
    if "=" in term:
        col, level = term.split("=", 1)
        if col not in table:
            raise SpecificationError(f"covariate {col!r} missing from node table")
        return (table.codes(col) == table.level_code(col, level)).astype(float)
    if term not in table:
        raise SpecificationError(f"covariate {term!r} missing from node table")
    return np.asarray(table.numeric_values(term), dtype=float)


def term_column(term):
    return term.split("=", 1)[0]


@dataclass(frozen=True)
class ExposureModel:
    """Logistic exposure model with a school random intercept."""

    intercept: float
    coefficients: dict = field(default_factory=dict)
    sigma2_b: float = 0.0

    def __post_init__(self):
        if self.sigma2_b < 0:
            raise ValueError("between-school variance must be non-negative")

    @property
    def columns(self):
        return sorted({term_column(t) for t in self.coefficients})

    def linear_predictor(self, table):
        eta = np.full(table.n_nodes, float(self.intercept))
        for term, coef in self.coefficients.items():
            eta += coef * covariate_column(table, term)
        return eta

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["intercept"]), dict(d.get("coefficients", {})), float(d.get("sigma2_b", 0.0)))

    def to_dict(self):
        return {"intercept": self.intercept, "coefficients": dict(self.coefficients), "sigma2_b": self.sigma2_b}


@dataclass(frozen=True)
class OutcomeModel:
    """Linear outcome model with neighbourhood-exposure interference."""

    intercept: float
    beta_z: float
    beta_zn: float
    beta_z_zn: float
    coefficients: dict = field(default_factory=dict)
    sigma2_eps: float = 0.0
    sigma2_b: float = 0.0

    def __post_init__(self):
        if self.sigma2_eps < 0 or self.sigma2_b < 0:
            raise ValueError("variances must be non-negative")

    @property
    def columns(self):
        return sorted({term_column(t) for t in self.coefficients})

    def true_de(self, alpha):
        """Direct effect for any node with at least one neighbour."""
        return self.beta_z + self.beta_z_zn * alpha

    def true_ie(self, alpha, alpha_prime):
        return self.beta_zn * (alpha - alpha_prime)

    @classmethod
    def from_dict(cls, d):
        return cls(
            float(d["intercept"]), float(d["beta_z"]), float(d["beta_zn"]), float(d["beta_z_zn"]),
            dict(d.get("coefficients", {})), float(d.get("sigma2_eps", 0.0)), float(d.get("sigma2_b", 0.0)),
        )

    def to_dict(self):
        return {
            "intercept": self.intercept, "beta_z": self.beta_z, "beta_zn": self.beta_zn,
            "beta_z_zn": self.beta_z_zn, "coefficients": dict(self.coefficients),
            "sigma2_eps": self.sigma2_eps, "sigma2_b": self.sigma2_b,
        }


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


def read_exposure_model(path):
    return ExposureModel.from_dict(_read_json(path))


def read_outcome_model(path):
    return OutcomeModel.from_dict(_read_json(path))


@dataclass(frozen=True)
class SchoolType:
    name: str
    base_size: int
    ergm: ErgmModel
    synthesis: SynthesisParams

    def __post_init__(self):
        if self.base_size < 2:
            raise ValueError(f"school type {self.name!r}: base size must be >= 2")


@dataclass(frozen=True)
class PopulationSpec:
    school_types: tuple
    replicates: int = 6
    size_mode: str = "poisson-once"

    def __post_init__(self):
        check_count(self.replicates, "replicates", 1)
        if self.size_mode not in SIZE_MODES:
            raise ValueError(f"size_mode must be one of {SIZE_MODES}")
        object.__setattr__(self, "school_types", tuple(self.school_types))


def draw_sizes(spec, seed=None):
    """School sizes keyed by ``(type_index, replicate)``.

    ``"fixed"`` returns the base sizes. ``"poisson-once"`` draws each size
    from Poisson(base size) once; the caller reuses the result for every
    replicate of the study. Draws below 2 are redrawn (at most 100 times).
    """
    sizes = {}
    if spec.size_mode == "fixed":
        for k, st in enumerate(spec.school_types):
            for nu in range(spec.replicates):
                sizes[(k, nu)] = int(st.base_size)
        return sizes
    rng = np.random.default_rng(check_seed(seed))
    for k, st in enumerate(spec.school_types):
        for nu in range(spec.replicates):
            for _ in range(MAX_REDRAWS):
                size = int(rng.poisson(st.base_size))
                if size >= 2:
                    break
            else:
                raise DegenerateInputError(f"school type {st.name!r}: {MAX_REDRAWS} Poisson draws below 2")
            sizes[(k, nu)] = size
    return sizes


def _binary_exposure(table, name=EXPOSURE):
    if name not in table:
        raise SpecificationError(f"exposure column {name!r} missing")
    if table.is_categorical(name):
        if len(table.levels_of(name)) != 2:
            raise SpecificationError("exposure must have exactly two levels")
        return table.codes(name).astype(np.int64)
    z = np.asarray(table[name])
    if not np.isin(z, (0, 1)).all():
        raise SpecificationError("exposure must be 0/1")
    return z.astype(np.int64)


def exposure_vector(table):
    """0/1 exposure; the second level of a categorical exposure is 'treated'."""
    return _binary_exposure(table)


def gen_attributes(scheme, synth, expo=None, n=None, seed=None, intermediate=None):
    """Synthetic covariates and exposure for one school.

    Scheme 1 takes the exposure from the copula sample. Scheme 2 samples
    covariates from the copula without the exposure variable and then draws
    the exposure from ``expo`` with a school intercept ``b_Z``.

    Returns ``(table, b_z)``; ``b_z`` is 0 under scheme 1.
    """
    check_count(n, "n", 1)
    rng = np.random.default_rng(check_seed(seed))
    copula_seed, z_seed = (int(s) for s in rng.integers(0, 2**63 - 1, size=2))
    if scheme == 1:
        if EXPOSURE not in synth.names:
            raise SpecificationError(f"scheme 1 needs {EXPOSURE!r} among the copula variables")
        inter = intermediate if intermediate is not None else solve_intermediate(synth)
        table = copula_sample(synth, inter, n, copula_seed)
        exposure_vector(table)
        return table, 0.0
    if scheme != 2:
        raise ValueError(f"exposure scheme must be 1 or 2, got {scheme!r}")
    if expo is None:
        raise SpecificationError("scheme 2 needs an exposure model")
    params = synth.drop([EXPOSURE]) if EXPOSURE in synth.names else synth
    inter = intermediate if intermediate is not None else solve_intermediate(params)
    table = copula_sample(params, inter, n, copula_seed)
    zrng = np.random.default_rng(z_seed)
    b_z = float(zrng.normal(0.0, np.sqrt(expo.sigma2_b))) if expo.sigma2_b > 0 else 0.0
    p = expit(expo.linear_predictor(table) + b_z)
    z = (zrng.random(n) < p).astype(np.int64)
    table = table.with_column(EXPOSURE, z, levels=("No", "Yes"), roles={"Z"})
    return table, b_z


def gen_network(model, attrs, cfg=None):
    """ERGM draw conditional on ``attrs``; isolates are kept."""
    return simulate(model, attrs, attrs.n_nodes, cfg or SamplerConfig())


def neighbor_sums(graph, z):
    z = np.asarray(z)
    return np.array([int(z[list(graph.neighbor_set(i))].sum()) if graph.degree(i) else 0
                     for i in range(graph.n_nodes)], dtype=np.int64)


class PotentialOutcomes:
    """Potential outcomes ``y_i(z, s)`` with shared per-node noise.

    ``s`` is the number of treated neighbours; the neighbourhood proportion
    ``s / d_i`` is taken as 0 for isolates.
    """

    def __init__(self, base, degrees, beta_z, beta_zn, beta_z_zn):
        self.base = np.asarray(base, dtype=float)
        self.degrees = np.asarray(degrees, dtype=np.int64)
        self.beta_z = float(beta_z)
        self.beta_zn = float(beta_zn)
        self.beta_z_zn = float(beta_z_zn)

    @property
    def n_nodes(self):
        return self.base.size

    def __call__(self, node, z, s):
        d = int(self.degrees[node])
        if not 0 <= s <= d:
            raise ValueError(f"node {node}: treated-neighbour count {s} outside [0, {d}]")
        prop = s / d if d else 0.0
        return self.base[node] + self.beta_z * z + (self.beta_zn + self.beta_z_zn * z) * prop

    def values(self, z, s):
        """Vectorised ``y_i(z_i, s_i)`` over all nodes."""
        z = np.asarray(z, dtype=float)
        s = np.asarray(s, dtype=float)
        d = self.degrees
        if np.any(s < 0) or np.any(s > d):
            raise ValueError("treated-neighbour counts outside [0, degree]")
        prop = np.divide(s, d, out=np.zeros_like(s), where=d > 0)
        return self.base + self.beta_z * z + (self.beta_zn + self.beta_z_zn * z) * prop


def gen_outcomes(graph, attrs, model, seed=None):
    """Draw ``b_Y`` and per-node noise once; return ``(Y, oracle, b_y)``.

    ``Y`` equals the oracle evaluated at the realised exposure and
    treated-neighbour counts.
    """
    z = exposure_vector(attrs)
    if attrs.n_nodes != graph.n_nodes:
        raise SpecificationError("node table and graph sizes differ")
    rng = np.random.default_rng(check_seed(seed))
    b_y = float(rng.normal(0.0, np.sqrt(model.sigma2_b))) if model.sigma2_b > 0 else 0.0
    eps = rng.normal(0.0, np.sqrt(model.sigma2_eps), graph.n_nodes) if model.sigma2_eps > 0 \
        else np.zeros(graph.n_nodes)
    base = np.full(graph.n_nodes, model.intercept) + b_y + eps
    for term, coef in model.coefficients.items():
        base += coef * covariate_column(attrs, term)
    oracle = PotentialOutcomes(base, graph.degrees(), model.beta_z, model.beta_zn, model.beta_z_zn)
    y = oracle.values(z, neighbor_sums(graph, z))
    return y, oracle, b_y


@dataclass
class SchoolData:
    """One generated school with everything needed for truth and estimation."""

    type_index: int
    replicate: int
    graph: Graph
    table: NodeTable
    oracle: PotentialOutcomes
    b_z: float = 0.0
    b_y: float = 0.0
    name: Optional[str] = None

    @property
    def n_nodes(self):
        return self.graph.n_nodes

    @property
    def z(self):
        return exposure_vector(self.table)

    @property
    def y(self):
        return np.asarray(self.table[OUTCOME])

    @property
    def treated_neighbors(self):
        return neighbor_sums(self.graph, self.z)


def generate_school(school_type, type_index, replicate, size, scheme, outcome, expo=None,
                    sampler=None, seeds=None, intermediate=None):
    """Attributes, network and outcomes for one school.

    ``seeds`` maps ``"attrs"``, ``"graph"`` and ``"outcome"`` to integer
    seeds; ``sampler`` supplies burn-in and proposal settings.
    """
    seeds = seeds or {}
    table, b_z = gen_attributes(scheme, school_type.synthesis, expo, size, seeds.get("attrs"),
                                intermediate=intermediate)
    base_cfg = sampler or SamplerConfig()
    cfg = SamplerConfig(base_cfg.burn_in, base_cfg.thin, base_cfg.proposal, seeds.get("graph"))
    graph = gen_network(school_type.ergm, table, cfg)
    y, oracle, b_y = gen_outcomes(graph, table, outcome, seeds.get("outcome"))
    table = table.with_column(OUTCOME, y, roles={"Y"})
    return SchoolData(type_index, replicate, graph, table, oracle, b_z, b_y, school_type.name)
