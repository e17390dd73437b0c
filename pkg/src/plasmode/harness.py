"""Study orchestration: configuration, seeding, the replicate loop and metrics."""
import csv
import hashlib
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib.resources import files
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from . import __version__
from ._validation import check_count
from .copula import SynthesisParams, solve_intermediate
from .datagen import (
    EXPOSURE,
    ExposureModel,
    OutcomeModel,
    PopulationSpec,
    SchoolType,
    draw_sizes,
    generate_school,
)
from .ergm import ErgmModel, SamplerConfig
from .estimands import DEFAULT_ALPHAS, DEFAULT_PAIRS, EffectTruth, population_truth
from .estimators import METHODS, SCENARIOS, EstimateSet, WorkingModels, apply_scenario
from .exceptions import PlasmodeError, SpecificationError, StudyError
from .graph import summarize

log = logging.getLogger(__name__)

FAILURE_LIMIT = 0.05
DATA_DIR = files("plasmode") / "data"
DEFAULT_CONFIG = DATA_DIR / "default_study.json"


def derive_seed(master, path):
    """Deterministic 64-bit seed from a master seed and a label path.

    The seed is the first 8 bytes (big-endian) of the SHA-256 digest of the
    JSON encoding of ``[master, *path]``.
    """
    payload = json.dumps([int(master), *path], separators=(",", ":"), default=str)
    return int.from_bytes(hashlib.sha256(payload.encode()).digest()[:8], "big")


def fmt(x):
    """Number format used in every output file (17 significant digits)."""
    return format(float(x), ".17g")


def estimand_label(key):
    if isinstance(key, tuple):
        return f"IE({key[0]:g},{key[1]:g})"
    return f"DE({key:g})"


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def _resolve(ref, base):
    """Load a JSON reference: inline dict, path relative to the config, or a
    path inside the packaged data directory."""
    if isinstance(ref, dict):
        return ref
    for root in (base, DATA_DIR):
        if root is None:
            continue
        candidate = Path(str(root)) / ref
        if candidate.is_file():
            return json.loads(candidate.read_text())
    path = Path(ref)
    if path.is_file():
        return json.loads(path.read_text())
    raise SpecificationError(f"cannot resolve file reference {ref!r}")


@dataclass
class StudyConfig:
    """A fully resolved study description."""

    population: PopulationSpec
    exposure_model: ExposureModel
    outcome_model: OutcomeModel
    exposure_scheme: int = 1
    scenarios: dict = field(default_factory=lambda: {k: list(v) for k, v in SCENARIOS.items()})
    propensity_covariates: tuple = ()
    outcome_covariates: tuple = ()
    alphas: tuple = DEFAULT_ALPHAS
    pairs: tuple = DEFAULT_PAIRS
    n_replicates: int = 500
    seed: int = 0
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    normalize_weights: bool = False
    output_dir: Optional[str] = None
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        check_count(self.n_replicates, "n_replicates", 1)
        if self.exposure_scheme not in (1, 2):
            raise SpecificationError("exposure_scheme must be 1 or 2")
        self.alphas = tuple(float(a) for a in self.alphas)
        self.pairs = tuple((float(a), float(b)) for a, b in self.pairs)
        self.propensity_covariates = tuple(self.propensity_covariates)
        self.outcome_covariates = tuple(self.outcome_covariates)

    @classmethod
    def from_dict(cls, d, base=None):
        """Build a config from its JSON form; file references resolve against
        ``base`` first and the packaged data directory second."""
        exposure = ExposureModel.from_dict({**_resolve(d["exposure_model"], base), **d.get("exposure_overrides", {})})
        outcome = OutcomeModel.from_dict({**_resolve(d["outcome_model"], base), **d.get("outcome_overrides", {})})
        types = []
        for t in d["school_types"]:
            types.append(SchoolType(
                str(t["name"]), int(t["base_size"]),
                ErgmModel.from_dict(_resolve(t["ergm"], base)),
                SynthesisParams.from_dict(_resolve(t["synthesis"], base)),
            ))
        population = PopulationSpec(tuple(types), int(d.get("replicates_per_type", 6)),
                                    d.get("size_mode", "poisson-once"))
        sampler = SamplerConfig(**d.get("sampler", {}))
        prop_cov = d.get("propensity_covariates")
        out_cov = d.get("outcome_covariates")
        return cls(
            population=population,
            exposure_model=exposure,
            outcome_model=outcome,
            exposure_scheme=int(d.get("exposure_scheme", 1)),
            scenarios={k: list(v) for k, v in d.get("scenarios", SCENARIOS).items()},
            propensity_covariates=exposure.columns if prop_cov is None else prop_cov,
            outcome_covariates=outcome.columns if out_cov is None else out_cov,
            alphas=d.get("alphas", DEFAULT_ALPHAS),
            pairs=d.get("pairs", DEFAULT_PAIRS),
            n_replicates=int(d.get("n_replicates", 500)),
            seed=int(d.get("seed", 0)),
            sampler=sampler,
            normalize_weights=bool(d.get("normalize_weights", False)),
            output_dir=d.get("output_dir"),
            source=d,
        )

    @classmethod
    def load(cls, path=None):
        """Read a config file (default: the packaged study configuration)."""
        path = DEFAULT_CONFIG if path is None else Path(path)
        data = json.loads(Path(str(path)).read_text())
        base = None if path is DEFAULT_CONFIG else Path(path).resolve().parent
        return cls.from_dict(data, base)

    def resolved_dict(self):
        """Canonical JSON-ready form with all references expanded."""
        return {
            "school_types": [
                {"name": t.name, "base_size": t.base_size, "ergm": t.ergm.to_dict(),
                 "synthesis": t.synthesis.to_dict()}
                for t in self.population.school_types
            ],
            "replicates_per_type": self.population.replicates,
            "size_mode": self.population.size_mode,
            "exposure_model": self.exposure_model.to_dict(),
            "outcome_model": self.outcome_model.to_dict(),
            "exposure_scheme": self.exposure_scheme,
            "scenarios": self.scenarios,
            "propensity_covariates": list(self.propensity_covariates),
            "outcome_covariates": list(self.outcome_covariates),
            "alphas": list(self.alphas),
            "pairs": [list(p) for p in self.pairs],
            "n_replicates": self.n_replicates,
            "seed": self.seed,
            "sampler": {"burn_in": self.sampler.burn_in, "thin": self.sampler.thin,
                        "proposal": self.sampler.proposal},
            "normalize_weights": self.normalize_weights,
        }

    def config_hash(self):
        blob = json.dumps(self.resolved_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def methods(self):
        out = list(METHODS)
        if self.normalize_weights:
            out += ["IPW-norm", "DR-BC-norm"]
        return out


# ---------------------------------------------------------------------------
# Replicates
# ---------------------------------------------------------------------------

@dataclass
class ReplicateResult:
    index: int
    truth: Optional[EffectTruth] = None
    estimates: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)
    error: Optional[str] = None

    @property
    def ok(self):
        return self.error is None

    def to_dict(self):
        out = {"replicate": self.index, "error": self.error}
        if self.truth is not None:
            out["truth"] = self.truth.to_dict()
        out["estimates"] = [e.to_dict() for _, e in sorted(self.estimates.items())]
        out["diagnostics"] = self.diagnostics
        return out

    @classmethod
    def from_dict(cls, d):
        def de_keys(m):
            return {float(k): v for k, v in m.items()}

        def ie_keys(m):
            return {tuple(float(x) for x in k.split(",")): v for k, v in m.items()}

        truth = None
        if "truth" in d:
            t = d["truth"]
            de, ie = de_keys(t["DE"]), ie_keys(t["IE"])
            truth = EffectTruth(tuple(de), tuple(ie), de, ie)
        estimates = {}
        for e in d.get("estimates", []):
            est = EstimateSet(e["method"], e["scenario"], de_keys(e["DE"]), ie_keys(e["IE"]),
                              metadata=e.get("metadata", {}))
            estimates[(e["method"], e["scenario"])] = est
        return cls(d["replicate"], truth, estimates, d.get("diagnostics", []), d.get("error"))


def _school_diagnostics(school):
    s = summarize(school.graph) if school.n_nodes >= 2 else None
    return {
        "type": school.type_index,
        "replicate_of_type": school.replicate,
        "n_nodes": school.n_nodes,
        "n_edges": school.graph.n_edges,
        "density": None if s is None else s.density,
        "mean_degree": float(np.mean(school.graph.degrees())),
        "isolates": int(np.sum(school.graph.degrees() == 0)),
        "treated_fraction": float(np.mean(school.z)),
    }


def generate_population(config, replicate, sizes, intermediates=None):
    """All schools of one replicate."""
    pop = config.population
    schools = []
    for k, st in enumerate(pop.school_types):
        for nu in range(pop.replicates):
            seeds = {part: derive_seed(config.seed, ["rep", replicate, "school", k, nu, part])
                     for part in ("attrs", "graph", "outcome")}
            schools.append(generate_school(
                st, k, nu, sizes[(k, nu)], config.exposure_scheme, config.outcome_model,
                config.exposure_model, config.sampler, seeds,
                intermediate=None if intermediates is None else intermediates[k],
            ))
    return schools


def estimate_all(config, schools):
    """Every (method, scenario) estimate for one replicate."""
    out = {}
    for scenario, omit in config.scenarios.items():
        models = WorkingModels(
            schools,
            apply_scenario(config.propensity_covariates, omit),
            apply_scenario(config.outcome_covariates, omit),
        )
        for method in METHODS:
            out[(method, scenario)] = models.estimate(method, config.alphas, config.pairs, scenario)
        if config.normalize_weights:
            for method in ("IPW", "DR-BC"):
                est = models.estimate(method, config.alphas, config.pairs, scenario, normalize=True)
                est.method = f"{method}-norm"
                out[(est.method, scenario)] = est
    return out


def run_replicate(config, replicate, sizes, intermediates=None):
    """Generate, compute truth and estimate; faults are captured, not raised."""
    try:
        schools = generate_population(config, replicate, sizes, intermediates)
        truth = population_truth(schools, config.alphas, config.pairs)
        estimates = estimate_all(config, schools)
        diagnostics = [_school_diagnostics(s) for s in schools]
        return ReplicateResult(replicate, truth, estimates, diagnostics)
    except (PlasmodeError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        log.warning("replicate %d failed: %s", replicate, exc)
        return ReplicateResult(replicate, error=f"{type(exc).__name__}: {exc}")


def _solve_intermediates(config):
    out = []
    for st in config.population.school_types:
        params = st.synthesis
        if config.exposure_scheme == 2 and EXPOSURE in params.names:
            params = params.drop([EXPOSURE])
        out.append(solve_intermediate(params))
    return out


def _worker(args):
    config, replicate, sizes, intermediates = args
    return run_replicate(config, replicate, sizes, intermediates)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

METRIC_COLUMNS = ("scenario", "method", "estimand", "n_replicates", "truth", "mean_estimate",
                  "bias", "bias_se", "mse")


class MetricsTable:
    """Bias and MSE per (scenario, method, estimand) over replicates.

    Bias is the mean of ``estimate - truth`` with the truth taken from the
    same replicate; ``bias_se`` is the Monte Carlo standard error of that
    mean (sample standard deviation / sqrt(S)).
    """

    def __init__(self, rows):
        self.rows = list(rows)

    @classmethod
    def from_replicates(cls, results, scenarios=None, methods=None):
        results = [r for r in results if r.ok]
        if not results:
            raise StudyError("no successful replicates")
        keys = sorted(results[0].estimates)
        scenario_order = list(scenarios) if scenarios else sorted({s for _, s in keys})
        method_order = list(methods) if methods else sorted({m for m, _ in keys})
        truth0 = results[0].truth
        estimands = list(truth0.de) + list(truth0.ie)
        rows = []
        for scenario in scenario_order:
            for method in method_order:
                if (method, scenario) not in results[0].estimates:
                    continue
                for key in estimands:
                    field_ = "ie" if isinstance(key, tuple) else "de"
                    truth = np.array([getattr(r.truth, field_)[key] for r in results])
                    est = np.array([getattr(r.estimates[(method, scenario)], field_)[key] for r in results])
                    err = est - truth
                    s = err.size
                    rows.append({
                        "scenario": scenario,
                        "method": method,
                        "estimand": estimand_label(key),
                        "n_replicates": s,
                        "truth": float(truth.mean()),
                        "mean_estimate": float(est.mean()),
                        "bias": float(err.mean()),
                        "bias_se": float(err.std(ddof=1) / np.sqrt(s)) if s > 1 else 0.0,
                        "mse": float(np.mean(err**2)),
                    })
        return cls(rows)

    def lookup(self, scenario, method, estimand):
        for row in self.rows:
            if (row["scenario"], row["method"], row["estimand"]) == (scenario, method, estimand):
                return row
        raise KeyError((scenario, method, estimand))

    def to_frame(self):
        return pd.DataFrame(self.rows, columns=list(METRIC_COLUMNS))

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(METRIC_COLUMNS)
        for row in self.rows:
            writer.writerow([fmt(row[c]) if isinstance(row[c], float) else row[c] for c in METRIC_COLUMNS])
        return buf.getvalue()


def dose_response_export(results, method, scenario, path=None):
    """Mean estimate and pointwise 2.5%/97.5% Monte Carlo quantiles of DE(alpha)."""
    results = [r for r in results if r.ok]
    if not results:
        raise StudyError("no successful replicates")
    if (method, scenario) not in results[0].estimates:
        raise KeyError(f"no estimates for method {method!r} under scenario {scenario!r}")
    rows = []
    for alpha in results[0].truth.de:
        est = np.array([r.estimates[(method, scenario)].de[alpha] for r in results])
        truth = np.mean([r.truth.de[alpha] for r in results])
        lo, hi = np.quantile(est, [0.025, 0.975])
        mean = est.mean()
        rows.append({"method": method, "scenario": scenario, "alpha": alpha, "truth": truth,
                     "mean_estimate": mean, "q025": min(lo, mean), "q975": max(hi, mean)})
    frame = pd.DataFrame(rows)
    if path is not None:
        frame.to_csv(path, index=False, float_format="%.17g")
    return frame


# ---------------------------------------------------------------------------
# Study driver
# ---------------------------------------------------------------------------

@dataclass
class StudyResult:
    config: StudyConfig
    metrics: MetricsTable
    replicates: list
    sizes: dict

    @property
    def failures(self):
        return sum(not r.ok for r in self.replicates)


def run_study(config, workers=1, output_dir=None, replicates=None):
    """Run the replicate loop and aggregate bias/MSE.

    ``replicates`` optionally restricts the run to a subset of replicate
    indices (each replicate's result depends only on its own index).
    Outputs are written when ``output_dir`` (or ``config.output_dir``) is set.
    """
    if isinstance(config, (str, os.PathLike)):
        config = StudyConfig.load(config)
    sizes = draw_sizes(config.population, derive_seed(config.seed, ["sizes"]))
    intermediates = _solve_intermediates(config)
    indices = list(range(config.n_replicates)) if replicates is None else sorted(replicates)
    jobs = [(config, r, sizes, intermediates) for r in indices]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_worker, jobs))
    else:
        results = [_worker(j) for j in jobs]
    results.sort(key=lambda r: r.index)
    failures = sum(not r.ok for r in results)
    metrics = MetricsTable.from_replicates(results, list(config.scenarios), config.methods())
    study = StudyResult(config, metrics, results, sizes)
    out = output_dir or config.output_dir
    if out is not None:
        write_outputs(study, out)
    if failures > FAILURE_LIMIT * len(results):
        raise StudyError(f"{failures} of {len(results)} replicates failed")
    return study


def write_outputs(study, output_dir):
    """``metrics.csv``, ``dose_response.csv``, ``replicates/`` and ``manifest.json``."""
    out = Path(output_dir)
    (out / "replicates").mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(study.metrics.to_csv(), newline="")
    frames = [dose_response_export(study.replicates, m, s)
              for s in study.config.scenarios for m in study.config.methods()]
    pd.concat(frames).to_csv(out / "dose_response.csv", index=False, float_format="%.17g")
    with open(out / "replicates" / "replicates.jsonl", "w") as fh:
        for r in study.replicates:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
    manifest = {
        "config_hash": study.config.config_hash(),
        "seed": study.config.seed,
        "version": __version__,
        "n_replicates": len(study.replicates),
        "failures": study.failures,
        "school_sizes": {f"{k},{nu}": n for (k, nu), n in sorted(study.sizes.items())},
        "estimator_variant": "fixed-effects-working-models",
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def read_replicates(path):
    """Load a replicate archive written by :func:`write_outputs`."""
    path = Path(path)
    if path.is_dir():
        path = path / "replicates" / "replicates.jsonl"
    with open(path) as fh:
        return [ReplicateResult.from_dict(json.loads(line)) for line in fh if line.strip()]
