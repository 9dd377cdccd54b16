"""Monte Carlo rate experiments for the variation-norm ERM.

A truth with known variation norm is drawn through its mixture
representation, data are simulated under a product design, the ERM is
fitted on a grid of sample sizes and the population dissimilarity of each
fit is computed exactly.  The log-log slope of the median dissimilarity is
compared with the n^(-1/3) rate after removing the (log n)^(2(d-1)/3)
factor.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats
from scipy.special import expit

from .bernstein import NOISE_FAMILIES, NoiseModel, make_noise
from .losses import canonical_family, dissimilarity, make_loss
from .risk import Design, RiskSettings, make_risk_oracle
from .solver import SieveSchedule, SolveOptions, fit_erm, sieve_radius
from .svn import (
    GridFunction,
    MixtureComponent,
    MixtureRepresentation,
    cdf_from_masses,
    subset_axes,
    svn_exact,
    synthesize,
)

log = logging.getLogger(__name__)

EXPECTED_EXPONENT = -1.0 / 3.0


# ---------------------------------------------------------------------------
# truths
# ---------------------------------------------------------------------------

def _axis_masses(kind: str, points: int, a: float = 2.0, b: float = 2.0):
    """Face-axis grid and the masses of a discretized continuous distribution."""
    edges = np.linspace(0.0, 1.0, points + 1)
    if kind == "uniform":
        cdf = edges
    elif kind == "beta":
        cdf = stats.beta.cdf(edges, a, b)
    else:
        raise ValueError(f"unknown component distribution {kind!r}")
    return edges[:-1], np.diff(cdf)


def component_cdf(spec: dict, size: int) -> GridFunction:
    """Face CDF from a component spec.

    kinds: ``point_mass`` (``at``: face coordinates), ``uniform`` and
    ``beta`` (product of discretized marginals on ``points`` cells per
    axis, beta parameters ``a``, ``b``).
    """
    kind = spec.get("kind", "uniform")
    if kind == "point_mass":
        at = [float(v) for v in np.atleast_1d(spec["at"])]
        if len(at) != size:
            raise ValueError("point mass location does not match the face dimension")
        grid = tuple(np.unique([0.0, t]) for t in at)
        masses = np.zeros(tuple(len(g) for g in grid))
        masses[tuple(int(np.searchsorted(g, t)) for g, t in zip(grid, at))] = 1.0
        return cdf_from_masses(grid, masses)
    points = int(spec.get("points", 32))
    axis, m = _axis_masses(kind, points, float(spec.get("a", 2.0)), float(spec.get("b", 2.0)))
    masses = m
    for _ in range(size - 1):
        masses = np.multiply.outer(masses, m)
    return cdf_from_masses((axis,) * size, masses)


PRESETS = {
    "constant": {"dim": 1, "M": 0.5, "f0": 0.5, "components": []},
    "indicator": {
        "dim": 2, "M": 1.0, "f0": 0.0,
        "components": [{"subset": [0, 1], "sign": 1, "alpha": 1.0, "kind": "point_mass", "at": [0.5, 0.5]}],
    },
    "ramp1d": {
        "dim": 1, "M": 1.0, "f0": -0.25,
        "components": [
            {"subset": [0], "sign": 1, "alpha": 0.7, "kind": "beta", "a": 2.0, "b": 2.0, "points": 64},
            {"subset": [0], "sign": -1, "alpha": 0.3, "kind": "beta", "a": 5.0, "b": 2.0, "points": 64},
        ],
    },
    "mixed2d": {
        "dim": 2, "M": 2.0, "f0": 0.25,
        "components": [
            {"subset": [0], "sign": 1, "alpha": 0.35, "kind": "uniform", "points": 24},
            {"subset": [1], "sign": -1, "alpha": 0.25, "kind": "beta", "a": 2.0, "b": 3.0, "points": 24},
            {"subset": [0, 1], "sign": 1, "alpha": 0.4, "kind": "beta", "a": 2.0, "b": 2.0, "points": 16},
        ],
    },
}


@dataclass(frozen=True, eq=False)
class Truth:
    function: GridFunction
    svn: float
    representation: MixtureRepresentation
    name: str = ""


def gen_truth(spec) -> Truth:
    """theta0 = synthesize(spec), reported together with its exact variation norm.

    ``spec`` is a preset name, a dict (see PRESETS) or a MixtureRepresentation.
    """
    name = ""
    if isinstance(spec, str):
        if spec not in PRESETS:
            raise ValueError(f"unknown truth preset {spec!r}; choose from {sorted(PRESETS)}")
        name, spec = spec, PRESETS[spec]
    if isinstance(spec, MixtureRepresentation):
        rep = spec
    else:
        dim = int(spec["dim"])
        comps = []
        for c in spec.get("components", []):
            axes = sorted(int(j) for j in c["subset"])
            bits = sum(1 << j for j in axes)
            comps.append(MixtureComponent(bits, int(c.get("sign", 1)), float(c["alpha"]),
                                          component_cdf(c, len(axes))))
        rep = MixtureRepresentation(dim, float(spec.get("f0", 0.0)), float(spec["M"]), tuple(comps))
    rep.validate()
    theta0 = synthesize(rep)
    return Truth(theta0, svn_exact(theta0), rep, name)


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundedNoise:
    """Uniform noise on [-width, width]; responses are clipped to [-a_tilde, a_tilde]."""

    width: float = 0.0
    a_tilde: float = math.inf

    @property
    def variance(self) -> float:
        return self.width ** 2 / 3.0

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.width == 0:
            return np.zeros(n)
        return rng.uniform(-self.width, self.width, size=n)


def gen_dataset(theta0, n: int, design: Design, noise, rng: np.random.Generator,
                family: str = "square_bounded"):
    """(X, Y) with X from the design and Y from the model of ``family``.

    ``noise`` is a NoiseModel for square_subexp, a BoundedNoise for
    square_bounded and ignored for logistic.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    family = canonical_family(family)
    X = design.sample(rng, n)
    m = np.asarray(theta0(X), dtype=float).reshape(n)
    if family == "logistic":
        Y = (rng.uniform(size=n) < expit(m)).astype(float)
    elif family == "square_bounded":
        Y = np.clip(m + noise.sample(rng, n), -noise.a_tilde, noise.a_tilde)
    else:
        Y = m + noise.sample(rng, n)
    return X, Y


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    d: int = 1
    truth: object = "ramp1d"
    design: str = "uniform"
    design_a: float = 1.0
    design_b: float = 1.0
    loss: str = "square_bounded"
    noise_family: str = "uniform"  # uniform (bounded) or a sub-exponential family
    noise_scale: float = 0.5
    a_tilde: float | None = None  # square_bounded clip level; default |theta0|_inf + width
    schedule: SieveSchedule = field(default_factory=SieveSchedule)
    n_grid: list = field(default_factory=lambda: [2 ** k for k in range(7, 14)])
    replicates: int = 20
    seed: int = 0
    risk: RiskSettings = field(default_factory=RiskSettings)
    solver: SolveOptions = field(default_factory=SolveOptions)

    def validate(self, truth: Truth | None = None):
        grid = list(self.n_grid)
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 1:
            raise ValueError("n_grid must be strictly increasing positive integers")
        if self.replicates < 3:
            raise ValueError("at least 3 replicates are required")
        if self.noise_scale < 0:
            raise ValueError("noise scale must be nonnegative")
        family = canonical_family(self.loss)
        if family == "square_subexp" and self.noise_family not in NOISE_FAMILIES:
            raise ValueError(f"square_subexp needs a noise family from {NOISE_FAMILIES}")
        if truth is not None:
            if truth.function.dim != self.d:
                raise ValueError("truth dimension differs from d")
            radius = sieve_radius(self.schedule, grid[0])
            if truth.svn > radius + 1e-12:
                raise ValueError(f"truth norm {truth.svn:.6g} exceeds the smallest sieve radius {radius:.6g}")

    def to_dict(self) -> dict:
        out = asdict(self)
        if isinstance(self.truth, MixtureRepresentation):
            raise TypeError("serialize truths as presets or dict specs")
        out["n_grid"] = [int(n) for n in self.n_grid]
        return out

    def config_hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        if "schedule" in data and isinstance(data["schedule"], dict):
            data["schedule"] = SieveSchedule(**data["schedule"])
        if "risk" in data and isinstance(data["risk"], dict):
            data["risk"] = RiskSettings(**data["risk"])
        if "solver" in data and isinstance(data["solver"], dict):
            s = dict(data["solver"])
            if isinstance(s.get("step_rule"), dict):
                from .solver import StepRule
                s["step_rule"] = StepRule(**s["step_rule"])
            data["solver"] = SolveOptions(**s)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def _ini_value(text: str):
    text = text.strip()
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    if text.lower() in ("none", ""):
        return None
    return text


def load_config(path) -> ExperimentConfig:
    """Read a JSON file or an INI file with an [experiment] section and
    optional [schedule], [risk] and [solver] sections."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json" or text.lstrip().startswith("{"):
        return ExperimentConfig.from_dict(json.loads(text))
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keep key case (schedule uses A)
    parser.read_string(text)
    data: dict = {}
    for key, val in parser["experiment"].items() if parser.has_section("experiment") else []:
        if key == "n_grid":
            data[key] = [int(v) for v in val.replace(",", " ").split()]
        else:
            data[key] = _ini_value(val)
    for section in ("schedule", "risk", "solver"):
        if parser.has_section(section):
            data[section] = {k: _ini_value(v) for k, v in parser[section].items()}
    return ExperimentConfig.from_dict(data)


# ---------------------------------------------------------------------------
# experiment
# ---------------------------------------------------------------------------

@dataclass
class ReplicateResult:
    n: int
    replicate: int
    dissimilarity: float
    std_error: float
    runtime: float
    iterations: int
    status: str
    fit_svn: float
    active: int


@dataclass
class RateReport:
    records: list
    n_grid: list
    medians: list
    corrected_slope: float
    raw_slope: float
    slope_std_error: float
    replicate_slopes: list
    expected_exponent: float
    log_correction_exponent: float
    truth_svn: float
    config_hash: str
    seed: int
    runtime: dict

    def to_dict(self) -> dict:
        out = asdict(self)
        out["records"] = [asdict(r) if not isinstance(r, dict) else r for r in self.records]
        return out


def _replicate_rng(seed: int, n: int, rep: int) -> np.random.Generator:
    # the stream depends only on (seed, n, replicate), never on scheduling order
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(int(n), int(rep))))


@dataclass(frozen=True, eq=False)
class _Setup:
    config: ExperimentConfig
    truth: Truth
    noise: object
    loss: object
    design: Design
    risk: RiskSettings


def _prepare(config: ExperimentConfig) -> _Setup:
    truth = gen_truth(config.truth)
    config.validate(truth)
    family = canonical_family(config.loss)
    design = Design(config.design, config.d, config.design_a, config.design_b)
    sup = float(np.max(np.abs(truth.function.values)))
    if family == "square_subexp":
        noise = make_noise(config.noise_family, config.noise_scale, n_mc=200_000, seed=config.seed)
        a_tilde = math.inf
        noise_var = noise.variance if config.noise_scale > 0 else 0.0
    elif family == "square_bounded":
        a_tilde = config.a_tilde if config.a_tilde is not None else sup + config.noise_scale
        if sup + config.noise_scale > a_tilde + 1e-12:
            # clipping would bias the regression function away from theta0
            raise ValueError("a_tilde must be at least |theta0|_inf + noise width")
        noise = BoundedNoise(config.noise_scale, a_tilde)
        noise_var = noise.variance
    else:
        a_tilde = config.a_tilde if config.a_tilde is not None else 1.0
        noise = None
        noise_var = 0.0
    loss = make_loss(family, a_tilde)
    risk = RiskSettings(**{**asdict(config.risk), "noise_var": noise_var})
    return _Setup(config, truth, noise, loss, design, risk)


def _run_one(setup: _Setup, n: int, rep: int) -> ReplicateResult:
    cfg = setup.config
    rng = _replicate_rng(cfg.seed, n, rep)
    t0 = time.perf_counter()
    X, Y = gen_dataset(setup.truth.function, n, setup.design, setup.noise, rng, setup.loss.family)
    report = fit_erm((X, Y), setup.loss, sieve_radius(cfg.schedule, n), cfg.solver)
    fit = report.fit.pruned()
    oracle = make_risk_oracle(setup.loss, setup.truth.function, setup.design, setup.risk)
    d = dissimilarity(fit, setup.truth.function, setup.loss, oracle)
    return ReplicateResult(int(n), int(rep), d.value, d.std_error, time.perf_counter() - t0,
                           report.iterations, report.status, float(np.abs(fit.vector()).sum()),
                           report.active_set_size)


def _run_task(args):
    setup, n, rep = args
    return _run_one(setup, n, rep)


def _slope(x, y) -> tuple[float, float]:
    """Least-squares slope and its standard error."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    res = stats.linregress(x, y)
    return float(res.slope), float(res.stderr)


def summarize(records, config: ExperimentConfig, truth_svn: float, config_hash: str = "") -> RateReport:
    grid = [int(n) for n in config.n_grid]
    by_n = {n: [] for n in grid}
    for r in records:
        by_n[int(r.n)].append(r)
    meds = [float(np.median([r.dissimilarity for r in by_n[n]])) for n in grid]
    logn = np.log(grid)
    corr = 2.0 * (config.d - 1) / 3.0
    a_n = np.array([sieve_radius(config.schedule, n) for n in grid])
    with np.errstate(divide="ignore"):
        logd = np.log(meds)
    if np.all(np.isfinite(logd)) and len(grid) > 2:
        corrected = logd - corr * np.log(logn) - np.log(a_n)
        cslope, cse = _slope(logn, corrected)
        rslope, _ = _slope(logn, logd)
    else:
        cslope = cse = rslope = float("nan")
    rep_slopes = []
    for rep in range(config.replicates):
        vals = [next((r.dissimilarity for r in by_n[n] if r.replicate == rep), np.nan) for n in grid]
        if len(grid) > 2 and all(v > 0 for v in vals):
            rep_slopes.append(_slope(logn, np.log(vals))[0])
        else:
            rep_slopes.append(float("nan"))
    times = np.array([r.runtime for r in records]) if records else np.zeros(1)
    runtime = {"total": float(times.sum()), "mean": float(times.mean()), "max": float(times.max())}
    ordered = sorted(records, key=lambda r: (r.n, r.replicate))
    return RateReport(ordered, grid, meds, cslope, rslope, cse, rep_slopes, EXPECTED_EXPONENT, corr,
                      truth_svn, config_hash, config.seed, runtime)


def _load_checkpoint(path: Path, config_hash: str) -> dict:
    done = {}
    if not path.exists():
        return done
    with path.open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError:
                # a torn final line from a crash; the replicate is simply rerun
                continue
            if row.get("config_hash") != config_hash:
                raise ValueError(f"checkpoint {path} belongs to a different configuration")
            rec = ReplicateResult(**row["result"])
            done[(rec.n, rec.replicate)] = rec
    return done


def run_rate_experiment(config: ExperimentConfig, checkpoint=None, workers: int = 1) -> RateReport:
    """Fit every (n, replicate) of the config and summarize the rate.

    With ``checkpoint`` (a JSON-lines path) finished replicates are appended
    as they complete and skipped on a rerun.
    """
    setup = _prepare(config)
    chash = config.config_hash()
    log.info("rate experiment %s seed=%d truth svn=%.6g", chash, config.seed, setup.truth.svn)
    ckpt = Path(checkpoint) if checkpoint else None
    done = _load_checkpoint(ckpt, chash) if ckpt else {}
    todo = [(n, rep) for n in config.n_grid for rep in range(config.replicates) if (n, rep) not in done]

    def record(res: ReplicateResult):
        done[(res.n, res.replicate)] = res
        if ckpt:
            with ckpt.open("a") as fh:
                fh.write(json.dumps({"config_hash": chash, "result": asdict(res)}) + "\n")
                fh.flush()
                os.fsync(fh.fileno())

    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for res in pool.map(_run_task, [(setup, n, rep) for n, rep in todo]):
                record(res)
    else:
        for n, rep in todo:
            res = _run_one(setup, n, rep)
            log.debug("n=%d rep=%d d=%.4g %.2fs", n, rep, res.dissimilarity, res.runtime)
            record(res)
    return summarize(list(done.values()), config, setup.truth.svn, chash)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def report_json(report: RateReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True)


def report_csv(report: RateReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "replicate", "d", "runtime"])
    for r in report.records:
        w.writerow([r.n, r.replicate, repr(r.dissimilarity), repr(r.runtime)])
    return buf.getvalue()


def plot_svg(report: RateReport, path) -> None:
    """Log-log plot of per-replicate and median dissimilarity (needs matplotlib)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    ns = np.array([r.n for r in report.records])
    ds = np.array([r.dissimilarity for r in report.records])
    ax.loglog(ns, np.maximum(ds, 1e-16), ".", alpha=0.3, color="grey", label="replicates")
    ax.loglog(report.n_grid, report.medians, "o-", label="median")
    ref = report.medians[0] * (np.asarray(report.n_grid) / report.n_grid[0]) ** EXPECTED_EXPONENT
    ax.loglog(report.n_grid, ref, "--", label="n^(-1/3)")
    ax.set_xlabel("n")
    ax.set_ylabel("dissimilarity")
    ax.set_title(f"corrected slope {report.corrected_slope:.3f}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
