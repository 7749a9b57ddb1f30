"""Run configuration, data I/O and the seeded estimation pipelines.

Every pipeline is a pure function of ``(RunConfig, inputs)``; the CLI in
:mod:`splinecop.cli` only adds file handling.  Replicate seeds come from
``SeedSequence(seed, spawn_key=(n, replicate))`` so that study results do
not depend on how replicates are scheduled across workers.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import AffineMap, ObservationSet
from .inference import (
    FitResult,
    PosteriorDraws,
    adaptive_block_metropolis,
    importance_sample,
    map_estimate,
)
from .parametric import ParametricCopula, TauFunction, sample_data, theta_of_tau
from .posterior import CopulaModel, PriorConfig, build_model
from .summaries import (
    COVERAGE_GRID,
    EVAL_GRID,
    LEVELS,
    TABLE_GRID,
    StudyReport,
    curve_estimate,
    dic,
    lambda_curve,
    study_metrics,
    tau_curve,
)

MODEL_KINDS = ("unconditional", "additive", "flexpower", "tensor")
SAMPLERS = ("importance", "metropolis")
STUDY_KINDS = ("lambda", "conditional_tau", "dic")


class ConfigError(ValueError):
    """Malformed run configuration; the message names the offending field."""


@dataclass
class RunConfig:
    model: str = "unconditional"
    K: int = 11
    Kstar: int = 5
    order: int = 3
    covariate_order: int = 2
    a: float = 1.0
    b: float = 1.0
    epsilon: float = 1e-6
    ridge: float = 1e-6
    sampler: str = "importance"
    M: int = 30000
    burnin: int = 1000
    dof: float = 4.0
    seed: int = 1
    u_grid: list = field(default_factory=lambda: TABLE_GRID.tolist())
    x_grid_size: int = 101
    # data generation and studies
    family: str = "clayton"
    tau_kind: str = "constant"
    tau0: float = 0.5
    n: int = 500
    n_list: list = field(default_factory=lambda: [500])
    S: int = 100
    study_kind: str = "lambda"
    study_models: list = field(default_factory=lambda: ["additive", "unconditional"])

    def __post_init__(self):
        self.validate()

    def validate(self):
        def need(cond, name, msg):
            if not cond:
                raise ConfigError(f"config field {name!r}: {msg}")

        need(self.model in MODEL_KINDS, "model", f"must be one of {MODEL_KINDS}")
        need(self.sampler in SAMPLERS, "sampler", f"must be one of {SAMPLERS}")
        need(self.study_kind in STUDY_KINDS, "study_kind", f"must be one of {STUDY_KINDS}")
        for name in ("K", "Kstar", "M", "S", "n", "x_grid_size"):
            v = getattr(self, name)
            need(isinstance(v, int) and not isinstance(v, bool) and v >= 1, name, "must be a positive integer")
        need(isinstance(self.burnin, int) and self.burnin >= 0, "burnin", "must be a nonnegative integer")
        need(self.K > self.order, "order", "must be smaller than K")
        need(self.Kstar > self.covariate_order, "covariate_order", "must be smaller than Kstar")
        for name in ("a", "b", "epsilon", "dof"):
            need(isinstance(getattr(self, name), (int, float)) and getattr(self, name) > 0, name, "must be positive")
        need(0 < self.epsilon < 0.5, "epsilon", "must lie in (0, 0.5)")
        need(self.ridge >= 0, "ridge", "must be nonnegative")
        need(self.family in ("clayton", "frank", "gumbel"), "family", "must be clayton, frank or gumbel")
        need(self.tau_kind in ("constant", "sine"), "tau_kind", "must be constant or sine")
        need(0 <= self.tau0 < 1, "tau0", "must lie in [0, 1)")
        need(len(self.u_grid) > 0 and all(0 < u < 1 for u in self.u_grid), "u_grid", "must hold values in (0, 1)")
        need(len(self.n_list) > 0 and all(isinstance(n, int) and n > 0 for n in self.n_list), "n_list", "must hold positive integers")
        need(all(m in MODEL_KINDS for m in self.study_models), "study_models", f"entries must be in {MODEL_KINDS}")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError(f"unknown config field(s) {unknown}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config must be a flat key-value object")
        for k, v in d.items():
            if isinstance(v, dict):
                raise ConfigError(f"config field {k!r}: nested objects are not allowed")
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def priors(self) -> PriorConfig:
        return PriorConfig(self.a, self.b, self.order, self.covariate_order, self.ridge)

    def build_model(self, kind: str | None = None, p: int = 1) -> CopulaModel:
        return build_model(kind or self.model, self.K, self.Kstar, p, self.epsilon, self.priors())

    def tau_function(self) -> TauFunction:
        return TauFunction(self.tau_kind, self.tau0)

    def x_grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.x_grid_size)


# -- data files -------------------------------------------------------------------------


def write_observations(path, obs: ObservationSet, comment: str | None = None):
    """CSV with header ``u,v[,x1,...]``; ``%.17g`` keeps every double exact."""
    cols = [obs.u, obs.v]
    names = ["u", "v"]
    if obs.x is not None:
        names += [f"x{j + 1}" for j in range(obs.p)]
        cols += list(obs.x.T)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write(",".join(names) + "\n")
        for row in zip(*cols):
            fh.write(",".join("%.17g" % v for v in row) + "\n")


def ingest_observations(path, covariate_columns=None, rescale: bool = True) -> ObservationSet:
    """Read ``u,v[,covariates]`` pseudo-observations from a CSV with header.

    Lines starting with ``#`` are skipped.  Covariates are mapped to
    ``[0, 1]`` by an affine map stored as ``obs.covariate_map``.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#") and ln.strip()]
    reader = csv.reader(lines)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ValueError(f"{path}: empty file") from None
    covariate_columns = list(covariate_columns or [])
    missing = [c for c in ["u", "v", *covariate_columns] if c not in header]
    if missing:
        raise ValueError(f"{path}: missing column(s) {missing}")
    cols = [header.index(c) for c in ["u", "v", *covariate_columns]]
    values = []
    for r, row in enumerate(reader, start=1):
        if len(row) != len(header):
            raise ValueError(f"{path}: row {r} has {len(row)} cells, expected {len(header)}")
        rec = []
        for c in cols:
            try:
                rec.append(float(row[c]))
            except ValueError:
                raise ValueError(f"{path}: non-numeric value {row[c]!r} in row {r}, column {header[c]!r}") from None
        values.append(rec)
    if not values:
        raise ValueError(f"{path}: no data rows")
    arr = np.array(values)
    for j, name in enumerate(("u", "v")):
        bad = np.flatnonzero(~((arr[:, j] > 0) & (arr[:, j] < 1)))
        if bad.size:
            raise ValueError(f"{path}: {name}={arr[bad[0], j]!r} in row {bad[0] + 1} is outside (0, 1)")
    x = cmap = None
    if covariate_columns:
        x = arr[:, 2:]
        if not np.all(np.isfinite(x)):
            raise ValueError(f"{path}: non-finite covariate in row {np.flatnonzero(~np.isfinite(x).all(1))[0] + 1}")
        if rescale:
            cmap = AffineMap.fit(covariate_columns, x)
            x = np.clip(cmap.apply(x), 0.0, 1.0)
    obs = ObservationSet(arr[:, 0], arr[:, 1], x)
    obs.covariate_map = cmap
    return obs


def covariate_columns_of(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        for ln in fh:
            if not ln.startswith("#") and ln.strip():
                return [h.strip() for h in ln.split(",") if h.strip() not in ("u", "v")]
    return []


# -- pipelines -----------------------------------------------------------------------------


def simulate(cfg: RunConfig, seed=None, n: int | None = None) -> ObservationSet:
    seed = cfg.seed if seed is None else seed
    return sample_data(cfg.family, cfg.tau_function(), n or cfg.n, seed)


def fit_model(model: CopulaModel, data: ObservationSet, tol: float = 1e-6) -> FitResult:
    return map_estimate(model.objective(data), model.initial(data), tol=tol, hessian=model.hessian(data))


def draw_posterior(cfg: RunConfig, model: CopulaModel, data: ObservationSet, fit: FitResult, seed, sampler=None) -> PosteriorDraws:
    sampler = sampler or cfg.sampler
    if sampler == "importance":
        return importance_sample(
            model.objective(data), fit, cfg.M, cfg.dof, seed, batch_logpost=model.batch_objective(data)
        )
    blocks = [list(range(sl.start, sl.stop)) for sl in model.block_slices()]
    return adaptive_block_metropolis(model.objective(data), blocks, fit, cfg.M, cfg.burnin, seed)


def replicate_seeds(master: int, n: int, rep: int) -> tuple[int, int]:
    """Independent data and sampler seeds for one study replicate."""
    ss = np.random.SeedSequence(master, spawn_key=(n, rep))
    a, b = ss.spawn(2)
    return int(a.generate_state(1)[0]), int(b.generate_state(1)[0])


def true_lambda(cfg: RunConfig, grid) -> np.ndarray:
    if cfg.tau0 == 0:
        g = np.asarray(grid, dtype=float)
        return g * np.log(g)
    cop = ParametricCopula(cfg.family, theta_of_tau(cfg.family, cfg.tau0))
    return cop.lam(np.asarray(grid, dtype=float))


def _lambda_replicate(cfg: RunConfig, n: int, rep: int) -> dict:
    t0 = time.perf_counter()
    dseed, sseed = replicate_seeds(cfg.seed, n, rep)
    data = sample_data(cfg.family, TauFunction("constant", cfg.tau0), n, dseed)
    model = cfg.build_model("unconditional")
    fit = fit_model(model, data)
    draws = draw_posterior(cfg, model, data, fit, sseed)
    curve = lambda_curve(draws, model, EVAL_GRID)
    return {
        "point": curve.point,
        "bands": curve.bands,
        "ess": draws.ess if draws.weights is not None else float(draws.M),
        "converged": fit.converged,
        "time": time.perf_counter() - t0,
    }


def _conditional_tau_replicate(cfg: RunConfig, n: int, rep: int) -> dict:
    t0 = time.perf_counter()
    dseed, sseed = replicate_seeds(cfg.seed, n, rep)
    data = sample_data(cfg.family, TauFunction("sine"), n, dseed)
    model = cfg.build_model(cfg.model, p=1)
    fit = fit_model(model, data)
    draws = draw_posterior(cfg, model, data, fit, sseed)
    grid = cfg.x_grid()
    curve = tau_curve(draws, model, grid)
    return {"point": curve.point, "bands": curve.bands, "converged": fit.converged, "time": time.perf_counter() - t0}


def _dic_replicate(cfg: RunConfig, n: int, rep: int) -> dict:
    t0 = time.perf_counter()
    dseed, sseed = replicate_seeds(cfg.seed, n, rep)
    tau_fn = cfg.tau_function()
    data = sample_data(cfg.family, tau_fn, n, dseed)
    if data.x is None:
        # the constant-tau null still needs a covariate for the conditional fit
        rng = np.random.default_rng(dseed + 1)
        data = ObservationSet(data.u, data.v, rng.uniform(size=(n, 1)))
    out = {}
    for kind in cfg.study_models:
        model = cfg.build_model(kind, p=1)
        fit = fit_model(model, data)
        chain = draw_posterior(cfg, model, data, fit, sseed, sampler="metropolis")
        rec = dic(chain, lambda p, m=model: m.log_likelihood(p, data))
        out[kind] = {"dic": rec.dic, "effective_dim": rec.effective_dim, "mean_deviance": rec.mean_deviance}
    out["time"] = time.perf_counter() - t0
    return out


_REPLICATES = {"lambda": _lambda_replicate, "conditional_tau": _conditional_tau_replicate, "dic": _dic_replicate}


def _run_one(args):
    cfg_dict, kind, n, rep = args
    return _REPLICATES[kind](RunConfig.from_dict(cfg_dict), n, rep)


def run_replicates(cfg: RunConfig, n: int, workers: int = 1, kind: str | None = None) -> list[dict]:
    """All ``cfg.S`` replicates at sample size ``n``, in replicate order."""
    kind = kind or cfg.study_kind
    jobs = [(cfg.to_dict(), kind, n, rep) for rep in range(cfg.S)]
    if workers <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_run_one, jobs))


def lambda_report(cfg: RunConfig, n: int, results: list[dict]) -> StudyReport:
    est = np.array([r["point"] for r in results])
    intervals = {lev: (np.array([r["bands"][lev][0] for r in results]), np.array([r["bands"][lev][1] for r in results])) for lev in LEVELS}
    label = f"{cfg.family} tau={cfg.tau0:.2f}"
    return study_metrics(
        est, true_lambda(cfg, EVAL_GRID), EVAL_GRID, intervals, np.asarray(cfg.u_grid), COVERAGE_GRID, label, n,
        [r["time"] for r in results],
    )


@dataclass
class ConditionalTauReport:
    model: str
    n: int
    S: int
    grid: np.ndarray
    truth: np.ndarray
    mean_estimate: np.ndarray
    max_abs_error: float

    def to_record(self) -> dict:
        return {
            "model": self.model,
            "n": self.n,
            "S": self.S,
            "grid": self.grid.tolist(),
            "truth": self.truth.tolist(),
            "mean_estimate": self.mean_estimate.tolist(),
            "max_abs_error": self.max_abs_error,
        }


def conditional_tau_report(cfg: RunConfig, n: int, results: list[dict], window=(0.05, 0.95)) -> ConditionalTauReport:
    grid = cfg.x_grid()
    mean = np.mean([r["point"] for r in results], axis=0)
    truth = TauFunction("sine")(grid)
    inside = (grid >= window[0] - 1e-12) & (grid <= window[1] + 1e-12)
    err = float(np.max(np.abs(mean - truth)[inside]))
    return ConditionalTauReport(cfg.model, n, len(results), grid, truth, mean, err)


@dataclass
class DICStudyReport:
    n: int
    S: int
    models: list
    dic: dict
    effective_dim: dict

    def differences(self, a: str, b: str) -> np.ndarray:
        return np.asarray(self.dic[a]) - np.asarray(self.dic[b])

    def to_record(self) -> dict:
        return {"n": self.n, "S": self.S, "models": self.models, "dic": self.dic, "effective_dim": self.effective_dim}


def dic_report(cfg: RunConfig, n: int, results: list[dict]) -> DICStudyReport:
    models = list(cfg.study_models)
    return DICStudyReport(
        n,
        len(results),
        models,
        {m: [r[m]["dic"] for r in results] for m in models},
        {m: [r[m]["effective_dim"] for r in results] for m in models},
    )


def run_study(cfg: RunConfig, workers: int = 1) -> dict:
    """Run the configured study for every ``n`` in ``cfg.n_list``."""
    reports, times = {}, {}
    for n in cfg.n_list:
        results = run_replicates(cfg, n, workers)
        times[n] = [r["time"] for r in results]
        if cfg.study_kind == "lambda":
            reports[n] = lambda_report(cfg, n, results)
        elif cfg.study_kind == "conditional_tau":
            reports[n] = conditional_tau_report(cfg, n, results)
        else:
            reports[n] = dic_report(cfg, n, results)
    return {"reports": reports, "times": times}


def tau_summary(cfg: RunConfig, model: CopulaModel, draws: PosteriorDraws):
    """Posterior Kendall's tau: a curve on the x grid, or a scalar summary."""
    if model.kind == "unconditional":
        w = draws.weights if draws.weights is not None else np.full(draws.M, 1.0 / draws.M)
        taus = np.array([model.tau(p)[0] for p in draws.draws])
        return curve_estimate(taus[:, None], w, np.array([np.nan]))
    return tau_curve(draws, model, cfg.x_grid())


def artifact(cfg: RunConfig, kind: str, payload: dict, seed=None) -> dict:
    return {"kind": kind, "config_hash": cfg.hash(), "seed": cfg.seed if seed is None else seed, **payload}


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj
