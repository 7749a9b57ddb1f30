"""Command-line entry point: ``python -m splinecop <command> [options]``.

Exit status is 0 on success, 1 for usage, configuration or input errors and
2 for numerical failures.  Each command writes a JSON artifact carrying the
config hash and seed; wall-clock information goes to a ``.meta.json``
sidecar so the artifact itself is reproducible byte for byte.
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import harness
from .generator import InversionError
from .harness import ConfigError, RunConfig
from .posterior import DensityError
from .summaries import dic as dic_record

COMMANDS = ("simulate", "fit", "sample", "tau", "dic", "study")

log = logging.getLogger("splinecop")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="splinecop", description="Bayesian spline Archimedean copula estimation.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="flat JSON run configuration")
    p.add_argument("--data", type=Path, help="CSV with header u,v[,x1,...]")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--model", choices=harness.MODEL_KINDS)
    p.add_argument("--sampler", choices=harness.SAMPLERS)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    over = {}
    for name in ("seed", "model", "sampler"):
        val = getattr(args, name)
        if val is not None:
            over[name] = val
    return cfg.replace(**over) if over else cfg


def _write(out: Path, name: str, cfg: RunConfig, kind: str, payload: dict, started: float):
    out.mkdir(parents=True, exist_ok=True)
    body = harness.to_jsonable(harness.artifact(cfg, kind, payload))
    path = out / f"{name}.json"
    path.write_text(json.dumps(body, indent=1, sort_keys=True) + "\n")
    meta = {
        "artifact": path.name,
        "config_hash": cfg.hash(),
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "wall_seconds": time.time() - started,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    (out / f"{name}.meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    return path


def _load_data(args, cfg: RunConfig):
    if args.data is None:
        raise UsageError(f"{args.command} needs --data")
    if not args.data.exists():
        raise UsageError(f"data file {args.data} does not exist")
    covs = harness.covariate_columns_of(args.data)
    if cfg.model != "unconditional" and not covs:
        raise UsageError(f"model {cfg.model!r} needs covariate columns in {args.data}")
    if cfg.model == "unconditional":
        covs = []
    elif cfg.model in ("flexpower", "tensor") and len(covs) != 1:
        raise UsageError(f"model {cfg.model!r} takes exactly one covariate, found {covs}")
    return harness.ingest_observations(args.data, covs)


def _fit_payload(fit, model, data):
    payload = {
        "model": model.kind,
        "map": fit.map,
        "hessian": fit.hessian,
        "log_post_at_map": fit.log_post_at_map,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "grad_norm": fit.grad_norm,
        "message": fit.message,
        "n": data.n,
    }
    if model.kind == "unconditional":
        payload["kendall_tau_at_map"] = float(model.tau(fit.map)[0])
    if data.covariate_map is not None:
        payload["covariate_map"] = data.covariate_map.to_record()
    return payload


def run(argv=None) -> int:
    started = time.time()
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    cfg = _config(args)
    out = args.out
    if args.workers < 1:
        raise UsageError("--workers must be positive")

    if args.command == "simulate":
        data = harness.simulate(cfg)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "data.csv"
        harness.write_observations(path, data, f"config_hash={cfg.hash()} seed={cfg.seed}")
        log.info("wrote %s", path)
        return 0

    if args.command == "study":
        res = harness.run_study(cfg, args.workers)
        reports = {str(n): r.to_record() for n, r in res["reports"].items()}
        _write(out, "study", cfg, "study", {"study_kind": cfg.study_kind, "reports": reports}, started)
        if cfg.study_kind == "lambda":
            text = "\n\n".join(r.format_table() for r in res["reports"].values())
            (out / "study.txt").write_text(text + "\n")
            print(text)
        return 0

    data = _load_data(args, cfg)
    model = cfg.build_model(p=max(data.p, 1))
    fit = harness.fit_model(model, data)
    if args.command == "fit":
        _write(out, "fit", cfg, "fit", _fit_payload(fit, model, data), started)
        return 0

    sampler = "metropolis" if args.command == "dic" else cfg.sampler
    draws = harness.draw_posterior(cfg, model, data, fit, cfg.seed, sampler)
    if args.command == "sample":
        payload = {
            "model": model.kind,
            "sampler": draws.kind,
            "draws": draws.draws,
            "weights": draws.weights,
            "acceptance": draws.acceptance,
            "ess": draws.ess,
            "blocks": [b.name for b in model.blocks],
        }
        _write(out, "sample", cfg, "sample", payload, started)
    elif args.command == "tau":
        curve = harness.tau_summary(cfg, model, draws)
        payload = {"model": model.kind, "band_kind": curve.band_kind, "records": curve.to_records()}
        _write(out, "tau", cfg, "tau", payload, started)
    else:
        rec = dic_record(draws, lambda p: model.log_likelihood(p, data))
        payload = {"model": model.kind, "dic": rec.dic, "effective_dim": rec.effective_dim, "mean_deviance": rec.mean_deviance, "acceptance": draws.acceptance}
        _write(out, "dic", cfg, "dic", payload, started)
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DensityError, InversionError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
