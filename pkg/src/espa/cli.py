"""Command-line entry point.

::

    espa generate toy1 --D 50 --T 600 --sigma 5 --seed 1 --out data/
    espa fit --features data/toy1_features.csv --labels data/toy1_labels.csv --out run/
    espa predict --model run/model.json --features data/toy1_features.csv --out run/
    espa cv --config grid.cfg --workers 4 --out run/
    espa sweep --methods espa,kmeans_bayes --n_replicates 10 --out sweep/
    espa info --D 500 --T 80

Any configuration key can be overridden as ``--key value``. Exit codes:
0 success, 1 usage or configuration error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from typing import Optional, Sequence

import numpy as np

from . import datagen, harness, io
from .estimator import EspaClassifier
from .metrics import d_max, feature_combinations
from .solver import FitError

logger = logging.getLogger("espa")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3
COMMANDS = ("generate", "fit", "predict", "cv", "sweep", "info")


class UsageError(Exception):
    pass


class StageError(Exception):
    """Failure tagged with the pipeline stage and the exit code to use."""

    def __init__(self, stage: str, message: str, code: int):
        super().__init__(f"{stage}: {message}")
        self.code = code


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="espa",
        description="Entropic box classifier: synthetic data, fitting, prediction, "
                    "grid search and (D, T) sweeps.",
        epilog="Other configuration keys: --" + " --".join(io.CONFIG_KEYS),
    )
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("generator", nargs="?", choices=("toy1", "toy2"),
                   help="synthetic model for 'generate' (default from config)")
    p.add_argument("--config", metavar="PATH", help="key = value configuration file")
    p.add_argument("--seed", type=int, metavar="N", help="master seed")
    p.add_argument("--workers", type=int, metavar="N", help="worker processes")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _apply_overrides(cfg: io.RunConfig, extra: Sequence[str]) -> None:
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise UsageError(f"unexpected argument {tok!r}")
        key, eq, value = tok[2:].partition("=")
        if not eq:
            if i + 1 >= len(extra):
                raise UsageError(f"option --{key} needs a value")
            value = extra[i + 1]
            i += 1
        i += 1
        cfg.set(key, value, f"option --{key}")


def build_config(args, extra) -> io.RunConfig:
    cfg = io.read_config(args.config) if args.config else io.RunConfig()
    _apply_overrides(cfg, extra)
    for key, value in (("master_seed", args.seed), ("n_workers", args.workers), ("out", args.out)):
        if value is not None:
            cfg.set(key, str(value), f"option --{key}")
    if args.generator:
        cfg.generator = args.generator
    return cfg


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _generate_dataset(cfg: io.RunConfig):
    if cfg.generator == "toy1":
        return datagen.toy1(cfg.D, cfg.T, cfg.sigma, cfg.blue_fraction, cfg.master_seed, cfg.separation)
    return datagen.toy2(cfg.D, cfg.T, cfg.sigma, cfg.master_seed, cfg.blue_fraction)


def cmd_generate(cfg: io.RunConfig) -> None:
    try:
        ds = _generate_dataset(cfg)
    except ValueError as exc:
        raise StageError("generate", str(exc), EXIT_USAGE) from None
    paths = io.save_dataset(ds.X, ds.Pi, cfg.out, stem=cfg.generator)
    print(f"wrote {paths[0]} and {paths[1]}")
    print(f"relevant features: {', '.join(ds.X.feature_names[d] for d in ds.relevant_dims)}")


def _require(cfg, *keys):
    missing = [k for k in keys if getattr(cfg, k) is None]
    if missing:
        raise UsageError("missing " + ", ".join(f"--{k}" for k in missing))


def _load(cfg):
    try:
        return io.load_dataset(cfg.features, cfg.labels)
    except (io.DataError, ValueError) as exc:
        raise StageError("load", str(exc), EXIT_DATA) from None


def cmd_fit(cfg: io.RunConfig) -> None:
    _require(cfg, "features", "labels")
    X, Pi = _load(cfg)
    clf = EspaClassifier.from_hyperparams(cfg.hyperparams(), scaling=cfg.scaling)
    tokens = np.array(Pi.class_names)[Pi.hard_labels()]
    try:
        clf.fit(np.asarray(X).T, tokens)
    except ValueError as exc:
        raise StageError("fit", str(exc), EXIT_DATA) from None
    path = io.save_model(clf, io.ensure_dir(cfg.out) / "model.json", feature_names=X.feature_names)
    print(f"wrote {path}")
    top = np.argsort(-clf.feature_weights_, kind="stable")[:5]
    print("largest feature weights: " + ", ".join(
        f"{X.feature_names[d]}={clf.feature_weights_[d]:.4f}" for d in top))


def cmd_predict(cfg: io.RunConfig) -> None:
    _require(cfg, "model", "features")
    try:
        loaded = io.load_model(cfg.model)
        X = io.load_features(cfg.features)
    except (io.DataError, ValueError) as exc:
        raise StageError("load", str(exc), EXIT_DATA) from None
    if X.shape[0] != loaded.model.n_features:
        raise StageError("predict", f"model expects {loaded.model.n_features} features, "
                         f"file has {X.shape[0]}", EXIT_DATA)
    if loaded.feature_names and tuple(X.feature_names) != loaded.feature_names:
        logger.warning("feature names differ from the training file; using column order")
    pred = loaded.predict_proba(np.asarray(X))
    path = io.write_predictions(io.ensure_dir(cfg.out) / "predictions.csv", pred, loaded.classes)
    print(f"wrote {path}")


def _cv_source(cfg):
    if cfg.features is not None or cfg.labels is not None:
        _require(cfg, "features", "labels")
        return io.as_dataset(*_load(cfg))
    return harness._Generator(cfg.generator, cfg.D, cfg.T, cfg.sigma, cfg.generator_kwargs())


def cmd_cv(cfg: io.RunConfig) -> None:
    source = _cv_source(cfg)
    result = harness.grid_search(
        source, cfg.K_grid, cfg.epsilon_e_grid, cfg.epsilon_CL_grid, cfg.n_replicates,
        cfg.master_seed, base=cfg.hyperparams(), train_fraction=cfg.train_fraction,
        n_workers=cfg.n_workers, scaling=cfg.scaling)
    paths = io.save_results(result, cfg.out)
    h = result.best
    print(f"selected K={h.K} epsilon_e={h.epsilon_e:g} epsilon_CL={h.epsilon_CL:g}: "
          f"mean AUC {result.report.mean_auc:.4f} +- {result.report.std_auc:.4f} "
          f"over {len(result.report.aucs)} replicates")
    print(f"wrote {paths[0]}")


def cmd_sweep(cfg: io.RunConfig) -> None:
    reports = [harness.barrier_sweep(
        m, cfg.D_grid, cfg.T_grid, cfg.n_replicates, cfg.master_seed, cfg.hyperparams(),
        generator=cfg.generator, sigma=cfg.sigma, train_fraction=cfg.train_fraction,
        n_workers=cfg.n_workers, scaling=cfg.scaling, generator_kwargs=cfg.generator_kwargs())
        for m in cfg.methods]
    report = harness.merge_reports(reports)
    for m in cfg.methods:
        report.barriers[m] = harness.barrier_fit(report, cfg.auc_threshold, method=m)
    paths = io.save_results(report, cfg.out)
    for m, b in report.barriers.items():
        if isinstance(b, harness.BarrierFit):
            print(f"{m}: T* = {b.slope:.3f} D + {b.intercept:.2f} (R2 {b.r2:.3f}, p {b.p_value:.2g})")
        else:
            print(f"{m}: {b}")
    print("wrote " + " and ".join(str(p) for p in paths))


def cmd_info(cfg: io.RunConfig) -> None:
    dm = d_max(cfg.T)
    n = feature_combinations(cfg.D, cfg.T)
    print(f"D = {cfg.D}, T = {cfg.T}")
    print(f"D_max = floor(T / 13.8) = {dm}")
    print(f"feature combinations binom(D, D_max) = {n} (~{n:.2e})" if n > 0 else
          "feature combinations binom(D, D_max) = 0")
    if dm > 0:
        print(f"log10 combinations = {math.log10(n):.2f}")


_HANDLERS = {"generate": cmd_generate, "fit": cmd_fit, "predict": cmd_predict, "cv": cmd_cv,
             "sweep": cmd_sweep, "info": cmd_info}


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command and return its exit code."""
    parser = _parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    stage = "config"
    try:
        cfg = build_config(args, extra)
        stage = args.command
        _HANDLERS[args.command](cfg)
    except UsageError as exc:
        print(f"espa {stage}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except io.ConfigError as exc:
        print(f"espa {stage}: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"espa {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except io.DataError as exc:
        print(f"espa {stage}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"espa {stage}: I/O error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FitError, ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"espa {stage}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"espa {stage}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
