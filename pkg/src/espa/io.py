"""Run configuration, dataset CSVs, reports and model files.

Datasets are stored samples-as-rows (one CSV for features, one for labels)
and transposed to features x samples on load. Reports and models are
indented JSON documents carrying ``format_version``; wall-clock timings live
under a separate ``timing`` key so that reruns can be compared with that key
removed. Floats are written with ``repr`` and therefore round-trip exactly.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import MODES, EspaModel, FeatureMatrix, Hyperparams, LabelMatrix
from .datagen import SyntheticDataset
from .estimator import FeatureScaling
from .harness import METHODS, BarrierFit, CvReport, GridResult, SweepReport

FORMAT_VERSION = 1
SURFACE_COLUMNS = ("D", "T", "method", "mean_auc", "std_auc", "mean_seconds")


class ConfigError(ValueError):
    """Unknown key, malformed value or value outside its valid range."""


class DataError(ValueError):
    """Unreadable or inconsistent input data."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    """Every setting the command line understands, with its default.

    The first block mirrors :class:`~espa.core.Hyperparams`; ``master_seed``
    doubles as the fit seed.
    """

    K: int = 3
    epsilon_e: float = 0.1
    epsilon_CL: float = 0.1
    epsilon_S: float = 0.0
    mode: str = "discrete"
    tol: float = 1e-8
    max_iter: int = 200
    n_restarts: int = 10
    scaling: str = "minmax"

    generator: str = "toy1"
    D: int = 50
    T: int = 600
    sigma: float = 5.0
    blue_fraction: float = 0.5
    separation: float = 5.0

    train_fraction: float = 0.75
    n_replicates: int = 20
    K_grid: list = field(default_factory=lambda: list(range(2, 21)))
    epsilon_e_grid: list = field(default_factory=lambda: [0.0, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1])
    epsilon_CL_grid: list = field(default_factory=lambda: [0.0, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1])
    D_grid: list = field(default_factory=lambda: [10, 25, 50, 100])
    T_grid: list = field(default_factory=lambda: [40, 100, 200, 400, 800])
    methods: list = field(default_factory=lambda: ["espa"])
    auc_threshold: float = 0.75

    features: Optional[str] = None
    labels: Optional[str] = None
    model: Optional[str] = None
    out: str = "."

    n_workers: int = 1
    master_seed: int = 0

    def hyperparams(self) -> Hyperparams:
        return Hyperparams(K=self.K, epsilon_e=self.epsilon_e, epsilon_CL=self.epsilon_CL,
                           epsilon_S=self.epsilon_S, mode=self.mode, tol=self.tol,
                           max_iter=self.max_iter, n_restarts=self.n_restarts,
                           seed=self.master_seed)

    def generator_kwargs(self) -> dict:
        kw = {"blue_fraction": self.blue_fraction}
        if self.generator == "toy1":
            kw["separation"] = self.separation
        return kw

    def set(self, key: str, raw: str, where: str) -> None:
        """Parse ``raw`` for ``key`` and assign it; ``where`` locates errors."""
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key!r}, {where}")
        kind, check = _FIELDS[key]
        try:
            value = _PARSERS[kind](raw.strip())
        except (ValueError, TypeError, OverflowError) as exc:
            raise ConfigError(f"{key}: malformed value {raw.strip()!r} ({exc}), {where}") from None
        if not check(value):
            raise ConfigError(f"{key} out of range, {where}")
        setattr(self, key, value)


def _parse_int(s: str) -> int:
    v = float(s)
    if not v.is_integer():
        raise ValueError("not an integer")
    return int(v)


def _parse_float(s: str) -> float:
    v = float(s)
    if math.isnan(v):
        raise ValueError("NaN is not allowed")
    return v


def _parse_str(s: str) -> str:
    if not s:
        raise ValueError("empty value")
    return s


_CALL = re.compile(r"^(logspace|range)\s*\((.*)\)$")


def _parse_list(item):
    def parse(s: str) -> list:
        m = _CALL.match(s)
        if m:
            args = [a.strip() for a in m.group(2).split(",")]
            if m.group(1) == "range":
                if len(args) != 2:
                    raise ValueError("range takes (start, stop)")
                lo, hi = (_parse_int(a) for a in args)
                if hi < lo:
                    raise ValueError("empty range")
                return [item(str(v)) for v in range(lo, hi + 1)]
            if len(args) != 3:
                raise ValueError("logspace takes (start, stop, n)")
            a, b, n = _parse_float(args[0]), _parse_float(args[1]), _parse_int(args[2])
            if n < 1:
                raise ValueError("logspace needs n >= 1")
            return [item(repr(float(v))) for v in np.logspace(a, b, n)]
        values = [item(p.strip()) for p in s.split(",") if p.strip()]
        if not values:
            raise ValueError("empty list")
        return values
    return parse


_PARSERS = {
    "int": _parse_int,
    "float": _parse_float,
    "str": _parse_str,
    "int_list": _parse_list(_parse_int),
    "float_list": _parse_list(_parse_float),
    "str_list": _parse_list(_parse_str),
}


def _positive(v):
    return v > 0


def _nonneg(v):
    return v >= 0 and math.isfinite(v)


def _open_unit(v):
    return 0 < v < 1


_FIELDS = {
    "K": ("int", lambda v: v >= 1),
    "epsilon_e": ("float", _nonneg),
    "epsilon_CL": ("float", _nonneg),
    "epsilon_S": ("float", _nonneg),
    "mode": ("str", lambda v: v in MODES),
    "tol": ("float", lambda v: 0 < v < math.inf),
    "max_iter": ("int", _positive),
    "n_restarts": ("int", _positive),
    "scaling": ("str", lambda v: v in ("minmax", "standard", "none")),
    "generator": ("str", lambda v: v in ("toy1", "toy2")),
    "D": ("int", lambda v: v >= 2),
    "T": ("int", lambda v: v >= 4),
    "sigma": ("float", lambda v: 0 < v < math.inf),
    "blue_fraction": ("float", _open_unit),
    "separation": ("float", _nonneg),
    "train_fraction": ("float", _open_unit),
    "n_replicates": ("int", _positive),
    "K_grid": ("int_list", lambda v: all(k >= 1 for k in v)),
    "epsilon_e_grid": ("float_list", lambda v: all(_nonneg(e) for e in v)),
    "epsilon_CL_grid": ("float_list", lambda v: all(_nonneg(e) for e in v)),
    "D_grid": ("int_list", lambda v: all(d >= 2 for d in v)),
    "T_grid": ("int_list", lambda v: all(t >= 4 for t in v)),
    "methods": ("str_list", lambda v: all(m in METHODS for m in v)),
    "auc_threshold": ("float", lambda v: 0.5 < v < 1.0),
    "features": ("str", lambda v: True),
    "labels": ("str", lambda v: True),
    "model": ("str", lambda v: True),
    "out": ("str", lambda v: True),
    "n_workers": ("int", _positive),
    "master_seed": ("int", lambda v: 0 <= v < 2**64),
}

CONFIG_KEYS = tuple(_FIELDS)


def parse_config(text: str, base: Optional[RunConfig] = None) -> RunConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment, later keys win.

    >>> parse_config("K = 3\\nepsilon_e = 1e-4").epsilon_e
    0.0001
    >>> parse_config("K_grid = range(2,5)").K_grid
    [2, 3, 4, 5]
    """
    cfg = dataclasses.replace(base) if base is not None else RunConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"expected 'key = value', line {lineno}")
        cfg.set(key.strip(), value, f"line {lineno}")
    return cfg


def read_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------


def _read_rows(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise DataError(f"{path} is not UTF-8 text") from None


def load_features(path) -> FeatureMatrix:
    rows = _read_rows(path)
    if len(rows) < 2:
        raise DataError(f"{path}: need a header row and at least one sample")
    names = tuple(h.strip() for h in rows[0])
    values = np.empty((len(rows) - 1, len(names)))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(names):
            raise DataError(f"{path}: row {i} has {len(row)} cells, header has {len(names)}")
        for j, cell in enumerate(row):
            try:
                values[i - 2, j] = float(cell)
            except ValueError:
                raise DataError(f"{path}: non-numeric cell {cell!r} at row {i}, column {j + 1}") from None
    if not np.all(np.isfinite(values)):
        r, c = np.argwhere(~np.isfinite(values))[0]
        raise DataError(f"{path}: non-finite value at row {r + 2}, column {c + 1}")
    return FeatureMatrix(values.T, names)


def load_labels(path) -> tuple:
    """Class tokens in file order and the class names by first appearance."""
    rows = _read_rows(path)
    if not rows or [h.strip() for h in rows[0]] != ["label"]:
        raise DataError(f"{path}: expected a single header column 'label'")
    tokens = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != 1 or not row[0].strip():
            raise DataError(f"{path}: empty class label at row {i}")
        tokens.append(row[0].strip())
    if not tokens:
        raise DataError(f"{path}: no labels")
    return tokens, tuple(dict.fromkeys(tokens))


def load_dataset(features_path, labels_path) -> tuple:
    """Read a feature/label CSV pair into ``(FeatureMatrix, LabelMatrix)``."""
    X = load_features(features_path)
    tokens, classes = load_labels(labels_path)
    if len(tokens) != X.shape[1]:
        raise DataError(f"row count mismatch: {X.shape[1]} feature rows in {features_path}, "
                        f"{len(tokens)} label rows in {labels_path}")
    index = {c: i for i, c in enumerate(classes)}
    Pi = LabelMatrix.from_labels([index[t] for t in tokens], len(classes), classes)
    return X, Pi


def as_dataset(X: FeatureMatrix, Pi: LabelMatrix) -> SyntheticDataset:
    """Wrap loaded data for the harness; no informative features are known."""
    return SyntheticDataset(X=X, Pi=Pi, relevant_dims=(), sigma=math.nan, seed=0)


def _write_csv(path, header, rows):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from None


def save_dataset(X, Pi, out_dir, stem: str = "data") -> tuple:
    """Write ``<stem>_features.csv`` and ``<stem>_labels.csv``; returns both paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    values = np.asarray(X, dtype=float)
    names = getattr(X, "feature_names", ()) or tuple(f"f{i}" for i in range(values.shape[0]))
    fpath, lpath = out / f"{stem}_features.csv", out / f"{stem}_labels.csv"
    _write_csv(fpath, names, ([repr(float(v)) for v in row] for row in values.T))
    classes = Pi.class_names or tuple(str(m) for m in range(Pi.shape[0]))
    _write_csv(lpath, ["label"], ([classes[m]] for m in Pi.hard_labels()))
    return fpath, lpath


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def _clean(v):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to null."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def _dump(doc: dict, path: Path) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(_clean(doc), indent=2, allow_nan=False) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from None
    return path


def hyper_dict(h: Hyperparams) -> dict:
    return dataclasses.asdict(h)


def cv_document(result, method: str = "espa") -> dict:
    """Report document for a :class:`GridResult` or a plain :class:`CvReport`."""
    table = None
    if isinstance(result, GridResult):
        report, table = result.report, result.table
    else:
        report = result
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "cv",
        "method": report.method,
        "scaling": report.scaling,
        "selected": hyper_dict(report.hyper),
        "mean_auc": report.mean_auc,
        "std_auc": report.std_auc,
        "replicates": [{"replicate": r.replicate, "auc": r.auc, "relevant_weight": r.relevant_weight,
                        "error": r.error} for r in report.replicates],
    }
    timing = {"replicate_seconds": [r.seconds for r in report.replicates]}
    if table is not None:
        doc["table"] = [{k: v for k, v in row.items() if k != "mean_seconds"} for row in table]
        timing["table_mean_seconds"] = [row["mean_seconds"] for row in table]
    doc["timing"] = timing
    return doc


def _barrier_doc(b):
    if isinstance(b, BarrierFit):
        return {"slope": b.slope, "intercept": b.intercept, "r2": b.r2, "p_value": b.p_value,
                "threshold": b.threshold, "points": [list(p) for p in b.points]}
    return b


def sweep_document(report: SweepReport) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kind": "sweep",
        "n_replicates": report.n_replicates,
        "master_seed": report.master_seed,
        "hyper": {m: hyper_dict(h) for m, h in report.hyper.items()},
        "cells": [{"D": c.D, "T": c.T, "method": c.method, "mean_auc": c.mean_auc,
                   "std_auc": c.std_auc, "n_ok": c.n_ok, "failures": [list(f) for f in c.failures]}
                  for c in report.cells],
        "barriers": {m: _barrier_doc(b) for m, b in report.barriers.items()},
        "timing": {"cells": [{"D": c.D, "T": c.T, "method": c.method, "mean_seconds": c.mean_seconds}
                             for c in report.cells]},
    }


def write_surface_csv(report: SweepReport, path) -> Path:
    def fmt(v):
        return repr(float(v)) if math.isfinite(v) else "nan"
    rows = [[c.D, c.T, c.method, fmt(c.mean_auc), fmt(c.std_auc), fmt(c.mean_seconds)]
            for c in report.cells]
    _write_csv(path, SURFACE_COLUMNS, rows)
    return Path(path)


def save_results(report, out_dir) -> list:
    """Write a report or model into ``out_dir`` and return the written paths.

    ============ ======================================================
    input        files
    ============ ======================================================
    GridResult   ``cv_report.json``
    CvReport     ``cv_report.json``
    SweepReport  ``sweep_report.json`` and ``surface.csv``
    classifier   ``model.json`` (fitted :class:`EspaClassifier` or
                 :class:`ClusterBayesClassifier`)
    EspaModel    ``model.json`` without preprocessing (identity scaling)
    ============ ======================================================
    """
    out = Path(out_dir)
    if isinstance(report, (GridResult, CvReport)):
        return [_dump(cv_document(report), out / "cv_report.json")]
    if isinstance(report, SweepReport):
        return [_dump(sweep_document(report), out / "sweep_report.json"),
                write_surface_csv(report, out / "surface.csv")]
    if isinstance(report, EspaModel) or hasattr(report, "model_"):
        return [save_model(report, out / "model.json")]
    raise TypeError(f"cannot save {type(report).__name__}")


def strip_timing(doc: dict) -> dict:
    return {k: v for k, v in doc.items() if k != "timing"}


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------


def model_document(model: EspaModel, scaling: Optional[FeatureScaling] = None,
                   feature_names=(), classes=None) -> dict:
    D = model.n_features
    scaling = scaling or FeatureScaling(np.zeros(D), np.ones(D))
    return {
        "format_version": FORMAT_VERSION,
        "kind": "model",
        "hyper": hyper_dict(model.hyper),
        "class_names": list(model.class_names),
        "classes": None if classes is None else np.asarray(classes).tolist(),
        "feature_names": list(feature_names),
        "scaling": {"minimum": scaling.minimum.tolist(), "span": scaling.span.tolist()},
        "S": model.S.tolist(),
        "W": model.W.tolist(),
        "Lambda": model.Lambda.tolist(),
        "loss_trace": list(model.loss_trace),
    }


def save_model(obj, path, feature_names=()) -> Path:
    """Store a fitted classifier or a bare :class:`EspaModel`."""
    if isinstance(obj, EspaModel):
        doc = model_document(obj, feature_names=feature_names)
    else:
        names = feature_names or tuple(getattr(obj, "feature_names_in_", ()))
        doc = model_document(obj.model_, obj.scaling_, names, obj.classes_)
    return _dump(doc, Path(path))


@dataclass(frozen=True)
class LoadedModel:
    model: EspaModel
    scaling: FeatureScaling
    feature_names: tuple
    classes: np.ndarray

    def predict_proba(self, X):
        """Class probabilities for a features x samples matrix, shape ``(M, T)``."""
        from .predict import predict_proba
        return predict_proba(self.scaling.apply(np.asarray(X, dtype=float)), self.model)


def load_model(path) -> LoadedModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read model {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not a model file ({exc.msg}, line {exc.lineno})") from None
    if doc.get("kind") != "model" or doc.get("format_version") != FORMAT_VERSION:
        raise DataError(f"{path}: not a version-{FORMAT_VERSION} model file")
    try:
        S = np.array(doc["S"], dtype=float)
        hyper = Hyperparams(**doc["hyper"])
        model = EspaModel(S=S, Gamma=np.zeros((S.shape[1], 0)), W=np.array(doc["W"], dtype=float),
                          Lambda=np.array(doc["Lambda"], dtype=float), hyper=hyper,
                          loss_trace=doc.get("loss_trace", ()), class_names=doc["class_names"])
        scaling = FeatureScaling(doc["scaling"]["minimum"], doc["scaling"]["span"])
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise DataError(f"{path}: malformed model file ({exc})") from None
    classes = doc.get("classes")
    classes = np.array(model.class_names if classes is None else classes)
    return LoadedModel(model, scaling, tuple(doc.get("feature_names", ())), classes)


def write_predictions(path, prediction, classes) -> Path:
    """Label CSV with one probability column per class."""
    header = ["label"] + [f"p_{c}" for c in classes]
    rows = ([str(classes[lab])] + [repr(float(p)) for p in col]
            for lab, col in zip(prediction.labels, prediction.proba.T))
    _write_csv(path, header, rows)
    return Path(path)


def ensure_dir(path) -> Path:
    p = Path(path)
    try:
        os.makedirs(p, exist_ok=True)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot create {p}: {exc.strerror}") from None
    return p
