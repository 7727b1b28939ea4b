"""Binary-relevance multi-label classifier over regularized logistic regression.

One L2-regularized logistic-regression classifier is trained per catalog
label on that label's SMOTE-balanced binary view of the training data. The
trained bundle (classifiers + vocabulary + scaling + catalog + threshold)
persists as a single checksummed JSON document.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Sequence, Union

import numpy as np

from .balance import DenseExample, derive_seed, smote_balance
from .config import Hyperparams, RunConfig
from .corpus import LabelCatalog, ModelingExample, catalog_from_dict
from .featurize import (
    N_SHALLOW,
    SAME_SPEAKER,
    FeatureVector,
    ScalingParams,
    Vocabulary,
)

MODEL_FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    """A model file that cannot be loaded."""


class ModelVersionError(ModelFormatError):
    """A model file written with an unsupported format version."""


class ModelCorruptError(ModelFormatError):
    """A truncated or tampered model file."""


def sigmoid(z):
    """Numerically stable logistic function, elementwise over arrays."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def loss_and_gradient(
    weights: np.ndarray,
    bias: float,
    X: np.ndarray,
    y: np.ndarray,
    C: float,
) -> tuple[float, np.ndarray, float]:
    """Mean log loss with L2 penalty, and its gradient.

    loss = mean NLL + ||w||^2 / (2 C n); the bias is not regularized.
    Returns (loss, weight gradient, bias gradient).
    """
    if X.shape[1] != weights.shape[0]:
        raise ValueError(f"dimension mismatch: X has {X.shape[1]} columns, weights {weights.shape[0]}")
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"dimension mismatch: {X.shape[0]} examples vs {y.shape[0]} targets")
    n = X.shape[0]
    z = X @ weights + bias
    # logaddexp(0, z) - y*z is -log p(y|z) without evaluating sigmoid near 0/1
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z)) + float(weights @ weights) / (2.0 * C * n)
    residual = sigmoid(z) - y
    grad_w = (X.T @ residual) / n + weights / (C * n)
    grad_b = float(np.mean(residual))
    return loss, grad_w, grad_b


@dataclass
class BinaryClassifier:
    weights: np.ndarray
    bias: float
    hyperparams: Hyperparams
    label: str = ""

    def decision(self, dense: np.ndarray) -> float:
        if dense.shape[0] != self.weights.shape[0]:
            raise ValueError(
                f"feature width mismatch: vector has {dense.shape[0]}, model wants {self.weights.shape[0]}"
            )
        return float(self.weights @ dense + self.bias)


def fit_binary_with_trace(
    X: np.ndarray,
    y: np.ndarray,
    hyperparams: Hyperparams = Hyperparams(),
    seed: int = 0,
    label: str = "",
) -> tuple[BinaryClassifier, list[float]]:
    """Like :func:`fit_binary`, also returning the accepted loss trajectory."""
    del seed  # nothing stochastic in the full-batch path
    y = np.asarray(y, dtype=np.float64)
    present = set(np.unique(y).tolist())
    if not present.issuperset({0.0, 1.0}):
        raise ValueError(f"both target values required, got {sorted(present)}")

    w = np.zeros(X.shape[1], dtype=np.float64)
    b = 0.0
    loss, grad_w, grad_b = loss_and_gradient(w, b, X, y, hyperparams.C)
    losses = [loss]
    for _ in range(hyperparams.max_iterations):
        step = hyperparams.learning_rate
        accepted = None
        for _ in range(21):  # initial step plus up to 20 halvings
            w_try = w - step * grad_w
            b_try = b - step * grad_b if hyperparams.fit_bias else b
            trial = loss_and_gradient(w_try, b_try, X, y, hyperparams.C)
            if trial[0] <= loss:
                accepted = (w_try, b_try, trial)
                break
            step *= 0.5
        if accepted is None:
            break
        w, b, (new_loss, grad_w, grad_b) = accepted[0], accepted[1], accepted[2]
        decrease = loss - new_loss
        loss = new_loss
        losses.append(loss)
        if decrease < hyperparams.tolerance:
            break
    return BinaryClassifier(weights=w, bias=b, hyperparams=hyperparams, label=label), losses


def fit_binary(
    X: np.ndarray,
    y: np.ndarray,
    hyperparams: Hyperparams = Hyperparams(),
    seed: int = 0,
    label: str = "",
) -> BinaryClassifier:
    """Full-batch gradient descent from zero weights with step halving.

    Each iteration retries with a halved step (at most 20 times) whenever the
    trial point would increase the training loss, so the loss trajectory is
    non-increasing. Stops at max_iterations or when an accepted step improves
    the loss by less than the tolerance. Deterministic; the seed is recorded
    for provenance only.
    """
    return fit_binary_with_trace(X, y, hyperparams, seed, label)[0]


@dataclass
class TrainingData:
    """A featurized training split: design matrix, gold label sets, and the
    vocabulary/scaling that were fit on exactly these examples."""

    X: np.ndarray
    label_sets: list[frozenset[str]]
    catalog: LabelCatalog
    vocabulary: Vocabulary
    scaling: ScalingParams


@dataclass
class SkippedLabel:
    label: str
    reason: str


@dataclass
class MultiLabelModel:
    classifiers: dict[str, BinaryClassifier]
    vocabulary: Vocabulary
    scaling: ScalingParams
    catalog: LabelCatalog
    threshold: float = 0.5
    slen_scope: str = SAME_SPEAKER
    skipped: list[SkippedLabel] = field(default_factory=list)
    config: RunConfig = field(default_factory=RunConfig)

    @property
    def feature_width(self) -> int:
        return len(self.vocabulary) + N_SHALLOW


@dataclass
class Prediction:
    probabilities: dict[str, float]
    labels: frozenset[str]
    low_confidence: bool


def fit_multilabel(data: TrainingData, config: RunConfig) -> MultiLabelModel:
    """Binary relevance: balance and fit one classifier per catalog label.

    Labels with no positive (or no negative) training examples cannot be
    balanced or fit; they are skipped and recorded on the model.
    """
    n = data.X.shape[0]
    if n == 0:
        raise ValueError("empty training dataset")
    if len(data.label_sets) != n:
        raise ValueError("label_sets length does not match the design matrix")

    classifiers: dict[str, BinaryClassifier] = {}
    skipped: list[SkippedLabel] = []
    for name in data.catalog.labels:
        membership = np.array([1.0 if name in ls else 0.0 for ls in data.label_sets])
        n_pos = int(membership.sum())
        if n_pos == 0:
            skipped.append(SkippedLabel(name, "no positive training examples"))
            continue
        if n_pos == n:
            skipped.append(SkippedLabel(name, "no negative training examples"))
            continue
        label_seed = derive_seed(config.seed, name)
        positives = [DenseExample(data.X[i]) for i in range(n) if membership[i] == 1.0]
        negatives = [DenseExample(data.X[i]) for i in range(n) if membership[i] == 0.0]
        bal_pos, bal_neg = smote_balance(positives, negatives, config.smote_k, label_seed)
        X_bal = np.vstack([ex.values for ex in bal_pos] + [ex.values for ex in bal_neg])
        y_bal = np.concatenate([np.ones(len(bal_pos)), np.zeros(len(bal_neg))])
        classifiers[name] = fit_binary(X_bal, y_bal, config.hyperparams, label_seed, label=name)

    return MultiLabelModel(
        classifiers=classifiers,
        vocabulary=data.vocabulary,
        scaling=data.scaling,
        catalog=data.catalog,
        threshold=config.threshold,
        slen_scope=config.slen_scope,
        skipped=skipped,
        config=config,
    )


def _as_dense(model: MultiLabelModel, vector: Union[FeatureVector, np.ndarray]) -> np.ndarray:
    dense = vector.to_dense(len(model.vocabulary)) if isinstance(vector, FeatureVector) else np.asarray(vector, dtype=np.float64)
    if dense.shape != (model.feature_width,):
        raise ValueError(f"feature width mismatch: vector has {dense.shape}, model wants ({model.feature_width},)")
    return dense


def predict_proba(model: MultiLabelModel, vector: Union[FeatureVector, np.ndarray]) -> dict[str, float]:
    """Per-label probability of membership; skipped labels map to 0.0."""
    dense = _as_dense(model, vector)
    probs = {}
    for name in model.catalog.labels:
        clf = model.classifiers.get(name)
        probs[name] = sigmoid(clf.decision(dense)) if clf is not None else 0.0
    return probs


def predict_labels(
    model: MultiLabelModel, vector: Union[FeatureVector, np.ndarray], fallback: bool = False
) -> Prediction:
    """Threshold the per-label probabilities into a label set.

    An empty set flags low confidence; with the fallback enabled it is
    replaced by the single most probable label (catalog order breaks exact
    ties).
    """
    probs = predict_proba(model, vector)
    chosen = frozenset(name for name, p in probs.items() if p >= model.threshold)
    if chosen:
        return Prediction(probs, chosen, low_confidence=False)
    if fallback:
        best = max(model.catalog.labels, key=lambda name: probs[name])
        return Prediction(probs, frozenset({best}), low_confidence=True)
    return Prediction(probs, frozenset(), low_confidence=True)


def tune(
    examples: Sequence[ModelingExample],
    catalog: LabelCatalog,
    grid: Sequence[Hyperparams],
    inner_folds: int = 3,
    seed: int = 0,
    base_config: RunConfig = RunConfig(),
) -> Hyperparams:
    """Grid search scored by inner-cross-validated weighted F-measure.

    The inner folds re-fit vocabulary, scaling, and SMOTE per fold, so the
    search never sees its own validation turns. Ties prefer the smaller C,
    then the earlier grid position.
    """
    from dataclasses import replace

    from . import evaluate  # deferred: evaluate drives this module's fits

    if not grid:
        raise ValueError("empty hyperparameter grid")
    if len(examples) < inner_folds:
        raise ValueError(f"{len(examples)} examples cannot form {inner_folds} inner folds")

    best: tuple[float, float, int] | None = None  # (score, C, position)
    best_point = grid[0]
    for position, point in enumerate(grid):
        inner = replace(
            base_config, hyperparams=point, n_folds=inner_folds, seed=seed, tune=False
        )
        report = evaluate.cross_validate(examples, catalog, inner)
        score = report.average_row.f_measure
        key = (score, -point.C, -position)
        if best is None or key > best:
            best = key
            best_point = point
    return best_point


def train_model(
    examples: Sequence[ModelingExample],
    catalog: LabelCatalog,
    config: RunConfig,
) -> MultiLabelModel:
    """Featurize a training set and fit the multi-label model.

    With config.tune set, a grid search picks the hyperparameters first
    (inner cross-validation on these examples only).
    """
    from dataclasses import replace

    from .config import expand_grid
    from .featurize import feature_matrix, fit_features

    if not examples:
        raise ValueError("no training examples")
    if config.tune:
        grid = expand_grid(config.tuning_grid, config.hyperparams)
        best = tune(examples, catalog, grid, config.inner_folds, config.seed, config)
        config = replace(config, hyperparams=best)
    vocabulary, scaling = fit_features(examples, config.slen_scope)
    X = feature_matrix(examples, vocabulary, scaling, config.slen_scope)
    data = TrainingData(
        X=X,
        label_sets=[ex.labels for ex in examples],
        catalog=catalog,
        vocabulary=vocabulary,
        scaling=scaling,
    )
    return fit_multilabel(data, config)


def _payload(model: MultiLabelModel) -> dict:
    return {
        "catalog": {
            "labels": list(model.catalog.labels),
            "excluded": sorted(model.catalog.excluded),
        },
        "vocabulary": model.vocabulary.token_list,
        "scaling": {"means": list(model.scaling.means), "stds": list(model.scaling.stds)},
        "threshold": model.threshold,
        "slen_scope": model.slen_scope,
        "classifiers": {
            name: {
                "weights": clf.weights.tolist(),
                "bias": clf.bias,
                "hyperparams": clf.hyperparams.as_dict(),
            }
            for name, clf in model.classifiers.items()
        },
        "skipped": [{"label": s.label, "reason": s.reason} for s in model.skipped],
        "config": model.config.as_dict(),
    }


def _canonical(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def model_to_document(model: MultiLabelModel) -> str:
    """Serialize to the checksummed model-file document (byte-stable)."""
    payload = _payload(model)
    checksum = hashlib.sha256(_canonical(payload).encode("utf-8")).hexdigest()
    doc = {"format_version": MODEL_FORMAT_VERSION, "checksum": checksum, "payload": payload}
    return _canonical(doc) + "\n"


def save_model(model: MultiLabelModel, sink: Union[str, Path, IO[str]]) -> None:
    doc = model_to_document(model)
    if hasattr(sink, "write"):
        sink.write(doc)
    else:
        with open(sink, "w", encoding="utf-8") as fh:
            fh.write(doc)


def model_from_document(text: str) -> MultiLabelModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelCorruptError(f"model file is not valid JSON ({exc.msg})") from exc
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise ModelCorruptError("model file lacks a format_version")
    version = doc["format_version"]
    if version != MODEL_FORMAT_VERSION:
        raise ModelVersionError(f"unsupported model format_version {version!r}")
    if "checksum" not in doc or "payload" not in doc:
        raise ModelCorruptError("model file lacks checksum or payload")
    payload = doc["payload"]
    checksum = hashlib.sha256(_canonical(payload).encode("utf-8")).hexdigest()
    if checksum != doc["checksum"]:
        raise ModelCorruptError("model file checksum mismatch")

    try:
        catalog = catalog_from_dict(payload["catalog"])
        vocabulary = Vocabulary.from_tokens(payload["vocabulary"])
        scaling = ScalingParams(
            means=tuple(payload["scaling"]["means"]), stds=tuple(payload["scaling"]["stds"])
        )
        config = RunConfig(
            **{
                **payload["config"],
                "hyperparams": Hyperparams(**payload["config"]["hyperparams"]),
            }
        )
        width = len(vocabulary) + N_SHALLOW
        classifiers = {}
        for name, blob in payload["classifiers"].items():
            weights = np.asarray(blob["weights"], dtype=np.float64)
            if weights.shape != (width,):
                raise ModelCorruptError(
                    f"classifier {name!r} has width {weights.shape}, expected ({width},)"
                )
            classifiers[name] = BinaryClassifier(
                weights=weights,
                bias=float(blob["bias"]),
                hyperparams=Hyperparams(**blob["hyperparams"]),
                label=name,
            )
        skipped = [SkippedLabel(s["label"], s["reason"]) for s in payload["skipped"]]
        return MultiLabelModel(
            classifiers=classifiers,
            vocabulary=vocabulary,
            scaling=scaling,
            catalog=catalog,
            threshold=float(payload["threshold"]),
            slen_scope=payload["slen_scope"],
            skipped=skipped,
            config=config,
        )
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelCorruptError(f"model payload malformed: {exc}") from exc


def load_model(source: Union[str, Path, IO[str]]) -> MultiLabelModel:
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    return model_from_document(text)
