"""Gradient-boosted regression trees with logistic loss, CV, and metrics.

Second-order boosting: per round, gradients g = p - y and hessians
h = p(1 - p) drive exact greedy splits with gain
0.5 * [GL^2/(HL+lambda) + GR^2/(HR+lambda) - G^2/(H+lambda)] - gamma and leaf
weights -lr * G/(H+lambda). Split enumeration is feature-order fixed and
row-order independent (rows canonicalized per node), so permuting training
rows yields identical trees.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dominance import MotionParams
from .features import (
    RANKING_VARIABLES,
    EventFeatures,
    PassSampleTable,
    assemble_table,
    extract_event_features,
)
from .pitch import PitchSpec, WeightParams

MODEL_FORMAT = "pitchspace-gbdt-1"

# Published full-season reference results (licensed corpus; desk-scale runs
# will not reproduce them). Shown in reports for side-by-side comparison.
REFERENCE_RANKING_ACCURACY = {
    "fast_space_vel": 0.512,
    "dist_ball": 0.559,
    "time_to_player": 0.538,
    "time_to_passline": 0.521,
}
REFERENCE_EVAL_ROWS = {
    "n=1": {"accuracy": 0.685, "precision": 0.54, "recall": 0.55, "f1": 0.54},
    "n=3": {"accuracy": 0.752, "precision": 0.58, "recall": 0.55, "f1": 0.56},
}


@dataclass(frozen=True)
class GbdtHyperParams:
    n_trees: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    min_child_weight: float = 0.0  # minimum hessian sum per child
    l2_lambda: float = 1.0
    gamma: float = 0.0  # minimum split gain
    subsample: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if not 0.0 < self.subsample <= 1.0:
            raise ValueError(f"subsample must be in (0, 1], got {self.subsample}")
        if self.min_child_weight < 0 or self.l2_lambda < 0 or self.gamma < 0:
            raise ValueError("min_child_weight, l2_lambda, and gamma must be >= 0")


def default_grid() -> list[GbdtHyperParams]:
    """The documented search grid: depth {3,5} x lr {0.1,0.3} x trees {50,100,200}."""
    grid = []
    for max_depth in (3, 5):
        for learning_rate in (0.1, 0.3):
            for n_trees in (50, 100, 200):
                grid.append(
                    GbdtHyperParams(
                        n_trees=n_trees, max_depth=max_depth, learning_rate=learning_rate
                    )
                )
    return grid


@dataclass
class Tree:
    """One regression tree as parallel node arrays; feature < 0 marks a leaf."""

    feature: list[int]
    threshold: list[float]
    left: list[int]
    right: list[int]
    value: list[float]
    cover: list[int]  # training rows routed through each node

    def _arrays(self):
        return (
            np.asarray(self.feature, dtype=np.int64),
            np.asarray(self.threshold, dtype=np.float64),
            np.asarray(self.left, dtype=np.int64),
            np.asarray(self.right, dtype=np.int64),
            np.asarray(self.value, dtype=np.float64),
        )

    def leaf_indices(self, X: np.ndarray) -> np.ndarray:
        feat, thr, left, right, _ = self._arrays()
        idx = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            internal = feat[idx] >= 0
            if not internal.any():
                return idx
            j = np.where(internal, feat[idx], 0)
            go_left = X[rows, j] <= thr[idx]
            idx = np.where(internal, np.where(go_left, left[idx], right[idx]), idx)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self.value, dtype=np.float64)[self.leaf_indices(X)]

    def expected_value(self) -> float:
        """Cover-weighted mean leaf value (the tree's training expectation)."""
        feat = np.asarray(self.feature)
        val = np.asarray(self.value, dtype=np.float64)
        cov = np.asarray(self.cover, dtype=np.float64)
        leaves = feat < 0
        return float(np.sum(val[leaves] * cov[leaves]) / cov[0])

    def to_dict(self) -> dict:
        return {
            "feature": list(self.feature),
            "threshold": [float(t) for t in self.threshold],
            "left": list(self.left),
            "right": list(self.right),
            "value": [float(v) for v in self.value],
            "cover": list(self.cover),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            feature=[int(v) for v in d["feature"]],
            threshold=[float(v) for v in d["threshold"]],
            left=[int(v) for v in d["left"]],
            right=[int(v) for v in d["right"]],
            value=[float(v) for v in d["value"]],
            cover=[int(v) for v in d["cover"]],
        )


@dataclass
class GbdtModel:
    """Boosted ensemble with a logistic link and its training context."""

    base_score: float  # log-odds
    trees: list[Tree]
    feature_names: list[str]
    medians: dict[str, float]
    hyperparams: GbdtHyperParams
    training_logloss: list[float] = dc_field(default_factory=list)

    def impute(self, X: np.ndarray) -> np.ndarray:
        X = np.array(X, dtype=np.float64, copy=True)
        if X.ndim == 1:
            X = X[np.newaxis, :]
        if X.shape[1] != len(self.feature_names):
            raise ValueError(
                f"expected {len(self.feature_names)} columns, got {X.shape[1]}"
            )
        for j, col in enumerate(self.feature_names):
            mask = ~np.isfinite(X[:, j])
            if mask.any():
                X[mask, j] = self.medians[col]
        return X

    def margin(self, X: np.ndarray) -> np.ndarray:
        X = self.impute(X)
        out = np.full(len(X), self.base_score)
        for tree in self.trees:
            out += tree.predict(X)
        return out

    def predict_proba_batch(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self.margin(X))

    def decision_paths(self, X: np.ndarray) -> np.ndarray:
        """Leaf index per (row, tree); the monotone-transform invariant object."""
        X = self.impute(X)
        return np.column_stack([t.leaf_indices(X) for t in self.trees])


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


def _logloss(y: np.ndarray, margins: np.ndarray) -> float:
    p = np.clip(_sigmoid(margins), 1e-15, 1 - 1e-15)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def _canonical_order(rows: np.ndarray, X: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Row order independent of input permutation (value-identical rows are
    interchangeable), so gradient sums reproduce bitwise."""
    keys = [g[rows]] + [X[rows, j] for j in range(X.shape[1] - 1, -1, -1)]
    return rows[np.lexsort(keys)]


def _build_tree(
    X: np.ndarray, g: np.ndarray, h: np.ndarray, rows: np.ndarray, hp: GbdtHyperParams
) -> Tree:
    tree = Tree(feature=[], threshold=[], left=[], right=[], value=[], cover=[])
    lam = hp.l2_lambda

    def new_node() -> int:
        tree.feature.append(-1)
        tree.threshold.append(0.0)
        tree.left.append(-1)
        tree.right.append(-1)
        tree.value.append(0.0)
        tree.cover.append(0)
        return len(tree.feature) - 1

    def build(rows: np.ndarray, depth: int) -> int:
        rows = _canonical_order(rows, X, g)
        node = new_node()
        tree.cover[node] = len(rows)
        g_node = g[rows]
        h_node = h[rows]
        G = float(np.cumsum(g_node)[-1])
        H = float(np.cumsum(h_node)[-1])

        best_gain = 0.0
        best_feature = -1
        best_threshold = 0.0
        if depth < hp.max_depth and len(rows) >= 2:
            parent_score = G * G / (H + lam)
            for j in range(X.shape[1]):  # fixed feature order for deterministic ties
                vals = X[rows, j]
                order = np.lexsort((h_node, g_node, vals))
                sv = vals[order]
                cg = np.cumsum(g_node[order])
                ch = np.cumsum(h_node[order])
                cuts = np.nonzero(sv[:-1] < sv[1:])[0]
                if cuts.size == 0:
                    continue
                GL, HL = cg[cuts], ch[cuts]
                GR, HR = G - GL, H - HL
                gains = 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - parent_score) - hp.gamma
                ok = (HL >= hp.min_child_weight) & (HR >= hp.min_child_weight)
                if not ok.any():
                    continue
                gains = np.where(ok, gains, -np.inf)
                k = int(np.argmax(gains))  # first max -> earliest threshold on ties
                if gains[k] > best_gain:
                    best_gain = float(gains[k])
                    best_feature = j
                    best_threshold = float((sv[cuts[k]] + sv[cuts[k] + 1]) / 2.0)

        if best_feature < 0:
            tree.value[node] = -hp.learning_rate * G / (H + lam)
            return node

        mask = X[rows, best_feature] <= best_threshold
        tree.feature[node] = best_feature
        tree.threshold[node] = best_threshold
        tree.left[node] = build(rows[mask], depth + 1)
        tree.right[node] = build(rows[~mask], depth + 1)
        return node

    build(rows, 0)
    return tree


def train_gbdt(
    table: PassSampleTable, hp: GbdtHyperParams, medians: dict[str, float] | None = None
) -> GbdtModel:
    """Fit the boosted ensemble on a feature table.

    Imputation medians are computed from this table (or taken from `medians`)
    and stored on the model; per-round full-sample training logloss is
    recorded for the monotonicity check.
    """
    if len(table) < 2:
        raise ValueError("training requires at least 2 samples")
    y = table.labels.astype(np.float64)
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("training requires both classes present")
    if medians is None:
        medians = table.finite_medians()
    X = table.imputed(medians)

    p_bar = float(np.mean(y))
    base = math.log(p_bar / (1.0 - p_bar))
    margins = np.full(len(y), base)
    rng = np.random.default_rng(hp.seed)

    trees: list[Tree] = []
    logloss: list[float] = []
    n = len(y)
    for _ in range(hp.n_trees):
        p = _sigmoid(margins)
        g = p - y
        h = p * (1.0 - p)
        if hp.subsample < 1.0:
            m = max(1, int(round(hp.subsample * n)))
            rows = np.sort(rng.choice(n, size=m, replace=False))
        else:
            rows = np.arange(n)
        tree = _build_tree(X, g, h, rows, hp)
        trees.append(tree)
        margins += tree.predict(X)
        logloss.append(_logloss(y, margins))

    return GbdtModel(
        base_score=base,
        trees=trees,
        feature_names=list(table.columns),
        medians=dict(medians),
        hyperparams=hp,
        training_logloss=logloss,
    )


def predict_proba(model: GbdtModel, row: np.ndarray | dict) -> float:
    """Success probability for one feature row (array in column order, or a
    mapping by column name). Non-finite inputs are resolved by the stored medians."""
    if isinstance(row, dict):
        missing = [c for c in model.feature_names if c not in row]
        if missing:
            raise ValueError(f"row is missing columns {missing}")
        row = np.array([row[c] for c in model.feature_names], dtype=np.float64)
    else:
        row = np.asarray(row, dtype=np.float64)
        if row.shape != (len(model.feature_names),):
            raise ValueError(
                f"expected {len(model.feature_names)} values, got shape {row.shape}"
            )
    return float(model.predict_proba_batch(row[np.newaxis, :])[0])


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float


@dataclass
class MetricsReport:
    """Confusion-matrix metrics at a fixed threshold, per class and macro."""

    accuracy: float
    per_class: dict[int, ClassMetrics]
    macro: ClassMetrics
    confusion: tuple[tuple[int, int], tuple[int, int]]  # [[tn, fp], [fn, tp]]
    threshold: float
    n_samples: int


def classification_metrics(
    labels: Sequence[int], probabilities: Sequence[float], threshold: float = 0.5
) -> MetricsReport:
    y = np.asarray(labels, dtype=np.int64)
    p = np.asarray(probabilities, dtype=np.float64)
    if y.size == 0:
        raise ValueError("empty input")
    if y.shape != p.shape:
        raise ValueError(f"length mismatch: {y.shape} labels vs {p.shape} probabilities")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be binary")
    pred = (p >= threshold).astype(np.int64)
    tp = int(np.sum((pred == 1) & (y == 1)))
    fp = int(np.sum((pred == 1) & (y == 0)))
    fn = int(np.sum((pred == 0) & (y == 1)))
    tn = int(np.sum((pred == 0) & (y == 0)))

    def prf(tp_: int, fp_: int, fn_: int) -> ClassMetrics:
        precision = tp_ / (tp_ + fp_) if tp_ + fp_ else 0.0
        recall = tp_ / (tp_ + fn_) if tp_ + fn_ else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        return ClassMetrics(precision, recall, f1)

    pos = prf(tp, fp, fn)
    neg = prf(tn, fn, fp)  # negative class: predicted-negative correctness
    macro = ClassMetrics(
        (pos.precision + neg.precision) / 2,
        (pos.recall + neg.recall) / 2,
        (pos.f1 + neg.f1) / 2,
    )
    return MetricsReport(
        accuracy=(tp + tn) / y.size,
        per_class={1: pos, 0: neg},
        macro=macro,
        confusion=((tn, fp), (fn, tp)),
        threshold=threshold,
        n_samples=int(y.size),
    )


def format_metrics_table(reports: dict[str, MetricsReport], include_reference: bool = True) -> str:
    """Fixed-layout evaluation table with the published full-season rows appended."""
    lines = [
        f"{'model':<12}{'accuracy':>10}{'prec(+)':>9}{'rec(+)':>9}{'f1(+)':>9}"
        f"{'prec(-)':>9}{'rec(-)':>9}{'f1(-)':>9}{'prec(M)':>9}{'rec(M)':>9}{'f1(M)':>9}"
    ]
    for name, r in reports.items():
        pos, neg, mac = r.per_class[1], r.per_class[0], r.macro
        lines.append(
            f"{name:<12}{r.accuracy:>10.3f}{pos.precision:>9.3f}{pos.recall:>9.3f}{pos.f1:>9.3f}"
            f"{neg.precision:>9.3f}{neg.recall:>9.3f}{neg.f1:>9.3f}"
            f"{mac.precision:>9.3f}{mac.recall:>9.3f}{mac.f1:>9.3f}"
        )
    if include_reference:
        lines.append("reference (full-season corpus, not reproducible at desk scale):")
        for name, ref in REFERENCE_EVAL_ROWS.items():
            lines.append(
                f"  {name:<10}{ref['accuracy']:>10.3f}{ref['precision']:>9.2f}"
                f"{ref['recall']:>9.2f}{ref['f1']:>9.2f}"
            )
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Cross-validation and grid search
# ---------------------------------------------------------------------------


def stratified_kfold(labels: np.ndarray, k: int, seed: int) -> list[np.ndarray]:
    """Deterministic stratified folds; class ratios match within one sample."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    for cls in np.unique(labels):
        idx = np.nonzero(labels == cls)[0]
        if idx.size < 2:
            raise ValueError(
                f"class {cls} has {idx.size} sample(s); stratified {k}-fold impossible"
            )
        idx = idx.copy()
        rng.shuffle(idx)
        for pos, i in enumerate(idx):
            folds[pos % k].append(int(i))
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


@dataclass
class CvResult:
    hyperparams: GbdtHyperParams
    fold_accuracies: list[float]
    mean_accuracy: float


def grid_search_cv(
    table: PassSampleTable,
    grid: list[GbdtHyperParams],
    k: int = 5,
    seed: int = 0,
) -> tuple[GbdtHyperParams, list[CvResult]]:
    """Mean validation accuracy per config over stratified k-fold CV.

    Imputation medians are recomputed inside each training fold (train_gbdt
    does it from the fold table), so validation rows never leak into them.
    Best config is the accuracy argmax; ties keep the earlier grid position.
    """
    if not grid:
        raise ValueError("grid must be non-empty")
    folds = stratified_kfold(table.labels, k, seed)
    results: list[CvResult] = []
    for hp in grid:
        accs = []
        for f in range(k):
            val_idx = folds[f]
            train_idx = np.concatenate([folds[j] for j in range(k) if j != f])
            model = train_gbdt(table.subset(train_idx), hp)
            val = table.subset(val_idx)
            probs = model.predict_proba_batch(val.raw)
            accs.append(float(np.mean((probs >= 0.5).astype(np.int64) == val.labels)))
        results.append(CvResult(hp, accs, float(np.mean(accs))))
    best = max(range(len(results)), key=lambda i: (results[i].mean_accuracy, -i))
    return results[best].hyperparams, results


@dataclass
class RankingRow:
    variable: str
    mean_accuracy: float
    best_hyperparams: GbdtHyperParams
    reference_accuracy: float


@dataclass
class RankingReport:
    rows: list[RankingRow]
    best_variable: str


def compare_ranking_variables(
    matches: Iterable[tuple[list, list]],
    n: int,
    grid: list[GbdtHyperParams],
    k: int,
    seed: int,
    pitch: PitchSpec,
    mp: MotionParams,
    w: WeightParams,
    fast_space_vel_semantics: str = "current",
    infinite_times_first: bool = True,
) -> RankingReport:
    """CV accuracy per candidate ranking variable, with the argmax marked.

    Candidate features are extracted once; only the top-n selection differs
    across the four variables.
    """
    event_features: list[EventFeatures] = []
    for frames, events in matches:
        event_features.extend(
            extract_event_features(frames, events, pitch, mp, w, fast_space_vel_semantics)
        )
    rows: list[RankingRow] = []
    for var in RANKING_VARIABLES:
        table = assemble_table(event_features, n, var, infinite_times_first)
        best_hp, results = grid_search_cv(table, grid, k, seed)
        best = max(results, key=lambda r: r.mean_accuracy)
        rows.append(RankingRow(var, best.mean_accuracy, best_hp, REFERENCE_RANKING_ACCURACY[var]))
    best_variable = max(rows, key=lambda r: (r.mean_accuracy, -rows.index(r))).variable
    return RankingReport(rows=rows, best_variable=best_variable)


def format_ranking_table(report: RankingReport) -> str:
    lines = [f"{'ranking variable':<18}{'cv accuracy':>12}{'reference':>11}  "]
    for row in report.rows:
        mark = " <- selected" if row.variable == report.best_variable else ""
        lines.append(
            f"{row.variable:<18}{row.mean_accuracy:>12.3f}{row.reference_accuracy:>11.3f}{mark}"
        )
    lines.append("reference column: full-season corpus results, desk-scale data will differ")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def save_model(model: GbdtModel, path: str | Path) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "columns": model.feature_names,
        "base_score": model.base_score,
        "hyperparams": {
            "n_trees": model.hyperparams.n_trees,
            "max_depth": model.hyperparams.max_depth,
            "learning_rate": model.hyperparams.learning_rate,
            "min_child_weight": model.hyperparams.min_child_weight,
            "l2_lambda": model.hyperparams.l2_lambda,
            "gamma": model.hyperparams.gamma,
            "subsample": model.hyperparams.subsample,
            "seed": model.hyperparams.seed,
        },
        "medians": model.medians,
        "training_logloss": model.training_logloss,
        "trees": [t.to_dict() for t in model.trees],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path: str | Path) -> GbdtModel:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not a {MODEL_FORMAT} file")
    return GbdtModel(
        base_score=float(doc["base_score"]),
        trees=[Tree.from_dict(t) for t in doc["trees"]],
        feature_names=[str(c) for c in doc["columns"]],
        medians={str(k): float(v) for k, v in doc["medians"].items()},
        hyperparams=GbdtHyperParams(**doc["hyperparams"]),
        training_logloss=[float(v) for v in doc["training_logloss"]],
    )
