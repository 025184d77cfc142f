"""Exact per-instance Shapley attribution for the tree ensemble.

Attributions use the path-dependent value function: a feature subset S maps
to the model output where features outside S are marginalized by descending
both children weighted by training cover counts. Per leaf this reduces to a
product game over the path's unique features, solved exactly with a small
generating polynomial; a brute-force subset enumeration over the same value
function serves as the validation oracle.

All attributions are in margin (log-odds) units.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import PassSampleTable
from .gbdt import GbdtModel, Tree

BRUTE_FORCE_MAX_FEATURES = 12


@dataclass
class ShapExplanation:
    """Additive decomposition of one prediction's margin."""

    feature_names: list[str]
    values: np.ndarray  # phi per feature, log-odds units
    base_value: float  # expected margin over the training distribution
    margin: float  # model margin for this row

    def reconstruction_error(self) -> float:
        return abs(self.base_value + float(np.sum(self.values)) - self.margin)


@dataclass
class ImportanceSummary:
    """Corpus-level attribution summary (beeswarm-style export)."""

    feature_names: list[str]
    mean_abs: np.ndarray
    rank: np.ndarray  # 1-based rank per feature, 1 = most important
    quantile_levels: tuple[float, ...]
    quantiles: np.ndarray  # (n_features, n_levels) of signed phi

    def top_feature(self) -> str:
        return self.feature_names[int(np.argmin(self.rank))]

    def to_csv(self, path: str | Path) -> None:
        order = np.argsort(self.rank)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["feature", "mean_abs_shap", "rank"]
                + [f"q{int(q * 100):02d}" for q in self.quantile_levels]
            )
            for j in order:
                writer.writerow(
                    [self.feature_names[j], repr(float(self.mean_abs[j])), int(self.rank[j])]
                    + [repr(float(v)) for v in self.quantiles[j]]
                )


@dataclass
class _LeafGame:
    """One leaf's product game over the unique features on its path.

    o_f(x) = indicator that x satisfies every branch of feature f on the path
    (an interval test lo < x_f <= hi); z_f = product of the path's cover
    ratios for f's branches.
    """

    feats: np.ndarray  # unique feature ids, first-encounter order
    z: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    value: float
    reach: float  # product of all z_f = leaf cover / root cover


def _leaf_games(tree: Tree) -> list[_LeafGame]:
    if not tree.cover or tree.cover[0] <= 0:
        raise ValueError("tree lacks training cover counts; attribution needs them")
    games: list[_LeafGame] = []

    def walk(node: int, feats: list[int], z: dict, lo: dict, hi: dict) -> None:
        f = tree.feature[node]
        if f < 0:
            games.append(
                _LeafGame(
                    feats=np.array(feats, dtype=np.int64),
                    z=np.array([z[ff] for ff in feats]),
                    lo=np.array([lo[ff] for ff in feats]),
                    hi=np.array([hi[ff] for ff in feats]),
                    value=tree.value[node],
                    reach=float(np.prod([z[ff] for ff in feats])) if feats else 1.0,
                )
            )
            return
        t = tree.threshold[node]
        l, r = tree.left[node], tree.right[node]
        c, cl, cr = tree.cover[node], tree.cover[l], tree.cover[r]
        new = f not in z
        if new:
            feats = feats + [f]
        for child, ratio, branch in ((l, cl / c, "le"), (r, cr / c, "gt")):
            z2 = dict(z)
            lo2 = dict(lo)
            hi2 = dict(hi)
            z2[f] = z.get(f, 1.0) * ratio
            lo2.setdefault(f, -math.inf)
            hi2.setdefault(f, math.inf)
            if branch == "le":
                hi2[f] = min(hi2[f], t)
            else:
                lo2[f] = max(lo2[f], t)
            walk(child, feats, z2, lo2, hi2)

    walk(0, [], {}, {}, {})
    return games


def _shapley_weights(u: int) -> np.ndarray:
    """w[k] = k! (u-1-k)! / u! for subset sizes k = 0..u-1."""
    fact = [math.factorial(i) for i in range(u + 1)]
    return np.array([fact[k] * fact[u - 1 - k] / fact[u] for k in range(u)])


def _game_contrib(game: _LeafGame, pattern: int) -> np.ndarray:
    """phi contribution of this leaf for one on/off indicator pattern."""
    u = len(game.feats)
    o = np.array([(pattern >> i) & 1 for i in range(u)], dtype=np.float64)
    weights = _shapley_weights(u)
    contrib = np.empty(u)
    for j in range(u):
        coeffs = np.zeros(u)
        coeffs[0] = 1.0
        deg = 0
        for f2 in range(u):
            if f2 == j:
                continue
            # multiply by (z + o*t)
            upper = coeffs[: deg + 1].copy()
            coeffs[: deg + 1] = upper * game.z[f2]
            coeffs[1 : deg + 2] += upper * o[f2]
            deg += 1
        s = float(coeffs @ weights)
        contrib[j] = game.value * (o[j] - game.z[j]) * s
    return contrib


def shap_values(model: GbdtModel, X: np.ndarray) -> tuple[np.ndarray, float]:
    """Per-feature attributions for a batch, plus the shared base value.

    base + phi.sum(axis=1) reconstructs the margin row-exactly.
    """
    X = model.impute(X)
    n, d = X.shape
    phi = np.zeros((n, d))
    base = model.base_score
    for tree in model.trees:
        games = _leaf_games(tree)  # validates cover counts before any division
        base += tree.expected_value()
        for game in games:
            u = len(game.feats)
            if u == 0:
                continue
            o = (X[:, game.feats] > game.lo) & (X[:, game.feats] <= game.hi)
            patterns = o.astype(np.int64) @ (1 << np.arange(u, dtype=np.int64))
            cache: dict[int, np.ndarray] = {}
            for pat in np.unique(patterns):
                pat = int(pat)
                if pat not in cache:
                    cache[pat] = _game_contrib(game, pat)
                rows = patterns == pat
                phi[np.ix_(rows, game.feats)] += cache[pat][np.newaxis, :]
    return phi, float(base)


def tree_shap(model: GbdtModel, row: np.ndarray | dict) -> ShapExplanation:
    """Exact path-dependent Shapley attribution for one row."""
    if isinstance(row, dict):
        row = np.array([row[c] for c in model.feature_names], dtype=np.float64)
    row = np.asarray(row, dtype=np.float64).reshape(1, -1)
    phi, base = shap_values(model, row)
    margin = float(model.margin(row)[0])
    return ShapExplanation(
        feature_names=list(model.feature_names),
        values=phi[0],
        base_value=base,
        margin=margin,
    )


# ---------------------------------------------------------------------------
# Brute-force oracle
# ---------------------------------------------------------------------------


def _descend(tree: Tree, cover: list[int], node: int, row: np.ndarray, mask: int) -> float:
    f = tree.feature[node]
    if f < 0:
        return tree.value[node]
    if (mask >> f) & 1:
        child = tree.left[node] if row[f] <= tree.threshold[node] else tree.right[node]
        return _descend(tree, cover, child, row, mask)
    l, r = tree.left[node], tree.right[node]
    return (
        cover[l] * _descend(tree, cover, l, row, mask)
        + cover[r] * _descend(tree, cover, r, row, mask)
    ) / cover[node]


def _recount_covers(tree: Tree, X: np.ndarray) -> list[int]:
    cover = [0] * len(tree.feature)

    def route(node: int, rows: np.ndarray) -> None:
        cover[node] = len(rows)
        f = tree.feature[node]
        if f < 0:
            return
        mask = X[rows, f] <= tree.threshold[node]
        route(tree.left[node], rows[mask])
        route(tree.right[node], rows[~mask])

    route(0, np.arange(len(X)))
    return cover


def brute_force_shapley(
    model: GbdtModel,
    row: np.ndarray | dict,
    background_table: PassSampleTable | np.ndarray | None = None,
) -> np.ndarray:
    """Exact Shapley values by subset enumeration over the same conditional-
    expectation value function (missing features marginalized by cover-weighted
    descent through both children). Exponential in feature count; limited to
    12 features.

    With a background table the node covers are recounted from it; otherwise
    the training covers stored on the model are used.
    """
    d = len(model.feature_names)
    if d > BRUTE_FORCE_MAX_FEATURES:
        raise ValueError(f"{d} features exceeds the brute-force limit of {BRUTE_FORCE_MAX_FEATURES}")
    if isinstance(row, dict):
        row = np.array([row[c] for c in model.feature_names], dtype=np.float64)
    row = model.impute(np.asarray(row, dtype=np.float64))[0]

    covers: list[list[int]] = []
    for tree in model.trees:
        if not tree.cover or tree.cover[0] <= 0:
            raise ValueError("tree lacks training cover counts; attribution needs them")
        if background_table is None:
            covers.append(list(tree.cover))
        else:
            bg = background_table.raw if isinstance(background_table, PassSampleTable) else background_table
            covers.append(_recount_covers(tree, model.impute(np.asarray(bg, dtype=np.float64))))

    v = np.empty(1 << d)
    for mask in range(1 << d):
        v[mask] = sum(
            _descend(tree, cover, 0, row, mask) for tree, cover in zip(model.trees, covers)
        )

    fact = [math.factorial(i) for i in range(d + 1)]
    phi = np.zeros(d)
    for j in range(d):
        bit = 1 << j
        for mask in range(1 << d):
            if mask & bit:
                continue
            s = bin(mask).count("1")
            weight = fact[s] * fact[d - 1 - s] / fact[d]
            phi[j] += weight * (v[mask | bit] - v[mask])
    return phi


def shap_summary(model: GbdtModel, table: PassSampleTable | np.ndarray) -> ImportanceSummary:
    """Mean |phi| per feature with descending ranks and a signed quantile sketch."""
    X = table.raw if isinstance(table, PassSampleTable) else np.asarray(table, dtype=np.float64)
    if len(X) == 0:
        raise ValueError("summary requires a non-empty table")
    phi, _ = shap_values(model, X)
    mean_abs = np.mean(np.abs(phi), axis=0)
    order = np.lexsort((np.arange(len(mean_abs)), -mean_abs))  # ties by column index
    rank = np.empty(len(mean_abs), dtype=np.int64)
    rank[order] = np.arange(1, len(mean_abs) + 1)
    levels = (0.05, 0.25, 0.5, 0.75, 0.95)
    quantiles = np.quantile(phi, levels, axis=0).T
    return ImportanceSummary(
        feature_names=list(model.feature_names),
        mean_abs=mean_abs,
        rank=rank,
        quantile_levels=levels,
        quantiles=quantiles,
    )
