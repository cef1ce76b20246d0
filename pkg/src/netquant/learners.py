"""Binary-outcome learners for nuisance estimation.

Two native learners are shipped behind one tiny interface: ridge-stabilized
logistic regression fit by IRLS, and gradient-boosted depth-2 trees with
logistic loss. Both return immutable fitted models whose ``predict``
clips probabilities to [PRED_CLIP, 1 - PRED_CLIP]; clip events are counted
so estimator diagnostics can surface them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, FitError

PRED_CLIP = 1e-6


def _clip_count(p: np.ndarray) -> tuple[np.ndarray, int]:
    clipped = np.clip(p, PRED_CLIP, 1.0 - PRED_CLIP)
    return clipped, int(np.count_nonzero(clipped != p))


@dataclass
class ClipCounter:
    """Mutable tally of probability clips, shared by fitted models."""

    events: int = 0

    def add(self, k: int) -> None:
        self.events += k


class ConstantModel:
    """Fallback model predicting one clipped probability everywhere."""

    def __init__(self, p: float, counter: ClipCounter | None = None):
        self.p = float(np.clip(p, PRED_CLIP, 1.0 - PRED_CLIP))
        self.counter = counter or ClipCounter()

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.full(x.shape[0], self.p)


class LogisticModel:
    def __init__(self, coef, intercept, mean, scale, counter):
        self.coef = np.asarray(coef, dtype=float)
        self.intercept = float(intercept)
        self._mean = mean
        self._scale = scale
        self.counter = counter

    def decision(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        z = (x - self._mean) / self._scale
        return z @ self.coef + self.intercept

    def predict(self, x: np.ndarray) -> np.ndarray:
        p = _expit(self.decision(x))
        p, k = _clip_count(p)
        self.counter.add(k)
        return p

    def raw_coefficients(self) -> np.ndarray:
        """Intercept and slopes on the original (unstandardized) feature scale."""
        slopes = self.coef / self._scale
        return np.concatenate([[self.intercept - float(self._mean @ slopes)], slopes])

    def summary(self) -> dict:
        raw = self.raw_coefficients()
        return {"model": "logistic", "intercept": raw[0], "coef": raw[1:].tolist()}


def _expit(z):
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class LogisticRegressionLearner:
    """Logistic regression by iteratively reweighted least squares.

    Features are standardized internally; a small ridge penalty on the
    standardized slopes keeps the system well posed when features are
    collinear or constant.
    """

    name = "logistic"

    def __init__(self, ridge: float = 1e-8, max_iter: int = 100, tol: float = 1e-9):
        self.ridge = ridge
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, x: np.ndarray, y: np.ndarray, seed: int | None = None):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        if x.shape[0] != y.shape[0]:
            raise ArgumentError("feature rows and labels disagree in length")
        if not np.isin(y, (0.0, 1.0)).all():
            raise ArgumentError("labels must be binary")
        counter = ClipCounter()
        if y.min() == y.max():
            return ConstantModel(y.mean(), counter)
        mean = x.mean(axis=0)
        scale = x.std(axis=0)
        scale[scale == 0.0] = 1.0
        z = (x - mean) / scale
        n, d = z.shape
        zd = np.column_stack([np.ones(n), z])
        beta = np.zeros(d + 1)
        beta[0] = np.log(y.mean() / (1.0 - y.mean()))
        penalty = np.full(d + 1, self.ridge)
        penalty[0] = 0.0
        for _ in range(self.max_iter):
            p = _expit(zd @ beta)
            w = np.maximum(p * (1.0 - p), 1e-10)
            grad = zd.T @ (y - p) - penalty * beta
            hess = (zd * w[:, None]).T @ zd + np.diag(penalty + 1e-12)
            try:
                step = np.linalg.solve(hess, grad)
            except np.linalg.LinAlgError as exc:
                raise FitError(f"IRLS normal equations singular: {exc}") from exc
            beta = beta + step
            if not np.isfinite(beta).all():
                raise FitError("IRLS diverged to non-finite coefficients")
            if np.max(np.abs(step)) < self.tol:
                break
        return LogisticModel(beta[1:], beta[0], mean, scale, counter)


@dataclass(frozen=True)
class _TreeNode:
    feature: int = -1          # -1 marks a leaf
    threshold: float = 0.0
    left: object = None
    right: object = None
    value: float = 0.0


class BoostedTreesModel:
    def __init__(self, trees, base_score, learning_rate, counter):
        self.trees = trees
        self.base_score = base_score
        self.learning_rate = learning_rate
        self.counter = counter

    def decision(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        f = np.full(x.shape[0], self.base_score)
        for tree in self.trees:
            f += self.learning_rate * _tree_predict(tree, x)
        return f

    def predict(self, x: np.ndarray) -> np.ndarray:
        p = _expit(self.decision(x))
        p, k = _clip_count(p)
        self.counter.add(k)
        return p

    def summary(self) -> dict:
        return {"model": "boost", "n_trees": len(self.trees),
                "learning_rate": self.learning_rate, "base_score": self.base_score}


def _tree_predict(node: _TreeNode, x: np.ndarray) -> np.ndarray:
    if node.feature < 0:
        return np.full(x.shape[0], node.value)
    out = np.empty(x.shape[0])
    go_left = x[:, node.feature] <= node.threshold
    out[go_left] = _tree_predict(node.left, x[go_left])
    out[~go_left] = _tree_predict(node.right, x[~go_left])
    return out


class GradientBoostingLearner:
    """Newton-style gradient boosting with depth-2 regression trees and
    logistic loss (exact greedy splits)."""

    name = "boost"

    def __init__(self, n_rounds: int = 200, learning_rate: float = 0.1,
                 max_depth: int = 2, reg_lambda: float = 1.0,
                 min_child_hessian: float = 1.0):
        self.n_rounds = n_rounds
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.reg_lambda = reg_lambda
        self.min_child_hessian = min_child_hessian

    def fit(self, x: np.ndarray, y: np.ndarray, seed: int | None = None):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        if x.shape[0] != y.shape[0]:
            raise ArgumentError("feature rows and labels disagree in length")
        if not np.isin(y, (0.0, 1.0)).all():
            raise ArgumentError("labels must be binary")
        counter = ClipCounter()
        if y.min() == y.max():
            return ConstantModel(y.mean(), counter)
        ybar = y.mean()
        base = np.log(ybar / (1.0 - ybar))
        order = np.argsort(x, axis=0, kind="stable")
        f = np.full(x.shape[0], base)
        trees = []
        for _ in range(self.n_rounds):
            p = _expit(f)
            g = p - y
            h = np.maximum(p * (1.0 - p), 1e-12)
            tree = self._build_node(x, order, g, h, np.ones(x.shape[0], dtype=bool),
                                    depth=self.max_depth)
            trees.append(tree)
            f += self.learning_rate * _tree_predict(tree, x)
        return BoostedTreesModel(trees, base, self.learning_rate, counter)

    def _leaf_value(self, gsum, hsum):
        return -gsum / (hsum + self.reg_lambda)

    def _build_node(self, x, order, g, h, mask, depth):
        gsum, hsum = g[mask].sum(), h[mask].sum()
        if depth == 0 or hsum <= 2 * self.min_child_hessian:
            return _TreeNode(value=self._leaf_value(gsum, hsum))
        best = self._best_split(x, order, g, h, mask, gsum, hsum)
        if best is None:
            return _TreeNode(value=self._leaf_value(gsum, hsum))
        feat, thr = best
        go_left = mask & (x[:, feat] <= thr)
        go_right = mask & ~ (x[:, feat] <= thr)
        return _TreeNode(feature=feat, threshold=thr,
                         left=self._build_node(x, order, g, h, go_left, depth - 1),
                         right=self._build_node(x, order, g, h, go_right, depth - 1))

    def _best_split(self, x, order, g, h, mask, gsum, hsum):
        lam = self.reg_lambda
        parent_score = gsum * gsum / (hsum + lam)
        best_gain, best = 1e-12, None
        for feat in range(x.shape[1]):
            idx = order[:, feat]
            idx = idx[mask[idx]]
            if idx.shape[0] < 2:
                continue
            xv = x[idx, feat]
            gl = np.cumsum(g[idx])
            hl = np.cumsum(h[idx])
            # Valid split positions: strictly between distinct feature values.
            boundary = xv[:-1] < xv[1:]
            if not boundary.any():
                continue
            glb, hlb = gl[:-1][boundary], hl[:-1][boundary]
            grb, hrb = gsum - glb, hsum - hlb
            ok = (hlb >= self.min_child_hessian) & (hrb >= self.min_child_hessian)
            if not ok.any():
                continue
            gain = np.where(ok, glb ** 2 / (hlb + lam) + grb ** 2 / (hrb + lam) - parent_score,
                            -np.inf)
            k = int(np.argmax(gain))
            if gain[k] > best_gain:
                best_gain = gain[k]
                pos = np.flatnonzero(boundary)[k]
                best = (feat, 0.5 * (xv[pos] + xv[pos + 1]))
        return best


_LEARNERS = {"logistic": LogisticRegressionLearner, "boost": GradientBoostingLearner}


def get_learner(name: str, **hyper):
    """Instantiate a learner by configuration name ('logistic' or 'boost')."""
    key = str(name).lower()
    if key not in _LEARNERS:
        raise ArgumentError(f"unknown learner {name!r}; available: {sorted(_LEARNERS)}")
    return _LEARNERS[key](**hyper)
