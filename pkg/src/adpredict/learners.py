"""From-scratch trainers for the three classifier families.

All trainers are deterministic functions of (X, y, params): there is no
internal randomness, exact-greedy tree splits break ties by lowest feature
index then lowest threshold, and every trainer first re-orders its training
rows into a canonical lexicographic order so that permuting the input rows
yields a bit-identical model.

Single-class inputs short-circuit to a constant predictor for that class;
with rare target categories such folds are routine, not errors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

MODEL_KINDS = ("svm", "gbrt", "logreg")

_PROB_CLAMP = 1e-6


class LearnerError(ValueError):
    """Invalid training or prediction input."""


@dataclass(frozen=True)
class LearnerParams:
    """Hyperparameters for all three families.

    Defaults: linear kernel with C = 1 for the SVM; learning rate 0.1,
    maximum depth 3 and 100 estimators for the boosted trees; unit sample
    weights and L2 strength 1 (bias unpenalized) for logistic regression.
    """

    svm_c: float = 1.0
    svm_tol: float = 1e-3
    svm_max_epochs: int = 1000
    gbrt_learning_rate: float = 0.1
    gbrt_max_depth: int = 3
    gbrt_n_estimators: int = 100
    gbrt_lambda: float = 1.0
    gbrt_min_child_weight: float = 1.0
    logreg_l2: float = 1.0
    logreg_tol: float = 1e-8
    logreg_max_iter: int = 100

    def __post_init__(self):
        for name in ("svm_c", "svm_tol", "gbrt_learning_rate", "gbrt_lambda",
                     "logreg_l2", "logreg_tol"):
            if getattr(self, name) <= 0:
                raise LearnerError(f"{name} must be positive")
        for name in ("svm_max_epochs", "gbrt_max_depth", "gbrt_n_estimators",
                     "logreg_max_iter"):
            if getattr(self, name) < 1:
                raise LearnerError(f"{name} must be at least 1")
        if self.gbrt_min_child_weight < 0:
            raise LearnerError("gbrt_min_child_weight must be non-negative")


@dataclass
class LinearModel:
    weights: np.ndarray
    bias: float
    kind: str  # "svm" or "logistic"

    def decision_values(self, X: np.ndarray) -> np.ndarray:
        X = _check_matrix(X, self.weights.shape[0])
        return X @ self.weights + self.bias


@dataclass
class TreeNode:
    """Either an internal split (feature, threshold, children) or a leaf."""

    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    weight: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class BoostedEnsemble:
    trees: list[TreeNode]
    learning_rate: float
    base_score: float
    n_features: int

    def raw_scores(self, X: np.ndarray) -> np.ndarray:
        X = _check_matrix(X, self.n_features)
        raw = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            raw += self.learning_rate * apply_tree(tree, X)
        return raw

    def staged_raw_scores(self, X: np.ndarray):
        """Yield raw scores after 0, 1, ..., len(trees) rounds."""
        X = _check_matrix(X, self.n_features)
        raw = np.full(X.shape[0], self.base_score)
        yield raw.copy()
        for tree in self.trees:
            raw += self.learning_rate * apply_tree(tree, X)
            yield raw.copy()

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return sigmoid(self.raw_scores(X))


Model = LinearModel | BoostedEnsemble


def sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _check_matrix(X, expected_dims: int | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise LearnerError("feature matrix must be 2-dimensional")
    if expected_dims is not None and X.shape[1] != expected_dims:
        raise LearnerError(f"expected {expected_dims} feature dims, got {X.shape[1]}")
    return X


def _check_training_input(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = _check_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise LearnerError("labels must be a vector matching the row count")
    if X.shape[0] < 1:
        raise LearnerError("training set must contain at least one row")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise LearnerError("labels must be binary (0/1)")
    return X, y


def _canonical_order(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sort rows lexicographically by features then label.

    Identical (row, label) pairs are interchangeable, so all trainers become
    invariant to the incoming row order, bit for bit.
    """
    keys = [y] + [X[:, j] for j in range(X.shape[1] - 1, -1, -1)]
    order = np.lexsort(keys)
    return np.ascontiguousarray(X[order]), y[order]


def _constant_model_for(label: float, kind: str, dims: int) -> LinearModel:
    # sign(0 + bias) reproduces the single observed class everywhere.
    return LinearModel(weights=np.zeros(dims), bias=1.0 if label == 1.0 else -1.0,
                       kind=kind)


# ---------------------------------------------------------------------------
# Linear SVM: pairwise dual coordinate ascent on the box-constrained dual
# with an equality constraint, selecting the maximal-violating pair.
# ---------------------------------------------------------------------------

def svm_primal_objective(weights: np.ndarray, bias: float, X: np.ndarray,
                         y: np.ndarray, c: float) -> float:
    """0.5*||w||^2 + C * sum(hinge) with labels in {0,1} mapped to {-1,+1}."""
    t = 2.0 * np.asarray(y, dtype=np.float64) - 1.0
    margins = 1.0 - t * (np.asarray(X) @ weights + bias)
    return 0.5 * float(weights @ weights) + c * float(np.maximum(0.0, margins).sum())


def train_svm(X, y, params: LearnerParams = LearnerParams(),
              epoch_callback=None) -> LinearModel:
    """Max-margin hinge-loss linear classifier trained through the dual.

    Pairwise coordinate ascent on the box-constrained dual with the usual
    equality constraint, so the bias stays unregularized and the optimum
    matches the stated primal exactly. The first pair element is the
    maximal violator; its partner is chosen by the second-order rule
    (largest analytic gain), which converges far faster on badly scaled
    features such as raw exposure seconds. Stops when the maximal KKT
    violation drops below ``svm_tol`` or after ``svm_max_epochs`` epochs of
    n pair updates; on ill-conditioned inputs the cap binds by design,
    yielding a deterministic budgeted model.

    ``epoch_callback(epoch_index, dual_value)`` is invoked once per epoch
    with the minimization-form dual objective, which decreases
    monotonically; it exists for diagnostics and invariant checks.
    """
    X, y = _check_training_input(X, y)
    classes = np.unique(y)
    if classes.size == 1:
        return _constant_model_for(classes[0], "svm", X.shape[1])
    X, y = _canonical_order(X, y)
    n, d = X.shape
    t = 2.0 * y - 1.0
    c = params.svm_c
    eps = 1e-12
    tau = 1e-12

    alpha = np.zeros(n)
    w = np.zeros(d)
    sq_norms = np.einsum("ij,ij->i", X, X)
    # Decision values are maintained incrementally; each pair update shifts
    # them by step * (K[:, i] - K[:, j]).
    decisions = np.zeros(n)
    max_updates = params.svm_max_epochs * n

    for update in range(max_updates):
        if epoch_callback is not None and update % n == 0:
            epoch_callback(update // n, 0.5 * float(w @ w) - float(alpha.sum()))
        neg_yg = -t * (t * decisions - 1.0)
        up = ((t > 0) & (alpha < c - eps)) | ((t < 0) & (alpha > eps))
        low = ((t < 0) & (alpha < c - eps)) | ((t > 0) & (alpha > eps))
        if not up.any() or not low.any():
            break
        up_idx = np.flatnonzero(up)
        low_idx = np.flatnonzero(low)
        i = up_idx[np.argmax(neg_yg[up_idx])]
        m_val = neg_yg[i]
        if m_val - neg_yg[low_idx].min() <= params.svm_tol:
            break

        k_i = X @ X[i]
        quad_all = np.maximum(sq_norms[i] + sq_norms[low_idx] - 2.0 * k_i[low_idx],
                              tau)
        violation = m_val - neg_yg[low_idx]
        gains = np.where(violation > 0, violation * violation / (2.0 * quad_all),
                         -math.inf)
        j = low_idx[np.argmax(gains)]

        # Feasible direction: alpha_i moves by t_i*step, alpha_j by -t_j*step.
        hi_i = (c - alpha[i]) if t[i] > 0 else alpha[i]
        hi_j = alpha[j] if t[j] > 0 else (c - alpha[j])
        quad = max(sq_norms[i] + sq_norms[j] - 2.0 * float(k_i[j]), tau)
        step = min((m_val - neg_yg[j]) / quad, min(hi_i, hi_j))
        if step <= 0:
            break
        alpha[i] = min(max(alpha[i] + t[i] * step, 0.0), c)
        alpha[j] = min(max(alpha[j] - t[j] * step, 0.0), c)
        k_j = X @ X[j]
        decisions = decisions + step * (k_i - k_j)
        w = w + step * (X[i] - X[j])

    if epoch_callback is not None:
        epoch_callback(-1, 0.5 * float(w @ w) - float(alpha.sum()))
    # Recompute the violation bounds at the final iterate to place the bias.
    decisions = X @ w
    neg_yg = -t * (t * decisions - 1.0)
    up = ((t > 0) & (alpha < c - eps)) | ((t < 0) & (alpha > eps))
    low = ((t < 0) & (alpha < c - eps)) | ((t > 0) & (alpha > eps))
    if up.any() and low.any():
        bias = (neg_yg[up].max() + neg_yg[low].min()) / 2.0
    else:
        bias = 0.0
    return LinearModel(weights=w, bias=float(bias), kind="svm")


# ---------------------------------------------------------------------------
# Logistic regression: damped Newton on the L2-penalized log-likelihood.
# ---------------------------------------------------------------------------

def logistic_objective(X: np.ndarray, y: np.ndarray, weights: np.ndarray,
                       bias: float, l2: float) -> float:
    """Penalized negative log-likelihood; the bias term is not penalized."""
    z = X @ weights + bias
    nll = float(np.sum(np.logaddexp(0.0, z) - y * z))
    return nll + 0.5 * l2 * float(weights @ weights)


def logistic_gradient(X: np.ndarray, y: np.ndarray, weights: np.ndarray,
                      bias: float, l2: float) -> np.ndarray:
    """Gradient of ``logistic_objective`` w.r.t. (weights..., bias)."""
    p = sigmoid(X @ weights + bias)
    residual = p - y
    grad_w = X.T @ residual + l2 * weights
    grad_b = float(residual.sum())
    return np.concatenate([grad_w, [grad_b]])


def train_logreg(X, y, params: LearnerParams = LearnerParams()) -> LinearModel:
    """Damped Newton solver, unit sample weights, unpenalized bias."""
    X, y = _check_training_input(X, y)
    classes = np.unique(y)
    if classes.size == 1:
        rate = min(max(classes[0], _PROB_CLAMP), 1.0 - _PROB_CLAMP)
        model = LinearModel(weights=np.zeros(X.shape[1]),
                            bias=math.log(rate / (1.0 - rate)), kind="logistic")
        return model
    X, y = _canonical_order(X, y)
    n, d = X.shape
    l2 = params.logreg_l2
    beta = np.zeros(d + 1)
    Xb = np.hstack([X, np.ones((n, 1))])
    penalty = np.append(np.full(d, l2), 0.0)

    obj = logistic_objective(X, y, beta[:d], beta[d], l2)
    for _ in range(params.logreg_max_iter):
        grad = logistic_gradient(X, y, beta[:d], beta[d], l2)
        if float(np.linalg.norm(grad)) < params.logreg_tol:
            break
        p = sigmoid(Xb @ beta)
        curvature = p * (1.0 - p)
        hessian = Xb.T @ (Xb * curvature[:, None]) + np.diag(penalty)
        step = np.linalg.solve(hessian, grad)
        scale = 1.0
        for _ in range(40):
            candidate = beta - scale * step
            cand_obj = logistic_objective(X, y, candidate[:d], candidate[d], l2)
            if cand_obj < obj:
                beta, obj = candidate, cand_obj
                break
            scale *= 0.5
        else:
            break  # no decrease found; gradient is numerically flat
    return LinearModel(weights=beta[:d], bias=float(beta[d]), kind="logistic")


# ---------------------------------------------------------------------------
# Gradient-boosted trees: second-order binary-logistic boosting with
# exact-greedy splits, as an additive ensemble of regression trees.
# ---------------------------------------------------------------------------

def train_gbrt(X, y, params: LearnerParams = LearnerParams()) -> BoostedEnsemble:
    """Boost ``gbrt_n_estimators`` regression trees on logistic gradients.

    Per round the tree is fit to g_i = p_i - y_i and h_i = p_i*(1 - p_i):
    split gain is 0.5*[G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - G^2/(H+lambda)],
    a leaf weighs -G/(H+lambda), and a node splits only when the gain is
    strictly positive and both children carry hessian mass of at least
    ``gbrt_min_child_weight``. The base score is the clamped log-odds of the
    positive rate, which keeps single-class inputs finite.
    """
    X, y = _check_training_input(X, y)
    X, y = _canonical_order(X, y)
    n, d = X.shape

    rate = min(max(float(y.mean()), _PROB_CLAMP), 1.0 - _PROB_CLAMP)
    base_score = math.log(rate / (1.0 - rate))
    raw = np.full(n, base_score)

    # Feature-sorted row orders are static across rounds.
    order = np.argsort(X, axis=0, kind="stable")
    builder = _TreeBuilder(X, order, params)

    trees: list[TreeNode] = []
    for _ in range(params.gbrt_n_estimators):
        p = sigmoid(raw)
        g = p - y
        h = p * (1.0 - p)
        tree, leaf_updates = builder.build(g, h)
        trees.append(tree)
        for mask, weight in leaf_updates:
            raw[mask] += params.gbrt_learning_rate * weight
    return BoostedEnsemble(trees=trees, learning_rate=params.gbrt_learning_rate,
                           base_score=base_score, n_features=d)


class _TreeBuilder:
    def __init__(self, X: np.ndarray, order: np.ndarray, params: LearnerParams):
        self.X = X
        self.order = order
        self.params = params
        self.g: np.ndarray | None = None
        self.h: np.ndarray | None = None

    def build(self, g: np.ndarray, h: np.ndarray):
        self.g, self.h = g, h
        leaf_updates: list[tuple[np.ndarray, float]] = []
        root_mask = np.ones(self.X.shape[0], dtype=bool)
        tree = self._grow(root_mask, depth=0, leaf_updates=leaf_updates)
        return tree, leaf_updates

    def _grow(self, mask: np.ndarray, depth: int, leaf_updates) -> TreeNode:
        lam = self.params.gbrt_lambda
        g_sum = float(self.g[mask].sum())
        h_sum = float(self.h[mask].sum())
        weight = -g_sum / (h_sum + lam)
        m = int(mask.sum())
        if depth >= self.params.gbrt_max_depth or m < 2:
            leaf_updates.append((mask, weight))
            return TreeNode(weight=weight)
        split = self._best_split(mask, m, g_sum, h_sum)
        if split is None:
            leaf_updates.append((mask, weight))
            return TreeNode(weight=weight)
        feature, threshold = split
        left_mask = mask & (self.X[:, feature] <= threshold)
        right_mask = mask & ~(self.X[:, feature] <= threshold)
        left = self._grow(left_mask, depth + 1, leaf_updates)
        right = self._grow(right_mask, depth + 1, leaf_updates)
        return TreeNode(feature=feature, threshold=threshold, left=left, right=right)

    def _best_split(self, mask: np.ndarray, m: int, g_sum: float, h_sum: float):
        lam = self.params.gbrt_lambda
        mcw = self.params.gbrt_min_child_weight
        d = self.X.shape[1]

        # Node rows in per-feature sorted order, shape (d, m).
        member = mask[self.order]
        sorted_idx = self.order.T[member.T].reshape(d, m)
        col = np.arange(d)[:, None]
        x_sorted = self.X[sorted_idx, col]
        g_left = np.cumsum(self.g[sorted_idx], axis=1)[:, :-1]
        h_left = np.cumsum(self.h[sorted_idx], axis=1)[:, :-1]
        g_right = g_sum - g_left
        h_right = h_sum - h_left

        valid = ((x_sorted[:, :-1] < x_sorted[:, 1:])
                 & (h_left >= mcw) & (h_right >= mcw))
        if not valid.any():
            return None
        parent_term = g_sum * g_sum / (h_sum + lam)
        gain = 0.5 * (g_left ** 2 / (h_left + lam)
                      + g_right ** 2 / (h_right + lam) - parent_term)
        gain[~valid] = -math.inf

        # argmax scans feature-major then threshold-ascending, which realizes
        # the tie rule: lowest feature index first, then lowest threshold.
        flat = int(np.argmax(gain))
        best_gain = gain.flat[flat]
        if not best_gain > 0.0:
            return None
        feature, boundary = divmod(flat, m - 1)
        lo = float(x_sorted[feature, boundary])
        hi = float(x_sorted[feature, boundary + 1])
        threshold = (lo + hi) / 2.0
        if threshold >= hi:  # midpoint rounded up between adjacent floats
            threshold = lo
        return feature, threshold


def apply_tree(node: TreeNode, X: np.ndarray) -> np.ndarray:
    """Leaf weight reached by every row of X."""
    out = np.empty(X.shape[0])
    _apply_tree_into(node, X, np.arange(X.shape[0]), out)
    return out


def _apply_tree_into(node: TreeNode, X, idx: np.ndarray, out: np.ndarray) -> None:
    if node.is_leaf:
        out[idx] = node.weight
        return
    goes_left = X[idx, node.feature] <= node.threshold
    _apply_tree_into(node.left, X, idx[goes_left], out)
    _apply_tree_into(node.right, X, idx[~goes_left], out)


def binary_log_loss(y: np.ndarray, raw_scores: np.ndarray) -> float:
    """Mean logistic loss of raw (pre-sigmoid) scores."""
    y = np.asarray(y, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, raw_scores) - y * raw_scores))


# ---------------------------------------------------------------------------
# Shared entry points.
# ---------------------------------------------------------------------------

def train(kind: str, X, y, params: LearnerParams = LearnerParams()) -> Model:
    if kind == "svm":
        return train_svm(X, y, params)
    if kind == "gbrt":
        return train_gbrt(X, y, params)
    if kind == "logreg":
        return train_logreg(X, y, params)
    raise LearnerError(f"unknown learner kind {kind!r}")


def predict(model: Model, X) -> np.ndarray:
    """Binary labels. SVM: sign of the decision value with 0 mapped to the
    positive class. Logistic and boosted trees: probability >= 0.5."""
    X = np.asarray(X, dtype=np.float64)
    if isinstance(model, LinearModel):
        if model.kind == "svm":
            return (model.decision_values(X) >= 0.0).astype(np.int64)
        return (sigmoid(model.decision_values(X)) >= 0.5).astype(np.int64)
    return (model.predict_proba(X) >= 0.5).astype(np.int64)


def model_to_text(model: Model) -> str:
    """Serialize a trained model to a JSON document that round-trips exactly."""
    if isinstance(model, LinearModel):
        doc = {"type": "linear", "kind": model.kind,
               "weights": model.weights.tolist(), "bias": model.bias}
    else:
        doc = {"type": "boosted", "learning_rate": model.learning_rate,
               "base_score": model.base_score, "n_features": model.n_features,
               "trees": [_tree_to_doc(t) for t in model.trees]}
    return json.dumps(doc, indent=1)


def model_from_text(text: str) -> Model:
    doc = json.loads(text)
    if doc["type"] == "linear":
        return LinearModel(weights=np.array(doc["weights"], dtype=np.float64),
                           bias=doc["bias"], kind=doc["kind"])
    trees = [_tree_from_doc(t) for t in doc["trees"]]
    return BoostedEnsemble(trees=trees, learning_rate=doc["learning_rate"],
                           base_score=doc["base_score"],
                           n_features=doc["n_features"])


def _tree_to_doc(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"weight": node.weight}
    return {"feature": node.feature, "threshold": node.threshold,
            "left": _tree_to_doc(node.left), "right": _tree_to_doc(node.right)}


def _tree_from_doc(doc: dict) -> TreeNode:
    if "weight" in doc:
        return TreeNode(weight=doc["weight"])
    return TreeNode(feature=doc["feature"], threshold=doc["threshold"],
                    left=_tree_from_doc(doc["left"]),
                    right=_tree_from_doc(doc["right"]))
