"""Multinomial logistic regression and elastic-net linear regression."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .tree import LearnerError


@dataclass(eq=False)
class LinearModel:
    weights: np.ndarray  # (d,) for regression, (d, K) for logistic
    intercept: np.ndarray | float
    reg: dict = field(default_factory=dict)
    classes: np.ndarray | None = None
    n_features: int = 0
    feature_names: tuple = ()

    def _check(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.weights.shape[0]:
            raise LearnerError(f"schema mismatch: model expects {self.weights.shape[0]} features")
        return X

    def decision_function(self, X) -> np.ndarray:
        return self._check(X) @ self.weights + self.intercept

    def predict_proba(self, X) -> np.ndarray:
        if self.classes is None:
            raise LearnerError("predict_proba is for logistic models")
        return softmax(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        F = self.decision_function(X)
        if self.classes is None:
            return F
        return self.classes[np.argmax(F, axis=1)]


def softmax(F: np.ndarray) -> np.ndarray:
    Z = F - F.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def logistic_loss_grad(theta: np.ndarray, X: np.ndarray, Y: np.ndarray, l2: float):
    """Mean cross-entropy plus ``l2/2 * ||W||²`` (intercepts unpenalized) and its gradient.

    ``theta`` packs ``W`` (d x K, row-major) followed by the K intercepts.
    """
    n, d = X.shape
    K = Y.shape[1]
    W = theta[: d * K].reshape(d, K)
    b = theta[d * K:]
    F = X @ W + b
    Z = F - F.max(axis=1, keepdims=True)
    lse = np.log(np.exp(Z).sum(axis=1))
    loss = float(np.mean(lse - (Z * Y).sum(axis=1)) + 0.5 * l2 * np.sum(W * W))
    G = (softmax(F) - Y) / n
    gW = X.T @ G + l2 * W
    gb = G.sum(axis=0)
    return loss, np.concatenate([gW.ravel(), gb])


def logistic_fit(X, y, l2: float = 1.0, iters: int = 500, tol: float = 1e-8,
                 feature_names=()) -> LinearModel:
    """Softmax regression fitted by L-BFGS on the analytic gradient.

    Only classes present in ``y`` get a column, so absent classes can never
    be predicted.
    """
    X = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(X)):
        raise LearnerError("non-finite input")
    if l2 < 0:
        raise LearnerError("l2 must be >= 0")
    classes, yi = np.unique(np.asarray(y), return_inverse=True)
    if classes.size < 2:
        raise LearnerError("logistic regression needs at least 2 classes")
    n, d = X.shape
    K = classes.size
    Y = np.eye(K)[yi]
    theta0 = np.zeros(d * K + K)
    res = minimize(logistic_loss_grad, theta0, args=(X, Y, l2), jac=True, method="L-BFGS-B",
                   options={"maxiter": iters, "gtol": tol, "ftol": 1e-15})
    W = res.x[: d * K].reshape(d, K)
    b = res.x[d * K:]
    return LinearModel(W, b, {"kind": "logistic", "l2": l2, "iters": iters, "converged": bool(res.success)},
                       classes, d, tuple(feature_names))


def elastic_net_fit(X, y, alpha: float = 1.0, l1_ratio: float = 0.5, iters: int = 10000,
                    tol: float = 1e-10, feature_names=()) -> LinearModel:
    """Cyclic coordinate descent on

        1/(2n) ||y - Xw - b||² + alpha * l1_ratio * ||w||_1 + alpha * (1 - l1_ratio)/2 * ||w||²

    with an unpenalized intercept (handled by centering). ``l1_ratio=0`` is
    ridge, ``1`` is lasso. Stops when the largest coefficient change in a
    sweep falls below ``tol`` times the largest coefficient.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise LearnerError("non-finite input")
    if alpha < 0 or not 0 <= l1_ratio <= 1:
        raise LearnerError("need alpha >= 0 and l1_ratio in [0, 1]")
    n, d = X.shape
    xm, ym = X.mean(axis=0), y.mean()
    Xc, yc = X - xm, y - ym
    col_sq = (Xc**2).sum(axis=0) / n
    l1 = alpha * l1_ratio
    l2 = alpha * (1.0 - l1_ratio)
    w = np.zeros(d)
    r = yc.copy()
    for sweep in range(iters):
        max_dw = 0.0
        for j in range(d):
            if col_sq[j] == 0:
                continue
            old = w[j]
            rho = Xc[:, j] @ r / n + col_sq[j] * old
            new = np.sign(rho) * max(abs(rho) - l1, 0.0) / (col_sq[j] + l2)
            if new != old:
                r -= Xc[:, j] * (new - old)
                w[j] = new
                max_dw = max(max_dw, abs(new - old))
        if max_dw <= tol * max(1.0, np.abs(w).max()):
            break
    return LinearModel(w, float(ym - xm @ w),
                       {"kind": "elastic_net", "alpha": alpha, "l1_ratio": l1_ratio, "sweeps": sweep + 1},
                       None, d, tuple(feature_names))
