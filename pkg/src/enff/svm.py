"""Binary soft-margin SVM with an RBF kernel, trained by SMO, with Platt scaling.

The solver follows the usual decomposition scheme: keep the gradient of
the dual objective, pick the maximal violating pair using second-order
information, solve the two-variable subproblem analytically, stop when
the KKT violation drops below ``tol``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .domain import EnffError, GridLabel

log = logging.getLogger(__name__)

TAU = 1e-12
KKT_TOL = 1e-3


def rbf_kernel(X: np.ndarray, Y: np.ndarray, gamma: float) -> np.ndarray:
    X = np.atleast_2d(X)
    Y = np.atleast_2d(Y)
    d2 = (
        np.sum(X * X, axis=1)[:, None]
        + np.sum(Y * Y, axis=1)[None, :]
        - 2.0 * X @ Y.T
    )
    return np.exp(-gamma * np.maximum(d2, 0.0))


@dataclass
class SmoResult:
    alpha: np.ndarray
    bias: float
    iterations: int
    objective: float  # dual objective, maximisation form: sum(a) - 0.5 a'Qa


def smo(K: np.ndarray, y: np.ndarray, C: float, tol: float = KKT_TOL, max_iter: int | None = None) -> SmoResult:
    """Solve ``max sum(a) - 1/2 a'Qa`` s.t. ``0 <= a <= C``, ``y'a = 0``, ``Q = yy' * K``.

    Ties in working set selection go to the lowest index.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    if max_iter is None:
        max_iter = max(10_000_000, 100 * n)
    Q = (y[:, None] * y[None, :]) * K
    QD = np.diag(K).copy()
    alpha = np.zeros(n)
    G = -np.ones(n)  # gradient of 1/2 a'Qa - e'a
    pos = y > 0

    it = 0
    while it < max_iter:
        at_upper = alpha >= C
        at_lower = alpha <= 0
        up = np.where(pos, ~at_upper, ~at_lower)
        low = np.where(pos, ~at_lower, ~at_upper)
        yG = -y * G
        if not np.any(up) or not np.any(low):
            break
        cand = np.where(up, yG, -np.inf)
        i = int(np.argmax(cand))
        g_max = cand[i]
        g_min = np.min(np.where(low, yG, np.inf))
        if g_max - g_min < tol:
            break

        b = g_max - yG
        quad = QD[i] + QD - 2.0 * K[i]
        quad = np.where(quad > 0, quad, TAU)
        gain = np.where(low & (b > 0), -(b * b) / quad, np.inf)
        j = int(np.argmin(gain))
        if not np.isfinite(gain[j]):
            break

        ai_old, aj_old = alpha[i], alpha[j]
        if y[i] != y[j]:
            qc = QD[i] + QD[j] + 2.0 * Q[i, j]
            qc = qc if qc > 0 else TAU
            delta = (-G[i] - G[j]) / qc
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            qc = QD[i] + QD[j] - 2.0 * Q[i, j]
            qc = qc if qc > 0 else TAU
            delta = (G[i] - G[j]) / qc
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        G += Q[i] * (ai - ai_old) + Q[j] * (aj - aj_old)
        it += 1
    else:
        log.warning("SMO stopped at the iteration limit (%d) before reaching tolerance", max_iter)

    bias = -_rho(alpha, y, G, C)
    objective = float(np.sum(alpha) - 0.5 * alpha @ Q @ alpha)
    return SmoResult(alpha, bias, it, objective)


def _rho(alpha, y, G, C) -> float:
    yG = y * G
    free = (alpha > 0) & (alpha < C)
    if np.any(free):
        return float(np.mean(yG[free]))
    at_upper = alpha >= C
    # bounds on rho from the KKT conditions of bounded variables
    ub_mask = np.where(at_upper, y < 0, y > 0)
    lb_mask = ~ub_mask
    ub = np.min(yG[ub_mask]) if np.any(ub_mask) else np.inf
    lb = np.max(yG[lb_mask]) if np.any(lb_mask) else -np.inf
    if not np.isfinite(ub):
        return float(lb)
    if not np.isfinite(lb):
        return float(ub)
    return float(0.5 * (ub + lb))


def platt_fit(
    decision: np.ndarray, y: np.ndarray, max_iter: int = 100, fit_intercept: bool = True
) -> tuple[float, float]:
    """Fit ``P(y=+1 | f) = 1 / (1 + exp(A f + B))`` by regularised maximum likelihood.

    Targets are smoothed towards the class priors, and the Newton
    iteration uses a backtracking line search. With ``fit_intercept=False``
    ``B`` stays 0, so ``f = 0`` maps to probability 1/2.
    """
    f = np.asarray(decision, dtype=float)
    y = np.asarray(y)
    n_pos = int(np.sum(y > 0))
    n_neg = y.size - n_pos
    t = np.where(y > 0, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))
    A = 0.0
    B = math.log((n_neg + 1.0) / (n_pos + 1.0)) if fit_intercept else 0.0

    def nll(a, b):
        z = f * a + b
        return float(np.sum(np.where(z >= 0, t * z, (t - 1) * z) + np.log1p(np.exp(-np.abs(z)))))

    fval = nll(A, B)
    for _ in range(max_iter):
        p = platt_probability(f, A, B)
        d2 = p * (1.0 - p)
        d1 = t - p
        g1 = np.sum(f * d1)
        g2 = np.sum(d1) if fit_intercept else 0.0
        if abs(g1) < 1e-5 and abs(g2) < 1e-5:
            break
        h11 = 1e-12 + np.sum(f * f * d2)
        if fit_intercept:
            h22 = 1e-12 + np.sum(d2)
            h21 = np.sum(f * d2)
            det = h11 * h22 - h21 * h21
            dA = -(h22 * g1 - h21 * g2) / det
            dB = -(-h21 * g1 + h11 * g2) / det
        else:
            dA, dB = -g1 / h11, 0.0
        gd = g1 * dA + g2 * dB
        step = 1.0
        while step >= 1e-10:
            nA, nB = A + step * dA, B + step * dB
            nf = nll(nA, nB)
            if nf < fval + 1e-4 * step * gd:
                A, B, fval = nA, nB, nf
                break
            step /= 2
        else:
            log.debug("Platt line search failed")
            break
    return float(A), float(B)


def platt_probability(decision, a: float, b: float) -> np.ndarray:
    z = np.asarray(decision, dtype=float) * a + b
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, e / (1 + e), 1 / (1 + e))


@dataclass
class BinarySvmModel:
    support_vectors: np.ndarray
    dual_coeffs: np.ndarray  # alpha * y
    bias: float
    rbf_gamma: float
    platt_a: float
    platt_b: float
    class_pair: tuple[GridLabel, GridLabel] | None = None
    C: float = 10.0

    def decision(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.support_vectors.size == 0:
            return np.full(X.shape[0], self.bias)
        return rbf_kernel(X, self.support_vectors, self.rbf_gamma) @ self.dual_coeffs + self.bias

    def probability(self, X) -> np.ndarray:
        """Posterior probability of the first class of the pair."""
        return platt_probability(self.decision(X), self.platt_a, self.platt_b)

    def predict_sign(self, X) -> np.ndarray:
        return np.where(self.decision(X) >= 0, 1, -1)

    def swapped(self) -> BinarySvmModel:
        pair = None if self.class_pair is None else (self.class_pair[1], self.class_pair[0])
        return BinarySvmModel(
            self.support_vectors, -self.dual_coeffs, -self.bias, self.rbf_gamma,
            self.platt_a, -self.platt_b, pair, self.C,
        )

    def to_dict(self) -> dict:
        return {
            "class_pair": None if self.class_pair is None else [c.value for c in self.class_pair],
            "support_vectors": self.support_vectors.tolist(),
            "dual_coeffs": self.dual_coeffs.tolist(),
            "bias": self.bias,
            "rbf_gamma": self.rbf_gamma,
            "platt_a": self.platt_a,
            "platt_b": self.platt_b,
            "C": self.C,
        }

    @classmethod
    def from_dict(cls, d: dict) -> BinarySvmModel:
        pair = d.get("class_pair")
        sv = np.array(d["support_vectors"], dtype=float)
        return cls(
            support_vectors=sv.reshape(len(d["dual_coeffs"]), -1) if sv.size else sv.reshape(0, 0),
            dual_coeffs=np.array(d["dual_coeffs"], dtype=float),
            bias=float(d["bias"]),
            rbf_gamma=float(d["rbf_gamma"]),
            platt_a=float(d["platt_a"]),
            platt_b=float(d["platt_b"]),
            class_pair=None if pair is None else (GridLabel.parse(pair[0]), GridLabel.parse(pair[1])),
            C=float(d.get("C", 10.0)),
        )


def _canonical_rows(X: np.ndarray) -> np.ndarray:
    """Row order that depends only on the set of rows, not their input order."""
    return np.lexsort(X.T[::-1]) if X.size else np.arange(len(X))


def train_binary(
    positives,
    negatives,
    C: float = 10.0,
    gamma: float = 1.0,
    tol: float = KKT_TOL,
    class_pair: tuple[GridLabel, GridLabel] | None = None,
) -> BinarySvmModel:
    """Train an RBF SVM separating ``positives`` (+1) from ``negatives`` (-1).

    Inputs are sorted into a canonical order first, and the two classes
    are always solved in a canonical orientation, so the result does not
    depend on presentation order and swapping the classes exactly negates
    the decision function.
    """
    P = np.atleast_2d(np.asarray(positives, dtype=float))
    N = np.atleast_2d(np.asarray(negatives, dtype=float))
    if len(P) < 2 or len(N) < 2:
        raise EnffError("each class needs at least 2 samples")
    if P.shape[1] != N.shape[1]:
        raise EnffError("classes have different feature dimensions")
    if C <= 0 or gamma <= 0:
        raise EnffError("C and gamma must be positive")
    X = np.vstack([P, N])
    if np.all(X == X[0]):
        raise EnffError("degenerate data: all training points are identical, no separating solution")

    P = P[_canonical_rows(P)]
    N = N[_canonical_rows(N)]
    flip = _orientation_key(P) > _orientation_key(N)
    if flip:
        P, N = N, P

    X = np.vstack([P, N])
    y = np.concatenate([np.ones(len(P)), -np.ones(len(N))])
    K = rbf_kernel(X, X, gamma)
    res = smo(K, y, C, tol)
    sv = res.alpha > 0
    dec = K @ (res.alpha * y) + res.bias
    a, b = platt_fit(dec, y)
    model = BinarySvmModel(
        support_vectors=X[sv].copy(),
        dual_coeffs=(res.alpha * y)[sv],
        bias=res.bias,
        rbf_gamma=float(gamma),
        platt_a=a,
        platt_b=b,
        class_pair=None,
        C=float(C),
    )
    if flip:
        model = model.swapped()
    model.class_pair = class_pair
    return model


def _orientation_key(X: np.ndarray) -> tuple:
    return (len(X), tuple(X.ravel().tolist()))
