"""Independent reference implementations used as test oracles."""

import numpy as np


def fft_peak_frequency(x, fs, nfft=2**18):
    """Zero-padded FFT peak refined by quadratic interpolation on magnitudes."""
    X = np.abs(np.fft.rfft(np.asarray(x, float), nfft))
    k = int(np.argmax(X[1:-1])) + 1
    a, b, c = X[k - 1], X[k], X[k + 1]
    d = 0.5 * (a - c) / (a - 2 * b + c)
    return (k + d) * fs / nfft


def quartiles_loop(x):
    """Median-of-halves quartiles; the middle element of an odd list belongs to neither half."""
    s = sorted(float(v) for v in x)
    n = len(s)

    def med(v):
        m = len(v)
        return v[m // 2] if m % 2 else 0.5 * (v[m // 2 - 1] + v[m // 2])

    lower = s[: n // 2]
    upper = s[(n + 1) // 2 :]
    return med(lower), med(s), med(upper)


def crest_factor_loop(x):
    peak = 0.0
    sq = 0.0
    for v in x:
        peak = max(peak, abs(v))
        sq += v * v
    return peak / (sq / len(x)) ** 0.5


def waveform_length_loop(x):
    total = 0.0
    for j in range(len(x) - 1):
        total += abs(x[j + 1] - x[j])
    return total


def modified_mav_loop(x):
    total = 0.0
    for v in x:
        total += 0.5 * abs(v)
    return total / len(x)


def autocorr_loop(x):
    n = len(x)
    return [sum(x[j] * x[j + k] for j in range(n - k)) / n for k in range(n)]


def log_var_autocorr_loop(x):
    r = autocorr_loop([float(v) for v in x])
    m = sum(r) / len(r)
    return float(np.log(sum((v - m) ** 2 for v in r) / len(r)))


def least_squares_ar(x, order):
    """AR coefficients in predictor form (x[k] = sum g_i x[k-i] + e) and residual variance."""
    x = np.asarray(x, float)
    A = np.column_stack([x[order - i : len(x) - i] for i in range(1, order + 1)])
    b = x[order:]
    g, *_ = np.linalg.lstsq(A, b, rcond=None)
    return g, float(np.mean((b - A @ g) ** 2))


def svm_dual_qp(K, y, C):
    """Soft-margin SVM dual solved with a general QP solver; returns the maximised objective."""
    import cvxopt

    cvxopt.solvers.options["show_progress"] = False
    cvxopt.solvers.options["abstol"] = 1e-10
    cvxopt.solvers.options["reltol"] = 1e-10
    cvxopt.solvers.options["feastol"] = 1e-10
    n = len(y)
    y = np.asarray(y, float)
    Q = np.outer(y, y) * K
    P = cvxopt.matrix(Q + 1e-12 * np.eye(n))
    q = cvxopt.matrix(-np.ones(n))
    G = cvxopt.matrix(np.vstack([-np.eye(n), np.eye(n)]))
    h = cvxopt.matrix(np.concatenate([np.zeros(n), np.full(n, C)]))
    A = cvxopt.matrix(y.reshape(1, -1))
    sol = cvxopt.solvers.qp(P, q, G, h, A, cvxopt.matrix(0.0))
    a = np.array(sol["x"]).ravel()
    return float(a.sum() - 0.5 * a @ Q @ a), a
