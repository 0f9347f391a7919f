"""Ensembled supervised classifiers: one calibrated SVM per tag.

Each tag gets a binary soft-margin SVM (linear or squared-exponential
kernel) trained one-vs-rest, solved in the dual with SMO using
second-order working-set selection. Decision values are mapped to
probabilities with Platt scaling fitted on out-of-fold decisions. At
prediction time, probabilities inside an exclusion group are divided by
their sum whenever that sum exceeds one.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ._serial import dec, enc
from .errors import EscError
from .vocab import TagVocabulary, group_index

log = logging.getLogger(__name__)

KERNELS = ("linear", "squared_exponential")


@dataclass
class EscOptions:
    kernel: str = "squared_exponential"
    gamma: float | None = None  # 1 / n_features when None
    C: float = 1.0
    tol: float = 1e-6
    max_iter: int = 100_000
    calibration_folds: int = 3
    threads: int = 1


# -- kernels -----------------------------------------------------------------


def kernel_matrix(A: np.ndarray, B: np.ndarray, kernel: str, gamma: float = 1.0) -> np.ndarray:
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    if kernel == "linear":
        return A @ B.T
    if kernel == "squared_exponential":
        sq = np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :] - 2.0 * (A @ B.T)
        return np.exp(-gamma * np.maximum(sq, 0.0))
    raise EscError("bad_kernel", f"unknown kernel {kernel!r}")


# -- SVM ---------------------------------------------------------------------


@dataclass
class SvmModel:
    """Decision ``f(x) = sum_i coef_i k(sv_i, x) + bias``; linear also keeps ``w``."""

    kernel: str
    gamma: float
    C: float
    bias: float
    coef: np.ndarray
    support: np.ndarray
    support_index: np.ndarray
    weights: np.ndarray | None = None
    iterations: int = 0
    converged: bool = True

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.kernel == "linear":
            return X @ self.weights + self.bias
        if len(self.coef) == 0:
            return np.full(len(X), self.bias)
        return kernel_matrix(X, self.support, self.kernel, self.gamma) @ self.coef + self.bias


def smo(K: np.ndarray, y: np.ndarray, C: float, tol: float = 1e-6, max_iter: int = 100_000, alpha0=None):
    """Solve the soft-margin dual for a precomputed kernel.

    Returns ``(alpha, bias, iterations, converged)``. ``alpha0`` warm-starts
    the solver and must satisfy ``0 <= alpha <= C`` and ``y @ alpha == 0``.
    """
    n = len(y)
    alpha = np.zeros(n) if alpha0 is None else np.clip(np.asarray(alpha0, dtype=np.float64), 0.0, C)
    diag = np.diag(K).copy()
    G = y * (K @ (alpha * y)) - 1.0
    it = 0
    converged = False
    while it < max_iter:
        score = -y * G
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
        if not up.any() or not low.any():
            converged = True
            break
        i = int(np.flatnonzero(up)[np.argmax(score[up])])
        m_up = score[i]
        cand = low & (score < m_up)
        if not cand.any() or m_up - score[low].min() < tol:
            converged = True
            break
        b = m_up - score
        a = diag[i] + diag - 2.0 * K[i]
        a = np.where(a > 1e-12, a, 1e-12)
        obj = np.where(cand, -(b * b) / a, np.inf)
        j = int(np.argmin(obj))
        lam = b[j] / a[j]
        lam = min(lam, C - alpha[i] if y[i] > 0 else alpha[i])
        lam = min(lam, alpha[j] if y[j] > 0 else C - alpha[j])
        alpha[i] += y[i] * lam
        alpha[j] -= y[j] * lam
        # snap to the box so bound membership stays exact
        for t in (i, j):
            if alpha[t] < 1e-14 * C:
                alpha[t] = 0.0
            elif alpha[t] > C * (1 - 1e-14):
                alpha[t] = C
        G += lam * y * (K[:, i] - K[:, j])
        it += 1

    score = -y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        bias = float(np.mean(score[free]))
    else:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
        hi = score[up].max() if up.any() else score[low].min()
        lo = score[low].min() if low.any() else hi
        bias = float((hi + lo) / 2.0)
    return alpha, bias, it, converged


def train_svm(
    X,
    y,
    kernel: str = "squared_exponential",
    C: float = 1.0,
    gamma: float | None = None,
    tol: float = 1e-6,
    max_iter: int = 100_000,
    alpha0=None,
    K: np.ndarray | None = None,
) -> SvmModel:
    """Train a binary SVM; ``y`` holds labels in {0,1} or {-1,+1}."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.where(np.asarray(y) > 0, 1.0, -1.0)
    if len(X) != len(y):
        raise EscError("shape", f"{len(X)} rows but {len(y)} labels")
    if len(X) < 2 or np.all(y == y[0]):
        raise EscError("single_class", "both classes are required to train an SVM")
    if kernel not in KERNELS:
        raise EscError("bad_kernel", f"unknown kernel {kernel!r}")
    if C <= 0:
        raise EscError("params", "C must be positive")
    gamma = 1.0 / X.shape[1] if gamma is None else float(gamma)
    if kernel == "squared_exponential" and gamma <= 0:
        raise EscError("params", "gamma must be positive")
    if K is None:
        K = kernel_matrix(X, X, kernel, gamma)
    alpha, bias, it, ok = smo(K, y, C, tol, max_iter, alpha0)
    if not ok:
        log.debug("SMO stopped at the iteration budget (%d)", max_iter)
    sv = np.flatnonzero(alpha > 0)
    coef = alpha[sv] * y[sv]
    weights = coef @ X[sv] if kernel == "linear" else None
    if kernel == "linear" and len(sv) == 0:
        weights = np.zeros(X.shape[1])
    return SvmModel(kernel, gamma, float(C), bias, coef, X[sv], sv, weights, it, ok)


def dual_alphas(model: SvmModel, n: int, y) -> np.ndarray:
    """Recover the full dual vector over ``n`` training rows (for warm starts)."""
    alpha = np.zeros(n)
    alpha[model.support_index] = np.abs(model.coef)
    return alpha


def primal_objective(coef, bias, K, y, C):
    """Soft-margin objective in kernel-expansion form and its subgradient.

    ``J = 0.5 coef' K coef + C sum_i max(0, 1 - y_i (K coef + bias)_i)``.
    Returns ``(J, grad_coef, grad_bias)``.
    """
    y = np.where(np.asarray(y) > 0, 1.0, -1.0)
    f = K @ coef + bias
    slack = 1.0 - y * f
    active = slack > 0
    J = 0.5 * coef @ K @ coef + C * np.sum(slack[active])
    ya = np.where(active, y, 0.0)
    grad_coef = K @ coef - C * (K @ ya)
    grad_bias = -C * np.sum(ya)
    return float(J), grad_coef, float(grad_bias)


def linear_primal_objective(w, bias, X, y, C):
    """``0.5 |w|^2 + C sum hinge`` with subgradient, for the linear form."""
    y = np.where(np.asarray(y) > 0, 1.0, -1.0)
    slack = 1.0 - y * (X @ w + bias)
    active = slack > 0
    ya = np.where(active, y, 0.0)
    J = 0.5 * w @ w + C * np.sum(slack[active])
    return float(J), w - C * (ya @ X), float(-C * np.sum(ya))


def svm_objective(model: SvmModel, X, y) -> float:
    """Primal objective of a trained model on its training data."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    coef = np.zeros(len(X))
    coef[model.support_index] = model.coef
    K = kernel_matrix(X, X, model.kernel, model.gamma)
    return primal_objective(coef, model.bias, K, y, model.C)[0]


# -- calibration -------------------------------------------------------------


@dataclass
class Calibrator:
    """``kind == "platt"``: p = 1 / (1 + exp(a*d + b)).

    ``kind == "linear"`` is the flagged fallback p = clip(a*d + b, 0, 1).
    """

    kind: str
    a: float
    b: float
    flagged: bool = False

    def __call__(self, d) -> np.ndarray:
        d = np.asarray(d, dtype=np.float64)
        if self.kind == "linear":
            return np.clip(self.a * d + self.b, 0.0, 1.0)
        z = self.a * d + self.b
        # stable logistic of -z
        out = np.empty_like(z)
        pos = z >= 0
        ez = np.exp(-z[pos])
        out[pos] = ez / (1.0 + ez)
        out[~pos] = 1.0 / (1.0 + np.exp(z[~pos]))
        return out


def fit_platt(decisions, y, max_iter: int = 100) -> Calibrator:
    """Platt scaling via Newton's method with backtracking (Lin, Lin & Weng)."""
    f = np.asarray(decisions, dtype=np.float64)
    y = np.asarray(y) > 0
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    prevalence = n_pos / len(y) if len(y) else 0.0
    if n_pos == 0 or n_neg == 0:
        raise EscError("single_class", "calibration needs both classes")
    spread = f.max() - f.min()
    if spread <= 1e-12 * max(1.0, np.abs(f).max()):
        return Calibrator("linear", 0.0, prevalence, flagged=True)

    hi_t = (n_pos + 1.0) / (n_pos + 2.0)
    lo_t = 1.0 / (n_neg + 2.0)
    t = np.where(y, hi_t, lo_t)
    A, B = 0.0, float(np.log((n_neg + 1.0) / (n_pos + 1.0)))
    min_step, sigma, eps = 1e-10, 1e-12, 1e-5

    def fval(A, B):
        z = f * A + B
        return float(np.sum(np.where(z >= 0, t * z + np.log1p(np.exp(-z)), (t - 1) * z + np.log1p(np.exp(z)))))

    fv = fval(A, B)
    for _ in range(max_iter):
        z = f * A + B
        p = np.where(z >= 0, np.exp(-z) / (1 + np.exp(-z)), 1 / (1 + np.exp(z)))
        q = 1.0 - p
        d2 = p * q
        h11 = sigma + np.sum(f * f * d2)
        h22 = sigma + np.sum(d2)
        h21 = np.sum(f * d2)
        d1 = t - p
        g1 = np.sum(f * d1)
        g2 = np.sum(d1)
        if abs(g1) < eps and abs(g2) < eps:
            break
        det = h11 * h22 - h21 * h21
        dA = -(h22 * g1 - h21 * g2) / det
        dB = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * dA + g2 * dB
        step = 1.0
        while step >= min_step:
            nA, nB = A + step * dA, B + step * dB
            nf = fval(nA, nB)
            if nf < fv + 1e-4 * step * gd:
                A, B, fv = nA, nB, nf
                break
            step /= 2.0
        else:
            break
    if np.isfinite(A) and np.isfinite(B) and A < 0:
        return Calibrator("platt", float(A), float(B))
    return _linear_fallback(f, prevalence)


def _linear_fallback(f: np.ndarray, prevalence: float) -> Calibrator:
    slope = 1.0 / (f.max() - f.min())
    return Calibrator("linear", float(slope), float(prevalence - slope * f.mean()), flagged=True)


def calibrate(model: SvmModel, X, y) -> Calibrator:
    return fit_platt(model.decision_function(X), y)


# -- ensemble ----------------------------------------------------------------


@dataclass
class TagClassifier:
    tag: str
    svm: SvmModel | None
    calibrator: Calibrator | None
    constant: float | None = None
    flag: str | None = None  # absent | single_class | calibration_fallback

    def probability(self, X: np.ndarray) -> np.ndarray:
        if self.svm is None:
            return np.full(len(X), self.constant)
        return self.calibrator(self.svm.decision_function(X))


@dataclass
class EscModel:
    classifiers: list[TagClassifier]
    groups: list[list[int]]
    n_features: int
    vocab_fingerprint: str
    options: EscOptions = field(default_factory=EscOptions)

    @property
    def tags(self) -> list[str]:
        return [c.tag for c in self.classifiers]


def stratified_folds(y: np.ndarray, k: int) -> np.ndarray:
    """Deterministic round-robin fold id per row, stratified by class."""
    fold = np.empty(len(y), dtype=np.int64)
    for cls in (True, False):
        idx = np.flatnonzero(y == cls)
        fold[idx] = np.arange(len(idx)) % k
    return fold


def out_of_fold_decisions(X, y, opts: EscOptions, K: np.ndarray, full: SvmModel) -> np.ndarray:
    k = min(opts.calibration_folds, int(y.sum()), int((~y).sum()))
    if k < 2:
        return full.decision_function(X)
    fold = stratified_folds(y, k)
    out = np.empty(len(y))
    for f in range(k):
        tr, te = fold != f, fold == f
        if y[tr].all() or not y[tr].any():
            out[te] = full.decision_function(X[te])
            continue
        m = train_svm(
            X[tr], y[tr], opts.kernel, opts.C, full.gamma, opts.tol, opts.max_iter, K=K[np.ix_(tr, tr)]
        )
        out[te] = m.decision_function(X[te])
    return out


def _train_tag(tag, X, y, opts, K, warm: TagClassifier | None, warm_iter: int | None) -> TagClassifier:
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == len(y):
        const = 0.0 if n_pos == 0 else 1.0
        return TagClassifier(tag, None, None, const, "absent" if n_pos == 0 else "single_class")
    alpha0, budget = None, opts.max_iter
    if warm is not None and warm.svm is not None:
        alpha0 = dual_alphas(warm.svm, len(y), y)
        budget = warm_iter or opts.max_iter
    svm = train_svm(X, y, opts.kernel, opts.C, opts.gamma, opts.tol, budget, alpha0=alpha0, K=K)
    cal = fit_platt(out_of_fold_decisions(X, y, opts, K, svm), y)
    return TagClassifier(tag, svm, cal, None, "calibration_fallback" if cal.flagged else None)


def train_esc(
    X,
    Y,
    vocab: TagVocabulary,
    options: EscOptions | None = None,
    warm_start: EscModel | None = None,
    warm_iter: int | None = None,
) -> EscModel:
    """One-vs-rest SVM + calibrator per vocabulary tag.

    Tags with no positive (or no negative) training rows get a constant
    probability classifier and a flag instead of raising.
    """
    from .forest import tag_matrix

    opts = options or EscOptions()
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if len(X) == 0 or len(X) != len(Y):
        raise EscError("empty", "training set is empty or misaligned with labels")
    if opts.gamma is None:
        opts = replace(opts, gamma=1.0 / X.shape[1])
    Yb = tag_matrix(Y, vocab.names) > 0
    K = kernel_matrix(X, X, opts.kernel, opts.gamma)
    warm = {c.tag: c for c in warm_start.classifiers} if warm_start is not None else {}

    def job(j):
        tag = vocab.names[j]
        return _train_tag(tag, X, Yb[:, j], opts, K, warm.get(tag), warm_iter)

    if opts.threads > 1:
        with ThreadPoolExecutor(opts.threads) as ex:
            classifiers = list(ex.map(job, range(len(vocab))))
    else:
        classifiers = [job(j) for j in range(len(vocab))]
    for c in classifiers:
        if c.flag:
            log.info("ESC tag %s flagged: %s", c.tag, c.flag)
    return EscModel(classifiers, group_index(vocab), X.shape[1], vocab.fingerprint, opts)


def raw_probabilities(esc: EscModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != esc.n_features:
        raise EscError("dimension_mismatch", f"expected {esc.n_features} features, got {X.shape[1]}")
    return np.column_stack([c.probability(X) for c in esc.classifiers])


def normalize_groups(P: np.ndarray, groups: list[list[int]]) -> np.ndarray:
    """Divide each exclusion group's probabilities by their sum when it exceeds 1."""
    P = np.array(P, dtype=np.float64, copy=True)
    for g in groups:
        if len(g) < 2:
            continue
        s = P[:, g].sum(axis=1)
        over = s > 1.0
        if over.any():
            P[np.ix_(over, g)] = P[np.ix_(over, g)] / s[over, None]
    return P


def predict_esc(esc: EscModel, x, fingerprint: str | None = None):
    """Group-normalized probabilities.

    A single vector returns ``{tag: probability}``; a matrix returns an
    ``(n, n_tags)`` array in vocabulary order.
    """
    if fingerprint is not None and fingerprint != esc.vocab_fingerprint:
        raise EscError("fingerprint_mismatch", "vocabulary differs from the one the ESC was trained on")
    X = getattr(x, "values", x)
    single = np.ndim(X) == 1
    P = normalize_groups(raw_probabilities(esc, X), esc.groups)
    if single:
        return dict(zip(esc.tags, P[0].tolist()))
    return P


# -- serialization -----------------------------------------------------------


def _svm_to_dict(m: SvmModel) -> dict:
    return {
        "kernel": m.kernel,
        "gamma": enc(m.gamma),
        "C": enc(m.C),
        "bias": enc(m.bias),
        "coef": enc(m.coef),
        "support": enc(m.support) if m.kernel != "linear" else [],
        "support_index": m.support_index.tolist(),
        "weights": enc(m.weights) if m.weights is not None else None,
        "iterations": m.iterations,
        "converged": m.converged,
    }


def _svm_from_dict(d: dict, n_features: int) -> SvmModel:
    support = dec(d["support"]).reshape(-1, n_features)
    return SvmModel(
        d["kernel"],
        float(d["gamma"]),
        float(d["C"]),
        float(d["bias"]),
        dec(d["coef"]),
        support,
        np.array(d["support_index"], dtype=np.int64),
        dec(d["weights"]) if d["weights"] is not None else None,
        d["iterations"],
        d["converged"],
    )


def esc_to_dict(esc: EscModel) -> dict:
    o = esc.options
    return {
        "n_features": esc.n_features,
        "vocab_fingerprint": esc.vocab_fingerprint,
        "groups": esc.groups,
        "options": {
            "kernel": o.kernel,
            "gamma": enc(o.gamma) if o.gamma is not None else None,
            "C": enc(o.C),
            "tol": enc(o.tol),
            "max_iter": o.max_iter,
            "calibration_folds": o.calibration_folds,
        },
        "classifiers": [
            {
                "tag": c.tag,
                "svm": _svm_to_dict(c.svm) if c.svm is not None else None,
                "calibrator": (
                    {"kind": c.calibrator.kind, "a": enc(c.calibrator.a), "b": enc(c.calibrator.b),
                     "flagged": c.calibrator.flagged}
                    if c.calibrator is not None else None
                ),
                "constant": enc(c.constant) if c.constant is not None else None,
                "flag": c.flag,
            }
            for c in esc.classifiers
        ],
    }


def esc_from_dict(d: dict) -> EscModel:
    o = d["options"]
    opts = EscOptions(
        kernel=o["kernel"],
        gamma=float(o["gamma"]) if o["gamma"] is not None else None,
        C=float(o["C"]),
        tol=float(o["tol"]),
        max_iter=o["max_iter"],
        calibration_folds=o["calibration_folds"],
    )
    classifiers = []
    for c in d["classifiers"]:
        cal = c["calibrator"]
        classifiers.append(
            TagClassifier(
                c["tag"],
                _svm_from_dict(c["svm"], d["n_features"]) if c["svm"] is not None else None,
                Calibrator(cal["kind"], float(cal["a"]), float(cal["b"]), cal["flagged"]) if cal else None,
                float(c["constant"]) if c["constant"] is not None else None,
                c["flag"],
            )
        )
    return EscModel(classifiers, [list(g) for g in d["groups"]], d["n_features"], d["vocab_fingerprint"], opts)
