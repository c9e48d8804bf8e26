"""Maximum-likelihood estimators and tests used by the analysis pipeline.

Contains the random-intercept linear mixed model (fixed effects:
factuality, screen position, gender, headline length), Wald tests with
Bonferroni gating, and the no-intercept logistic regression that backs the
factuality classifier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import ConfigError, DegenerateInputError, DesignError
from .gaze import MeasureRecord

#: Fixed-effect names in design-matrix column order.
COEF_NAMES = ("intercept", "c_true", "c_middle", "c_bottom", "c_male", "c_length")

Z_95 = 1.96  # normal quantile for the reported 95% intervals


def zscore(values: Sequence[float]) -> np.ndarray:
    """Standardize to sample mean 0 and sample variance 1 (denominator n-1)."""
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise DegenerateInputError("zscore needs a 1-D vector of length >= 2")
    sd = x.std(ddof=1)
    if sd == 0.0 or not np.isfinite(sd):
        raise DegenerateInputError("zscore input has zero variance")
    return (x - x.mean()) / sd


def wald_test(coef: float, se: float) -> tuple[float, float]:
    """Wald z statistic and two-sided normal p-value for one coefficient."""
    if se <= 0:
        raise DegenerateInputError(f"standard error must be > 0, got {se}")
    z = coef / se
    p = math.erfc(abs(z) / math.sqrt(2.0))  # == 2 * (1 - Phi(|z|))
    return z, p


def bonferroni_gate(p_values: Sequence[float], family_alpha: float = 0.05) -> list[bool]:
    """Reject H0_i iff p_i < family_alpha / m (strict), m = number of tests."""
    p = list(p_values)
    for v in p:
        if not (0.0 <= v <= 1.0):
            raise ConfigError(f"p-value {v} outside [0, 1]")
    threshold = family_alpha / len(p)
    return [v < threshold for v in p]


@dataclass(frozen=True)
class DesignRow:
    """One observation of the mixed model: indicators, length, response."""

    i_true: int
    i_middle: int
    i_bottom: int
    i_male: int
    l: float
    participant_id: str
    y: float


def design_rows(
    records: Sequence[MeasureRecord],
    measure: str,
    standardize_response: bool = True,
) -> list[DesignRow]:
    """Build mixed-model rows for one measure from MeasureRecords.

    With standardize_response the chosen measure is z-scored globally over
    all records so coefficient scales are comparable across measures;
    synthetic records already in standardized units can skip it.
    """
    y = np.array([r.measure(measure) for r in records], dtype=float)
    if standardize_response:
        y = zscore(y)
    return [
        DesignRow(
            i_true=1 if r.label == "true_news" else 0,
            i_middle=1 if r.position == "middle" else 0,
            i_bottom=1 if r.position == "bottom" else 0,
            i_male=1 if r.gender == "male" else 0,
            l=r.length_norm,
            participant_id=r.participant_id,
            y=float(y[i]),
        )
        for i, r in enumerate(records)
    ]


@dataclass(frozen=True)
class MixedFitResult:
    """ML fit of the random-intercept model: coefficients plus inference."""

    names: tuple[str, ...]
    coefficients: np.ndarray
    standard_errors: np.ndarray
    z_values: np.ndarray
    p_values: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    sigma2_participant: float
    sigma2_residual: float
    log_likelihood: float
    converged: bool
    random_intercepts: dict[str, float]  # BLUPs, for diagnostics only

    def coefficient(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])

    def se(self, name: str) -> float:
        return float(self.standard_errors[self.names.index(name)])


class _GroupedData:
    """Per-participant blocks of (X, y) with the sufficient statistics the
    profiled likelihood needs: XtX, Xty, yty, column sums and group sizes."""

    def __init__(self, X: np.ndarray, y: np.ndarray, groups: Sequence[str]):
        order = np.argsort(np.asarray(groups, dtype=object), kind="stable")
        self.X = X[order]
        self.y = y[order]
        g = np.asarray(groups, dtype=object)[order]
        self.labels, starts = np.unique(g, return_index=True)
        bounds = np.r_[np.sort(starts), len(g)]
        self.slices = [slice(bounds[k], bounds[k + 1]) for k in range(len(self.labels))]
        self.sizes = np.array([s.stop - s.start for s in self.slices])
        self.n, self.p = X.shape
        # block-level sufficient statistics
        self.XtX = self.X.T @ self.X
        self.Xty = self.X.T @ self.y
        self.yty = float(self.y @ self.y)
        self.Xsum = np.stack([self.X[s].sum(axis=0) for s in self.slices])  # (m, p)
        self.ysum = np.array([float(self.y[s].sum()) for s in self.slices])  # (m,)


def _gls_profile(data: _GroupedData, s2p: float, s2e: float):
    """GLS coefficients and profiled log-likelihood for fixed variance components.

    Uses the closed-form inverse of each participant block
    V_i = s2e*I + s2p*J: V_i^{-1} = (I - w_i*J)/s2e with
    w_i = s2p / (s2e + n_i*s2p).
    """
    w = s2p / (s2e + data.sizes * s2p)  # (m,)
    A = data.XtX - (w[:, None] * data.Xsum).T @ data.Xsum
    c = data.Xty - (w * data.ysum) @ data.Xsum
    try:
        beta = np.linalg.solve(A, c)
    except np.linalg.LinAlgError:
        raise DesignError("design matrix is rank deficient") from None
    # residual quadratic form r' V^{-1} r via the same block identity
    rsum = data.ysum - data.Xsum @ beta
    rtr = data.yty - 2.0 * beta @ data.Xty + beta @ data.XtX @ beta
    quad = (rtr - float(w @ (rsum**2))) / s2e
    logdet = float(np.sum((data.sizes - 1) * math.log(s2e) + np.log(s2e + data.sizes * s2p)))
    ll = -0.5 * (data.n * math.log(2.0 * math.pi) + logdet + quad)
    cov_beta = np.linalg.inv(A / s2e)
    return beta, ll, cov_beta, w, rsum


_LOG_VAR_BOUNDS = (-30.0, 10.0)


def fit_mixed_model(rows: Sequence[DesignRow], max_iter: int = 500) -> MixedFitResult:
    """Fit the random-intercept mixed model by maximum likelihood.

    Fixed effects are solved by GLS given the variance components; the
    variance components maximize the profiled marginal log-likelihood,
    optimized quasi-Newton over log-variances (positivity by construction).
    The sigma2_participant ~ 0 boundary candidate is always evaluated, so
    the returned optimum is never worse than the plain OLS solution.
    """
    if not rows:
        raise DesignError("no rows to fit")
    X = np.array(
        [[1.0, r.i_true, r.i_middle, r.i_bottom, r.i_male, r.l] for r in rows], dtype=float
    )
    y = np.array([r.y for r in rows], dtype=float)
    groups = [r.participant_id for r in rows]
    data = _GroupedData(X, y, groups)
    if len(data.labels) < 2:
        raise DesignError("need at least 2 participants")
    if np.any(data.sizes < 2):
        small = data.labels[data.sizes < 2]
        raise DesignError(f"participants with fewer than 2 rows: {list(small)}")
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise DesignError("design matrix is rank deficient")

    def neg_profiled_ll(theta):
        s2p, s2e = np.exp(theta)
        _, ll, _, _, _ = _gls_profile(data, s2p, s2e)
        return -ll

    # moment-based starting point: OLS residual variance split between/within
    beta_ols, ll_ols, _, _, _ = _gls_profile(data, math.exp(_LOG_VAR_BOUNDS[0]), 1.0)
    resid = y - X @ beta_ols
    s2_total = max(float(resid @ resid) / max(len(y) - X.shape[1], 1), 1e-12)
    grp_means = np.array([float(resid[s].mean()) for s in data.slices])
    s2p_start = max(float(np.var(grp_means)), 1e-4 * s2_total)
    s2e_start = max(s2_total - s2p_start, 1e-4 * s2_total)

    starts = [
        np.log([s2p_start, s2e_start]),
        np.array([_LOG_VAR_BOUNDS[0], math.log(s2_total)]),  # OLS boundary candidate
    ]
    best = None
    converged = False
    for x0 in starts:
        res = minimize(
            neg_profiled_ll,
            x0,
            method="L-BFGS-B",
            bounds=[_LOG_VAR_BOUNDS, _LOG_VAR_BOUNDS],
            options={"maxiter": max_iter, "ftol": 1e-12, "gtol": 1e-9},
        )
        if best is None or res.fun < best.fun:
            best = res
            converged = bool(res.success)
    s2p, s2e = np.exp(best.x)
    beta, ll, cov_beta, w, rsum = _gls_profile(data, s2p, s2e)

    se = np.sqrt(np.diag(cov_beta))
    zs = beta / se
    ps = np.array([math.erfc(abs(z) / math.sqrt(2.0)) for z in zs])
    blups = s2p * rsum / (s2e + data.sizes * s2p)
    return MixedFitResult(
        names=COEF_NAMES,
        coefficients=beta,
        standard_errors=se,
        z_values=zs,
        p_values=ps,
        ci_low=beta - Z_95 * se,
        ci_high=beta + Z_95 * se,
        sigma2_participant=float(s2p),
        sigma2_residual=float(s2e),
        log_likelihood=float(ll),
        converged=converged,
        random_intercepts={str(lab): float(b) for lab, b in zip(data.labels, blups)},
    )


def format_fit_report(result: MixedFitResult, family_alpha: float = 0.05, n_tests: int = 5) -> str:
    """Aligned-text coefficient table: Coef., Std.Err., z, P>|z|, CI bounds.

    Coefficients with p below family_alpha / n_tests are flagged with '*'.
    """
    threshold = family_alpha / n_tests
    header = f"{'':<12}{'Coef.':>9} {'Std.Err.':>9} {'z':>9} {'P>|z|':>9} {'[0.025':>9} {'0.975]':>9}"
    lines = [header]
    for i, name in enumerate(result.names):
        p = result.p_values[i]
        star = " *" if p < threshold else ""
        p_text = "<0.001" if p < 0.001 else f"{p:.3f}"
        lines.append(
            f"{name:<12}{result.coefficients[i]:>9.3f} {result.standard_errors[i]:>9.3f} "
            f"{result.z_values[i]:>9.3f} {p_text:>9} {result.ci_low[i]:>9.3f} "
            f"{result.ci_high[i]:>9.3f}{star}"
        )
    lines.append(
        f"sigma2_participant {result.sigma2_participant:.6f}  "
        f"sigma2_residual {result.sigma2_residual:.6f}  "
        f"loglik {result.log_likelihood:.4f}  converged {result.converged}"
    )
    return "\n".join(lines)


@dataclass(frozen=True)
class LogisticFit:
    """No-intercept logistic regression fit."""

    coefficients: np.ndarray
    log_likelihood: float
    converged: bool
    ll_trace: tuple[float, ...]  # log-likelihood after each Newton step


def logistic_log_likelihood(X: np.ndarray, y: np.ndarray, coef: np.ndarray) -> float:
    """Bernoulli log-likelihood of sigmoid(X @ coef), numerically stable."""
    eta = X @ coef
    # log sigma(eta) = -log(1 + e^-eta); log(1 - sigma(eta)) = -eta - log(1 + e^-eta)
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def logistic_gradient(X: np.ndarray, y: np.ndarray, coef: np.ndarray) -> np.ndarray:
    """Gradient of the log-likelihood: X' (y - sigmoid(X @ coef))."""
    p = _sigmoid(X @ coef)
    return X.T @ (y - p)


def _sigmoid(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta, dtype=float)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


#: Perfect-separation guard: coefficients are capped at this magnitude.
COEF_CAP = 30.0


def fit_logistic_ml(
    features: np.ndarray,
    labels: np.ndarray,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> LogisticFit:
    """Fit logistic coefficients (no intercept) by maximum likelihood.

    Newton iterations with step halving, so the log-likelihood never
    decreases; stops when the gradient max-norm drops below tol. Under
    perfect separation coefficients diverge; they are capped at +-30 and
    the fit is flagged converged=False.
    """
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(labels, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"features rows {X.shape[0]} != labels {y.shape[0]}")
    if X.shape[1] < 1:
        raise ValueError("need at least one feature column")
    classes = np.unique(y)
    if not np.all(np.isin(classes, (0.0, 1.0))):
        raise ValueError("labels must be 0/1")
    if classes.size < 2:
        raise DegenerateInputError("both label classes must be present")

    coef = np.zeros(X.shape[1])
    ll = logistic_log_likelihood(X, y, coef)
    trace = [ll]
    converged = False
    for _ in range(max_iter):
        grad = logistic_gradient(X, y, coef)
        if np.max(np.abs(grad)) < tol:
            converged = True
            break
        p = _sigmoid(X @ coef)
        W = p * (1.0 - p)
        H = X.T @ (X * W[:, None])
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        # halve until the likelihood does not decrease
        scale = 1.0
        improved = False
        for _ in range(30):
            candidate = coef + scale * step
            ll_new = logistic_log_likelihood(X, y, candidate)
            if ll_new >= ll:
                improved = True
                break
            scale *= 0.5
        if not improved:
            break  # no ascent direction left at this precision
        coef = candidate
        ll = ll_new
        trace.append(ll)
        if np.max(np.abs(coef)) > COEF_CAP:
            # perfect separation: clip and flag rather than diverge
            coef = np.clip(coef, -COEF_CAP, COEF_CAP)
            ll = logistic_log_likelihood(X, y, coef)
            converged = False
            break
    return LogisticFit(
        coefficients=coef,
        log_likelihood=ll,
        converged=converged,
        ll_trace=tuple(trace),
    )


def predict_logistic(fit: LogisticFit, features: np.ndarray) -> float:
    """Probability sigmoid(features . coefficients) for one feature row."""
    x = np.asarray(features, dtype=float).ravel()
    if x.shape[0] != fit.coefficients.shape[0]:
        raise ValueError(
            f"feature dimension {x.shape[0]} != coefficient dimension {fit.coefficients.shape[0]}"
        )
    return float(_sigmoid(np.array([x @ fit.coefficients]))[0])
