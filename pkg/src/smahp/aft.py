"""Parametric fits with standard errors: censored AFT likelihood and OLS.

The AFT error family is either the standard smallest-extreme-value
distribution (log-Weibull time) or the standard normal (log-normal time).
Fitting is Newton ascent with step halving; standard errors come from the
inverse observed information at the optimum.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr
from scipy.stats import norm

from .data import Dataset, FitResult
from .exceptions import (
    DimensionMismatch,
    NonPositiveSE,
    OutOfRange,
    RankDeficientDesign,
)

ERROR_FAMILIES = ("log_weibull", "log_normal")
GRAD_TOL = 1e-6
MAX_NEWTON = 100
_Z_CAP = 500.0  # keeps exp(z) finite for the extreme-value family


@dataclass(frozen=True)
class AftSpec:
    """Error family and intercept choice for parametric AFT fits."""

    error_family: str = "log_normal"
    include_intercept: bool = True

    def __post_init__(self):
        if self.error_family not in ERROR_FAMILIES:
            raise OutOfRange(f"unknown error family {self.error_family!r}")


def _family_terms(z, spec):
    """Per-observation logf, logS and their first/second z-derivatives."""
    if spec.error_family == "log_normal":
        logf = norm.logpdf(z)
        logS = log_ndtr(-z)
        hazard = np.exp(norm.logpdf(z) - logS)
        d_logf = -z
        d2_logf = -np.ones_like(z)
        d_logS = -hazard
        d2_logS = -hazard * (hazard - z)
    else:
        ez = np.exp(np.minimum(z, _Z_CAP))
        logf = z - ez
        logS = -ez
        d_logf = 1.0 - ez
        d2_logf = -ez
        d_logS = -ez
        d2_logS = -ez
    return logf, logS, d_logf, d2_logf, d_logS, d2_logS


def aft_loglik(beta, log_scale, design, log_time, event, spec: AftSpec) -> float:
    """Censored log likelihood at (beta, log_scale)."""
    design = np.asarray(design, dtype=float)
    beta = np.asarray(beta, dtype=float).ravel()
    if design.shape[1] != beta.shape[0]:
        raise DimensionMismatch(
            f"beta has length {beta.shape[0]}, design has {design.shape[1]} columns"
        )
    y = np.asarray(log_time, dtype=float).ravel()
    ev = np.asarray(event).ravel().astype(float)
    b = np.exp(log_scale)
    z = (y - design @ beta) / b
    logf, logS, *_ = _family_terms(z, spec)
    return float(np.sum(ev * (logf - log_scale) + (1.0 - ev) * logS))


def _loglik_grad_hess(params, design, y, ev, spec):
    d = design.shape[1]
    beta, u = params[:d], params[d]
    b = np.exp(u)
    z = (y - design @ beta) / b
    logf, logS, d_logf, d2_logf, d_logS, d2_logS = _family_terms(z, spec)
    ll = float(np.sum(ev * (logf - u) + (1.0 - ev) * logS))
    g = ev * d_logf + (1.0 - ev) * d_logS
    a = ev * d2_logf + (1.0 - ev) * d2_logS
    grad_beta = -(design.T @ g) / b
    grad_u = -float(np.sum(g * z)) - float(np.sum(ev))
    grad = np.append(grad_beta, grad_u)
    h_bb = (design.T * a) @ design / (b * b)
    h_bu = design.T @ (a * z + g) / b
    h_uu = float(np.sum(a * z * z + g * z))
    hess = np.empty((d + 1, d + 1))
    hess[:d, :d] = h_bb
    hess[:d, d] = h_bu
    hess[d, :d] = h_bu
    hess[d, d] = h_uu
    return ll, grad, hess


def aft_loglik_grad(beta, log_scale, design, log_time, event, spec: AftSpec):
    """Analytic gradient of aft_loglik in (beta, log_scale)."""
    design = np.asarray(design, dtype=float)
    y = np.asarray(log_time, dtype=float).ravel()
    ev = np.asarray(event).ravel().astype(float)
    params = np.append(np.asarray(beta, dtype=float).ravel(), log_scale)
    _, grad, _ = _loglik_grad_hess(params, design, y, ev, spec)
    return grad


def _check_rank(design, names):
    if design.shape[1] == 0:
        return
    rank = np.linalg.matrix_rank(design)
    if rank < design.shape[1]:
        # pivoted QR localizes the dependent columns
        from scipy.linalg import qr

        _, r, piv = qr(design, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        tol = diag.max() * max(design.shape) * np.finfo(float).eps if diag.size else 0.0
        bad = [piv[i] for i in range(len(diag)) if diag[i] <= tol]
        labels = [names[i] if i < len(names) else f"col{i}" for i in sorted(bad)]
        raise RankDeficientDesign(
            f"design is rank deficient (rank {rank} of {design.shape[1]})", labels
        )


def fit_aft_mle(design, log_time, event, spec: AftSpec, feature_names=()) -> FitResult:
    """Maximum-likelihood AFT fit with observed-information standard errors.

    Convergence requires gradient sup-norm below 1e-6. A non-invertible
    observed information leaves std_errors absent with a warning rather
    than failing the fit.
    """
    design = np.asarray(design, dtype=float)
    if design.ndim == 1:
        design = design.reshape(-1, 1)
    y = np.asarray(log_time, dtype=float).ravel()
    ev = np.asarray(event).ravel().astype(float)
    if design.shape[0] != y.shape[0]:
        raise DimensionMismatch("design and log_time row counts differ")
    names = tuple(feature_names)
    n_features = design.shape[1]
    if spec.include_intercept:
        X = np.column_stack([np.ones(y.shape[0]), design])
    else:
        X = design
    _check_rank(X, ("(intercept)",) + names if spec.include_intercept else names)
    n_events = int(np.sum(ev))
    if n_events < X.shape[1] + 2:
        warnings.warn(
            f"only {n_events} events for {X.shape[1]} parameters; "
            "estimates may be unstable",
            RuntimeWarning,
            stacklevel=2,
        )

    beta0, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta0
    scale0 = max(float(np.std(resid)), 1e-3)
    params = np.append(beta0, np.log(scale0))

    ll, grad, hess = _loglik_grad_hess(params, X, y, ev, spec)
    converged = False
    iterations = 0
    for it in range(MAX_NEWTON):
        iterations = it + 1
        if np.max(np.abs(grad)) < GRAD_TOL:
            converged = True
            break
        neg_h = -hess
        try:
            np.linalg.cholesky(neg_h)
            step = np.linalg.solve(neg_h, grad)
        except np.linalg.LinAlgError:
            step = grad / max(np.max(np.abs(grad)), 1.0)
        t = 1.0
        improved = False
        for _ in range(40):
            trial = params + t * step
            trial[-1] = np.clip(trial[-1], -20.0, 20.0)
            ll_t, grad_t, hess_t = _loglik_grad_hess(trial, X, y, ev, spec)
            if np.isfinite(ll_t) and ll_t > ll:
                params, ll, grad, hess = trial, ll_t, grad_t, hess_t
                improved = True
                break
            t *= 0.5
        if not improved:
            # ascent stalled; accept current point with whatever gradient remains
            converged = np.max(np.abs(grad)) < GRAD_TOL
            break
    else:
        converged = np.max(np.abs(grad)) < GRAD_TOL

    se = None
    try:
        cov = np.linalg.inv(-hess)
        diag = np.diag(cov)
        if np.any(diag <= 0):
            raise np.linalg.LinAlgError("non-positive variance")
        se_all = np.sqrt(diag[: X.shape[1]])
        se = se_all[1:] if spec.include_intercept else se_all
    except np.linalg.LinAlgError:
        warnings.warn("observed information is singular; standard errors unavailable",
                      RuntimeWarning, stacklevel=2)

    coefs = params[: X.shape[1]]
    intercept = float(coefs[0]) if spec.include_intercept else None
    beta = coefs[1:] if spec.include_intercept else coefs
    return FitResult(
        coefficients=beta,
        std_errors=se,
        scale=float(np.exp(params[-1])),
        objective=-ll,
        converged=bool(converged),
        iterations=iterations,
        feature_names=names,
        intercept=intercept,
    )


def wald_pvalue(coef: float, se: float) -> float:
    """Two-sided normal p-value 2(1 - F(|coef|/se)); strictly positive."""
    if not se > 0:
        raise NonPositiveSE(f"standard error must be positive, got {se}")
    p = 2.0 * float(norm.sf(abs(coef) / se))
    return max(min(p, 1.0), 1e-300)


def fit_ols(design, response, feature_names=(), include_intercept=True) -> FitResult:
    """Least squares with classical standard errors.

    Residual variance uses n - p (p counts the intercept when present);
    p-values downstream use the normal reference.
    """
    design = np.asarray(design, dtype=float)
    if design.ndim == 1:
        design = design.reshape(-1, 1)
    y = np.asarray(response, dtype=float).ravel()
    names = tuple(feature_names)
    if include_intercept:
        X = np.column_stack([np.ones(y.shape[0]), design])
    else:
        X = design
    _check_rank(X, ("(intercept)",) + names if include_intercept else names)
    n, p = X.shape
    if n <= p:
        raise DimensionMismatch(f"need more rows ({n}) than parameters ({p})")
    xtx = X.T @ X
    coefs = np.linalg.solve(xtx, X.T @ y)
    resid = y - X @ coefs
    sigma2 = float(resid @ resid) / (n - p)
    cov = sigma2 * np.linalg.inv(xtx)
    se_all = np.sqrt(np.diag(cov))
    if include_intercept:
        return FitResult(
            coefficients=coefs[1:],
            std_errors=se_all[1:],
            scale=float(np.sqrt(max(sigma2, 1e-300))),
            objective=0.5 * float(resid @ resid) / n,
            feature_names=names,
            intercept=float(coefs[0]),
        )
    return FitResult(
        coefficients=coefs,
        std_errors=se_all,
        scale=float(np.sqrt(max(sigma2, 1e-300))),
        objective=0.5 * float(resid @ resid) / n,
        feature_names=names,
    )


def univariate_prescreen(d: Dataset, n_genes: int, n_proteins: int, spec: AftSpec = None) -> Dataset:
    """Keep the exposures/mediators with the smallest univariate AFT p-values.

    Each column is fit alone (plus intercept) against the survival outcome;
    ties break by column order and non-converged fits rank last. Retained
    columns keep their original order.
    """
    if n_genes > d.n_exposures or n_proteins > d.n_mediators:
        raise OutOfRange("cannot retain more columns than available")
    spec = spec or AftSpec()

    def rank_columns(mat, keep):
        pvals = []
        for j in range(mat.shape[1]):
            try:
                fit = fit_aft_mle(mat[:, [j]], d.log_time, d.event, spec)
                if fit.converged and fit.std_errors is not None:
                    pvals.append(wald_pvalue(fit.coefficients[0], fit.std_errors[0]))
                else:
                    pvals.append(np.inf)
            except (np.linalg.LinAlgError, RankDeficientDesign):
                pvals.append(np.inf)
        order = np.argsort(pvals, kind="stable")
        return np.sort(order[:keep])

    xi = rank_columns(d.exposures, n_genes)
    mi = rank_columns(d.mediators, n_proteins)
    return d.subset_columns(xi, mi)
