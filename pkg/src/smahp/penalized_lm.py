"""Penalized least squares for the marginal mediation models.

MCP is the default; elastic-net and lasso are the comparison penalties.
All fits run cyclic coordinate descent with warm starts along a
decreasing lambda path. The design is expected standardized and the
response centered, so no intercept is carried.
"""

from dataclasses import dataclass

import numpy as np

from ._kernels import cd_solve
from .data import FitResult, PenaltySpec
from .exceptions import DimensionMismatch, InvalidTau, NonFinite, OutOfRange
from .gehan import LambdaPath

DEFAULT_TAU = 3.0
MAX_SWEEPS = 10_000
COEF_TOL = 1e-7


@dataclass(frozen=True)
class LinearProblem:
    """Design (standardized exposures) and one centered mediator column."""

    design: np.ndarray
    response: np.ndarray

    def __post_init__(self):
        design = np.ascontiguousarray(self.design, dtype=float)
        y = np.asarray(self.response, dtype=float).ravel()
        if design.ndim != 2:
            raise DimensionMismatch("design must be a matrix")
        if design.shape[0] != y.shape[0]:
            raise DimensionMismatch("design and response row counts differ")
        if not (np.all(np.isfinite(design)) and np.all(np.isfinite(y))):
            raise NonFinite("linear problem requires finite entries")
        object.__setattr__(self, "design", design)
        object.__setattr__(self, "response", y)

    @property
    def n(self):
        return self.response.shape[0]

    @property
    def p(self):
        return self.design.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx, dtype=int)
        return LinearProblem(self.design[idx], self.response[idx])


def mcp_penalty(a: float, lam: float, tau: float) -> float:
    """Minimax concave penalty: lam|a| - a^2/(2 tau) capped at tau lam^2 / 2."""
    if tau <= 1.0:
        raise InvalidTau(f"tau must exceed 1, got {tau}")
    if lam < 0:
        raise OutOfRange("lambda must be nonnegative")
    a = abs(a)
    if a <= tau * lam:
        return lam * a - a * a / (2.0 * tau)
    return 0.5 * tau * lam * lam


def _objective_mcp(alpha, prob, lam, tau):
    resid = prob.response - prob.design @ alpha
    loss = 0.5 * float(resid @ resid) / prob.n
    return loss + sum(mcp_penalty(a, lam, tau) for a in alpha)


def _objective_en(alpha, prob, lam, gamma, w):
    resid = prob.response - prob.design @ alpha
    loss = 0.5 * float(resid @ resid) / prob.n
    return loss + lam * (gamma * float(np.sum(w * np.abs(alpha))) + 0.5 * (1 - gamma) * float(alpha @ alpha))


def lambda_max_lm(prob: LinearProblem, gamma: float = 1.0) -> float:
    """Smallest lambda zeroing every coordinate: max_j |x_j' y| / (n gamma)."""
    g = np.abs(prob.design.T @ prob.response) / prob.n
    return float(np.max(g)) / max(gamma, 1e-3)


def fit_mcp(prob: LinearProblem, path: LambdaPath, tau: float = DEFAULT_TAU):
    """MCP path via coordinate descent with warm starts.

    Each returned fit is a stationary point; with tau * min_j(x_j'x_j / n) <= 1
    the coordinate subproblems lose convexity, so that configuration is
    rejected up front.
    """
    if tau <= 1.0:
        raise InvalidTau(f"tau must exceed 1, got {tau}")
    v_min = float(np.min(np.sum(prob.design**2, axis=0)) / prob.n)
    if v_min > 0 and tau * v_min <= 1.0:
        raise InvalidTau(
            f"tau={tau} with column scale {v_min:.3g} makes coordinate updates nonconvex"
        )
    return _fit_path(prob, path, use_mcp=True, tau=tau, gamma=1.0, w=np.ones(prob.p))


def fit_en_or_lasso(prob: LinearProblem, spec: PenaltySpec, path: LambdaPath):
    """Elastic-net / lasso path; convex, so solutions are global optima."""
    if spec.family not in ("elastic_net", "lasso", "ridge"):
        raise OutOfRange(f"family {spec.family!r} is not an elastic-net variant")
    w = spec.weights_for(prob.p)
    return _fit_path(prob, path, use_mcp=False, tau=DEFAULT_TAU, gamma=spec.gamma, w=w)


def _fit_path(prob, path, use_mcp, tau, gamma, w):
    alpha = np.zeros(prob.p)
    results = []
    for lam in path.values:
        sweeps, converged = cd_solve(
            prob.design, prob.response, alpha,
            float(lam), float(gamma), w, float(tau),
            use_mcp, MAX_SWEEPS, COEF_TOL,
        )
        if use_mcp:
            obj = _objective_mcp(alpha, prob, float(lam), tau)
        else:
            obj = _objective_en(alpha, prob, float(lam), gamma, w)
        results.append(
            FitResult(
                coefficients=alpha.copy(),
                objective=obj,
                converged=bool(converged),
                iterations=int(sweeps),
                lam=float(lam),
            )
        )
    return results


def cv_select_lambda_lm(
    prob: LinearProblem,
    spec_or_tau,
    path: LambdaPath = None,
    folds: int = 10,
    seed: int = 0,
):
    """Lambda by K-fold CV on held-out mean squared error.

    ``spec_or_tau`` is either a PenaltySpec (elastic_net / lasso) or a bare
    MCP tau. Ties break toward the larger lambda; the winner is refit on
    the full data.
    """
    if folds < 2:
        raise OutOfRange("need at least 2 folds")
    if prob.n < folds:
        raise OutOfRange("more folds than observations")
    use_mcp = not isinstance(spec_or_tau, PenaltySpec)
    if use_mcp:
        tau = float(spec_or_tau) if spec_or_tau is not None else DEFAULT_TAU
        gamma = 1.0
        spec = None
    elif spec_or_tau.family == "mcp":
        use_mcp, tau, gamma, spec = True, spec_or_tau.tau, 1.0, None
    else:
        spec, tau, gamma = spec_or_tau, DEFAULT_TAU, spec_or_tau.gamma
    if path is None:
        path = LambdaPath.log_spaced(lambda_max_lm(prob, gamma))

    rng = np.random.default_rng(seed)
    perm = rng.permutation(prob.n)
    assign = np.empty(prob.n, dtype=int)
    for f in range(folds):
        assign[perm[f::folds]] = f

    mse = np.zeros((folds, path.n_lambda))
    for f in range(folds):
        train = prob.subset(np.where(assign != f)[0])
        val = prob.subset(np.where(assign == f)[0])
        fits = _fit_lm_any(train, path, use_mcp, tau, spec)
        for i, fit in enumerate(fits):
            resid = val.response - val.design @ fit.coefficients
            mse[f, i] = float(resid @ resid) / val.n
    best = int(np.argmin(mse.mean(axis=0)))
    lam_opt = float(path.values[best])
    full = _fit_lm_any(prob, path, use_mcp, tau, spec)
    return lam_opt, full[best]


def _fit_lm_any(prob, path, use_mcp, tau, spec):
    if use_mcp:
        return fit_mcp(prob, path, tau)
    return fit_en_or_lasso(prob, spec, path)
