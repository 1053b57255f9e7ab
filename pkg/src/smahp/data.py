"""Shared domain types, validation, and feature standardization.

Everything here is immutable after construction and safe to share across
parallel workers.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    AllCensored,
    DimensionMismatch,
    InvalidTau,
    NonFinite,
    NonPositiveTime,
    OutOfRange,
    ShapeMismatch,
)

PENALTY_FAMILIES = ("mcp", "elastic_net", "lasso", "ridge", "sparse_group_lasso")


def _as_matrix(x, n_rows, name):
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        a = a.reshape(-1, 1) if a.size else a.reshape(n_rows, 0)
    if a.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-dimensional, got ndim={a.ndim}")
    return a


def _default_names(prefix, count):
    return tuple(f"{prefix}{i + 1}" for i in range(count))


@dataclass(frozen=True)
class Dataset:
    """Aligned survival outcome, exposure, mediator, and covariate containers.

    ``log_time`` holds the natural log of the observed (possibly censored)
    time; ``event`` is 1 for an observed event, 0 for right censoring.
    ``covariates`` may have zero columns.
    """

    log_time: np.ndarray
    event: np.ndarray
    exposures: np.ndarray
    mediators: np.ndarray
    covariates: np.ndarray
    exposure_names: tuple = ()
    mediator_names: tuple = ()
    covariate_names: tuple = ()

    def __post_init__(self):
        lt = np.asarray(self.log_time, dtype=float).ravel()
        ev = np.asarray(self.event).ravel().astype(int)
        n = lt.shape[0]
        object.__setattr__(self, "log_time", lt)
        object.__setattr__(self, "event", ev)
        object.__setattr__(self, "exposures", _as_matrix(self.exposures, n, "exposures"))
        object.__setattr__(self, "mediators", _as_matrix(self.mediators, n, "mediators"))
        object.__setattr__(self, "covariates", _as_matrix(self.covariates, n, "covariates"))
        if not self.exposure_names:
            object.__setattr__(self, "exposure_names", _default_names("x", self.exposures.shape[1]))
        if not self.mediator_names:
            object.__setattr__(self, "mediator_names", _default_names("m", self.mediators.shape[1]))
        if not self.covariate_names:
            object.__setattr__(self, "covariate_names", _default_names("z", self.covariates.shape[1]))
        object.__setattr__(self, "exposure_names", tuple(self.exposure_names))
        object.__setattr__(self, "mediator_names", tuple(self.mediator_names))
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        for arr in (self.log_time, self.event, self.exposures, self.mediators, self.covariates):
            arr.setflags(write=False)

    @property
    def n(self):
        return self.log_time.shape[0]

    @property
    def n_exposures(self):
        return self.exposures.shape[1]

    @property
    def n_mediators(self):
        return self.mediators.shape[1]

    @property
    def n_covariates(self):
        return self.covariates.shape[1]

    @classmethod
    def from_times(cls, time, event, exposures, mediators, covariates=None, **names):
        """Build a dataset from natural-scale times; times <= 0 are rejected."""
        t = np.asarray(time, dtype=float).ravel()
        bad = np.where(~(t > 0.0))[0]
        if bad.size:
            raise NonPositiveTime(f"time must be > 0; offending row index {bad[0]} (value {t[bad[0]]!r})")
        if covariates is None:
            covariates = np.empty((t.shape[0], 0))
        return cls(np.log(t), event, exposures, mediators, covariates, **names)

    def subset_columns(self, exposure_idx=None, mediator_idx=None):
        """Column-subset copy; row alignment and covariates are preserved."""
        xi = np.arange(self.n_exposures) if exposure_idx is None else np.asarray(exposure_idx, dtype=int)
        mi = np.arange(self.n_mediators) if mediator_idx is None else np.asarray(mediator_idx, dtype=int)
        return Dataset(
            self.log_time,
            self.event,
            self.exposures[:, xi],
            self.mediators[:, mi],
            self.covariates,
            exposure_names=tuple(self.exposure_names[i] for i in xi),
            mediator_names=tuple(self.mediator_names[i] for i in mi),
            covariate_names=self.covariate_names,
        )


def validate_dataset(d: Dataset) -> None:
    """Check every Dataset invariant; raise the first violation found.

    Raises ShapeMismatch, NonFinite (with the offending coordinate), or
    AllCensored.
    """
    n = d.log_time.shape[0]
    if n < 3:
        raise ShapeMismatch(f"need at least 3 rows, got {n}")
    blocks = {
        "log_time": d.log_time.reshape(-1, 1),
        "event": d.event.reshape(-1, 1).astype(float),
        "exposures": d.exposures,
        "mediators": d.mediators,
        "covariates": d.covariates,
    }
    for name, arr in blocks.items():
        if arr.shape[0] != n:
            raise ShapeMismatch(f"{name} has {arr.shape[0]} rows, expected {n}")
        if not np.all(np.isfinite(arr)):
            i, j = np.argwhere(~np.isfinite(arr))[0]
            raise NonFinite(f"non-finite value in {name} at row {i}, column {j}")
    if not np.isin(d.event, (0, 1)).all():
        raise ShapeMismatch("event must contain only 0/1 values")
    if not np.any(d.event == 1):
        raise AllCensored("no observed events; the model is unidentifiable")
    for label, names in (
        ("exposure", d.exposure_names),
        ("mediator", d.mediator_names),
        ("covariate", d.covariate_names),
    ):
        if len(set(names)) != len(names):
            raise ShapeMismatch(f"duplicate {label} column identifiers")


@dataclass(frozen=True)
class Standardized:
    """Result of column standardization.

    ``scales`` uses the sample (n-1) standard deviation. Zero-variance
    columns are centered only: scale recorded as 1 and the column flagged
    so penalized designs can drop it.
    """

    matrix: np.ndarray
    centers: np.ndarray
    scales: np.ndarray
    zero_variance: np.ndarray


def standardize(m) -> Standardized:
    """Center columns to mean 0 and rescale to unit sample sd.

    Columns with zero sample sd are centered, assigned scale 1, and
    flagged via ``zero_variance``.
    """
    a = np.asarray(m, dtype=float)
    if a.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise NonFinite("standardize requires finite entries")
    centers = a.mean(axis=0)
    if a.shape[0] > 1:
        scales = a.std(axis=0, ddof=1)
    else:
        scales = np.zeros(a.shape[1])
    zero_var = scales <= 0.0
    safe = np.where(zero_var, 1.0, scales)
    out = (a - centers) / safe
    return Standardized(out, centers, np.where(zero_var, 1.0, scales), zero_var)


def destandardize_coefficients(theta, centers, scales):
    """Map standardized-scale coefficients back to original units.

    Returns ``(coefficients, intercept)`` such that
    ``X_std @ theta == X @ coefficients + intercept`` exactly.
    """
    theta = np.asarray(theta, dtype=float)
    coefs = theta / scales
    intercept = -float(np.dot(centers, coefs))
    return coefs, intercept


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty family plus its tuning parameters.

    Conventions: ``lasso`` is ``elastic_net`` with gamma=1 and ``ridge`` is
    ``elastic_net`` with gamma=0 (gamma multiplies the L1 term).
    ``feature_weights`` and ``groups``/``group_weights`` may be None, meaning
    unit weights / no grouping.
    """

    family: str
    lam: float = 0.0
    gamma: float = 0.5
    tau: float = 3.0
    feature_weights: np.ndarray | None = None
    group_weights: np.ndarray | None = None
    groups: tuple | None = None

    def __post_init__(self):
        if self.family not in PENALTY_FAMILIES:
            raise OutOfRange(f"unknown penalty family {self.family!r}")
        if self.lam < 0:
            raise OutOfRange("lambda must be >= 0")
        if not 0.0 <= self.gamma <= 1.0:
            raise OutOfRange("gamma must lie in [0, 1]")
        if self.tau <= 1.0:
            raise InvalidTau(f"tau must exceed 1, got {self.tau}")
        gamma = self.gamma
        if self.family == "lasso":
            gamma = 1.0
        elif self.family == "ridge":
            gamma = 0.0
        object.__setattr__(self, "gamma", float(gamma))
        if self.feature_weights is not None:
            w = np.asarray(self.feature_weights, dtype=float)
            if np.any(w < 0):
                raise OutOfRange("feature weights must be nonnegative")
            object.__setattr__(self, "feature_weights", w)
        if self.groups is not None:
            groups = tuple(tuple(int(i) for i in g) for g in self.groups)
            object.__setattr__(self, "groups", groups)
            flat = sorted(i for g in groups for i in g)
            if len(flat) != len(set(flat)):
                raise OutOfRange("groups must be disjoint")
            object.__setattr__(self, "_group_span", (min(flat, default=0), len(flat)))
            if self.group_weights is not None:
                v = np.asarray(self.group_weights, dtype=float)
                if v.shape[0] != len(groups) or np.any(v < 0):
                    raise OutOfRange("group weights must be nonnegative, one per group")
                object.__setattr__(self, "group_weights", v)

    def weights_for(self, d):
        """Feature weights expanded to dimension d."""
        if self.feature_weights is None:
            return np.ones(d)
        w = self.feature_weights
        if w.shape[0] != d:
            raise DimensionMismatch(f"feature weights have length {w.shape[0]}, expected {d}")
        return w

    def validate_groups(self, d):
        """Groups must partition 0..d-1 exactly when present."""
        if self.groups is None:
            return
        flat = sorted(i for g in self.groups for i in g)
        if flat != list(range(d)):
            raise OutOfRange(f"groups must partition the {d} feature indices exactly")



@dataclass(frozen=True)
class FitResult:
    """Outcome of one model fit, penalized or maximum-likelihood."""

    coefficients: np.ndarray
    std_errors: np.ndarray | None = None
    scale: float | None = None
    objective: float = float("nan")
    converged: bool = True
    iterations: int = 0
    feature_names: tuple = ()
    intercept: float | None = None
    lam: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "coefficients", np.asarray(self.coefficients, dtype=float))
        if self.std_errors is not None:
            object.__setattr__(self, "std_errors", np.asarray(self.std_errors, dtype=float))
        if self.scale is not None and not self.scale > 0:
            raise OutOfRange(f"scale must be positive, got {self.scale}")

    @property
    def active_set(self):
        """Indices of coefficients with magnitude above the hard zero threshold."""
        return np.where(np.abs(self.coefficients) > 1e-8)[0]


@dataclass(frozen=True)
class ActiveSets:
    """Index sets threading the three pipeline steps.

    ``s1``/``t_set`` come from the penalized outcome fits, ``j1`` from the
    penalized mediation fits, and ``s2``/``j2`` from the pair screen.
    """

    s1: frozenset = frozenset()
    t_set: frozenset = frozenset()
    j1: dict = field(default_factory=dict)
    s2: frozenset = frozenset()
    j2: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "s1", frozenset(int(i) for i in self.s1))
        object.__setattr__(self, "t_set", frozenset(int(i) for i in self.t_set))
        object.__setattr__(self, "j1", {int(k): frozenset(int(i) for i in v) for k, v in self.j1.items()})
        object.__setattr__(self, "s2", frozenset(int(i) for i in self.s2))
        object.__setattr__(self, "j2", {int(k): frozenset(int(i) for i in v) for k, v in self.j2.items()})
        if not self.s2 <= self.s1:
            raise OutOfRange("s2 must be a subset of s1")
        for s, genes in self.j2.items():
            if s not in self.s2:
                raise OutOfRange(f"j2 has an entry for mediator {s} outside s2")
            if not genes:
                raise OutOfRange(f"j2[{s}] is empty")
            if not genes <= self.j1.get(s, frozenset()):
                raise OutOfRange(f"j2[{s}] is not contained in j1[{s}]")
        for s in self.s2:
            if s not in self.j2:
                raise OutOfRange(f"mediator {s} in s2 has no retained genes")

    @property
    def r(self):
        return len(self.s2)

    @property
    def u(self):
        u = set()
        for genes in self.j2.values():
            u |= genes
        return len(u)
