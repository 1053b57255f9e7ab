"""Step 3: joint models, max-p tests, BH adjustment, and effect estimates.

The outcome model fits all screened mediators jointly (with the retained
exposures and any covariates); each mediator then gets its own linear
model on its retained genes plus covariates. The composite null for a
pair is tested by the maximum of the two Wald p-values, and the resulting
matrix is BH-adjusted over all present cells at once.
"""

from dataclasses import dataclass, field

import numpy as np

from .aft import AftSpec, fit_aft_mle, fit_ols, wald_pvalue
from .data import ActiveSets, Dataset, FitResult
from .exceptions import OutOfRange, SingularInformation

DEFAULT_FDR_Q = 0.05


def pmax(p_alpha: float, p_beta: float) -> float:
    """Joint-significance p-value: the larger of the two components."""
    for p in (p_alpha, p_beta):
        if not 0.0 < p <= 1.0:
            raise OutOfRange(f"p-values must lie in (0, 1], got {p}")
    return max(p_alpha, p_beta)


def bh_adjust(p, m: int = None):
    """Step-up adjusted p-values: q_(i) = min_{j>=i} m p_(j) / j, capped at 1."""
    p = np.asarray(p, dtype=float).ravel()
    if p.size == 0:
        return p.copy()
    if np.any((p <= 0) | (p > 1)):
        raise OutOfRange("p-values must lie in (0, 1]")
    m = p.size if m is None else int(m)
    if m < p.size:
        raise OutOfRange("m cannot be smaller than the number of p-values")
    order = np.argsort(p, kind="stable")
    ranked = p[order]
    scaled = ranked * m / np.arange(1, p.size + 1)
    adjusted = np.minimum.accumulate(scaled[::-1])[::-1]
    adjusted = np.minimum(adjusted, 1.0)
    out = np.empty_like(p)
    out[order] = adjusted
    return out


@dataclass(frozen=True)
class PMaxMatrix:
    """Elementwise p-values over retained genes (rows) and mediators (cols).

    Cells exist only where the gene is retained for that mediator; absent
    cells are NaN in the arrays and False in ``present``.
    """

    gene_indices: tuple
    mediator_indices: tuple
    p_alpha: np.ndarray
    p_beta: np.ndarray
    p_max: np.ndarray
    p_adj: np.ndarray
    present: np.ndarray


@dataclass(frozen=True)
class MediationRecord:
    """One tested (gene, mediator) pair with estimates and adjusted p-value."""

    gene: str
    mediator: str
    alpha_hat: float
    alpha_se: float
    beta_hat: float
    beta_se: float
    p_alpha: float
    p_beta: float
    p_max: float
    p_adj: float
    significant: bool

    @property
    def nie(self):
        return self.alpha_hat * self.beta_hat


@dataclass(frozen=True)
class Step3Fits:
    """Joint outcome fit plus the per-mediator linear fits."""

    outcome: FitResult
    mediator_fits: dict
    outcome_gene_indices: tuple
    outcome_mediator_indices: tuple


def fit_step3_models(d: Dataset, sets: ActiveSets, spec: AftSpec = None) -> Step3Fits:
    """Fit the joint outcome model and one mediation model per mediator.

    Outcome: AFT MLE of the log time on (X_T, Z, M_S2). Mediator s: OLS of
    M_s on (X_{j2[s]}, Z) with intercept and classical standard errors.
    """
    if not sets.s2:
        raise OutOfRange("s2 is empty; nothing to fit")
    spec = spec or AftSpec()
    t_idx = sorted(sets.t_set)
    s2_idx = sorted(sets.s2)
    blocks = []
    names = []
    if t_idx:
        blocks.append(d.exposures[:, t_idx])
        names += [d.exposure_names[j] for j in t_idx]
    if d.n_covariates:
        blocks.append(d.covariates)
        names += list(d.covariate_names)
    blocks.append(d.mediators[:, s2_idx])
    names += [d.mediator_names[s] for s in s2_idx]
    design = np.column_stack(blocks)
    outcome = fit_aft_mle(design, d.log_time, d.event, spec, feature_names=tuple(names))
    if outcome.std_errors is None:
        raise SingularInformation("joint outcome fit has no invertible information matrix")

    mediator_fits = {}
    for s in s2_idx:
        genes = sorted(sets.j2[s])
        if d.n_covariates:
            med_design = np.column_stack([d.exposures[:, genes], d.covariates])
            med_names = tuple(d.exposure_names[j] for j in genes) + d.covariate_names
        else:
            med_design = d.exposures[:, genes]
            med_names = tuple(d.exposure_names[j] for j in genes)
        mediator_fits[s] = fit_ols(med_design, d.mediators[:, s], feature_names=med_names)
    return Step3Fits(outcome, mediator_fits, tuple(t_idx), tuple(s2_idx))


def build_pmax_matrix(fits: Step3Fits, sets: ActiveSets) -> PMaxMatrix:
    """Assemble per-pair p-values and BH-adjust the present cells jointly."""
    s2_idx = list(fits.outcome_mediator_indices)
    gene_union = sorted({j for s in s2_idx for j in sets.j2[s]})
    gene_pos = {j: i for i, j in enumerate(gene_union)}
    u, r = len(gene_union), len(s2_idx)

    n_t = len(fits.outcome_gene_indices)
    n_z = len(fits.outcome.coefficients) - n_t - r
    p_beta = np.empty(r)
    for c, s in enumerate(s2_idx):
        k = n_t + n_z + c
        p_beta[c] = wald_pvalue(fits.outcome.coefficients[k], fits.outcome.std_errors[k])

    p_alpha = np.full((u, r), np.nan)
    present = np.zeros((u, r), dtype=bool)
    for c, s in enumerate(s2_idx):
        fit = fits.mediator_fits[s]
        genes = sorted(sets.j2[s])
        for gi, j in enumerate(genes):
            row = gene_pos[j]
            p_alpha[row, c] = wald_pvalue(fit.coefficients[gi], fit.std_errors[gi])
            present[row, c] = True

    p_max = np.where(present, np.maximum(p_alpha, p_beta[None, :]), np.nan)
    p_adj = np.full_like(p_max, np.nan)
    flat = p_max[present]
    if flat.size:
        p_adj[present] = bh_adjust(flat)
    return PMaxMatrix(
        gene_indices=tuple(gene_union),
        mediator_indices=tuple(s2_idx),
        p_alpha=p_alpha,
        p_beta=p_beta,
        p_max=p_max,
        p_adj=p_adj,
        present=present,
    )


@dataclass(frozen=True)
class EffectEstimates:
    """Direct effects per retained gene, pair records, and per-mediator totals."""

    nde: dict
    records: list
    global_nie: dict = field(default_factory=dict)


def estimate_effects(
    d: Dataset,
    fits: Step3Fits,
    sets: ActiveSets,
    matrix: PMaxMatrix = None,
    q: float = DEFAULT_FDR_Q,
) -> EffectEstimates:
    """Direct effects from the joint outcome fit; indirect via the product rule."""
    matrix = matrix if matrix is not None else build_pmax_matrix(fits, sets)
    nde = {
        d.exposure_names[j]: float(fits.outcome.coefficients[i])
        for i, j in enumerate(fits.outcome_gene_indices)
    }
    s2_idx = list(fits.outcome_mediator_indices)
    n_t = len(fits.outcome_gene_indices)
    n_z = len(fits.outcome.coefficients) - n_t - len(s2_idx)
    records = []
    global_nie = {}
    row_of = {j: i for i, j in enumerate(matrix.gene_indices)}
    for c, s in enumerate(s2_idx):
        k = n_t + n_z + c
        beta_hat = float(fits.outcome.coefficients[k])
        beta_se = float(fits.outcome.std_errors[k])
        med_fit = fits.mediator_fits[s]
        genes = sorted(sets.j2[s])
        total = 0.0
        for gi, j in enumerate(genes):
            alpha_hat = float(med_fit.coefficients[gi])
            alpha_se = float(med_fit.std_errors[gi])
            row = row_of[j]
            rec = MediationRecord(
                gene=d.exposure_names[j],
                mediator=d.mediator_names[s],
                alpha_hat=alpha_hat,
                alpha_se=alpha_se,
                beta_hat=beta_hat,
                beta_se=beta_se,
                p_alpha=float(matrix.p_alpha[row, c]),
                p_beta=float(matrix.p_beta[c]),
                p_max=float(matrix.p_max[row, c]),
                p_adj=float(matrix.p_adj[row, c]),
                significant=bool(matrix.p_adj[row, c] <= q),
            )
            records.append(rec)
            total += rec.nie
        global_nie[d.mediator_names[s]] = total
    records.sort(key=lambda rec: (rec.p_adj, rec.mediator, rec.gene))
    return EffectEstimates(nde=nde, records=records, global_nie=global_nie)
