"""End-to-end orchestration: the three-step pipeline, two comparator
methods, and the replicated power/FDR benchmark.

Step 1 screens mediators and exposures with penalized fits (rank-based
outcome models, per-mediator penalized least squares); Step 2 ranks
(gene, mediator) pairs and keeps the top n/log(n); Step 3 fits the joint
models and runs the max-p test with BH control.
"""

import hashlib
import time
from dataclasses import dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed

from .aft import AftSpec, fit_aft_mle, univariate_prescreen
from .data import ActiveSets, Dataset, PenaltySpec, standardize, validate_dataset
from .exceptions import OutOfRange, TooManyPairs
from .gehan import GehanProblem, cv_select_lambda
from .inference import build_pmax_matrix, estimate_effects, fit_step3_models
from .penalized_lm import LinearProblem, cv_select_lambda_lm
from .screening import score_pairs, select_top_pairs, sis_threshold
from .simulation import SimScenario, generate, score

MEDIATION_PENALTIES = ("mcp", "elastic_net", "lasso")
METHOD_NAMES = ("smahp", "sis-sis", "naive")
MAX_NAIVE_PAIRS = 1_000_000


@dataclass(frozen=True)
class PipelineConfig:
    """Tuning switches for one analysis run."""

    step1_outcome_penalty: str = "elastic_net"
    step1_outcome_gamma: float = 0.5
    step1_mediation_penalty: str = "mcp"
    mcp_tau: float = 3.0
    sis_multiplier: float = 1.0
    fdr_q: float = 0.05
    aft_family: str = "log_normal"
    cv_folds_gehan: int = 5
    cv_folds_lm: int = 10
    prescreen_genes: int = 0
    prescreen_proteins: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.step1_mediation_penalty not in MEDIATION_PENALTIES:
            raise OutOfRange(
                f"step1_mediation_penalty must be one of {MEDIATION_PENALTIES}"
            )
        if not 0 < self.fdr_q < 1:
            raise OutOfRange("fdr_q must lie in (0, 1)")

    @property
    def aft_spec(self):
        return AftSpec(error_family=self.aft_family)

    @property
    def outcome_penalty_spec(self):
        return PenaltySpec(self.step1_outcome_penalty, gamma=self.step1_outcome_gamma)


@dataclass(frozen=True)
class AnalysisReport:
    """Everything one pipeline run produces."""

    method: str
    active_sets: ActiveSets
    records: tuple
    nde: dict
    global_nie: dict
    timings: dict
    config: PipelineConfig
    warnings: tuple = ()
    shape: tuple = ()

    @property
    def detected_pairs(self):
        return {
            (rec.gene_index, rec.mediator_index)
            for rec in self.records
            if rec.significant
        }


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary labels (independent of PYTHONHASHSEED)."""
    text = ":".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def _with_indices(records, d: Dataset):
    """Attach column indices to records via the dataset's name tables."""
    gene_pos = {name: i for i, name in enumerate(d.exposure_names)}
    med_pos = {name: i for i, name in enumerate(d.mediator_names)}
    out = []
    for rec in records:
        object.__setattr__(rec, "gene_index", gene_pos[rec.gene])
        object.__setattr__(rec, "mediator_index", med_pos[rec.mediator])
        out.append(rec)
    return tuple(out)


def _maybe_prescreen(d, cfg, timings):
    if cfg.prescreen_genes or cfg.prescreen_proteins:
        t0 = time.perf_counter()
        d = univariate_prescreen(
            d,
            cfg.prescreen_genes or d.n_exposures,
            cfg.prescreen_proteins or d.n_mediators,
            cfg.aft_spec,
        )
        timings["prescreen"] = time.perf_counter() - t0
    return d


def _finish_report(method, d, cfg, sets, timings, warnings):
    """Steps 2 and 3, shared by the pipeline and the SIS+SIS comparator."""
    t0 = time.perf_counter()
    scores = score_pairs(d, sets, cfg.aft_spec)
    budget = sis_threshold(d.n, cfg.sis_multiplier)
    sets = select_top_pairs(scores, budget, sets)
    timings["step2_screening"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if not sets.s2:
        warnings = warnings + ("no mediators selected",)
        timings["step3_inference"] = time.perf_counter() - t0
        return AnalysisReport(
            method=method,
            active_sets=sets,
            records=(),
            nde={},
            global_nie={},
            timings=dict(timings),
            config=cfg,
            warnings=warnings,
            shape=(d.n, d.n_exposures, d.n_mediators, d.n_covariates),
        )
    fits = fit_step3_models(d, sets, cfg.aft_spec)
    matrix = build_pmax_matrix(fits, sets)
    effects = estimate_effects(d, fits, sets, matrix, q=cfg.fdr_q)
    timings["step3_inference"] = time.perf_counter() - t0
    return AnalysisReport(
        method=method,
        active_sets=sets,
        records=_with_indices(effects.records, d),
        nde=effects.nde,
        global_nie=effects.global_nie,
        timings=dict(timings),
        config=cfg,
        warnings=warnings,
        shape=(d.n, d.n_exposures, d.n_mediators, d.n_covariates),
    )


def run_smahp(d: Dataset, cfg: PipelineConfig = None) -> AnalysisReport:
    """Penalized Step-1 screens, SIS pair screen, joint max-p inference."""
    cfg = cfg or PipelineConfig()
    validate_dataset(d)
    timings = {}
    warnings = ()
    d = _maybe_prescreen(d, cfg, timings)

    t0 = time.perf_counter()
    m_std = standardize(d.mediators)
    x_std = standardize(d.exposures)
    m_cols = np.where(~m_std.zero_variance)[0]
    x_cols = np.where(~x_std.zero_variance)[0]
    spec = cfg.outcome_penalty_spec

    m_prob = GehanProblem(m_std.matrix[:, m_cols], d.log_time, d.event)
    _, m_fit = cv_select_lambda(
        m_prob, spec, folds=cfg.cv_folds_gehan, seed=derive_seed(cfg.seed, "step1-m")
    )
    s1 = {int(m_cols[i]) for i in m_fit.active_set}

    x_prob = GehanProblem(x_std.matrix[:, x_cols], d.log_time, d.event)
    _, x_fit = cv_select_lambda(
        x_prob, spec, folds=cfg.cv_folds_gehan, seed=derive_seed(cfg.seed, "step1-x")
    )
    t_set = {int(x_cols[i]) for i in x_fit.active_set}
    timings["step1_outcome"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    j1 = {}
    if s1:
        med_penalty = cfg.step1_mediation_penalty
        if med_penalty == "mcp":
            spec_or_tau = cfg.mcp_tau
        else:
            spec_or_tau = PenaltySpec(med_penalty, gamma=0.5)
        for k in sorted(s1):
            y_k = d.mediators[:, k] - d.mediators[:, k].mean()
            prob_k = LinearProblem(x_std.matrix[:, x_cols], y_k)
            _, fit_k = cv_select_lambda_lm(
                prob_k,
                spec_or_tau,
                folds=cfg.cv_folds_lm,
                seed=derive_seed(cfg.seed, "step1-j1", k),
            )
            j1[k] = {int(x_cols[i]) for i in fit_k.active_set}
    sets = ActiveSets(s1=s1, t_set=t_set, j1=j1)
    timings["step1_mediation"] = time.perf_counter() - t0
    return _finish_report("smahp", d, cfg, sets, timings, warnings)


def _univariate_aft_coefs(mat, d, spec):
    """|coefficient| per column from single-feature AFT fits; failures rank last."""
    vals = np.full(mat.shape[1], -np.inf)
    for j in range(mat.shape[1]):
        try:
            fit = fit_aft_mle(mat[:, [j]], d.log_time, d.event, spec)
        except Exception:
            continue
        if fit.converged:
            vals[j] = abs(float(fit.coefficients[0]))
    return vals


def run_sis_sis(d: Dataset, cfg: PipelineConfig = None) -> AnalysisReport:
    """Marginal-screen comparator: univariate ranking instead of penalization."""
    cfg = cfg or PipelineConfig()
    validate_dataset(d)
    timings = {}
    d = _maybe_prescreen(d, cfg, timings)
    budget = sis_threshold(d.n, cfg.sis_multiplier)

    t0 = time.perf_counter()
    med_strength = _univariate_aft_coefs(d.mediators, d, cfg.aft_spec)
    keep_m = min(budget, d.n_mediators)
    s1 = set(np.argsort(-med_strength, kind="stable")[:keep_m].tolist())
    exp_strength = _univariate_aft_coefs(d.exposures, d, cfg.aft_spec)
    keep_x = min(budget, d.n_exposures)
    t_set = set(np.argsort(-exp_strength, kind="stable")[:keep_x].tolist())

    xc = d.exposures - d.exposures.mean(axis=0)
    var_x = np.sum(xc * xc, axis=0)
    var_x[var_x == 0] = np.inf
    keep_g = min(budget, d.n_exposures)
    j1 = {}
    for k in sorted(s1):
        mc = d.mediators[:, k] - d.mediators[:, k].mean()
        slopes = (xc.T @ mc) / var_x
        j1[k] = set(np.argsort(-np.abs(slopes), kind="stable")[:keep_g].tolist())
    sets = ActiveSets(s1=s1, t_set=t_set, j1=j1)
    timings["step1_marginal"] = time.perf_counter() - t0
    return _finish_report("sis-sis", d, cfg, sets, timings, ())


def run_naive(d: Dataset, cfg: PipelineConfig = None) -> AnalysisReport:
    """All-pairs marginal fits with max-p + BH and no selection stages."""
    from .aft import wald_pvalue
    from .inference import MediationRecord, bh_adjust

    cfg = cfg or PipelineConfig()
    validate_dataset(d)
    timings = {}
    d = _maybe_prescreen(d, cfg, timings)
    p, k = d.n_exposures, d.n_mediators
    if p * k > MAX_NAIVE_PAIRS:
        raise TooManyPairs(f"{p} x {k} pairs exceed the naive-method guard")

    t0 = time.perf_counter()
    n = d.n
    xc = d.exposures - d.exposures.mean(axis=0)
    mc = d.mediators - d.mediators.mean(axis=0)
    sxx = np.sum(xc * xc, axis=0)
    sxx_safe = np.where(sxx > 0, sxx, np.inf)
    slopes = (xc.T @ mc) / sxx_safe[:, None]
    smm = np.sum(mc * mc, axis=0)
    rss = np.maximum(smm[None, :] - slopes**2 * sxx_safe[:, None], 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        se = np.sqrt(rss / max(n - 2, 1) / sxx_safe[:, None])
    se = np.where(se > 0, se, np.inf)
    from scipy.stats import norm

    p_alpha = np.clip(2.0 * norm.sf(np.abs(slopes) / se), 1e-300, 1.0)

    beta = np.zeros(k)
    beta_se = np.full(k, np.inf)
    p_beta = np.ones(k)
    for s in range(k):
        try:
            fit = fit_aft_mle(d.mediators[:, [s]], d.log_time, d.event, cfg.aft_spec)
        except Exception:
            continue
        if fit.converged and fit.std_errors is not None:
            beta[s] = float(fit.coefficients[0])
            beta_se[s] = float(fit.std_errors[0])
            p_beta[s] = wald_pvalue(beta[s], beta_se[s])
    p_max = np.maximum(p_alpha, p_beta[None, :])
    p_adj = bh_adjust(p_max.ravel()).reshape(p, k)

    records = []
    for s in range(k):
        for j in range(p):
            records.append(
                MediationRecord(
                    gene=d.exposure_names[j],
                    mediator=d.mediator_names[s],
                    alpha_hat=float(slopes[j, s]),
                    alpha_se=float(se[j, s]) if np.isfinite(se[j, s]) else float("nan"),
                    beta_hat=float(beta[s]),
                    beta_se=float(beta_se[s]) if np.isfinite(beta_se[s]) else float("nan"),
                    p_alpha=float(p_alpha[j, s]),
                    p_beta=float(p_beta[s]),
                    p_max=float(p_max[j, s]),
                    p_adj=float(p_adj[j, s]),
                    significant=bool(p_adj[j, s] <= cfg.fdr_q),
                )
            )
    records.sort(key=lambda rec: (rec.p_adj, rec.mediator, rec.gene))
    timings["naive_all_pairs"] = time.perf_counter() - t0
    sets = ActiveSets(
        s1=set(range(k)),
        t_set=set(),
        j1={s: set(range(p)) for s in range(k)},
        s2=set(range(k)),
        j2={s: set(range(p)) for s in range(k)},
    )
    return AnalysisReport(
        method="naive",
        active_sets=sets,
        records=_with_indices(records, d),
        nde={},
        global_nie={},
        timings=dict(timings),
        config=cfg,
        warnings=(),
        shape=(d.n, p, k, d.n_covariates),
    )


METHODS = {"smahp": run_smahp, "sis-sis": run_sis_sis, "naive": run_naive}


@dataclass(frozen=True)
class BenchmarkRow:
    """One (scenario, method) cell of the benchmark table."""

    scenario: str
    p: int
    k: int
    n: int
    censor_rate: float
    method: str
    power: float
    fdr: float
    avg_minutes: float
    reps_used: int
    failures: int


@dataclass(frozen=True)
class BenchmarkResult:
    rows: tuple
    reps: int
    seed: int
    failures: tuple = ()


def _one_replicate(scn, label, methods, cfg, rep_seed):
    scn_rep = replace(scn, seed=rep_seed)
    d, truth = generate(scn_rep)
    out = {}
    for method in methods:
        run = METHODS[method]
        cfg_rep = replace(cfg, seed=rep_seed)
        t0 = time.perf_counter()
        try:
            report = run(d, cfg_rep)
            power, fdr = score(report.detected_pairs, truth)
            out[method] = (power, fdr, time.perf_counter() - t0, None)
        except Exception as exc:
            out[method] = (np.nan, np.nan, time.perf_counter() - t0, f"{label}: {exc}")
    return out


def run_benchmark(
    scenarios,
    methods,
    reps: int,
    seed: int = 0,
    cfg: PipelineConfig = None,
    labels=None,
    workers: int = 1,
) -> BenchmarkResult:
    """Replicated power/FDR comparison across scenarios and methods.

    Every (scenario, replicate) uses a derived seed so each cell is
    independently reproducible; all methods see identical data within a
    replicate. Failed replicates are excluded from the means and counted.
    """
    if reps < 1:
        raise OutOfRange("reps must be at least 1")
    for m in methods:
        if m not in METHODS:
            raise OutOfRange(f"unknown method {m!r}; choose from {sorted(METHODS)}")
    cfg = cfg or PipelineConfig()
    labels = list(labels) if labels else [f"scenario{i + 1}" for i in range(len(scenarios))]

    rows = []
    failures = []
    for label, scn in zip(labels, scenarios):
        tasks = [
            (label, scn, derive_seed(seed, label, rep)) for rep in range(reps)
        ]
        if workers > 1:
            results = Parallel(n_jobs=workers)(
                delayed(_one_replicate)(scn, lab, methods, cfg, rs) for lab, scn, rs in tasks
            )
        else:
            results = [_one_replicate(scn, lab, methods, cfg, rs) for lab, scn, rs in tasks]
        for method in methods:
            powers, fdrs, secs = [], [], []
            fail_count = 0
            for res in results:
                power, fdr, sec, err = res[method]
                if err is not None:
                    fail_count += 1
                    failures.append(f"{method} @ {err}")
                    continue
                powers.append(power)
                fdrs.append(fdr)
                secs.append(sec)
            rows.append(
                BenchmarkRow(
                    scenario=label,
                    p=scn.p,
                    k=scn.k,
                    n=scn.n,
                    censor_rate=scn.censor_rate,
                    method=method,
                    power=float(np.mean(powers)) if powers else float("nan"),
                    fdr=float(np.mean(fdrs)) if fdrs else float("nan"),
                    avg_minutes=float(np.mean(secs) / 60.0) if secs else float("nan"),
                    reps_used=len(powers),
                    failures=fail_count,
                )
            )
    return BenchmarkResult(rows=tuple(rows), reps=reps, seed=seed, failures=tuple(failures))


SCENARIO_SHAPES = {
    "I": (50, 100),
    "II": (50, 200),
    "III": (100, 100),
    "IV": (100, 200),
}


def scenario_from_label(label: str, n: int = 200, censor_rate: float = 0.25, seed: int = 0) -> SimScenario:
    """Named scenario shape: p and k from the label, the rest from defaults."""
    if label not in SCENARIO_SHAPES:
        raise OutOfRange(f"unknown scenario {label!r}; choose from {sorted(SCENARIO_SHAPES)}")
    p, k = SCENARIO_SHAPES[label]
    return SimScenario(n=n, p=p, k=k, censor_rate=censor_rate, seed=seed)
