"""Synthetic-data engine with known mediation ground truth.

Exposures are independent normals; mediators fall into four blocks (two
gene-linked blocks, one covariate-only block, one pure-noise block); the
log survival time is a linear AFT in a few directly-acting genes, a few
outcome-acting mediators, and the covariates. Censoring times are
exponential with the rate calibrated to a target censoring fraction.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .exceptions import CalibrationFailure, InvalidScenario

_PILOT_N = 100_000


@dataclass(frozen=True)
class SimScenario:
    """Population layout and effect sizes for one synthetic design."""

    n: int
    p: int
    k: int
    censor_rate: float = 0.25
    frac_m_blockA: float = 0.4
    frac_m_blockB: float = 0.4
    frac_m_covonly: float = 0.1
    frac_m_null: float = 0.1
    frac_x_per_block: float = 0.10
    effect_xm: float = 0.8
    effect_zm: tuple = (0.2, 0.2)
    effect_zm_covonly: tuple = (0.2, 0.3)
    sd_blockA: float = 0.5
    sd_blockB: float = 0.3
    sd_covonly: float = 0.5
    sd_null: float = 0.3
    x_mean: float = 0.4
    x_sd: float = 0.5
    z1_mean: float = 0.12
    z1_sd: float = 0.75
    z2_prob: float = 0.3
    effect_x_direct: float = 0.8
    effect_m_outcome: float = 4.0
    effect_z_outcome: float = 0.12
    outcome_error_sd: float = 1.0
    n_direct_genes: int = 2
    n_outcome_mediators: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.n < 3 or self.p < 1 or self.k < 4:
            raise InvalidScenario("need n >= 3, p >= 1, k >= 4")
        if not 0.0 < self.censor_rate < 1.0:
            raise InvalidScenario("censor_rate must lie in (0, 1)")
        fracs = (self.frac_m_blockA, self.frac_m_blockB, self.frac_m_covonly, self.frac_m_null)
        if abs(sum(fracs) - 1.0) > 1e-12:
            raise InvalidScenario("mediator block fractions must sum to 1")
        if self.n_outcome_mediators % 2 != 0:
            raise InvalidScenario("outcome mediators are split evenly across the two gene-linked blocks")

    @property
    def block_sizes(self):
        """Mediator counts per block (A, B, covariate-only, null); A absorbs rounding."""
        kb = int(round(self.k * self.frac_m_blockB))
        kc = int(round(self.k * self.frac_m_covonly))
        kn = int(round(self.k * self.frac_m_null))
        for frac, count in (
            (self.frac_m_blockB, kb),
            (self.frac_m_covonly, kc),
            (self.frac_m_null, kn),
        ):
            if frac > 0 and count < 1:
                raise InvalidScenario("a nonzero block fraction rounded to zero mediators")
        ka = self.k - kb - kc - kn
        if ka < 1:
            raise InvalidScenario("block A has no mediators")
        return ka, kb, kc, kn

    @property
    def genes_per_block(self):
        g = int(round(self.p * self.frac_x_per_block))
        return max(1, g) if self.frac_x_per_block > 0 else 0


@dataclass(frozen=True)
class GroundTruth:
    """True mediation pairs and directly-acting genes."""

    true_pairs: frozenset
    direct_genes: frozenset
    outcome_mediators: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "true_pairs", frozenset((int(j), int(s)) for j, s in self.true_pairs))
        object.__setattr__(self, "direct_genes", frozenset(int(j) for j in self.direct_genes))
        object.__setattr__(self, "outcome_mediators", frozenset(int(s) for s in self.outcome_mediators))


def _structure(scn: SimScenario, rng):
    """Seeded random linkage: block gene sets, direct genes, outcome mediators."""
    ka, kb, kc, kn = scn.block_sizes
    g = scn.genes_per_block
    genes_a = np.sort(rng.choice(scn.p, size=g, replace=False))
    genes_b = np.sort(rng.choice(scn.p, size=g, replace=False))
    direct = np.sort(rng.choice(scn.p, size=min(scn.n_direct_genes, scn.p), replace=False))
    half = scn.n_outcome_mediators // 2
    out_a = np.sort(rng.choice(ka, size=min(half, ka), replace=False))
    out_b = ka + np.sort(rng.choice(kb, size=min(half, kb), replace=False))
    return genes_a, genes_b, direct, np.concatenate([out_a, out_b])


def _draw_components(scn: SimScenario, n, rng):
    ka, kb, kc, kn = scn.block_sizes
    genes_a, genes_b, direct, outcome_m = _structure(scn, rng)
    x = rng.normal(scn.x_mean, scn.x_sd, size=(n, scn.p))
    z1 = rng.normal(scn.z1_mean, scn.z1_sd, size=n)
    z2 = (rng.random(n) < scn.z2_prob).astype(float)
    z = np.column_stack([z1, z2])

    m = np.empty((n, scn.k))
    base_a = scn.effect_xm * x[:, genes_a].sum(axis=1) + scn.effect_zm[0] * z1 + scn.effect_zm[1] * z2
    for idx in range(ka):
        m[:, idx] = base_a + rng.normal(0.0, scn.sd_blockA, size=n)
    base_b = scn.effect_xm * x[:, genes_b].sum(axis=1)
    for idx in range(ka, ka + kb):
        m[:, idx] = base_b + rng.normal(0.0, scn.sd_blockB, size=n)
    base_c = scn.effect_zm_covonly[0] * z1 + scn.effect_zm_covonly[1] * z2
    for idx in range(ka + kb, ka + kb + kc):
        m[:, idx] = base_c + rng.normal(0.0, scn.sd_covonly, size=n)
    for idx in range(ka + kb + kc, scn.k):
        m[:, idx] = rng.normal(0.0, scn.sd_null, size=n)

    log_t = (
        scn.effect_x_direct * x[:, direct].sum(axis=1)
        + scn.effect_m_outcome * m[:, outcome_m].sum(axis=1)
        + scn.effect_z_outcome * (z1 + z2)
        + rng.normal(0.0, scn.outcome_error_sd, size=n)
    )
    truth_pairs = set()
    for s in outcome_m:
        linked = genes_a if s < ka else genes_b
        truth_pairs.update((int(j), int(s)) for j in linked)
    truth = GroundTruth(truth_pairs, direct, outcome_m)
    return x, z, m, log_t, truth


def calibrate_censoring(scn: SimScenario) -> float:
    """Exponential rate matching the target censoring fraction.

    Uses a seeded pilot draw of event times and bisects on the closed-form
    censoring probability mean(1 - exp(-rate * t)).
    """
    rng = np.random.default_rng(np.random.SeedSequence((scn.seed, 0xCA11)))
    _, _, _, log_t, _ = _draw_components(scn, _PILOT_N, rng)
    t = np.exp(log_t)

    def prob_censored(rate):
        return float(np.mean(-np.expm1(-rate * t)))

    lo = 1.0 / float(np.max(t))
    hi = lo
    for _ in range(200):
        if prob_censored(hi) >= scn.censor_rate:
            break
        hi *= 4.0
    else:
        raise CalibrationFailure("could not bracket the censoring rate from above")
    for _ in range(200):
        if prob_censored(lo) <= scn.censor_rate:
            break
        lo /= 4.0
    else:
        raise CalibrationFailure("could not bracket the censoring rate from below")
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if prob_censored(mid) < scn.censor_rate:
            lo = mid
        else:
            hi = mid
        if abs(prob_censored(mid) - scn.censor_rate) < 0.005 / 4:
            return mid
    return math.sqrt(lo * hi)


def generate(scn: SimScenario):
    """Draw one dataset plus its ground truth; deterministic in the seed."""
    rate = calibrate_censoring(scn)
    rng = np.random.default_rng(np.random.SeedSequence((scn.seed, 0xDA7A)))
    x, z, m, log_t, truth = _draw_components(scn, scn.n, rng)
    t = np.exp(log_t)
    c = rng.exponential(1.0 / rate, size=scn.n)
    observed = np.minimum(t, c)
    event = (t <= c).astype(int)
    d = Dataset(
        log_time=np.log(observed),
        event=event,
        exposures=x,
        mediators=m,
        covariates=z,
    )
    return d, truth


def score(detected, truth: GroundTruth):
    """Detection quality: (power, fdr) with the empty-detection convention fdr=0."""
    detected = {(int(j), int(s)) for j, s in detected}
    true_pairs = truth.true_pairs
    hits = len(detected & true_pairs)
    power = hits / max(len(true_pairs), 1)
    fdr = len(detected - true_pairs) / max(len(detected), 1)
    return power, fdr
