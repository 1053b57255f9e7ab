"""Step 2: sure-independence screening of (gene, mediator) pairs.

Pairs are ranked globally by |alpha * beta|, where alpha comes from the
per-mediator OLS on its retained genes and beta from the AFT fit of the
outcome on the retained exposures plus that single mediator. Fits here run
on original-scale columns with intercepts, so the product score is
equivariant under column rescaling.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .aft import AftSpec, fit_aft_mle, fit_ols
from .data import ActiveSets, Dataset
from .exceptions import OutOfRange

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PairScore:
    """One candidate (gene, mediator) pair with its screening score."""

    mediator_index: int
    gene_index: int
    alpha: float
    beta: float

    @property
    def score(self):
        return abs(self.alpha * self.beta)


def sis_threshold(n: int, multiplier: float = 1.0) -> int:
    """Screening budget: floor(multiplier * n / ln n), at least 1."""
    if n < 3:
        raise OutOfRange("n must be at least 3")
    if not multiplier > 0:
        raise OutOfRange("multiplier must be positive")
    return max(1, int(math.floor(multiplier * n / math.log(n))))


def score_pairs(d: Dataset, sets: ActiveSets, spec: AftSpec = None) -> list:
    """Score every (gene, mediator) candidate pair from the Step-1 sets.

    Per mediator s in s1: one AFT fit of the outcome on (X_T, M_s) for
    beta, one OLS of M_s on X_{j1[s]} for the alpha vector. Mediators whose
    fits fail are dropped with a warning.
    """
    spec = spec or AftSpec()
    t_idx = sorted(sets.t_set)
    scores = []
    for s in sorted(sets.s1):
        genes = sorted(sets.j1.get(s, ()))
        if not genes:
            continue
        outcome_design = np.column_stack([d.exposures[:, t_idx], d.mediators[:, [s]]]) \
            if t_idx else d.mediators[:, [s]]
        try:
            outcome_fit = fit_aft_mle(outcome_design, d.log_time, d.event, spec)
            med_fit = fit_ols(d.exposures[:, genes], d.mediators[:, s])
        except Exception as exc:  # fit failures drop the mediator, not the run
            log.warning("screening: dropping mediator %d (%s)", s, exc)
            continue
        if not outcome_fit.converged:
            log.warning("screening: dropping mediator %d (outcome fit did not converge)", s)
            continue
        beta = float(outcome_fit.coefficients[-1])
        for gi, j in enumerate(genes):
            scores.append(PairScore(s, j, float(med_fit.coefficients[gi]), beta))
    return scores


def select_top_pairs(scores: list, d: int, sets: ActiveSets = None) -> ActiveSets:
    """Keep the d globally largest scores; ties prefer (smaller s, smaller j).

    Returns the Step-1 sets extended with s2/j2. An empty score list yields
    empty s2/j2 so the pipeline can report "no mediators" downstream.
    """
    if d < 1:
        raise OutOfRange("selection budget must be at least 1")
    if sets is None:
        j1 = {}
        for sc in scores:
            j1.setdefault(sc.mediator_index, set()).add(sc.gene_index)
        base = ActiveSets(s1=frozenset(j1), j1=j1)
    else:
        base = sets
    ordered = sorted(scores, key=lambda sc: (-sc.score, sc.mediator_index, sc.gene_index))
    kept = ordered[:d]
    s2 = set()
    j2 = {}
    for sc in kept:
        s2.add(sc.mediator_index)
        j2.setdefault(sc.mediator_index, set()).add(sc.gene_index)
    return ActiveSets(s1=base.s1, t_set=base.t_set, j1=base.j1, s2=s2, j2=j2)
