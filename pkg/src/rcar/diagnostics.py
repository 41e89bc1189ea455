"""Distribution-level checks: hypothesis screening, atoms, convergence in law."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .dist import JointCoefficientLaw, log_moment_rho, log_plus_moment_eps
from .process import check_contractive, sample_stationary_batch, terminal_states

STATIONARY = "stationary-limit"
HARRIS = "harris-recurrent"
ATOM_REGENERATION = "atom-regeneration"
NON_ATOMIC = "non-atomic-limit"


@dataclass
class HypothesisReport:
    """Which structural results apply to a law.

    ``stationary_limit``: ``E log|rho| < 0`` and ``E (log|eps|)^+ < inf``, so
    the chain converges in law.  ``harris_recurrent`` additionally needs
    ``P(rho = 0) = 0``.  ``atom_regeneration`` holds when ``P(rho = 0) > 0``.
    ``non_atomic_limit`` needs the stationary hypotheses, no atom of rho at
    zero, and a pair that is not a.s. constant.
    """

    log_moment_rho: float
    log_plus_moment_eps: float
    prob_rho_zero: float
    non_degenerate: bool
    stationary_limit: bool
    harris_recurrent: bool
    atom_regeneration: bool
    non_atomic_limit: bool
    applicable: list = field(default_factory=list)
    messages: list = field(default_factory=list)


def check_hypotheses(law: JointCoefficientLaw) -> HypothesisReport:
    lm = log_moment_rho(law)
    lp = log_plus_moment_eps(law)
    p0 = float(law.prob_rho_zero())
    nondeg = not law.is_degenerate()
    stationary = lm < 0 and math.isfinite(lp)
    harris = stationary and p0 == 0
    atom = p0 > 0
    non_atomic = stationary and p0 == 0 and nondeg
    msgs = []
    if not lm < 0:
        rel = ">" if lm > 0 else "="
        msgs.append(f"{STATIONARY} hypotheses fail: E log|rho| = {lm:.6g} {rel} 0")
    if not math.isfinite(lp):
        msgs.append(f"{STATIONARY} hypotheses fail: E (log|eps|)^+ is infinite")
    if stationary and p0 > 0:
        msgs.append(f"P(rho = 0) = {p0:.6g} > 0: regeneration at the zeros of rho")
    if not nondeg:
        msgs.append("(rho, eps) is a.s. constant")
    applicable = [name for name, ok in ((STATIONARY, stationary), (HARRIS, harris),
                                        (ATOM_REGENERATION, atom), (NON_ATOMIC, non_atomic)) if ok]
    return HypothesisReport(lm, lp, p0, nondeg, stationary, harris, atom, non_atomic,
                            applicable or ["none"], msgs)


# --------------------------------------------------------------------------
# Atoms
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AtomTestReport:
    """Largest single-bin mass per resolution.

    Bins are ``[k delta, (k+1) delta)``, anchored at 0.  ``kappa`` is the
    density bound ``max_fraction / delta`` fitted at ``fit_resolution``, the
    coarsest dyadic width splitting the sample into at least ``fit_bins``
    occupied bins (the coarsest if none does); a resolution is flagged
    when its largest bin holds at least ``max(min_count, slack * kappa *
    delta * n)`` samples.  The verdict is the flag at the finest resolution.
    """

    n: int
    resolutions: np.ndarray
    max_fraction: np.ndarray
    max_count: np.ndarray
    kappa: float
    fit_resolution: float
    thresholds: np.ndarray
    atomic_flags: np.ndarray
    verdict: str

    @property
    def atomic(self) -> bool:
        return self.verdict == "atomic"

    def at(self, delta: float) -> float:
        """Max-fraction at the resolution closest to ``delta``."""
        return float(self.max_fraction[np.argmin(np.abs(self.resolutions - delta))])

    def rows(self):
        for d, f, c, t, a in zip(self.resolutions, self.max_fraction, self.max_count,
                                 self.thresholds, self.atomic_flags):
            yield [d, f, int(c), t, bool(a)]

    def to_dict(self):
        return {"n": self.n, "kappa": self.kappa, "verdict": self.verdict,
                "resolutions": self.resolutions, "max_fraction": self.max_fraction,
                "atomic_flags": self.atomic_flags}


def dyadic_resolutions(samples, levels: int = 21) -> np.ndarray:
    """``range * 2^-k`` for ``k = 0 .. levels-1``; exactly nested bins."""
    s = np.asarray(samples, dtype=float)
    span = float(s.max() - s.min())
    if span == 0:
        span = max(abs(float(s[0])), 1.0)
    return span * 2.0 ** -np.arange(levels)


def max_bin_count(samples: np.ndarray, delta: float) -> tuple[int, int]:
    """Largest bin count and number of occupied bins at width ``delta``."""
    keys = np.floor(np.asarray(samples, dtype=float) / delta)
    _, counts = np.unique(keys, return_counts=True)
    return int(counts.max()), len(counts)


def atom_test(samples, resolutions: Optional[Sequence[float]] = None, levels: int = 21,
              slack: float = 10.0, min_count: int = 10, fit_bins: int = 16,
              min_samples: int = 10_000) -> AtomTestReport:
    """Max single-bin fraction as the bin width shrinks.

    With the default dyadic resolutions (or any list where each width is a
    power-of-two multiple of the next), finer bins nest inside coarser
    ones and the max-fraction curve is exactly nonincreasing.  A non-atomic
    law drives it to 0 roughly like ``density * delta``; an atom keeps it
    bounded below.
    """
    s = np.asarray(samples, dtype=float)
    if len(s) < min_samples:
        raise ValueError(f"atom_test needs at least {min_samples} samples, got {len(s)}")
    n = len(s)
    ladder = dyadic_resolutions(s, levels)
    res = (ladder if resolutions is None
           else np.sort(np.asarray(resolutions, dtype=float))[::-1])
    counts = np.array([max_bin_count(s, d)[0] for d in res])
    frac = counts / n
    # kappa always comes from the dyadic ladder so it does not depend on `resolutions`
    fit_delta, fit_frac = ladder[0], max_bin_count(s, ladder[0])[0] / n
    for d in ladder:
        c, occupied = max_bin_count(s, d)
        if occupied >= fit_bins:
            fit_delta, fit_frac = d, c / n
            break
    kappa = float(fit_frac / fit_delta)
    thresholds = np.maximum(min_count, slack * kappa * res * n)
    flags = counts >= thresholds
    verdict = "atomic" if flags[-1] else "non-atomic"
    return AtomTestReport(n, res, frac, counts, kappa, float(fit_delta), thresholds, flags,
                          verdict)


# --------------------------------------------------------------------------
# Convergence in distribution
# --------------------------------------------------------------------------


def ks_critical(m: int, k: int, alpha: float = 0.01) -> float:
    """Asymptotic two-sample KS critical value."""
    c = math.sqrt(-0.5 * math.log(alpha / 2))
    return c * math.sqrt((m + k) / (m * k))


@dataclass(frozen=True, eq=False)
class ConvergenceReport:
    n_list: list
    ks_distances: np.ndarray
    ks_pvalues: np.ndarray
    critical: float
    final_ok: bool
    monotone_ok: bool

    @property
    def passed(self) -> bool:
        return self.final_ok and self.monotone_ok

    def rows(self):
        for n, d, p in zip(self.n_list, self.ks_distances, self.ks_pvalues):
            yield [int(n), d, p, self.critical]


def convergence_check(law: JointCoefficientLaw, n_list: Sequence[int], m: int,
                      rng: np.random.Generator, x0: float = 0.0,
                      alpha: float = 0.01) -> ConvergenceReport:
    """KS distance between ``X_n`` (m chains from ``x0``) and m stationary draws.

    Passes when the curve is nonincreasing up to one critical value of
    noise and the last distance is below twice the level-``alpha``
    critical value.
    """
    check_contractive(law)
    if m < 1000:
        raise ValueError("m >= 1000 required for the asymptotic KS critical value")
    ns = sorted(int(n) for n in n_list)
    stationary = sample_stationary_batch(law, m, rng=rng).values
    dists, pvals = [], []
    for n in ns:
        xs = terminal_states(law, x0, n, m, rng)
        res = stats.ks_2samp(xs, stationary)
        dists.append(float(res.statistic))
        pvals.append(float(res.pvalue))
    crit = ks_critical(m, m, alpha)
    d = np.array(dists)
    monotone = bool(np.all(np.diff(d) <= crit))
    return ConvergenceReport(ns, d, np.array(pvals), crit, bool(d[-1] < 2 * crit), monotone)


def forgetting_distance(law: JointCoefficientLaw, x0_a: float, x0_b: float, n: int, m: int,
                        rng: np.random.Generator) -> float:
    """KS distance between ``X_n`` ensembles started from two initial states."""
    a = terminal_states(law, x0_a, n, m, rng)
    b = terminal_states(law, x0_b, n, m, rng)
    return float(stats.ks_2samp(a, b).statistic)
