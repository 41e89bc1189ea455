"""Regeneration structure and empirical recurrence checks.

When ``rho`` has an atom at zero, every time ``n`` with ``rho_n == 0`` erases
the past (``X_n = eps_n``), and the gaps between such times are i.i.d.
Geometric(alpha).  ``decompose`` finds these times; the diagnostics test the
geometric law and the regeneration identity.  For laws without an atom the
module checks the recurrence conditions numerically: the probability of
hitting an interval, a one-step minorization mass, and the hitting-time
constants of the irreducibility bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import optimize, stats

from .dist import DiscreteJoint, IndependentProduct, JointCoefficientLaw, ZeroInflatedRho
from .dist import oracle_transition_cdf, oracle_transition_pdf
from .errors import (MissingDrivingError, PreconditionError, RcarError,
                     RegenerationIdentityError, TooFewCyclesError)
from .process import Trajectory, check_contractive, sample_stationary_batch

MIN_CYCLES = 100
MIN_EXPECTED = 5.0


class OracleUnavailableError(RcarError, LookupError):
    """The law has no analytic transition density."""


@dataclass(frozen=True)
class Cycle:
    start: int
    length: int

    def states(self, traj: Trajectory) -> np.ndarray:
        """``X_start .. X_{start+length-1}`` as a view into the path."""
        return traj.path[self.start:self.start + self.length]


@dataclass(frozen=True, eq=False)
class RegenerationDecomposition:
    """Regeneration times ``tau_1 < tau_2 < ...`` of a trajectory of ``n`` steps.

    Complete cycles run from one regeneration time up to (not including)
    the next; the delay cycle covers ``0 .. tau_1 - 1``.  The segment after
    the last regeneration is incomplete and is not a cycle.
    """

    tau: np.ndarray
    n: int

    @property
    def cycle_lengths(self) -> np.ndarray:
        return np.diff(self.tau)

    @property
    def cycles(self) -> list[Cycle]:
        return [Cycle(int(s), int(l)) for s, l in zip(self.tau[:-1], self.cycle_lengths)]

    @property
    def delay_cycle(self) -> Cycle:
        end = int(self.tau[0]) if len(self.tau) else self.n + 1
        return Cycle(0, end)

    def to_dict(self):
        lengths = self.cycle_lengths
        return {"n": self.n, "n_regenerations": len(self.tau),
                "n_cycles": len(lengths),
                "mean_cycle_length": float(lengths.mean()) if len(lengths) else None}


def decompose(traj: Trajectory) -> RegenerationDecomposition:
    """All times ``n >= 1`` with ``rho_n == 0`` (exact float equality)."""
    if not traj.has_driving:
        raise MissingDrivingError("decompose needs a trajectory with retained driving pairs")
    tau = np.flatnonzero(traj.rho == 0.0) + 1
    return RegenerationDecomposition(tau.astype(np.int64), traj.n)


# --------------------------------------------------------------------------
# Geometric cycle lengths
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GeometricReport:
    alpha: float
    n_cycles: int
    mean_length: float
    mean_standard_error: float
    expected_mean: float
    chi2_statistic: float
    chi2_dof: int
    chi2_pvalue: float
    cells: list
    ks_statistic: float
    ks_pvalue: float

    @property
    def mean_z(self) -> float:
        if self.mean_standard_error == 0:
            return 0.0 if self.mean_length == self.expected_mean else math.inf
        return (self.mean_length - self.expected_mean) / self.mean_standard_error


def geometric_cells(n: int, alpha: float, min_expected: float = MIN_EXPECTED):
    """Pool the support 1, 2, ... into cells with expected count >= ``min_expected``.

    Returns ``[(lo, hi, expected), ...]`` with ``hi = None`` for the open
    tail cell; expected counts sum to ``n``.
    """
    q = 1.0 - alpha
    cells = []
    lo, k = 1, 1
    while True:
        tail_after = n * q ** k
        current = n * (q ** (lo - 1) - q ** k)
        if tail_after < min_expected:
            cells.append([lo, None, n * q ** (lo - 1)])
            break
        if current >= min_expected:
            cells.append([lo, k, current])
            lo = k + 1
        k += 1
    if len(cells) > 1 and cells[-1][2] < min_expected:
        last = cells.pop()
        cells[-1][1] = None
        cells[-1][2] += last[2]
    return [tuple(c) for c in cells]


def geometric_diagnostics(cycles: Union[RegenerationDecomposition, Sequence[int]],
                          alpha: float, min_cycles: int = MIN_CYCLES) -> GeometricReport:
    """Test complete cycle lengths against Geometric(``alpha``) on {1, 2, ...}.

    Chi-square goodness of fit with pooled cells (alpha is known, so the
    degrees of freedom are ``cells - 1``), and a two-sample KS test between
    the first and second half of the cycles as a proxy for i.i.d.-ness.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    lengths = (cycles.cycle_lengths if isinstance(cycles, RegenerationDecomposition)
               else np.asarray(cycles, dtype=np.int64))
    n = len(lengths)
    if n < min_cycles:
        raise TooFewCyclesError(f"{n} complete cycles, need at least {min_cycles}")
    cells = geometric_cells(n, alpha)
    observed = np.array([np.count_nonzero((lengths >= lo) & (True if hi is None else lengths <= hi))
                         for lo, hi, _ in cells], dtype=float)
    expected = np.array([e for _, _, e in cells])
    dof = len(cells) - 1
    stat = float(((observed - expected) ** 2 / expected).sum())
    # a single pooled cell carries no information
    pval = float(stats.chi2.sf(stat, dof)) if dof >= 1 else 1.0
    half = n // 2
    # lengths are integers with many ties; the exact null does not apply
    ks = stats.ks_2samp(lengths[:half], lengths[half:], method="asymp")
    mean = float(lengths.mean())
    se = float(lengths.std(ddof=1) / math.sqrt(n))
    table = [{"lo": lo, "hi": hi, "observed": int(o), "expected": e}
             for (lo, hi, e), o in zip(cells, observed)]
    return GeometricReport(alpha, n, mean, se, 1.0 / alpha, stat, dof, pval, table,
                           float(ks.statistic), float(ks.pvalue))


# --------------------------------------------------------------------------
# Values at regeneration times
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RegenerationValueReport:
    n_regenerations: int
    identity_holds: bool
    max_abs_difference: float
    reference: Optional[str]
    ks_statistic: Optional[float]
    ks_pvalue: Optional[float]
    support_ok: Optional[bool]


def _eps_given_zero(law):
    if isinstance(law, ZeroInflatedRho):
        return law.eps_marginal
    if isinstance(law, IndependentProduct) and law.prob_rho_zero() > 0:
        return law.eps_marginal
    if isinstance(law, DiscreteJoint):
        return law.eps_given_rho_zero()
    return None


def regeneration_value_check(decomp: RegenerationDecomposition, traj: Trajectory,
                             law: Optional[JointCoefficientLaw] = None,
                             min_regenerations: int = MIN_CYCLES) -> RegenerationValueReport:
    """Check ``X_tau == eps_tau`` bit-exactly and test the law of ``X_tau``.

    With a continuous eps law given rho = 0, the values ``X_tau`` are
    KS-tested against it; with a discrete one, they must lie in its support.

    Raises
    ------
    RegenerationIdentityError
        If any ``X_tau`` differs from ``eps_tau``; this is an implementation bug.
    """
    if not traj.has_driving:
        raise MissingDrivingError("regeneration_value_check needs retained driving pairs")
    m = len(decomp.tau)
    if m < min_regenerations:
        raise TooFewCyclesError(f"{m} regenerations, need at least {min_regenerations}")
    idx = decomp.tau - 1
    x_tau = traj.states[idx]
    e_tau = traj.eps[idx]
    if not np.all(traj.rho[idx] == 0.0):
        raise RegenerationIdentityError("decomposition lists a time with rho != 0")
    mismatch = x_tau != e_tau
    if mismatch.any():
        j = int(np.argmax(mismatch))
        raise RegenerationIdentityError(
            f"X_tau != eps_tau at tau={int(decomp.tau[j])}: {x_tau[j]!r} vs {e_tau[j]!r}")
    ref = _eps_given_zero(law) if law is not None else None
    ks_stat = ks_p = support = None
    if ref is not None and ref.has_pdf:
        res = stats.kstest(x_tau, ref.cdf)
        ks_stat, ks_p = float(res.statistic), float(res.pvalue)
    elif ref is not None and ref.is_discrete:
        vals, probs = ref.atoms
        support = bool(np.isin(x_tau, [v for v, p in zip(vals, probs) if p > 0]).all())
    return RegenerationValueReport(m, True, 0.0, None if ref is None else repr(ref),
                                   ks_stat, ks_p, support)


# --------------------------------------------------------------------------
# Recurrence conditions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class HittingEstimate:
    probability: float
    standard_error: float
    trials: int
    n_max: int


def _check_interval(interval):
    c, d = map(float, interval)
    if not c < d:
        raise ValueError(f"interval needs c < d, got {interval}")
    return c, d


def hitting_probability(law: JointCoefficientLaw, x0: float, interval, n_max: int,
                        trials: int, rng: np.random.Generator) -> HittingEstimate:
    """Monte Carlo P(X_n in [c, d] for some 1 <= n <= n_max | X_0 = x0).

    All trials run the full ``n_max`` steps, so for a fixed stream the
    estimate is nondecreasing in ``n_max``.
    """
    c, d = _check_interval(interval)
    if trials < 1 or n_max < 1:
        raise ValueError("trials and n_max must be positive")
    x = np.full(trials, float(x0))
    hit = np.zeros(trials, dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(n_max):
            rho, eps = law.sample(rng, trials)
            x = rho * x + eps
            hit |= (x >= c) & (x <= d)
    p = float(hit.mean())
    return HittingEstimate(p, math.sqrt(p * (1 - p) / trials), trials, n_max)


@dataclass(frozen=True, eq=False)
class MinorizationResult:
    """``mass`` is the integral over ``y_grid`` of ``min_x`` transition density."""

    mass: float
    x_grid: np.ndarray
    y_grid: np.ndarray
    min_density: np.ndarray

    def to_dict(self):
        return {"mass": self.mass, "n_x": len(self.x_grid), "n_y": len(self.y_grid),
                "y_range": [float(self.y_grid[0]), float(self.y_grid[-1])]}


def _transition_quantile(law, x, q):
    f = lambda y: oracle_transition_cdf(law, x, y) - q
    lo, hi = -1.0, 1.0
    while f(lo) > 0:
        lo *= 2
    while f(hi) < 0:
        hi *= 2
    return optimize.brentq(f, lo, hi, xtol=1e-9)


def default_y_grid(law, interval, n_y=401, coverage=0.999):
    """Grid spanning the central ``coverage`` mass of P(x, .) for x at the
    interval ends (and 0 when inside)."""
    c, d = interval
    xs = [c, d] + ([0.0] if c < 0 < d else [])
    tail = (1 - coverage) / 2
    lo = min(_transition_quantile(law, x, tail) for x in xs)
    hi = max(_transition_quantile(law, x, 1 - tail) for x in xs)
    return np.linspace(lo, hi, n_y)


def minorization_mass(law: JointCoefficientLaw, interval, y_grid=None, x_grid=None,
                      n_x: int = 101, n_y: int = 401) -> MinorizationResult:
    """Numerical one-step minorization mass over ``[c, d]``.

    ``m(y) = min_{x in x_grid} p(x, y)`` with ``p`` the transition density;
    the returned mass is the trapezoid integral of ``m`` over ``y_grid``.
    A positive value means ``P(x, .) >= m`` holds on the grid, i.e. a
    minorizing measure with that total mass exists numerically.  Not a
    certified bound.
    """
    c, d = _check_interval(interval)
    xs = np.linspace(c, d, n_x) if x_grid is None else np.asarray(x_grid, dtype=float)
    ys = default_y_grid(law, (c, d), n_y) if y_grid is None else np.asarray(y_grid, dtype=float)
    dens = oracle_transition_pdf(law, xs, ys)
    if dens is None:
        raise OracleUnavailableError(f"no transition density oracle for {type(law).__name__}")
    m = dens.min(axis=0)
    return MinorizationResult(float(np.trapezoid(m, ys)), xs, ys, m)


@dataclass
class HarrisCheckReport:
    """Numerical evidence for the recurrence conditions on ``[c, d]``.

    ``theta_estimate`` is the target hitting level ``P(X_inf in shrunk) -
    delta``; ``n_x_table`` maps each start to the first ``n`` where the
    estimated ``P(X_n in [c, d] | X_0 = x0)`` reaches it (None if the cap
    was hit first).
    """

    interval: tuple
    hitting_prob_estimates: dict = field(default_factory=dict)
    hitting_standard_errors: dict = field(default_factory=dict)
    min_density_mass: Optional[float] = None
    theta_estimate: Optional[float] = None
    n_x_table: dict = field(default_factory=dict)
    shrunk_interval: Optional[tuple] = None
    stationary_mass: Optional[float] = None
    delta: Optional[float] = None
    cap_reached: list = field(default_factory=list)

    def __post_init__(self):
        c, d = self.interval
        if not c < d:
            raise ValueError("interval needs c < d")

    def table(self) -> str:
        """Human-readable summary."""
        c, d = self.interval
        lines = [f"interval [{c:g}, {d:g}]"]
        if self.min_density_mass is not None:
            lines.append(f"minorization mass      {self.min_density_mass:.6f}")
        if self.theta_estimate is not None:
            lines.append(f"theta estimate         {self.theta_estimate:.6f}")
        keys = sorted(set(self.hitting_prob_estimates) | set(self.n_x_table))
        if keys:
            lines.append(f"{'x0':>12} {'P(hit)':>10} {'se':>10} {'n_x':>8}")
            for k in keys:
                p = self.hitting_prob_estimates.get(k)
                se = self.hitting_standard_errors.get(k)
                nx = self.n_x_table.get(k, "")
                ps = "" if p is None else f"{p:.6f}"
                ses = "" if se is None else f"{se:.2e}"
                nxs = "cap" if k in self.n_x_table and nx is None else str(nx)
                lines.append(f"{k:>12g} {ps:>10} {ses:>10} {nxs:>8}")
        return "\n".join(lines)


def estimate_theta_and_nx(law: JointCoefficientLaw, interval, x0_list, delta: float,
                          rng: np.random.Generator, eta: Optional[float] = None,
                          eta_prime: Optional[float] = None, trials: int = 4000,
                          n_cap: int = 1000, n_stationary: int = 100_000) -> HarrisCheckReport:
    """Estimate the irreducibility constants on ``[c, d]``.

    ``theta = P(X_inf in [c+eta+eta', d-eta-eta']) - delta`` from stationary
    samples; then for each start ``x0`` the first ``n <= n_cap`` at which
    the simulated ``P(X_n in [c, d])`` reaches ``theta``.  ``eta`` and
    ``eta'`` default to ``(d - c) / 8``.
    """
    check_contractive(law)
    c, d = _check_interval(interval)
    eta = (d - c) / 8 if eta is None else float(eta)
    eta_prime = (d - c) / 8 if eta_prime is None else float(eta_prime)
    lo, hi = c + eta + eta_prime, d - eta - eta_prime
    if not lo < hi:
        raise PreconditionError("eta + eta' too large: shrunk interval is empty",
                                hypothesis="c + eta + eta' < d - eta - eta'")
    xs = sample_stationary_batch(law, n_stationary, rng=rng).values
    mass = float(np.mean((xs >= lo) & (xs <= hi)))
    theta = mass - delta
    report = HarrisCheckReport((c, d), theta_estimate=theta, shrunk_interval=(lo, hi),
                               stationary_mass=mass, delta=delta)
    for x0 in x0_list:
        x = np.full(trials, float(x0))
        n_x = None
        for n in range(1, n_cap + 1):
            rho, eps = law.sample(rng, trials)
            x = rho * x + eps
            if np.mean((x >= c) & (x <= d)) >= theta:
                n_x = n
                break
        report.n_x_table[float(x0)] = n_x
        if n_x is None:
            report.cap_reached.append(float(x0))
    return report


def harris_check(law: JointCoefficientLaw, interval, x0_list, n_max: int, trials: int,
                 delta: float, rng: np.random.Generator, theta_trials: int = 4000,
                 **theta_kw) -> HarrisCheckReport:
    """Hitting probabilities, minorization mass and (theta, n_x) in one report.

    ``trials`` drives the hitting estimates and ``theta_trials`` the
    ``n_x`` search; other keywords go to :func:`estimate_theta_and_nx`.
    """
    report = estimate_theta_and_nx(law, interval, x0_list, delta, rng, trials=theta_trials,
                                   **theta_kw)
    for x0 in x0_list:
        est = hitting_probability(law, x0, interval, n_max, trials, rng)
        report.hitting_prob_estimates[float(x0)] = est.probability
        report.hitting_standard_errors[float(x0)] = est.standard_error
    try:
        report.min_density_mass = minorization_mass(law, interval).mass
    except OracleUnavailableError:
        report.min_density_mass = None
    return report
