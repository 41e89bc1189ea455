"""Joint laws of the coefficient pair (rho, eps) and their analytic oracles.

Every law is an immutable dataclass.  Randomness only enters through the
``numpy.random.Generator`` handed to ``sample``; the oracle quantities
(characteristic functions, transition CDF/density, log-moments) are computed
in closed form where one exists and by adaptive Gauss-Kronrod quadrature
otherwise.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, fields
from typing import Callable, Optional, Union

import numpy as np
from scipy import integrate, optimize, special

from .errors import ConfigError, NonIntegrableError

QUAD_EPSABS = 1e-10
QUAD_EPSREL = 1e-10
QUAD_LIMIT = 500
SCALE_QUANTILE = 0.9999

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


def _quad(fn, lo, hi, points=None):
    kw = dict(epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT)
    if points is not None and np.isfinite(lo) and np.isfinite(hi):
        kw["points"] = points
    val, _ = integrate.quad(fn, lo, hi, **kw)
    return val


def _std_normal_cdf(z):
    return 0.5 * special.erfc(-np.asarray(z, dtype=float) / _SQRT2)


def _as_t(t):
    return np.asarray(t, dtype=float)


def _squeeze(arr, like):
    if np.ndim(like) == 0:
        return arr[()]
    return arr


# --------------------------------------------------------------------------
# Marginals
# --------------------------------------------------------------------------


class _Marginal:
    """Mixin holding behaviour shared by the one-dimensional families."""

    is_discrete = False
    has_cf = True
    has_cdf = True
    has_pdf = True

    def to_dict(self) -> dict:
        out = {"kind": type(self).__name__}
        for f in fields(self):
            val = getattr(self, f.name)
            out[f.name] = list(val) if isinstance(val, tuple) else val
        return out

    def expect(self, fn: Callable[[float], float]) -> float:
        """E fn(X) for a scalar function, exact for discrete laws."""
        raise NotImplementedError

    def expect_vec(self, fn: Callable[[float], np.ndarray]) -> np.ndarray:
        """E fn(X) for an array-valued function of a scalar."""
        raise NotImplementedError


@dataclass(frozen=True)
class Normal(_Marginal):
    mean: float = 0.0
    sd: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.mean) and np.isfinite(self.sd)) or self.sd <= 0:
            raise ValueError(f"Normal needs finite mean and sd > 0, got {self}")

    def sample(self, rng, size=None):
        return rng.normal(self.mean, self.sd, size)

    def cf(self, t):
        t = _as_t(t)
        return np.exp(1j * self.mean * t - 0.5 * (self.sd * t) ** 2)

    def cdf(self, y):
        return _std_normal_cdf((np.asarray(y, dtype=float) - self.mean) / self.sd)

    def pdf(self, y):
        z = (np.asarray(y, dtype=float) - self.mean) / self.sd
        return np.exp(-0.5 * z * z) / (self.sd * _SQRT2PI)

    def prob_zero(self):
        return 0.0

    def log_abs_moment(self):
        f = lambda x: math.log(abs(x)) * float(self.pdf(x)) if x != 0 else 0.0
        return _quad(f, -np.inf, 0.0) + _quad(f, 0.0, np.inf)

    def log_plus_moment(self):
        f = lambda x: math.log(abs(x)) * float(self.pdf(x))
        return _quad(f, 1.0, np.inf) + _quad(f, -np.inf, -1.0)

    def abs_quantile(self, q=SCALE_QUANTILE):
        g = lambda s: float(self.cdf(s) - self.cdf(-s)) - q
        hi = abs(self.mean) + 10.0 * self.sd
        return optimize.brentq(g, 0.0, hi, xtol=1e-14)

    def expect(self, fn):
        w = lambda x: fn(x) * float(self.pdf(x))
        return _quad(w, -np.inf, np.inf)

    def expect_vec(self, fn):
        # integrate over the standard-normal variable to keep the integrand scale fixed
        w = lambda z: fn(self.mean + self.sd * z) * (math.exp(-0.5 * z * z) / _SQRT2PI)
        val, _ = integrate.quad_vec(w, -np.inf, np.inf, epsabs=QUAD_EPSABS,
                                    epsrel=QUAD_EPSREL, limit=QUAD_LIMIT)
        return val


@dataclass(frozen=True)
class Uniform(_Marginal):
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or not self.lo < self.hi:
            raise ValueError(f"Uniform needs finite lo < hi, got {self}")

    def sample(self, rng, size=None):
        return rng.uniform(self.lo, self.hi, size)

    def cf(self, t):
        t = _as_t(t)
        # midpoint phase times sinc stays finite for subnormal t
        mid, half = 0.5 * (self.lo + self.hi), 0.5 * (self.hi - self.lo)
        out = np.exp(1j * mid * t) * np.sinc(half * t / np.pi)
        return _squeeze(out, t)

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        return np.clip((y - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        return np.where((y >= self.lo) & (y < self.hi), 1.0 / (self.hi - self.lo), 0.0)

    def prob_zero(self):
        return 0.0

    def log_abs_moment(self):
        # antiderivative of log|x| is x log|x| - x, continuous through 0
        F = lambda x: x * math.log(abs(x)) - x if x != 0 else 0.0
        return (F(self.hi) - F(self.lo)) / (self.hi - self.lo)

    def log_plus_moment(self):
        G = lambda u: u * math.log(u) - u
        total = 0.0
        if self.hi > 1.0:
            total += G(self.hi) - G(max(self.lo, 1.0))
        if self.lo < -1.0:
            total += G(-self.lo) - G(max(-self.hi, 1.0))
        return total / (self.hi - self.lo)

    def abs_quantile(self, q=SCALE_QUANTILE):
        return max(abs(self.lo), abs(self.hi))

    def expect(self, fn):
        w = lambda x: fn(x) / (self.hi - self.lo)
        return _quad(w, self.lo, self.hi)

    def expect_vec(self, fn):
        width = self.hi - self.lo
        val, _ = integrate.quad_vec(lambda x: fn(x) / width, self.lo, self.hi,
                                    epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL,
                                    limit=QUAD_LIMIT)
        return val


@dataclass(frozen=True)
class PointMass(_Marginal):
    v: float = 0.0

    is_discrete = True
    has_pdf = False

    def __post_init__(self):
        if not np.isfinite(self.v):
            raise ValueError(f"PointMass needs a finite value, got {self.v}")

    @property
    def atoms(self):
        return (float(self.v),), (1.0,)

    def sample(self, rng, size=None):
        if size is None:
            return float(self.v)
        return np.full(size, float(self.v))

    def cf(self, t):
        return np.exp(1j * self.v * _as_t(t))

    def cdf(self, y):
        return (np.asarray(y, dtype=float) >= self.v).astype(float)

    def pdf(self, y):
        return None

    def prob_zero(self):
        return 1.0 if self.v == 0 else 0.0

    def log_abs_moment(self):
        return -math.inf if self.v == 0 else math.log(abs(self.v))

    def log_plus_moment(self):
        return 0.0 if self.v == 0 else max(math.log(abs(self.v)), 0.0)

    def abs_quantile(self, q=SCALE_QUANTILE):
        return abs(float(self.v))

    def expect(self, fn):
        return fn(float(self.v))

    def expect_vec(self, fn):
        return np.asarray(fn(float(self.v)))


@dataclass(frozen=True)
class FiniteDiscrete(_Marginal):
    values: tuple = (0.0,)
    probs: tuple = (1.0,)

    is_discrete = True
    has_pdf = False

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "probs", probs)
        if len(vals) == 0 or len(vals) != len(probs):
            raise ValueError("FiniteDiscrete needs equally many values and probs")
        if not all(np.isfinite(vals)):
            raise ValueError("FiniteDiscrete values must be finite")
        if any(p < 0 for p in probs) or abs(math.fsum(probs) - 1.0) > 1e-12:
            raise ValueError("FiniteDiscrete probs must be nonnegative and sum to 1")

    @property
    def atoms(self):
        return self.values, self.probs

    def sample(self, rng, size=None):
        return rng.choice(np.asarray(self.values), size=size, p=np.asarray(self.probs))

    def cf(self, t):
        t = _as_t(t)
        v = np.asarray(self.values)
        p = np.asarray(self.probs)
        return np.exp(1j * np.multiply.outer(t, v)) @ p

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        v = np.asarray(self.values)
        p = np.asarray(self.probs)
        return (np.less_equal.outer(v, y) * p.reshape((-1,) + (1,) * y.ndim)).sum(axis=0)

    def pdf(self, y):
        return None

    def prob_zero(self):
        return math.fsum(p for v, p in zip(self.values, self.probs) if v == 0)

    def log_abs_moment(self):
        if self.prob_zero() > 0:
            return -math.inf
        return math.fsum(p * math.log(abs(v)) for v, p in zip(self.values, self.probs) if p > 0)

    def log_plus_moment(self):
        return math.fsum(p * max(math.log(abs(v)), 0.0)
                         for v, p in zip(self.values, self.probs) if p > 0 and v != 0)

    def abs_quantile(self, q=SCALE_QUANTILE):
        return max(abs(v) for v, p in zip(self.values, self.probs) if p > 0)

    def expect(self, fn):
        return math.fsum(p * fn(v) for v, p in zip(self.values, self.probs))

    def expect_vec(self, fn):
        return sum(p * np.asarray(fn(v)) for v, p in zip(self.values, self.probs))


@dataclass(frozen=True)
class LogNormalAbs(_Marginal):
    """Random sign times a log-normal magnitude.

    ``|X| = exp(mu + sigma Z)`` with ``Z`` standard normal and ``X > 0`` with
    probability ``sign_prob``.  No closed-form characteristic function.
    """

    mu: float = 0.0
    sigma: float = 1.0
    sign_prob: float = 1.0

    has_cf = False

    def __post_init__(self):
        if not (np.isfinite(self.mu) and np.isfinite(self.sigma)) or self.sigma <= 0:
            raise ValueError(f"LogNormalAbs needs finite mu and sigma > 0, got {self}")
        if not 0.0 <= self.sign_prob <= 1.0:
            raise ValueError("sign_prob must lie in [0, 1]")

    def sample(self, rng, size=None):
        mag = rng.lognormal(self.mu, self.sigma, size)
        positive = rng.random(size) < self.sign_prob
        out = np.where(positive, mag, -mag)
        return float(out) if size is None else out

    def cf(self, t):
        return None

    def _abs_cdf(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            z = (np.log(np.where(r > 0, r, 1.0)) - self.mu) / self.sigma
        return np.where(r > 0, _std_normal_cdf(z), 0.0)

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        p = self.sign_prob
        return np.where(y >= 0, (1 - p) + p * self._abs_cdf(y), (1 - p) * (1 - self._abs_cdf(-y)))

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        a = np.abs(y)
        safe = np.where(a > 0, a, 1.0)
        z = (np.log(safe) - self.mu) / self.sigma
        dens = np.exp(-0.5 * z * z) / (safe * self.sigma * _SQRT2PI)
        dens = np.where(a > 0, dens, 0.0)
        return np.where(y > 0, self.sign_prob * dens, (1 - self.sign_prob) * dens)

    def prob_zero(self):
        return 0.0

    def log_abs_moment(self):
        return float(self.mu)

    def log_plus_moment(self):
        # E max(Z', 0) for Z' ~ N(mu, sigma^2)
        r = self.mu / self.sigma
        return float(self.mu * _std_normal_cdf(r) + self.sigma * math.exp(-0.5 * r * r) / _SQRT2PI)

    def abs_quantile(self, q=SCALE_QUANTILE):
        return math.exp(self.mu + self.sigma * float(special.ndtri(q)))

    def _signed(self, fn, z):
        mag = math.exp(self.mu + self.sigma * z)
        p = self.sign_prob
        return p * fn(mag) + (1 - p) * fn(-mag) if 0 < p < 1 else fn(mag if p == 1 else -mag)

    def expect(self, fn):
        w = lambda z: self._signed(fn, z) * math.exp(-0.5 * z * z) / _SQRT2PI
        return _quad(w, -np.inf, np.inf)

    def expect_vec(self, fn):
        w = lambda z: np.asarray(self._signed(fn, z)) * (math.exp(-0.5 * z * z) / _SQRT2PI)
        val, _ = integrate.quad_vec(w, -np.inf, np.inf, epsabs=QUAD_EPSABS,
                                    epsrel=QUAD_EPSREL, limit=QUAD_LIMIT)
        return val


Marginal = Union[Normal, Uniform, PointMass, FiniteDiscrete, LogNormalAbs]
MARGINALS = {cls.__name__: cls for cls in (Normal, Uniform, PointMass, FiniteDiscrete, LogNormalAbs)}


def _is_degenerate(m) -> bool:
    if isinstance(m, PointMass):
        return True
    if isinstance(m, FiniteDiscrete):
        return len({v for v, p in zip(m.values, m.probs) if p > 0}) == 1
    return False


# --------------------------------------------------------------------------
# Independent-pair helpers
# --------------------------------------------------------------------------


def _prob_scaled_le(rho_m, x, z):
    """P(rho * x <= z) for a continuous rho marginal, vectorized in x and z."""
    x, z = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(z, dtype=float))
    safe = np.where(x != 0, x, 1.0)
    ratio = z / safe
    F = rho_m.cdf(ratio)
    return np.where(x > 0, F, np.where(x < 0, 1.0 - F, (z >= 0).astype(float)))


def _indep_transition_cdf(rho_m, eps_m, x, y):
    if x == 0:
        return float(eps_m.cdf(y))
    if rho_m.is_discrete:
        vals, probs = rho_m.atoms
        return math.fsum(p * float(eps_m.cdf(y - r * x)) for r, p in zip(vals, probs))
    if eps_m.is_discrete:
        vals, probs = eps_m.atoms
        return math.fsum(p * float(_prob_scaled_le(rho_m, x, y - e)) for e, p in zip(vals, probs))
    return rho_m.expect(lambda r: float(eps_m.cdf(y - r * x)))


def _indep_transition_pdf(rho_m, eps_m, xs, ys):
    """Density of rho*x + eps on the outer grid xs (rows) by ys (columns)."""
    if not eps_m.has_pdf:
        return None
    X, Y = np.meshgrid(np.asarray(xs, dtype=float), np.asarray(ys, dtype=float), indexing="ij")
    if rho_m.is_discrete:
        vals, probs = rho_m.atoms
        return sum(p * eps_m.pdf(Y - r * X) for r, p in zip(vals, probs))
    if isinstance(eps_m, Uniform):
        width = eps_m.hi - eps_m.lo
        upper = _prob_scaled_le(rho_m, X, Y - eps_m.lo)
        lower = _prob_scaled_le(rho_m, X, Y - eps_m.hi)
        return (upper - lower) / width
    return rho_m.expect_vec(lambda r: eps_m.pdf(Y - r * X))


# --------------------------------------------------------------------------
# Joint laws
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class IndependentProduct:
    rho_marginal: Marginal
    eps_marginal: Marginal

    def sample(self, rng, size=None):
        rho = self.rho_marginal.sample(rng, size)
        eps = self.eps_marginal.sample(rng, size)
        return rho, eps

    def prob_rho_zero(self):
        return self.rho_marginal.prob_zero()

    def is_degenerate(self):
        return _is_degenerate(self.rho_marginal) and _is_degenerate(self.eps_marginal)

    def rho_cf(self, t):
        return self.rho_marginal.cf(t)

    def eps_cf(self, t):
        return self.eps_marginal.cf(t)

    def joint_cf(self, t1, t2):
        a, b = self.rho_cf(t1), self.eps_cf(t2)
        return None if a is None or b is None else a * b

    def _log_moment_rho(self):
        return self.rho_marginal.log_abs_moment()

    def _log_plus_moment_eps(self):
        return self.eps_marginal.log_plus_moment()

    def eps_scale(self):
        return self.eps_marginal.abs_quantile()

    def transition_cdf(self, x, y):
        return _indep_transition_cdf(self.rho_marginal, self.eps_marginal, float(x), float(y))

    def transition_pdf(self, xs, ys):
        return _indep_transition_pdf(self.rho_marginal, self.eps_marginal, xs, ys)

    def to_dict(self):
        return {"kind": "IndependentProduct",
                "rho_marginal": self.rho_marginal.to_dict(),
                "eps_marginal": self.eps_marginal.to_dict()}


@dataclass(frozen=True)
class ZeroInflatedRho:
    """rho is exactly 0 with probability ``alpha``, else drawn from
    ``rho_given_nonzero``; eps is independent of rho."""

    alpha: float
    rho_given_nonzero: Marginal
    eps_marginal: Marginal

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")

    def sample(self, rng, size=None):
        zero = rng.random(size) < self.alpha
        other = self.rho_given_nonzero.sample(rng, size)
        # branching produces an exact 0.0 so regeneration detection can use equality
        rho = np.where(zero, 0.0, other)
        eps = self.eps_marginal.sample(rng, size)
        if size is None:
            rho = float(rho)
        return rho, eps

    def prob_rho_zero(self):
        return self.alpha + (1 - self.alpha) * self.rho_given_nonzero.prob_zero()

    def is_degenerate(self):
        if not _is_degenerate(self.eps_marginal):
            return False
        if self.alpha == 1.0:
            return True
        if self.alpha == 0.0 or self.rho_given_nonzero.prob_zero() == 1.0:
            return _is_degenerate(self.rho_given_nonzero)
        return False

    def rho_cf(self, t):
        c = self.rho_given_nonzero.cf(t)
        return None if c is None else self.alpha + (1 - self.alpha) * c

    def eps_cf(self, t):
        return self.eps_marginal.cf(t)

    def joint_cf(self, t1, t2):
        a, b = self.rho_cf(t1), self.eps_cf(t2)
        return None if a is None or b is None else a * b

    def _log_moment_rho(self):
        if self.prob_rho_zero() > 0:
            return -math.inf
        return self.rho_given_nonzero.log_abs_moment()

    def _log_plus_moment_eps(self):
        return self.eps_marginal.log_plus_moment()

    def eps_scale(self):
        return self.eps_marginal.abs_quantile()

    def transition_cdf(self, x, y):
        at_zero = float(self.eps_marginal.cdf(y))
        if self.alpha == 1.0:
            return at_zero
        rest = _indep_transition_cdf(self.rho_given_nonzero, self.eps_marginal, float(x), float(y))
        return self.alpha * at_zero + (1 - self.alpha) * rest

    def transition_pdf(self, xs, ys):
        rest = _indep_transition_pdf(self.rho_given_nonzero, self.eps_marginal, xs, ys)
        if rest is None:
            return None
        at_zero = self.eps_marginal.pdf(np.asarray(ys, dtype=float))[None, :]
        return self.alpha * at_zero + (1 - self.alpha) * rest

    def to_dict(self):
        return {"kind": "ZeroInflatedRho", "alpha": self.alpha,
                "rho_given_nonzero": self.rho_given_nonzero.to_dict(),
                "eps_marginal": self.eps_marginal.to_dict()}


@dataclass(frozen=True)
class DiscreteJoint:
    """Finitely many (rho, eps) atoms; the only family with dependent pairs."""

    atoms: tuple

    def __post_init__(self):
        atoms = tuple((float(r), float(e), float(p)) for r, e, p in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        if not atoms:
            raise ValueError("DiscreteJoint needs at least one atom")
        probs = [p for _, _, p in atoms]
        if any(p < 0 for p in probs) or abs(math.fsum(probs) - 1.0) > 1e-12:
            raise ValueError("DiscreteJoint probabilities must be nonnegative and sum to 1")
        if not all(np.isfinite([r for r, _, _ in atoms] + [e for _, e, _ in atoms])):
            raise ValueError("DiscreteJoint atoms must be finite")

    def _arrays(self):
        a = np.asarray(self.atoms)
        return a[:, 0], a[:, 1], a[:, 2]

    def sample(self, rng, size=None):
        r, e, p = self._arrays()
        idx = rng.choice(len(p), size=size, p=p)
        if size is None:
            return float(r[idx]), float(e[idx])
        return r[idx], e[idx]

    def prob_rho_zero(self):
        return math.fsum(p for r, _, p in self.atoms if r == 0)

    def is_degenerate(self):
        return len({(r, e) for r, e, p in self.atoms if p > 0}) == 1

    def rho_cf(self, t):
        r, _, p = self._arrays()
        return np.exp(1j * np.multiply.outer(_as_t(t), r)) @ p

    def eps_cf(self, t):
        _, e, p = self._arrays()
        return np.exp(1j * np.multiply.outer(_as_t(t), e)) @ p

    def joint_cf(self, t1, t2):
        r, e, p = self._arrays()
        t1, t2 = np.broadcast_arrays(_as_t(t1), _as_t(t2))
        phase = np.multiply.outer(t1, r) + np.multiply.outer(t2, e)
        return np.exp(1j * phase) @ p

    def _log_moment_rho(self):
        if self.prob_rho_zero() > 0:
            return -math.inf
        return math.fsum(p * math.log(abs(r)) for r, _, p in self.atoms if p > 0)

    def _log_plus_moment_eps(self):
        return math.fsum(p * max(math.log(abs(e)), 0.0) for _, e, p in self.atoms
                         if p > 0 and e != 0)

    def eps_scale(self):
        return max(abs(e) for _, e, p in self.atoms if p > 0)

    def eps_given_rho_zero(self):
        """Conditional eps atoms given rho == 0, or None if rho is never 0."""
        sel = [(e, p) for r, e, p in self.atoms if r == 0 and p > 0]
        if not sel:
            return None
        tot = math.fsum(p for _, p in sel)
        return FiniteDiscrete(tuple(e for e, _ in sel), tuple(p / tot for _, p in sel))

    def transition_cdf(self, x, y):
        return math.fsum(p for r, e, p in self.atoms if r * x + e <= y)

    def transition_pdf(self, xs, ys):
        return None

    def to_dict(self):
        return {"kind": "DiscreteJoint", "atoms": [list(a) for a in self.atoms]}


JointCoefficientLaw = Union[IndependentProduct, ZeroInflatedRho, DiscreteJoint]


# --------------------------------------------------------------------------
# Operations
# --------------------------------------------------------------------------


def sample_pair(law: JointCoefficientLaw, rng: np.random.Generator) -> tuple[float, float]:
    rho, eps = law.sample(rng)
    return float(rho), float(eps)


@functools.lru_cache(maxsize=256)
def log_moment_rho(law: JointCoefficientLaw) -> float:
    """E log|rho|; ``-inf`` whenever rho has an atom at zero.

    Raises
    ------
    NonIntegrableError
        If the integral is not finite from above.
    """
    val = float(law._log_moment_rho())
    if math.isnan(val) or val == math.inf:
        raise NonIntegrableError(f"E log|rho| diverges for {law}")
    return val


@functools.lru_cache(maxsize=256)
def log_plus_moment_eps(law: JointCoefficientLaw) -> float:
    """E (log|eps|)^+; ``inf`` signals divergence."""
    val = float(law._log_plus_moment_eps())
    if math.isnan(val):
        raise NonIntegrableError(f"E (log|eps|)^+ is undefined for {law}")
    return val


def oracle_transition_cdf(law: JointCoefficientLaw, x: float, y: float) -> Optional[float]:
    """G(x, y) = P(rho x + eps <= y), or None when no oracle exists."""
    return law.transition_cdf(x, y)


def oracle_transition_pdf(law: JointCoefficientLaw, xs, ys) -> Optional[np.ndarray]:
    """Transition density on the grid ``xs`` x ``ys`` (shape ``(len(xs), len(ys))``).

    None when eps has no density or the pair is discrete.
    """
    return law.transition_pdf(np.atleast_1d(xs), np.atleast_1d(ys))


def oracle_cf_rho(law: JointCoefficientLaw, t):
    return law.rho_cf(t)


def oracle_cf_eps(law: JointCoefficientLaw, t):
    return law.eps_cf(t)


def oracle_joint_cf(law: JointCoefficientLaw, t1, t2):
    return law.joint_cf(t1, t2)


def eps_scale(law: JointCoefficientLaw) -> float:
    """99.99% quantile of |eps| (a proxy for discrete and bounded families)."""
    return float(law.eps_scale())


# --------------------------------------------------------------------------
# Config round-trip
# --------------------------------------------------------------------------


def _require(d, key, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object, got {type(d).__name__}")
    if key not in d:
        raise ConfigError(f"{where}: missing required field '{key}'")
    return d[key]


def marginal_from_dict(d: dict, where: str = "marginal") -> Marginal:
    kind = _require(d, "kind", where)
    cls = MARGINALS.get(kind)
    if cls is None:
        raise ConfigError(f"{where}: unknown marginal kind '{kind}'")
    names = {f.name for f in fields(cls)}
    extra = set(d) - names - {"kind"}
    if extra:
        raise ConfigError(f"{where}: unknown field(s) {sorted(extra)} for {kind}")
    kwargs = {k: _require(d, k, f"{where}.{kind}") for k in names}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def law_from_dict(d: dict, where: str = "law") -> JointCoefficientLaw:
    kind = _require(d, "kind", where)
    try:
        if kind == "IndependentProduct":
            return IndependentProduct(
                marginal_from_dict(_require(d, "rho_marginal", where), f"{where}.rho_marginal"),
                marginal_from_dict(_require(d, "eps_marginal", where), f"{where}.eps_marginal"))
        if kind == "ZeroInflatedRho":
            return ZeroInflatedRho(
                float(_require(d, "alpha", where)),
                marginal_from_dict(_require(d, "rho_given_nonzero", where),
                                   f"{where}.rho_given_nonzero"),
                marginal_from_dict(_require(d, "eps_marginal", where), f"{where}.eps_marginal"))
        if kind == "DiscreteJoint":
            atoms = _require(d, "atoms", where)
            if not all(isinstance(a, (list, tuple)) and len(a) == 3 for a in atoms):
                raise ConfigError(f"{where}.atoms: each atom is [rho_value, eps_value, probability]")
            return DiscreteJoint(tuple(tuple(a) for a in atoms))
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}: unknown law kind '{kind}'")


def law_to_dict(law: JointCoefficientLaw) -> dict:
    return law.to_dict()
