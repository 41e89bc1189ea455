"""Binned nonparametric estimators of the transition law from one path.

All estimators select the steps ``j`` whose state ``X_j`` falls in the
half-open bin ``(x, x + h]`` and average a function of the successor
``X_{j+1}`` over them, for ``j = 0 .. n-1``.  The ``1/(nh)`` factors of the
numerator and denominator cancel, so every estimate is an exact ratio of a
sum to an integer count.  An empty bin yields zeros plus an explicit flag.

Under independence of rho and eps the conditional characteristic function
factorizes as ``phi_x(t) = psi_rho(t x) psi_eps(t)``, which gives
``psi_eps = phi_0`` and ``psi_rho(t) = phi_x(t/x) / phi_0(t/x)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import special

from .dist import JointCoefficientLaw, oracle_transition_cdf
from .errors import AllInvalidError, ZeroVarianceError
from .process import Trajectory

BANDWIDTH_CONSTANT = 1.06
DENOMINATOR_FLOOR = 0.05
_CHUNK = 2 ** 22

PathLike = Union[Trajectory, np.ndarray]


def _path(data: PathLike) -> np.ndarray:
    if isinstance(data, Trajectory):
        return data.path
    path = np.asarray(data, dtype=np.float64)
    if path.ndim != 1 or len(path) < 2:
        raise ValueError("need a 1-d path X_0..X_n with n >= 1")
    return path


def bin_successors(data: PathLike, x: float, h: float) -> np.ndarray:
    """``X_{j+1}`` for every ``j < n`` with ``x < X_j <= x + h``, in time order."""
    if not h > 0:
        raise ValueError("bandwidth h must be positive")
    path = _path(data)
    prev = path[:-1]
    mask = (prev > x) & (prev <= x + h)
    return path[1:][mask]


@dataclass(frozen=True, eq=False)
class TransitionCdfEstimate:
    x: float
    h: float
    y_grid: np.ndarray
    values: np.ndarray
    bin_count: int
    empty_bin: bool

    def to_dict(self):
        return {"x": self.x, "h": self.h, "y_grid": self.y_grid, "values": self.values,
                "bin_count": self.bin_count, "empty_bin": self.empty_bin}


@dataclass(frozen=True, eq=False)
class CharFnEstimate:
    """Complex estimates on ``t_grid``; entries with ``valid == False`` are NaN."""

    x: float
    h: float
    t_grid: np.ndarray
    values: np.ndarray
    valid: np.ndarray
    bin_count: int
    empty_bin: bool
    reference_bin_count: Optional[int] = None

    def to_dict(self):
        return {"x": self.x, "h": self.h, "t_grid": self.t_grid,
                "re": np.where(self.valid, self.values.real, 0.0),
                "im": np.where(self.valid, self.values.imag, 0.0),
                "valid": self.valid, "bin_count": self.bin_count,
                "empty_bin": self.empty_bin, "reference_bin_count": self.reference_bin_count}


def transition_cdf_estimate(data: PathLike, x: float, h: float, y_grid) -> TransitionCdfEstimate:
    """Binned estimate of ``P(X_1 <= y | X_0 = x)`` on ``y_grid``.

    Returns the fraction of successors ``<= y`` among steps starting in
    ``(x, x + h]``.  With no such step the values are 0 and ``empty_bin``
    is set.
    """
    ys = np.asarray(y_grid, dtype=np.float64)
    succ = np.sort(bin_successors(data, x, h))
    count = len(succ)
    if count == 0:
        return TransitionCdfEstimate(float(x), float(h), ys, np.zeros(len(ys)), 0, True)
    values = np.searchsorted(succ, ys, side="right") / count
    return TransitionCdfEstimate(float(x), float(h), ys, values, count, False)


def empirical_cf(samples: np.ndarray, t_grid) -> np.ndarray:
    """Mean of ``exp(i t s)`` over ``samples`` for each ``t``.

    Computed at ``|t|`` and conjugated for negative ``t``, so
    ``cf(-t) == conj(cf(t))`` holds exactly; ``cf(0) == 1`` exactly.
    """
    t = np.asarray(t_grid, dtype=np.float64)
    s = np.asarray(samples, dtype=np.float64)
    a = np.abs(t).ravel()
    re = np.empty(len(a))
    im = np.empty(len(a))
    rows = max(1, _CHUNK // max(len(s), 1))
    for i in range(0, len(a), rows):
        ph = np.multiply.outer(a[i:i + rows], s)
        re[i:i + rows] = np.cos(ph).sum(axis=1)
        im[i:i + rows] = np.sin(ph).sum(axis=1)
    im = np.where(t.ravel() < 0, -im, im)
    # divide the parts separately: complex division can round cf(0) below 1
    out = np.empty(len(a), dtype=complex)
    out.real = re / len(s)
    out.imag = im / len(s)
    return out.reshape(t.shape)


def conditional_cf_estimate(data: PathLike, x: float, h: float, t_grid) -> CharFnEstimate:
    """Binned estimate of ``E exp(i t X_1) | X_0 = x``."""
    ts = np.asarray(t_grid, dtype=np.float64)
    succ = bin_successors(data, x, h)
    count = len(succ)
    if count == 0:
        return CharFnEstimate(float(x), float(h), ts, np.zeros(len(ts), dtype=complex),
                              np.zeros(len(ts), dtype=bool), 0, True)
    return CharFnEstimate(float(x), float(h), ts, empirical_cf(succ, ts),
                          np.ones(len(ts), dtype=bool), count, False)


def recover_eps_cf(data: PathLike, h: float, t_grid) -> CharFnEstimate:
    """Estimate ``psi_eps`` as the conditional CF at ``x = 0``.

    Assumes rho and eps independent; that cannot be checked from one path.
    If the bin at 0 is empty the estimate is flagged and the caller may
    widen ``h``.
    """
    return conditional_cf_estimate(data, 0.0, h, t_grid)


def recover_rho_cf(data: PathLike, h: float, x_probe: float, t_grid,
                   floor: float = DENOMINATOR_FLOOR) -> CharFnEstimate:
    """Estimate ``psi_rho(t)`` as ``phi_{x_probe}(t/x_probe) / phi_0(t/x_probe)``.

    Entries whose denominator has modulus below ``floor`` (or whose bins
    are empty) are marked invalid and set to NaN.

    Raises
    ------
    AllInvalidError
        If no entry survives.
    """
    if x_probe == 0:
        raise ValueError("x_probe must be nonzero")
    ts = np.asarray(t_grid, dtype=np.float64)
    s = ts / x_probe
    num = conditional_cf_estimate(data, x_probe, h, s)
    den = conditional_cf_estimate(data, 0.0, h, s)
    valid = num.valid & den.valid & (np.abs(den.values) >= floor)
    values = np.full(len(ts), np.nan + 1j * np.nan)
    values[valid] = num.values[valid] / den.values[valid]
    if not valid.any():
        raise AllInvalidError(
            f"every entry invalid (bins {num.bin_count}/{den.bin_count}, floor {floor})")
    return CharFnEstimate(float(x_probe), float(h), ts, values, valid, num.bin_count,
                          num.empty_bin, den.bin_count)


@dataclass(frozen=True)
class JointCfEstimate:
    t1: float
    t2: float
    x: float
    h: float
    value: complex
    bin_count: int
    empty_bin: bool


def joint_cf_from_transition(data: PathLike, h: float, t1: float, t2: float) -> JointCfEstimate:
    """Joint CF of ``(rho, eps)`` at ``(t1, t2)`` via ``phi_{t1/t2}(t2)``."""
    if t2 == 0:
        raise ValueError("t2 must be nonzero")
    x = t1 / t2
    est = conditional_cf_estimate(data, x, h, [t2])
    return JointCfEstimate(float(t1), float(t2), x, float(h), complex(est.values[0]),
                           est.bin_count, est.empty_bin)


def bandwidth_rule(n: int, sd: float, c: float = BANDWIDTH_CONSTANT) -> float:
    return c * sd * n ** (-0.2)


def bandwidth_default(data: PathLike, c: float = BANDWIDTH_CONSTANT) -> float:
    """Plug-in bandwidth ``c * sd(states) * n^(-1/5)`` with ``c = 1.06``.

    Uses ``X_1..X_n`` of a trajectory (or the whole array given).
    """
    states = data.states if isinstance(data, Trajectory) else np.asarray(data, dtype=float)
    n = len(states)
    if n < 2:
        raise ValueError("bandwidth_default needs n >= 2")
    sd = float(np.std(states, ddof=1))
    if sd == 0:
        raise ZeroVarianceError("all states identical; no scale for the bandwidth")
    return bandwidth_rule(n, sd, c)


def default_x_probe(data: PathLike, h: Optional[float] = None) -> float:
    """Median of ``|X_j|`` over states at least ``max(h, sd/10)`` away from 0."""
    states = data.states if isinstance(data, Trajectory) else np.asarray(data, dtype=float)
    a = np.abs(states)
    away = max(h or 0.0, 0.1 * float(np.std(states)))
    a = a[(a >= away) & (a > 0)]
    if len(a) == 0:
        raise ZeroVarianceError("no states away from 0 to probe")
    return float(np.median(a))


def bandwidth_ladder(h0: float, levels: int) -> np.ndarray:
    """``h_k = h0 * 2^-k`` for ``k = 0 .. levels-1``."""
    return h0 * 2.0 ** -np.arange(levels)


def transition_cdf_ladder(data: PathLike, x: float, h0: float, levels: int, y_grid):
    return [transition_cdf_estimate(data, x, h, y_grid) for h in bandwidth_ladder(h0, levels)]


def conditional_cf_ladder(data: PathLike, x: float, h0: float, levels: int, t_grid):
    return [conditional_cf_estimate(data, x, h, t_grid) for h in bandwidth_ladder(h0, levels)]


def fixed_bandwidth_limit(law: JointCoefficientLaw, x: float, y: float, h: float,
                          stationary_values: np.ndarray, n_bins: int = 50,
                          nodes: int = 5) -> float:
    """Large-``n`` limit of the transition-CDF estimate at fixed ``h``.

    ``int_{(x, x+h]} G(u, y) f(u) du / int_{(x, x+h]} f(u) du`` with ``f`` a
    histogram density of ``stationary_values`` on ``n_bins`` equal sub-bins
    and ``G`` the oracle transition CDF, integrated by Gauss-Legendre on
    each sub-bin.
    """
    edges = np.linspace(x, x + h, n_bins + 1)
    v = np.asarray(stationary_values)
    v = v[(v > x) & (v <= x + h)]
    if len(v) == 0:
        raise ValueError("no stationary samples in the bin")
    counts = np.histogram(v, bins=edges)[0].astype(float)
    gl_x, gl_w = special.roots_legendre(nodes)
    num = 0.0
    den = 0.0
    for lo, hi, cnt in zip(edges[:-1], edges[1:], counts):
        if cnt == 0:
            continue
        half = 0.5 * (hi - lo)
        us = lo + half * (gl_x + 1.0)
        g = np.array([oracle_transition_cdf(law, u, y) for u in us])
        dens = cnt / (hi - lo)
        num += dens * half * float(gl_w @ g)
        den += dens * (hi - lo)
    return num / den
