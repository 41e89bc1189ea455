"""Simulation of the random-coefficient recurrence and of its stationary limit.

``simulate`` runs ``X_n = rho_n X_{n-1} + eps_n`` for one chain.
``sample_stationary`` draws from the limit law through the a.s. convergent
series ``eps_1 + rho_1 eps_2 + rho_1 rho_2 eps_3 + ...``.
``run_ensemble`` fans independent chains out over worker processes; chain
``k`` always draws from the stream derived from ``(root_seed, k)``, so the
result does not depend on the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .dist import JointCoefficientLaw, eps_scale, log_moment_rho, log_plus_moment_eps
from .errors import PreconditionError, SimulationOverflowError

DEFAULT_TOL_PROD = 1e-12
DEFAULT_N_MIN = 16
DEFAULT_N_MAX = 100_000


def step(x: float, rho: float, eps: float) -> float:
    return rho * x + eps


def chain_stream(root_seed: int, chain: int) -> np.random.Generator:
    """Independent generator for chain ``chain`` of an ensemble rooted at ``root_seed``."""
    return np.random.default_rng(np.random.SeedSequence(root_seed, spawn_key=(chain,)))


def _frozen(arr):
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A realized path ``X_0, ..., X_n``.

    ``states`` holds ``X_1..X_n``; ``rho`` and ``eps`` hold the driving
    pairs for the same indices when they were retained.
    """

    x0: float
    states: np.ndarray
    rho: Optional[np.ndarray] = None
    eps: Optional[np.ndarray] = None
    seed_id: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "x0", float(self.x0))
        object.__setattr__(self, "states", _frozen(self.states))
        if (self.rho is None) != (self.eps is None):
            raise ValueError("rho and eps must be retained together")
        if self.rho is not None:
            object.__setattr__(self, "rho", _frozen(self.rho))
            object.__setattr__(self, "eps", _frozen(self.eps))
            if not len(self.rho) == len(self.eps) == len(self.states):
                raise ValueError("driving sequence length must match states")

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def has_driving(self) -> bool:
        return self.rho is not None

    @property
    def path(self) -> np.ndarray:
        """``X_0..X_n`` as one array."""
        return np.concatenate(([self.x0], self.states))

    @property
    def driving(self):
        if self.rho is None:
            return None
        return np.column_stack((self.rho, self.eps))

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is b
            return a.shape == b.shape and a.tobytes() == b.tobytes()

        return (np.float64(self.x0).tobytes() == np.float64(other.x0).tobytes()
                and same(self.states, other.states) and same(self.rho, other.rho)
                and same(self.eps, other.eps) and self.seed_id == other.seed_id)

    __hash__ = None


def _recurse(x0: float, rho: np.ndarray, eps: np.ndarray) -> np.ndarray:
    out = [0.0] * len(rho)
    x = float(x0)
    for i, (r, e) in enumerate(zip(rho.tolist(), eps.tolist())):
        x = r * x + e
        out[i] = x
    states = np.array(out, dtype=np.float64)
    bad = ~np.isfinite(states)
    if bad.any():
        raise SimulationOverflowError(int(np.argmax(bad)) + 1)
    return states


def simulate(law: JointCoefficientLaw, x0: float, n: int, retain_driving: bool = True,
             rng: Optional[np.random.Generator] = None, seed_id: Optional[str] = None) -> Trajectory:
    """Run the recurrence for ``n`` steps from ``x0``.

    Parameters
    ----------
    law : JointCoefficientLaw
        Law of the i.i.d. pairs ``(rho_n, eps_n)``.
    x0 : float
        Initial state.
    n : int
        Number of steps, at least 1.
    retain_driving : bool
        Keep the drawn ``(rho, eps)`` pairs on the trajectory.
    rng : numpy.random.Generator
        Source of randomness.  The pairs are drawn as one block, so a fixed
        stream gives a bit-identical path.

    Raises
    ------
    SimulationOverflowError
        If the path leaves the finite floats (possible when
        ``E log|rho| >= 0``); ``step`` names the first bad index.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if rng is None:
        rng = np.random.default_rng()
    rho, eps = law.sample(rng, n)
    rho = np.asarray(rho, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    states = _recurse(x0, rho, eps)
    if retain_driving:
        return Trajectory(x0, states, rho, eps, seed_id)
    return Trajectory(x0, states, seed_id=seed_id)


def terminal_states(law: JointCoefficientLaw, x0, n: int, m: int,
                    rng: np.random.Generator) -> np.ndarray:
    """``X_n`` for ``m`` independent chains started at ``x0`` (vectorized over chains)."""
    x = np.full(m, x0, dtype=np.float64) if np.ndim(x0) == 0 else np.array(x0, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, n + 1):
            rho, eps = law.sample(rng, m)
            x = rho * x + eps
            if not np.isfinite(x).all():
                raise SimulationOverflowError(k)
    return x


# --------------------------------------------------------------------------
# Stationary limit
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StationarySample:
    """One draw from the limit law by truncating the series.

    ``terms_used`` is the truncation index ``N``; ``tail_bound_estimate`` is
    ``|rho_1...rho_N| * scale(eps)``, a heuristic for the neglected tail and
    not a proven bound.  ``last_increment`` is the size of the last term
    added, ``|rho_1...rho_{N-1} eps_N|``; ``next_increment`` is the first
    neglected one, ``|Y'_{N+1} - Y'_N| = |rho_1...rho_N eps_{N+1}|``.
    """

    value: float
    terms_used: int
    tail_bound_estimate: float
    last_increment: float = 0.0
    truncated: bool = False
    next_increment: Optional[float] = None


@dataclass(frozen=True)
class StationaryBatch:
    values: np.ndarray
    terms_used: np.ndarray
    tail_bound_estimate: np.ndarray
    last_increment: np.ndarray
    truncated: np.ndarray


def check_contractive(law: JointCoefficientLaw) -> None:
    """Raise unless the series defining the limit law converges a.s."""
    lm = log_moment_rho(law)
    if not lm < 0:
        raise PreconditionError(
            f"E log|rho| = {lm:.6g} is not negative; the stationary series diverges",
            hypothesis="E log|rho| < 0")
    lp = log_plus_moment_eps(law)
    if not math.isfinite(lp):
        raise PreconditionError("E (log|eps|)^+ is infinite",
                                hypothesis="E (log|eps|)^+ < inf")


def _check_truncation_args(tol_prod, n_min, n_max):
    if not tol_prod > 0:
        raise ValueError("tol_prod must be positive")
    if n_min < 1 or n_max < n_min:
        raise ValueError("need 1 <= n_min <= n_max")


def sample_stationary(law: JointCoefficientLaw, tol_prod: float = DEFAULT_TOL_PROD,
                      n_min: int = DEFAULT_N_MIN, n_max: int = DEFAULT_N_MAX,
                      rng: Optional[np.random.Generator] = None,
                      chunk: int = 64) -> StationarySample:
    """Draw one sample of the limit law.

    Sums ``Y'_N = eps_1 + rho_1 eps_2 + ... + rho_1...rho_{N-1} eps_N`` where
    ``N`` is the first index ``>= n_min`` with ``|rho_1...rho_N| <= tol_prod``,
    capped at ``n_max`` (then ``truncated`` is set).  The running product is
    kept as log-modulus plus sign.
    """
    check_contractive(law)
    _check_truncation_args(tol_prod, n_min, n_max)
    if rng is None:
        rng = np.random.default_rng()
    log_tol = math.log(tol_prod)
    value = 0.0
    log_abs = 0.0
    sign = 1.0
    last = 0.0
    k = 0
    while True:
        rho, eps = law.sample(rng, chunk)
        rho, eps = np.asarray(rho).tolist(), np.asarray(eps).tolist()
        for i, (r, e) in enumerate(zip(rho, eps)):
            k += 1
            term = sign * math.exp(log_abs) * e
            value += term
            last = abs(term)
            if r == 0.0:
                log_abs = -math.inf
            else:
                log_abs += math.log(abs(r))
                if r < 0:
                    sign = -sign
            if (k >= n_min and log_abs <= log_tol) or k >= n_max:
                truncated = not (log_abs <= log_tol)
                tail = math.exp(log_abs) * eps_scale(law)
                # the pair after N is already drawn unless the chunk ran out
                e_next = eps[i + 1] if i + 1 < len(eps) else float(law.sample(rng, 1)[1][0])
                nxt = math.exp(log_abs) * abs(e_next)
                return StationarySample(value, k, tail, last, truncated, nxt)


def sample_stationary_batch(law: JointCoefficientLaw, m: int,
                            tol_prod: float = DEFAULT_TOL_PROD, n_min: int = DEFAULT_N_MIN,
                            n_max: int = DEFAULT_N_MAX,
                            rng: Optional[np.random.Generator] = None,
                            block: int = 1_000_000) -> StationaryBatch:
    """Vectorized ``sample_stationary`` for ``m`` independent draws.

    Same truncation rule per draw; lanes that have stopped are dropped so the
    cost follows the realized truncation indices.
    """
    check_contractive(law)
    _check_truncation_args(tol_prod, n_min, n_max)
    if rng is None:
        rng = np.random.default_rng()
    log_tol = math.log(tol_prod)
    scale = eps_scale(law)
    values = np.empty(m)
    terms = np.empty(m, dtype=np.int64)
    tails = np.empty(m)
    lasts = np.empty(m)
    trunc = np.zeros(m, dtype=bool)
    for start in range(0, m, block):
        stop = min(start + block, m)
        idx = np.arange(start, stop)
        val = np.zeros(len(idx))
        log_abs = np.zeros(len(idx))
        sign = np.ones(len(idx))
        k = 0
        while len(idx):
            k += 1
            rho, eps = law.sample(rng, len(idx))
            term = sign * np.exp(log_abs) * eps
            val += term
            with np.errstate(divide="ignore"):
                log_abs = log_abs + np.log(np.abs(rho))
            sign = sign * np.where(rho < 0, -1.0, 1.0)
            done = (log_abs <= log_tol) & (k >= n_min)
            if k >= n_max:
                done[:] = True
            if done.any():
                out = idx[done]
                values[out] = val[done]
                terms[out] = k
                tails[out] = np.exp(log_abs[done]) * scale
                lasts[out] = np.abs(term[done])
                trunc[out] = ~(log_abs[done] <= log_tol)
                keep = ~done
                idx, val, log_abs, sign = idx[keep], val[keep], log_abs[keep], sign[keep]
    return StationaryBatch(values, terms, tails, lasts, trunc)


# --------------------------------------------------------------------------
# Ensembles
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EnsembleSpec:
    """What each chain of an ensemble produces.

    ``kind`` is ``"simulate"`` (one ``Trajectory`` of ``length`` steps per
    chain) or ``"stationary"`` (one ``StationarySample`` per chain).
    """

    n_chains: int
    length: int = 100
    x0: float = 0.0
    retain_driving: bool = False
    kind: str = "simulate"
    tol_prod: float = DEFAULT_TOL_PROD
    n_min: int = DEFAULT_N_MIN
    n_max: int = DEFAULT_N_MAX

    def __post_init__(self):
        if self.kind not in ("simulate", "stationary"):
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        if self.n_chains < 1:
            raise ValueError("n_chains must be at least 1")


def _run_chain(rng, k, law, spec: EnsembleSpec, root_seed: int):
    if spec.kind == "stationary":
        return sample_stationary(law, spec.tol_prod, spec.n_min, spec.n_max, rng)
    try:
        return simulate(law, spec.x0, spec.length, spec.retain_driving, rng,
                        seed_id=f"{root_seed}:{k}")
    except SimulationOverflowError as exc:
        raise SimulationOverflowError(exc.step, chain=k) from None


def _run_block(fn, root_seed, chains, args):
    return [fn(chain_stream(root_seed, k), k, *args) for k in chains]


def map_chains(fn, root_seed: int, n: int, workers: int = 1, args: tuple = ()) -> list:
    """``[fn(chain_stream(root_seed, k), k, *args) for k in range(n)]``, optionally in parallel.

    ``fn`` must be a picklable module-level function when ``workers > 1``.
    Results come back in chain order whatever the scheduling.
    """
    if workers <= 1 or n == 1:
        return _run_block(fn, root_seed, range(n), args)
    n_blocks = min(n, 4 * workers)
    blocks = [[int(k) for k in b] for b in np.array_split(np.arange(n), n_blocks)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = pool.map(_run_block, [fn] * len(blocks), [root_seed] * len(blocks),
                         blocks, [args] * len(blocks))
        return [item for part in parts for item in part]


def run_ensemble(law: JointCoefficientLaw, spec: EnsembleSpec, root_seed: int,
                 workers: int = 1) -> list[Union[Trajectory, StationarySample]]:
    """Run ``spec.n_chains`` independent chains, in chain order.

    Each chain's stream depends only on ``(root_seed, chain)``, so the
    output is bit-identical for every worker count.
    """
    if spec.kind == "stationary":
        check_contractive(law)
    return map_chains(_run_chain, root_seed, spec.n_chains, workers, (law, spec, root_seed))
