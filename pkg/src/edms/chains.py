"""Regime chains with explicit segment-duration modelling.

A Markov switching model partitions time into segments, each generated by
one of S regimes.  The segment length ("duration") is controlled either by
a pmf ``rho`` on {d_min..d_max} or by its hazard form ``lam`` (probability
of continuing a segment that has already lasted c steps).  The combined
regime/duration variables form a first-order Markov chain under three
encodings:

* ``dec`` -- state (s, c), c counts down to the segment end,
* ``inc`` -- state (s, c), c counts up from the segment start,
* ``cd``  -- state (s, d, c), total duration d plus countdown c.

This module owns the parameter containers, the transition kernels of the
three encodings, pmf/hazard conversion, chain sampling, and the
minimum-duration regime-copy construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np
from scipy.special import gammaln

DEC, INC, CD = "dec", "inc", "cd"
ENCODINGS = (DEC, INC, CD)

SIMPLEX_TOL = 1e-9


def make_rng(seed):
    """Root generator for a run. Accepts an int seed, a Generator, or None."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def spawn_rngs(seed, n):
    """n independent sub-streams, reproducible from a single named seed."""
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(child) for child in ss.spawn(n)]


def _check_simplex(p, axis, what):
    p = np.asarray(p, dtype=float)
    if np.any(p < -SIMPLEX_TOL) or np.any(p > 1 + SIMPLEX_TOL):
        raise ValueError(f"{what}: entries outside [0, 1]")
    sums = p.sum(axis=axis)
    if not np.allclose(sums, 1.0, atol=SIMPLEX_TOL, rtol=0.0):
        raise ValueError(f"{what}: does not sum to 1 (got {sums})")


# ---------------------------------------------------------------------------
# parameter containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegimeTransition:
    """Initial distribution and transition matrix of the regime chain.

    ``pi[j, i] = p(s_t = j | s_{t-1} = i)``; columns sum to one.  A zero
    diagonal makes segment boundaries coincide with regime changes; a
    nonzero diagonal permits repeated segments of the same regime.
    """

    tilde_pi: np.ndarray
    pi: np.ndarray
    zero_diag: bool = False

    def __post_init__(self):
        tilde_pi = np.asarray(self.tilde_pi, dtype=float)
        pi = np.asarray(self.pi, dtype=float)
        object.__setattr__(self, "tilde_pi", tilde_pi)
        object.__setattr__(self, "pi", pi)
        if pi.ndim != 2 or pi.shape[0] != pi.shape[1]:
            raise ValueError("pi must be square")
        if tilde_pi.shape != (pi.shape[0],):
            raise ValueError("tilde_pi length must match pi")
        _check_simplex(tilde_pi, axis=0, what="tilde_pi")
        _check_simplex(pi, axis=0, what="pi columns")
        if self.zero_diag and np.any(np.abs(np.diag(pi)) > SIMPLEX_TOL):
            raise ValueError("zero_diag set but pi has nonzero diagonal")

    @property
    def n_regimes(self):
        return self.pi.shape[0]


def uniform_switch_transition(n_regimes):
    """Zero-diagonal transition with uniform switching, uniform start."""
    pi = np.full((n_regimes, n_regimes), 1.0 / max(n_regimes - 1, 1))
    np.fill_diagonal(pi, 0.0)
    if n_regimes == 1:
        pi = np.ones((1, 1))
    tilde = np.full(n_regimes, 1.0 / n_regimes)
    return RegimeTransition(tilde, pi, zero_diag=n_regimes > 1)


@dataclass(frozen=True)
class DurationModel:
    """Segment-duration pmf on {d_min..d_max}, one row per regime.

    ``rho[s, d - d_min]`` is the probability that a segment of regime s
    lasts d steps.  ``tilde_rho`` is the distribution of the initial count
    in the decreasing encoding (time until the first boundary);
    ``tilde_tilde_rho[d - d_min, c - 1]`` is the probability that the
    first segment, given total duration d, ends at time-step c (used by
    the count-duration encoding).  The defaults (tilde_rho = rho,
    tilde_tilde_rho a point mass at c = d) state that a fresh segment
    starts at t = 1.
    """

    d_min: int
    d_max: int
    rho: np.ndarray
    tilde_rho: np.ndarray = None
    tilde_tilde_rho: np.ndarray = None

    def __post_init__(self):
        if not (1 <= self.d_min <= self.d_max):
            raise ValueError("need 1 <= d_min <= d_max")
        rho = np.atleast_2d(np.asarray(self.rho, dtype=float))
        object.__setattr__(self, "rho", rho)
        if rho.shape[1] != self.n_durations:
            raise ValueError("rho must have d_max - d_min + 1 columns")
        _check_simplex(rho, axis=1, what="rho rows")
        if self.tilde_rho is None:
            object.__setattr__(self, "tilde_rho", rho)
        else:
            tr = np.atleast_2d(np.asarray(self.tilde_rho, dtype=float))
            _check_simplex(tr, axis=1, what="tilde_rho rows")
            object.__setattr__(self, "tilde_rho", tr)
        if self.tilde_tilde_rho is None:
            ttr = np.zeros((self.n_durations, self.d_max))
            for i, d in enumerate(self.support):
                ttr[i, d - 1] = 1.0
            object.__setattr__(self, "tilde_tilde_rho", ttr)
        else:
            ttr = np.asarray(self.tilde_tilde_rho, dtype=float)
            if ttr.shape != (self.n_durations, self.d_max):
                raise ValueError("tilde_tilde_rho must be (n_durations, d_max)")
            for i, d in enumerate(self.support):
                if np.any(ttr[i, d:] > SIMPLEX_TOL):
                    raise ValueError("tilde_tilde_rho support exceeds duration")
                _check_simplex(ttr[i, :d], axis=0, what="tilde_tilde_rho row")
            object.__setattr__(self, "tilde_tilde_rho", ttr)

    @property
    def n_regimes(self):
        return self.rho.shape[0]

    @property
    def n_durations(self):
        return self.d_max - self.d_min + 1

    @property
    def support(self):
        return np.arange(self.d_min, self.d_max + 1)

    def full_rho(self):
        """rho embedded on counts 1..d_max (zeros below d_min)."""
        out = np.zeros((self.n_regimes, self.d_max))
        out[:, self.d_min - 1 :] = self.rho
        return out

    def full_tilde_rho(self):
        out = np.zeros((self.n_regimes, self.d_max))
        out[:, self.d_min - 1 :] = self.tilde_rho
        return out


@dataclass(frozen=True)
class HazardModel:
    """Duration law in hazard form.

    ``lam[s, c - 1]`` is the probability that a segment of regime s which
    has lasted c steps continues.  A bounded law stores counts 1..d_max
    and forces lam = 0 at d_max.  ``d_max=None`` leaves the law unbounded:
    beyond the stored table the hazard stays at ``tail`` (geometric tail),
    and inference must cap the count by conditioning (first segment
    starting at t=1, or c_T = 1).

    ``tilde_lambda[s, c - 1]`` is the distribution of the initial count;
    the default point mass at c = 1 states the first segment starts at
    t = 1.
    """

    d_min: int
    d_max: int | None
    lam: np.ndarray
    tilde_lambda: np.ndarray = None
    tail: np.ndarray = None

    def __post_init__(self):
        lam = np.atleast_2d(np.asarray(self.lam, dtype=float))
        object.__setattr__(self, "lam", lam)
        if self.d_min < 1:
            raise ValueError("d_min must be >= 1")
        if np.any(lam < -SIMPLEX_TOL) or np.any(lam > 1 + SIMPLEX_TOL):
            raise ValueError("hazard entries outside [0, 1]")
        if self.d_min > 1 and not np.allclose(lam[:, : self.d_min - 1], 1.0):
            raise ValueError("hazard must be 1 below d_min")
        if self.d_max is not None:
            if lam.shape[1] != self.d_max:
                raise ValueError("bounded hazard must store counts 1..d_max")
            if not np.allclose(lam[:, -1], 0.0, atol=SIMPLEX_TOL):
                raise ValueError("hazard at d_max must be 0")
        if self.tail is None:
            tail = np.zeros(lam.shape[0]) if self.d_max is not None else lam[:, -1].copy()
            object.__setattr__(self, "tail", tail)
        else:
            object.__setattr__(self, "tail", np.asarray(self.tail, dtype=float))
        if self.tilde_lambda is None:
            tl = np.zeros((lam.shape[0], 1))
            tl[:, 0] = 1.0
            object.__setattr__(self, "tilde_lambda", tl)
        else:
            tl = np.atleast_2d(np.asarray(self.tilde_lambda, dtype=float))
            _check_simplex(tl, axis=1, what="tilde_lambda rows")
            object.__setattr__(self, "tilde_lambda", tl)

    @property
    def n_regimes(self):
        return self.lam.shape[0]

    def continue_prob(self, count):
        """lam(:, count) extended by the tail beyond the stored table."""
        if count <= self.lam.shape[1]:
            return self.lam[:, count - 1]
        return self.tail

    def lam_table(self, n_counts):
        """(S, n_counts) hazard table over counts 1..n_counts."""
        stored = self.lam.shape[1]
        if n_counts <= stored:
            return self.lam[:, :n_counts].copy()
        ext = np.tile(self.tail[:, None], (1, n_counts - stored))
        return np.concatenate([self.lam, ext], axis=1)

    @property
    def starts_at_one(self):
        tl = self.tilde_lambda
        return tl.shape[1] == 1 and np.allclose(tl[:, 0], 1.0)


# ---------------------------------------------------------------------------
# pmf <-> hazard conversion
# ---------------------------------------------------------------------------

def duration_to_hazard(dm: DurationModel) -> HazardModel:
    """Hazard form lam_d = 1 - rho_d / sum_{k>=d} rho_k of a bounded pmf.

    Counts with zero tail mass get hazard 0 (the segment cannot reach
    them, so the value never enters a likelihood).
    """
    full = dm.full_rho()
    tail = np.cumsum(full[:, ::-1], axis=1)[:, ::-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = np.where(tail > 0.0, 1.0 - full / np.where(tail > 0, tail, 1.0), 0.0)
    lam[:, : dm.d_min - 1] = 1.0
    lam[:, -1] = 0.0
    # initial-count distribution is carried over as the dec-encoding pmf;
    # hazard-side inference keeps its own start-at-one default
    return HazardModel(d_min=dm.d_min, d_max=dm.d_max, lam=np.clip(lam, 0.0, 1.0))


def hazard_to_duration(hm: HazardModel, d_max: int | None = None) -> DurationModel:
    """Invert the hazard into a pmf: rho_d = (1 - lam_d) * prod_{k<d} lam_k."""
    if hm.d_max is None and d_max is None:
        raise ValueError("unbounded hazard: pass an explicit d_max to truncate")
    d_max = hm.d_max if d_max is None else d_max
    lam = hm.lam_table(d_max)
    lam = lam.copy()
    lam[:, -1] = 0.0
    survive = np.cumprod(np.concatenate([np.ones((hm.n_regimes, 1)), lam[:, :-1]], axis=1), axis=1)
    rho_full = (1.0 - lam) * survive
    rho = rho_full[:, hm.d_min - 1 :]
    norm = rho.sum(axis=1, keepdims=True)
    if np.any(norm <= 0):
        raise ValueError("hazard places no mass on [d_min, d_max]")
    return DurationModel(d_min=hm.d_min, d_max=d_max, rho=rho / norm)


def convert_duration_representation(m):
    """Dispatch pmf <-> hazard conversion on the input type."""
    if isinstance(m, DurationModel):
        return duration_to_hazard(m)
    if isinstance(m, HazardModel):
        return hazard_to_duration(m)
    raise TypeError(f"cannot convert {type(m).__name__}")


# ---------------------------------------------------------------------------
# named duration families
# ---------------------------------------------------------------------------

def geometric_pmf(p_continue, d_min, d_max):
    """Truncated geometric pmf on {d_min..d_max}, renormalized once."""
    d = np.arange(d_min, d_max + 1)
    pmf = (1.0 - p_continue) * p_continue ** (d - d_min)
    return pmf / pmf.sum()


def negative_binomial_pmf(d, p_continue, d_min):
    """p(duration = d) for a regime replaced by d_min ordered copies."""
    d = np.asarray(d)
    log_c = gammaln(d) - gammaln(d_min) - gammaln(d - d_min + 1)
    out = np.exp(
        log_c + (d - d_min) * np.log(p_continue) + d_min * np.log1p(-p_continue)
    )
    return np.where(d >= d_min, out, 0.0)


def discretized_gaussian_pmf(mean, variance, d_min, d_max):
    """Gaussian density evaluated on the integer support, renormalized."""
    d = np.arange(d_min, d_max + 1)
    pmf = np.exp(-0.5 * (d - mean) ** 2 / variance)
    return pmf / pmf.sum()


def uniform_pmf(d_min, d_max):
    n = d_max - d_min + 1
    return np.full(n, 1.0 / n)


def point_mass_pmf(d_star, d_min, d_max):
    pmf = np.zeros(d_max - d_min + 1)
    pmf[d_star - d_min] = 1.0
    return pmf


def duration_model_from_pmf(pmf_rows, d_min, d_max, **kw):
    return DurationModel(d_min=d_min, d_max=d_max, rho=np.atleast_2d(pmf_rows), **kw)


# ---------------------------------------------------------------------------
# sigma states and transition kernels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecState:
    s: int
    c: int


@dataclass(frozen=True)
class IncState:
    s: int
    c: int


@dataclass(frozen=True)
class CdState:
    s: int
    d: int
    c: int


def _validate_state(encoding, state):
    if encoding == DEC and not isinstance(state, DecState):
        raise ValueError("state/encoding mismatch")
    if encoding == INC and not isinstance(state, IncState):
        raise ValueError("state/encoding mismatch")
    if encoding == CD and not isinstance(state, CdState):
        raise ValueError("state/encoding mismatch")


def initial_states(encoding, chain: RegimeTransition, duration):
    """List of (state, probability) pairs for sigma_1, kernel support only."""
    out = []
    if encoding == DEC:
        full = duration.full_tilde_rho()
        for s in range(chain.n_regimes):
            if chain.tilde_pi[s] == 0.0:
                continue
            for c in range(1, duration.d_max + 1):
                p = chain.tilde_pi[s] * full[s, c - 1]
                if p > 0.0:
                    out.append((DecState(s, c), p))
    elif encoding == INC:
        tl = duration.tilde_lambda
        for s in range(chain.n_regimes):
            if chain.tilde_pi[s] == 0.0:
                continue
            for c in range(1, tl.shape[1] + 1):
                p = chain.tilde_pi[s] * tl[s, c - 1]
                if p > 0.0:
                    out.append((IncState(s, c), p))
    elif encoding == CD:
        ttr = duration.tilde_tilde_rho
        for s in range(chain.n_regimes):
            if chain.tilde_pi[s] == 0.0:
                continue
            for i, d in enumerate(duration.support):
                if duration.tilde_rho[s, i] == 0.0:
                    continue
                for c in range(1, d + 1):
                    p = chain.tilde_pi[s] * duration.tilde_rho[s, i] * ttr[i, c - 1]
                    if p > 0.0:
                        out.append((CdState(s, int(d), c), p))
    else:
        raise ValueError(f"unknown encoding {encoding!r}")
    return out


def successor_states(encoding, state, chain: RegimeTransition, duration):
    """List of (next_state, probability) pairs with nonzero probability.

    Walking this kernel is the single source of truth for the chain's
    deterministic branches; sampling, enumeration and the dense recursions
    all price the same event space.
    """
    _validate_state(encoding, state)
    S = chain.n_regimes
    out = []
    if encoding == DEC:
        if state.c > 1:
            return [(DecState(state.s, state.c - 1), 1.0)]
        full = duration.full_rho()
        for j in range(S):
            pj = chain.pi[j, state.s]
            if pj == 0.0:
                continue
            for d in range(duration.d_min, duration.d_max + 1):
                p = pj * full[j, d - 1]
                if p > 0.0:
                    out.append((DecState(j, d), p))
    elif encoding == INC:
        lam = duration.continue_prob(state.c)[state.s]
        if lam > 0.0:
            out.append((IncState(state.s, state.c + 1), lam))
        if lam < 1.0:
            for j in range(S):
                p = (1.0 - lam) * chain.pi[j, state.s]
                if p > 0.0:
                    out.append((IncState(j, 1), p))
    elif encoding == CD:
        if state.c > 1:
            return [(CdState(state.s, state.d, state.c - 1), 1.0)]
        full = duration.full_rho()
        for j in range(S):
            pj = chain.pi[j, state.s]
            if pj == 0.0:
                continue
            for d in range(duration.d_min, duration.d_max + 1):
                p = pj * full[j, d - 1]
                if p > 0.0:
                    out.append((CdState(j, d, d), p))
    return out


def transition_kernel(encoding, prev, nxt, chain, duration):
    """p(sigma_t = nxt | sigma_{t-1} = prev) under the given encoding."""
    _validate_state(encoding, prev)
    _validate_state(encoding, nxt)
    for cand, p in successor_states(encoding, prev, chain, duration):
        if cand == nxt:
            return p
    return 0.0


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def _sample_categorical(rng, p):
    return int(rng.choice(len(p), p=p))


def sample_chain(encoding, chain: RegimeTransition, duration, T, seed=None):
    """Draw sigma_{1:T}; returns (s, c) arrays, plus d for the cd encoding.

    The sampler walks the same kernel as :func:`successor_states`, so every
    realized transition has nonzero kernel probability by construction.
    """
    rng = make_rng(seed)
    if T < 1:
        raise ValueError("T must be >= 1")
    init = initial_states(encoding, chain, duration)
    probs = np.array([p for _, p in init])
    state = init[_sample_categorical(rng, probs / probs.sum())][0]
    s = np.empty(T, dtype=int)
    c = np.empty(T, dtype=int)
    d = np.empty(T, dtype=int) if encoding == CD else None
    for t in range(T):
        s[t] = state.s
        c[t] = state.c
        if encoding == CD:
            d[t] = state.d
        if t == T - 1:
            break
        succ = successor_states(encoding, state, chain, duration)
        if len(succ) == 1:
            state = succ[0][0]
        else:
            probs = np.array([p for _, p in succ])
            state = succ[_sample_categorical(rng, probs / probs.sum())][0]
    if encoding == CD:
        return s, c, d
    return s, c


def realized_segments(s):
    """(regime, duration) of each maximal constant run of the regime path."""
    s = np.asarray(s)
    boundaries = np.flatnonzero(np.diff(s) != 0)
    starts = np.concatenate([[0], boundaries + 1])
    ends = np.concatenate([boundaries, [len(s) - 1]])
    return [(int(s[a]), int(b - a + 1)) for a, b in zip(starts, ends)]


def boundary_segments(s, c, encoding):
    """(regime, duration) runs delimited by the count variable.

    Unlike :func:`realized_segments` this honours boundaries between
    consecutive segments of the same regime (pi with nonzero diagonal).
    """
    s = np.asarray(s)
    c = np.asarray(c)
    if encoding == DEC or encoding == CD:
        new_seg = np.concatenate([[True], c[:-1] == 1])
    elif encoding == INC:
        new_seg = c == 1
        new_seg = np.concatenate([[True], new_seg[1:]])
    else:
        raise ValueError(encoding)
    starts = np.flatnonzero(new_seg)
    ends = np.concatenate([starts[1:] - 1, [len(s) - 1]])
    return [(int(s[a]), int(b - a + 1)) for a, b in zip(starts, ends)]


def sample_plain_regimes(chain: RegimeTransition, n_steps, seed=None):
    """Sample s_{1:n} of a plain regime chain via jump/dwell decomposition.

    Dwell times within a regime are geometric in the self-transition
    probability, and jumps follow the embedded switch chain; this is the
    chain's own segment decomposition, vectorized for long runs.
    """
    rng = make_rng(seed)
    S = chain.n_regimes
    diag = np.diag(chain.pi).copy()
    out = np.empty(n_steps, dtype=int)
    pos = 0
    s = _sample_categorical(rng, chain.tilde_pi)
    while pos < n_steps:
        p_stay = diag[s]
        if p_stay >= 1.0:
            out[pos:] = s
            break
        dwell = 1 if p_stay == 0.0 else int(rng.geometric(1.0 - p_stay))
        dwell = min(dwell, n_steps - pos)
        out[pos : pos + dwell] = s
        pos += dwell
        if pos >= n_steps:
            break
        off = chain.pi[:, s].copy()
        off[s] = 0.0
        total = off.sum()
        if total <= 0.0:
            out[pos:] = s
            break
        s = _sample_categorical(rng, off / total)
    return out


# ---------------------------------------------------------------------------
# minimum-duration regime copies
# ---------------------------------------------------------------------------

def negative_binomial_expansion(chain: RegimeTransition, d_min):
    """Replace each regime by d_min ordered copies.

    The expanded chain spends a negative-binomial number of steps
    C(d-1, d_min-1) * pi_ii^(d-d_min) * (1-pi_ii)^d_min in each
    super-regime.  Returns the expanded RegimeTransition and the
    copy -> original regime map.
    """
    if d_min < 1:
        raise ValueError("d_min must be >= 1")
    if d_min == 1:
        return chain, np.arange(chain.n_regimes)
    S = chain.n_regimes
    n = S * d_min
    pi = np.zeros((n, n))
    tilde = np.zeros(n)
    for i in range(S):
        base = i * d_min
        tilde[base] = chain.tilde_pi[i]
        stay = chain.pi[i, i]
        for k in range(d_min):
            pi[base + k, base + k] = stay
            if k < d_min - 1:
                pi[base + k + 1, base + k] = 1.0 - stay
        for j in range(S):
            if j != i:
                pi[j * d_min, base + d_min - 1] = chain.pi[j, i]
    owner = np.repeat(np.arange(S), d_min)
    return RegimeTransition(tilde, pi), owner


def expanded_duration_pmf(chain: RegimeTransition, owner, regime, d_values):
    """Exact super-regime dwell pmf of an expanded chain, by dynamic program.

    Independent of the closed form: propagates probability through the
    regime's copies step by step and records the exit mass at each length.
    """
    d_values = np.asarray(d_values)
    copies = np.flatnonzero(owner == regime)
    idx = {int(c): k for k, c in enumerate(copies)}
    occ = np.zeros(len(copies))
    occ[0] = 1.0
    pmf = np.zeros(d_values.max())
    for step in range(1, d_values.max() + 1):
        nxt = np.zeros_like(occ)
        exit_mass = 0.0
        for k, copy in enumerate(copies):
            col = chain.pi[:, copy]
            for j in np.flatnonzero(col > 0):
                if int(j) in idx:
                    nxt[idx[int(j)]] += col[j] * occ[k]
                else:
                    exit_mass += col[j] * occ[k]
        pmf[step - 1] = exit_mass
        occ = nxt
    return pmf[d_values - 1]
