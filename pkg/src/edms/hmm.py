"""Baseline Markov switching inference with k-th order Markovian emissions.

The flagship emission family is the switching autoregressive model,
p(v_t | s_t, v_{t-k:t-1}) = N(v_t; sum_i a^s_i v_{t-i}, (sigma^s)^2).
Filtering and smoothing come in two forms: a parallel alpha/beta pass
(log domain by default) and a sequential pass that propagates normalized
distributions and needs no log arithmetic.  Both feed the extended
Viterbi decoder and the closed-form EM updates.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

from edms.chains import RegimeTransition, SIMPLEX_TOL, make_rng

LOG2PI = np.log(2.0 * np.pi)


# ---------------------------------------------------------------------------
# emission evaluators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SarmParams:
    """Switching AR(k) parameters: coefficients a[s, i-1] on lag i."""

    k: int
    a: np.ndarray
    sigma: np.ndarray
    chain: RegimeTransition

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        sigma = np.atleast_1d(np.asarray(self.sigma, dtype=float))
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "sigma", sigma)
        if self.k < 0:
            raise ValueError("k must be >= 0")
        if a.shape != (self.chain.n_regimes, self.k) and self.k > 0:
            raise ValueError("a must be (S, k)")
        if np.any(sigma <= 0):
            raise ValueError("sigma must be positive")

    @property
    def n_regimes(self):
        return self.chain.n_regimes


class SarmEmission:
    """Evaluator of the switching-AR log density.

    The first k observations condition the model but are not scored
    (their rows are zero), so likelihoods are p(v_{k+1:T} | v_{1:k}).
    Under across-segment independence the window shrinks to the
    min(c-1, k) observations that belong to the current segment.
    """

    def __init__(self, params: SarmParams):
        self.params = params
        self.k = params.k
        self.n_regimes = params.n_regimes

    def _log_density(self, v, t, n_lags):
        p = self.params
        mean = np.zeros(p.n_regimes)
        for i in range(1, n_lags + 1):
            mean += p.a[:, i - 1] * v[t - i]
        resid = v[t] - mean
        return -0.5 * (LOG2PI + 2.0 * np.log(p.sigma) + (resid / p.sigma) ** 2)

    def loglik_row(self, v, t):
        """log p(v_t | s, v_{t-k:t-1}) for every regime s (0-based t)."""
        if t < self.k:
            return np.zeros(self.n_regimes)
        return self._log_density(v, t, self.k)

    def loglik_row_asi(self, v, t, c):
        """Row with the regressor cut at the segment boundary (count c)."""
        n_lags = min(c - 1, self.k, t)
        return self._log_density(v, t, n_lags)

    def sample(self, rng, s, v_prev, fresh=False):
        p = self.params
        n_lags = 0 if fresh else min(self.k, len(v_prev))
        mean = sum(p.a[s, i - 1] * v_prev[-i] for i in range(1, n_lags + 1))
        return mean + p.sigma[s] * rng.standard_normal()


class GaussianLocEmission:
    """Memoryless per-regime Gaussian N(mu_s, sigma_s^2); k = 0."""

    k = 0

    def __init__(self, mu, sigma):
        self.mu = np.atleast_1d(np.asarray(mu, dtype=float))
        self.sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
        self.n_regimes = len(self.mu)

    def loglik_row(self, v, t):
        resid = v[t] - self.mu
        return -0.5 * (LOG2PI + 2.0 * np.log(self.sigma) + (resid / self.sigma) ** 2)

    def loglik_row_asi(self, v, t, c):
        return self.loglik_row(v, t)

    def sample(self, rng, s, v_prev, fresh=False):
        return self.mu[s] + self.sigma[s] * rng.standard_normal()


class TabularEmission:
    """Finite-alphabet emission with per-regime pmf rows; k = 0."""

    k = 0

    def __init__(self, pmf):
        pmf = np.atleast_2d(np.asarray(pmf, dtype=float))
        if not np.allclose(pmf.sum(axis=1), 1.0, atol=SIMPLEX_TOL):
            raise ValueError("emission pmf rows must sum to 1")
        self.pmf = pmf
        self.n_regimes = pmf.shape[0]

    def loglik_row(self, v, t):
        with np.errstate(divide="ignore"):
            return np.log(self.pmf[:, int(v[t])])

    def loglik_row_asi(self, v, t, c):
        return self.loglik_row(v, t)

    def sample(self, rng, s, v_prev, fresh=False):
        return int(rng.choice(self.pmf.shape[1], p=self.pmf[s]))


def emission_log_table(emitter, v):
    """(T, S) table of log e^s_t for a Markovian emitter."""
    T = len(v)
    out = np.empty((T, emitter.n_regimes))
    for t in range(T):
        out[t] = emitter.loglik_row(v, t)
    return out


# ---------------------------------------------------------------------------
# posterior container
# ---------------------------------------------------------------------------

@dataclass
class PosteriorTable:
    """Filtered/smoothed distributions over regimes, one row per step."""

    alpha: np.ndarray = None          # p(s_t | v_{1:t}), rows sum to 1
    gamma: np.ndarray = None          # p(s_t | v_{1:T})
    log_alpha_bar: np.ndarray = None  # log p(s_t, v_{1:t})
    log_beta: np.ndarray = None       # log p(v_{t+1:T} | s_t, ...)
    log_norms: np.ndarray = None      # per-step log normalizers (sequential)
    loglik: float = None
    log_domain: bool = False

    def check_normalized(self, atol=1e-9):
        for name in ("alpha", "gamma"):
            table = getattr(self, name)
            if table is not None and not np.allclose(table.sum(axis=1), 1.0, atol=atol):
                raise AssertionError(f"{name} rows are not normalized")


# ---------------------------------------------------------------------------
# filtering, smoothing, decoding
# ---------------------------------------------------------------------------

def forward_backward(emitter, chain: RegimeTransition, v):
    """Parallel alpha-bar/beta recursions in the log domain.

    gamma_t is proportional to beta_t * alpha_bar_t; the log-likelihood is
    the logsumexp of the final alpha-bar row.
    """
    loge = emission_log_table(emitter, v)
    T, S = loge.shape
    with np.errstate(divide="ignore"):
        log_pi = np.log(chain.pi)
        log_tilde = np.log(chain.tilde_pi)
    la = np.empty((T, S))
    la[0] = loge[0] + log_tilde
    for t in range(1, T):
        la[t] = loge[t] + logsumexp(log_pi + la[t - 1][None, :], axis=1)
    lb = np.empty((T, S))
    lb[T - 1] = 0.0
    for t in range(T - 2, -1, -1):
        lb[t] = logsumexp(log_pi.T + (loge[t + 1] + lb[t + 1])[None, :], axis=1)
    loglik = float(logsumexp(la[T - 1]))
    lg = la + lb
    gamma = np.exp(lg - logsumexp(lg, axis=1, keepdims=True))
    alpha = np.exp(la - logsumexp(la, axis=1, keepdims=True))
    return PosteriorTable(
        alpha=alpha, gamma=gamma, log_alpha_bar=la, log_beta=lb,
        loglik=loglik, log_domain=True,
    )


def filter_sequential(emitter, chain: RegimeTransition, v):
    """Normalized filtered distributions alpha_t plus per-step log norms.

    Emission rows are rescaled by their maximum before exponentiation, so
    a row whose raw linear values would all underflow is handled without
    a separate log-domain retry.
    """
    loge = emission_log_table(emitter, v)
    T, S = loge.shape
    alpha = np.empty((T, S))
    log_norms = np.empty(T)
    for t in range(T):
        row = loge[t]
        m = row.max()
        if not np.isfinite(m):
            raise FloatingPointError(f"all emission densities vanished at t={t}")
        e = np.exp(row - m)
        pred = chain.tilde_pi if t == 0 else chain.pi @ alpha[t - 1]
        unnorm = e * pred
        norm = unnorm.sum()
        if norm <= 0.0:
            raise FloatingPointError(f"predictive mass vanished at t={t}")
        alpha[t] = unnorm / norm
        log_norms[t] = np.log(norm) + m
    return alpha, log_norms


def filter_smooth_sequential(emitter, chain: RegimeTransition, v):
    """Sequential filtering followed by the backward correction pass.

    Works entirely with normalized distributions; a zero correction
    denominator marks an unreachable next state and contributes nothing.
    """
    alpha, log_norms = filter_sequential(emitter, chain, v)
    T, S = alpha.shape
    gamma = np.empty((T, S))
    gamma[T - 1] = alpha[T - 1]
    for t in range(T - 2, -1, -1):
        denom = chain.pi @ alpha[t]  # p(s_{t+1} | v_{1:t})
        ratio = np.where(denom > 0.0, gamma[t + 1] / np.where(denom > 0, denom, 1.0), 0.0)
        gamma[t] = alpha[t] * (chain.pi.T @ ratio)
    return PosteriorTable(
        alpha=alpha, gamma=gamma, log_norms=log_norms,
        loglik=float(log_norms.sum()), log_domain=False,
    )


def viterbi(emitter, chain: RegimeTransition, v):
    """Most likely regime path and its log joint; ties pick the lowest index."""
    loge = emission_log_table(emitter, v)
    T, S = loge.shape
    with np.errstate(divide="ignore"):
        log_pi = np.log(chain.pi)
        log_tilde = np.log(chain.tilde_pi)
    xi = loge[0] + log_tilde
    psi = np.zeros((T, S), dtype=int)
    for t in range(1, T):
        scores = log_pi + xi[None, :]
        psi[t] = np.argmax(scores, axis=1)
        xi = loge[t] + scores[np.arange(S), psi[t]]
    path = np.empty(T, dtype=int)
    path[T - 1] = int(np.argmax(xi))
    best = float(xi[path[T - 1]])
    for t in range(T - 2, -1, -1):
        path[t] = psi[t + 1][path[t + 1]]
    return path, best


def path_log_joint(emitter, chain: RegimeTransition, v, path):
    """log p(s_{1:T} = path, v_{1:T}) for a given regime path."""
    loge = emission_log_table(emitter, v)
    with np.errstate(divide="ignore"):
        total = np.log(chain.tilde_pi[path[0]]) + loge[0, path[0]]
        for t in range(1, len(path)):
            total += np.log(chain.pi[path[t], path[t - 1]]) + loge[t, path[t]]
    return float(total)


# ---------------------------------------------------------------------------
# EM for the switching autoregressive model
# ---------------------------------------------------------------------------

def pairwise_smoothed(chain, alpha, gamma):
    """p(s_{t-1}, s_t | v_{1:T}) for t = 2..T, from the sequential pass."""
    T, S = alpha.shape
    out = np.zeros((T, S, S))  # out[t, j, i] with j = s_t, i = s_{t-1}
    for t in range(1, T):
        denom = chain.pi @ alpha[t - 1]
        ratio = np.where(denom > 0.0, gamma[t] / np.where(denom > 0, denom, 1.0), 0.0)
        out[t] = ratio[:, None] * chain.pi * alpha[t - 1][None, :]
    return out


def em_sarm(params0: SarmParams, v, max_iters=50, rel_tol=1e-8, update=("a", "sigma", "pi", "tilde_pi"), jitter=1e-10):
    """EM for the switching AR model; returns fitted params and loglik trace.

    The M-step solves per-regime weighted least squares for the AR
    coefficients; a singular normal matrix gets a small ridge.  The first
    k observations only condition, matching the scored likelihood.
    """
    v = np.asarray(v, dtype=float)
    params = params0
    k, S = params0.k, params0.n_regimes
    T = len(v)
    if T <= k:
        raise ValueError("need more observations than the AR order")
    lags = np.stack([v[k - i : T - i] for i in range(1, k + 1)], axis=1) if k else np.zeros((T - k, 0))
    targets = v[k:]
    trace = []
    for _ in range(max_iters):
        emitter = SarmEmission(params)
        post = filter_smooth_sequential(emitter, params.chain, v)
        trace.append(post.loglik)
        g = post.gamma[k:]
        new = {}
        if "a" in update and k > 0:
            a = np.empty((S, k))
            for s in range(S):
                w = g[:, s]
                gram = (lags * w[:, None]).T @ lags
                rhs = (lags * w[:, None]).T @ targets
                try:
                    a[s] = np.linalg.solve(gram, rhs)
                except np.linalg.LinAlgError:
                    a[s] = np.linalg.solve(gram + jitter * np.eye(k), rhs)
            new["a"] = a
        if "sigma" in update:
            a = new.get("a", params.a)
            resid = targets[:, None] - (lags @ a.T if k else 0.0)
            var = (g * resid**2).sum(axis=0) / np.maximum(g.sum(axis=0), 1e-300)
            new["sigma"] = np.sqrt(np.maximum(var, 1e-12))
        pair = pairwise_smoothed(params.chain, post.alpha, post.gamma).sum(axis=0)
        chain = params.chain
        if "pi" in update:
            cols = pair.sum(axis=0, keepdims=True)
            pi = np.where(cols > 0.0, pair / np.where(cols > 0, cols, 1.0), chain.pi)
            chain = replace(chain, pi=pi)
        if "tilde_pi" in update:
            chain = replace(chain, tilde_pi=post.gamma[0])
        params = replace(params, chain=chain, **new)
        if len(trace) >= 2 and abs(trace[-1] - trace[-2]) <= rel_tol * abs(trace[-2]):
            break
    emitter = SarmEmission(params)
    trace.append(filter_smooth_sequential(emitter, params.chain, v).loglik)
    return params, np.array(trace)


def sample_sarm(params: SarmParams, T, seed=None, regimes=None):
    """Draw (s_{1:T}, v_{1:T}) from the switching AR model."""
    from edms.chains import sample_plain_regimes

    rng = make_rng(seed)
    s = sample_plain_regimes(params.chain, T, rng) if regimes is None else np.asarray(regimes)
    emitter = SarmEmission(params)
    v = np.empty(T)
    for t in range(T):
        v[t] = emitter.sample(rng, s[t], v[:t])
    return s, v
