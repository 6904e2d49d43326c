"""Brute-force reference implementations for desk-scale validation.

Everything here trades efficiency for transparency: posteriors come from
exhaustive enumeration of the augmented chain's paths (walking the same
kernel the recursions use, so both price the same event space), and
state-space conditionals come from one joint Gaussian assembled directly
from the generative equations.  These are correctness anchors for the
test suite; they share no numeric kernels with the production recursions
beyond elementary linear algebra.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from edms.chains import CD, DEC, INC, initial_states, successor_states

MAX_ENUMERATED_PREFIXES = 10_000_000


@dataclass(frozen=True)
class EnumerationBudget:
    max_prefixes: int = MAX_ENUMERATED_PREFIXES


class BudgetExceeded(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# path enumeration over the augmented chain
# ---------------------------------------------------------------------------

def markov_step_loglik(log_table):
    """Step scorer for Markovian emissions: log e depends on (t, s) only."""

    def step(t, state, history):
        return log_table[t, state.s]

    return step


def asi_step_loglik(emitter, v, encoding):
    """Step scorer with the emission window cut at segment boundaries."""

    def elapsed(t, state, history):
        if encoding == INC:
            return state.c
        if encoding == CD:
            return state.d - state.c + 1
        # dec: walk history back to the last boundary
        n = 1
        for prev in reversed(history):
            if prev.c == 1:
                break
            n += 1
        return n

    def step(t, state, history):
        return emitter.loglik_row_asi(v, t, elapsed(t, state, history))[state.s]

    return step


def enumerate_posterior(encoding, chain, duration, T, step_loglik,
                        condition_cT=False, budget=EnumerationBudget()):
    """Exact filtered and smoothed tables by depth-first path enumeration.

    Returns (filtered, smoothed, loglik): lists of {state: probability}
    dicts per time step.  ``condition_cT`` restricts the smoothed
    posterior (and the likelihood) to paths whose final count is 1;
    filtered quantities are always unconditioned.
    """
    filtered = [dict() for _ in range(T)]
    smoothed = [dict() for _ in range(T)]
    joint = []
    counter = {"prefixes": 0}

    def visit(t, state, logp, history):
        counter["prefixes"] += 1
        if counter["prefixes"] > budget.max_prefixes:
            raise BudgetExceeded("enumeration budget exceeded")
        logp = logp + step_loglik(t, state, history)
        filtered[t][state] = filtered[t].get(state, 0.0) + np.exp(logp)
        history.append(state)
        if t == T - 1:
            if not condition_cT or state.c == 1:
                joint.append((np.exp(logp), list(history)))
        else:
            for nxt, p in successor_states(encoding, state, chain, duration):
                visit(t + 1, nxt, logp + np.log(p), history)
        history.pop()

    for state, p in initial_states(encoding, chain, duration):
        visit(0, state, np.log(p), [])

    total = sum(w for w, _ in joint)
    for w, path in joint:
        for t, state in enumerate(path):
            smoothed[t][state] = smoothed[t].get(state, 0.0) + w / total
    for t in range(T):
        z = sum(filtered[t].values())
        filtered[t] = {k: val / z for k, val in filtered[t].items()}
    with np.errstate(divide="ignore"):
        loglik = float(np.log(total)) if total > 0 else -np.inf
    return filtered, smoothed, loglik


def enumerate_map(encoding, chain, duration, T, step_loglik,
                  condition_cT=False, budget=EnumerationBudget()):
    """Exact MAP path over sigma_{1:T} and its log joint."""
    best = {"logp": -np.inf, "path": None}
    counter = {"prefixes": 0}

    def visit(t, state, logp, history):
        counter["prefixes"] += 1
        if counter["prefixes"] > budget.max_prefixes:
            raise BudgetExceeded("enumeration budget exceeded")
        logp = logp + step_loglik(t, state, history)
        history.append(state)
        if t == T - 1:
            if (not condition_cT or state.c == 1) and logp > best["logp"]:
                best["logp"] = logp
                best["path"] = list(history)
        else:
            for nxt, p in successor_states(encoding, state, chain, duration):
                visit(t + 1, nxt, logp + np.log(p), history)
        history.pop()

    for state, p in initial_states(encoding, chain, duration):
        visit(0, state, np.log(p), [])
    return best["path"], float(best["logp"])


def regime_marginals(tables, n_regimes):
    """(T, S) array of per-regime mass from per-state dicts."""
    out = np.zeros((len(tables), n_regimes))
    for t, table in enumerate(tables):
        for state, p in table.items():
            out[t, state.s] += p
    return out


# ---------------------------------------------------------------------------
# joint-Gaussian reference for the linear state-space model
# ---------------------------------------------------------------------------

def batch_gaussian(params, v):
    """Per-step conditionals p(h_t | v_{1:T}) and p(h_t | v_{1:t}) by
    assembling the full joint Gaussian of (h_{1:T}, v_{1:T}).

    Also returns the exact log marginal likelihood.  Limited to small
    problems (T * H <= 64).
    """
    v = np.atleast_2d(np.asarray(v, dtype=float))
    T = v.shape[0]
    A, SH, B, SV = params.A, params.Sigma_H, params.B, params.Sigma_V
    H = A.shape[0]
    Vd = B.shape[0]
    if T * H > 64:
        raise ValueError("batch Gaussian oracle limited to T*H <= 64")

    # h mean and covariance blocks by propagating the linear equations
    mean_h = np.zeros(T * H)
    mean_h[:H] = params.mu
    for t in range(1, T):
        mean_h[t * H : (t + 1) * H] = A @ mean_h[(t - 1) * H : t * H]
    cov_h = np.zeros((T * H, T * H))
    cov_h[:H, :H] = params.Sigma
    for t in range(1, T):
        # diagonal block
        prev = cov_h[(t - 1) * H : t * H, (t - 1) * H : t * H]
        cov_h[t * H : (t + 1) * H, t * H : (t + 1) * H] = A @ prev @ A.T + SH
        # off-diagonal blocks against all earlier steps
        for u in range(t):
            c_prev = cov_h[u * H : (u + 1) * H, (t - 1) * H : t * H]
            blk = c_prev @ A.T
            cov_h[u * H : (u + 1) * H, t * H : (t + 1) * H] = blk
            cov_h[t * H : (t + 1) * H, u * H : (u + 1) * H] = blk.T

    Bbig = np.kron(np.eye(T), B)
    mean_v = Bbig @ mean_h
    cov_vh = Bbig @ cov_h
    cov_v = cov_vh @ Bbig.T + np.kron(np.eye(T), SV)
    obs = v.reshape(-1)

    sol = np.linalg.solve(cov_v, obs - mean_v)
    cond_mean = mean_h + cov_vh.T @ sol
    cond_cov = cov_h - cov_vh.T @ np.linalg.solve(cov_v, cov_vh)

    sign, logdet = np.linalg.slogdet(cov_v)
    loglik = -0.5 * ((obs - mean_v) @ sol + logdet + len(obs) * np.log(2 * np.pi))

    smoothed = [
        (cond_mean[t * H : (t + 1) * H], cond_cov[t * H : (t + 1) * H, t * H : (t + 1) * H])
        for t in range(T)
    ]

    filtered = []
    for t in range(T):
        n = (t + 1) * Vd
        cv = cov_v[:n, :n]
        cvh = cov_vh[:n, t * H : (t + 1) * H]
        sol_t = np.linalg.solve(cv, (obs[:n] - mean_v[:n]))
        m = mean_h[t * H : (t + 1) * H] + cvh.T @ sol_t
        P = cov_h[t * H : (t + 1) * H, t * H : (t + 1) * H] - cvh.T @ np.linalg.solve(cv, cvh)
        filtered.append((m, P))
    return filtered, smoothed, float(loglik)


def segment_marginal_loglik(params, v_segment):
    """log p(v_{a:b}) of one fresh-started segment, via the joint Gaussian."""
    _, _, loglik = batch_gaussian(params, v_segment)
    return loglik


# ---------------------------------------------------------------------------
# empirical pmf utilities
# ---------------------------------------------------------------------------

def empirical_pmf(samples, support):
    """Normalized histogram of integer samples over an explicit support."""
    samples = np.asarray(samples)
    if len(samples) < 1000:
        raise ValueError("need at least 10^3 samples for a stable pmf")
    support = np.asarray(support)
    counts = np.array([(samples == x).sum() for x in support], dtype=float)
    return counts / len(samples)


def tv_distance(p, q):
    """Total variation distance between two pmfs on a shared support."""
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    return 0.5 * float(np.abs(p - q).sum())
