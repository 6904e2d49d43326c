"""Exact inference and EM for explicit-duration Markov switching models.

The augmented chain sigma_t is (s_t, c_t) under the count encodings and
(s_t, d_t, c_t) under the count-duration encoding.  Dense tables are laid
out time-major as (T, S, C) with count index 0 meaning c = 1, so the
pre-computation sweeps over counts are contiguous.

Decreasing counts admit Markovian emissions and a c_T = 1 conditioning
flag; increasing counts admit across-segment independence (emission
window cut at the segment boundary) and unbounded maximum durations when
the first segment starts at t = 1; count-duration variables admit
arbitrary within-segment emission structure through a segment-level
evaluator and are processed by segment-recursive sweeps.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from edms.chains import (
    DurationModel,
    HazardModel,
    RegimeTransition,
    duration_to_hazard,
    hazard_to_duration,
)

log = logging.getLogger(__name__)

NEG_INF = -np.inf


@dataclass(frozen=True)
class EdModel:
    """Regime chain plus a duration law in pmf or hazard form."""

    chain: RegimeTransition
    duration: DurationModel | HazardModel

    @property
    def n_regimes(self):
        return self.chain.n_regimes

    @property
    def d_min(self):
        return self.duration.d_min

    @property
    def d_max(self):
        return self.duration.d_max  # None when unbounded

    def pmf(self) -> DurationModel:
        if isinstance(self.duration, DurationModel):
            return self.duration
        return hazard_to_duration(self.duration)

    def hazard(self) -> HazardModel:
        if isinstance(self.duration, HazardModel):
            return self.duration
        return duration_to_hazard(self.duration)


@dataclass
class EdPosterior:
    """Posterior tables over (t, s, c) for the count encodings."""

    encoding: str
    alpha: np.ndarray = None          # p(sigma_t | v_{1:t}), (T, S, C)
    gamma: np.ndarray = None          # p(sigma_t | v_{1:T})
    log_alpha_bar: np.ndarray = None
    log_beta: np.ndarray = None
    log_norms: np.ndarray = None
    loglik: float = None
    condition_cT: bool = False

    def regime_alpha(self):
        return self.alpha.sum(axis=2)

    def regime_gamma(self):
        return self.gamma.sum(axis=2)

    def map_regimes(self, smoothed=True):
        table = self.gamma if smoothed else self.alpha
        return np.argmax(table.sum(axis=2), axis=1)


# ---------------------------------------------------------------------------
# shared preparation helpers
# ---------------------------------------------------------------------------

def _dec_tables(model: EdModel, T, condition_cT):
    """(rho_full, tilde_rho_full, C) for the decreasing encoding.

    An unbounded law is materialized up to the horizon without
    renormalizing; that is only legal under c_T = 1 conditioning, which
    supplies the missing normalization.
    """
    if isinstance(model.duration, DurationModel):
        dm = model.duration
        C = dm.d_max if not condition_cT else min(dm.d_max, T)
        rho = dm.full_rho()[:, :C]
        trho = dm.full_tilde_rho()[:, :C]
        return rho, trho, C
    hm = model.duration
    if hm.d_max is not None:
        return _dec_tables(EdModel(model.chain, hazard_to_duration(hm)), T, condition_cT)
    if not condition_cT:
        raise ValueError("unbounded d_max requires conditioning on c_T = 1")
    lam = hm.lam_table(T)
    survive = np.cumprod(
        np.concatenate([np.ones((hm.n_regimes, 1)), lam[:, :-1]], axis=1), axis=1
    )
    rho = (1.0 - lam) * survive  # improper: tail mass beyond T is dropped
    return rho, rho.copy(), T


def _inc_tables(model: EdModel, T):
    """(lam_tab, tilde_lambda, C) for the increasing encoding."""
    hm = model.hazard()
    m = hm.tilde_lambda.shape[1]
    if hm.d_max is None:
        if not hm.starts_at_one:
            raise ValueError(
                "unbounded d_max requires the first segment to start at t = 1"
            )
        C = T
    else:
        C = min(hm.d_max, m + T - 1)
    return hm.lam_table(C), hm.tilde_lambda, C


def _dec_cap_mask(T, C, condition_cT):
    """mask[t, c-1] = True where count c is admissible at step t (0-based)."""
    if not condition_cT:
        return np.ones((T, C), dtype=bool)
    steps_left = T - np.arange(T)  # = T - t + 1 for 1-based t
    return np.arange(1, C + 1)[None, :] <= steps_left[:, None]


def _emission_tables_markov(emitter, v):
    from edms.hmm import emission_log_table

    return emission_log_table(emitter, v)


def _emission_tables_inc_asi(emitter, v, C):
    """(T, S, C) table of log p(v_t | s, count c) with boundary-cut windows."""
    T = len(v)
    S = emitter.n_regimes
    k = emitter.k
    out = np.empty((T, S, C))
    for t in range(T):
        for c in range(1, min(C, k + 1) + 1):
            out[t, :, c - 1] = emitter.loglik_row_asi(v, t, c)
        if C > k + 1:
            out[t, :, k + 1 :] = out[t, :, k][:, None]
    return out


def _loge_at(loge, t):
    """(S, C_or_1) slice of a (T, S) or (T, S, C) log-emission table."""
    if loge.ndim == 2:
        return loge[t][:, None]
    return loge[t]


def _broadcast_e(et, C):
    return et if et.shape[1] == C else np.broadcast_to(et[:, 0][:, None], (et.shape[0], C))


# ---------------------------------------------------------------------------
# decreasing count variables
# ---------------------------------------------------------------------------

def _dec_filter_seq(loge_cont, loge_new, chain, rho, trho, d_min, condition_cT):
    T, S = loge_cont.shape
    C = rho.shape[1]
    mask = _dec_cap_mask(T, C, condition_cT)
    alpha = np.zeros((T, S, C))
    log_norms = np.empty(T)
    supp = np.arange(1, C + 1) >= d_min  # fresh segments need c >= d_min
    rho_supp = rho * supp[None, :]

    shift = loge_new[0].max()
    a0 = np.exp(loge_new[0] - shift)[:, None] * chain.tilde_pi[:, None] * trho
    a0 *= mask[0][None, :]
    z = a0.sum()
    if z <= 0:
        raise FloatingPointError("initial mass vanished")
    alpha[0] = a0 / z
    log_norms[0] = np.log(z) + shift
    for t in range(1, T):
        shift = max(loge_cont[t].max(), loge_new[t].max())
        e_cont = np.exp(loge_cont[t] - shift)
        e_new = np.exp(loge_new[t] - shift)
        cont = np.zeros((S, C))
        cont[:, :-1] = alpha[t - 1][:, 1:]
        trans = chain.pi @ alpha[t - 1][:, 0]
        fresh = rho_supp * trans[:, None]
        a = e_cont[:, None] * cont + e_new[:, None] * fresh
        a *= mask[t][None, :]
        z = a.sum()
        if z <= 0:
            raise FloatingPointError(f"filtered mass vanished at t={t}")
        alpha[t] = a / z
        log_norms[t] = np.log(z) + shift
    return alpha, log_norms


def _dec_branch_factors(loge_cont, loge_new, t):
    """Rescaled linear emission factors of the two entry branches at t.

    When no boundary cut is active the rows coincide and the factors
    cancel out of every ratio they enter.
    """
    shift = max(loge_cont[t].max(), loge_new[t].max())
    return np.exp(loge_cont[t] - shift), np.exp(loge_new[t] - shift)


def _dec_gamma_seq(alpha, chain, rho, d_min, condition_cT, loge_cont, loge_new):
    T, S, C = alpha.shape
    gamma = np.zeros_like(alpha)
    if condition_cT:
        gT = np.zeros((S, C))
        gT[:, 0] = alpha[T - 1][:, 0]
        total = gT.sum()
        if total <= 0:
            raise FloatingPointError("no mass on c_T = 1; conditioning impossible")
        gamma[T - 1] = gT / total
    else:
        gamma[T - 1] = alpha[T - 1]
    supp = np.arange(1, C + 1) >= d_min
    rho_supp = rho * supp[None, :]
    for t in range(T - 2, -1, -1):
        a = alpha[t]
        ec, en = _dec_branch_factors(loge_cont, loge_new, t + 1)
        trans = chain.pi @ a[:, 0]  # sum_s' pi[s, s'] alpha_t[s', c=1]
        # continue branch: sigma_{t+1} = (s, c-1) for targets c >= 2
        denom_cont = a[:, 1:] * ec[:, None] + rho_supp[:, :-1] * (en * trans)[:, None]
        with np.errstate(invalid="ignore", divide="ignore"):
            g_cont = np.where(
                denom_cont > 0.0,
                a[:, 1:] * ec[:, None] * gamma[t + 1][:, :-1]
                / np.where(denom_cont > 0, denom_cont, 1.0),
                0.0,
            )
        # boundary branch: targets c = 1, sum over fresh sigma_{t+1}
        denom_new = rho_supp * (en * trans)[:, None]
        denom_new[:, :-1] += a[:, 1:] * ec[:, None]
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(
                denom_new > 0.0,
                rho_supp * en[:, None] * gamma[t + 1] / np.where(denom_new > 0, denom_new, 1.0),
                0.0,
            )
        inner = ratio.sum(axis=1)  # over c_{t+1}
        gamma[t][:, 1:] = g_cont
        gamma[t][:, 0] = a[:, 0] * (chain.pi.T @ inner)
    return gamma


def _dec_parallel(loge_cont, loge_new, chain, rho, trho, d_min, condition_cT):
    T, S = loge_cont.shape
    C = rho.shape[1]
    lmask = np.where(_dec_cap_mask(T, C, condition_cT), 0.0, NEG_INF)
    with np.errstate(divide="ignore"):
        lpi = np.log(chain.pi)
        ltilde = np.log(chain.tilde_pi)
        lrho = np.log(rho)
        lrho[:, : d_min - 1] = NEG_INF
        ltrho = np.log(trho)
    la = np.full((T, S, C), NEG_INF)
    la[0] = loge_new[0][:, None] + ltilde[:, None] + ltrho + lmask[0][None, :]
    for t in range(1, T):
        cont = np.full((S, C), NEG_INF)
        cont[:, :-1] = la[t - 1][:, 1:]
        ltrans = logsumexp(lpi + la[t - 1][:, 0][None, :], axis=1)
        fresh = lrho + ltrans[:, None]
        la[t] = np.logaddexp(loge_cont[t][:, None] + cont, loge_new[t][:, None] + fresh)
        la[t] += lmask[t][None, :]
    lb = np.full((T, S, C), NEG_INF)
    if condition_cT:
        lb[T - 1][:, 0] = 0.0
    else:
        lb[T - 1] = 0.0
    for t in range(T - 2, -1, -1):
        nxt = lb[t + 1]
        lb[t][:, 1:] = loge_cont[t + 1][:, None] + nxt[:, :-1]
        w = logsumexp(lrho + nxt, axis=1)  # over fresh durations
        lb[t][:, 0] = logsumexp(lpi.T + (loge_new[t + 1] + w)[None, :], axis=1)
    if condition_cT:
        loglik = float(logsumexp(la[T - 1][:, 0]))
        if not np.isfinite(loglik):
            raise FloatingPointError("no admissible path under c_T = 1 conditioning")
    else:
        loglik = float(logsumexp(la[T - 1]))
    lg = la + lb
    gamma = np.exp(lg - logsumexp(lg, axis=(1, 2), keepdims=True))
    alpha = np.exp(la - logsumexp(la, axis=(1, 2), keepdims=True))
    return la, lb, alpha, gamma, loglik


def _dec_emissions(model, emitter, v, asi_cut):
    loge = _emission_tables_markov(emitter, v)
    if not asi_cut:
        return loge, loge
    if emitter.k > 1:
        raise ValueError("the boundary cut of the emission window needs k <= 1")
    loge_new = np.empty_like(loge)
    for t in range(len(v)):
        loge_new[t] = emitter.loglik_row_asi(v, t, 1)
    return loge, loge_new


def dec_forward_backward(model: EdModel, emitter, v, condition_cT=False, asi_cut=False):
    """Log-domain alpha-bar/beta pass for the decreasing encoding.

    ``asi_cut`` severs the emission's dependence on the previous segment
    (possible for Markov order k <= 1 only): observations at a boundary
    are scored with an empty window.
    """
    rho, trho, _ = _dec_tables(model, len(v), condition_cT)
    loge_cont, loge_new = _dec_emissions(model, emitter, v, asi_cut)
    la, lb, alpha, gamma, loglik = _dec_parallel(
        loge_cont, loge_new, model.chain, rho, trho, model.d_min, condition_cT
    )
    return EdPosterior(
        encoding="dec", alpha=alpha, gamma=gamma, log_alpha_bar=la, log_beta=lb,
        loglik=loglik, condition_cT=condition_cT,
    )


def dec_smooth_sequential(model: EdModel, emitter, v, condition_cT=False, asi_cut=False):
    """Linear-domain sequential filtering and smoothing (decreasing counts)."""
    rho, trho, _ = _dec_tables(model, len(v), condition_cT)
    loge_cont, loge_new = _dec_emissions(model, emitter, v, asi_cut)
    alpha, log_norms = _dec_filter_seq(
        loge_cont, loge_new, model.chain, rho, trho, model.d_min, condition_cT
    )
    gamma = _dec_gamma_seq(alpha, model.chain, rho, model.d_min, condition_cT, loge_cont, loge_new)
    post = EdPosterior(
        encoding="dec", alpha=alpha, gamma=gamma, log_norms=log_norms,
        loglik=float(log_norms.sum()), condition_cT=condition_cT,
    )
    post._branch_loge = (loge_cont, loge_new)
    return post


def dec_viterbi(model: EdModel, emitter, v, condition_cT=False, asi_cut=False):
    """Extended Viterbi over (s, c); returns (s path, c path, max log joint).

    Ties prefer the deterministic countdown, then the lowest regime index.
    """
    rho, trho, _ = _dec_tables(model, len(v), condition_cT)
    loge_cont, loge_new = _dec_emissions(model, emitter, v, asi_cut)
    T, S = loge_cont.shape
    C = rho.shape[1]
    d_min = model.d_min
    lmask = np.where(_dec_cap_mask(T, C, condition_cT), 0.0, NEG_INF)
    with np.errstate(divide="ignore"):
        lpi = np.log(model.chain.pi)
        lrho = np.log(rho)
        lrho[:, : d_min - 1] = NEG_INF
        ltrho = np.log(trho)
        ltilde = np.log(model.chain.tilde_pi)
    xi = loge_new[0][:, None] + ltilde[:, None] + ltrho + lmask[0][None, :]
    # psi[t, s, c] = 1 + previous regime if the best move starts a segment
    # at t; 0 encodes the deterministic countdown from (s, c+1)
    psi = np.zeros((T, S, C), dtype=int)
    for t in range(1, T):
        cont = np.full((S, C), NEG_INF)
        cont[:, :-1] = xi[:, 1:]
        cont += loge_cont[t][:, None]
        scores = lpi + xi[:, 0][None, :]
        best_prev = np.argmax(scores, axis=1)
        fresh = lrho + scores[np.arange(S), best_prev][:, None] + loge_new[t][:, None]
        take_fresh = fresh > cont
        xi = np.where(take_fresh, fresh, cont) + lmask[t][None, :]
        psi[t] = np.where(take_fresh, best_prev[:, None] + 1, 0)
    flat = xi if not condition_cT else np.where(np.arange(C)[None, :] == 0, xi, NEG_INF)
    s_star = np.empty(T, dtype=int)
    c_star = np.empty(T, dtype=int)
    idx = int(np.argmax(flat))
    s_star[T - 1], c0 = divmod(idx, C)
    c_star[T - 1] = c0 + 1
    best = float(flat[s_star[T - 1], c0])
    for t in range(T - 1, 0, -1):
        code = psi[t, s_star[t], c_star[t] - 1]
        if code == 0:
            s_star[t - 1] = s_star[t]
            c_star[t - 1] = c_star[t] + 1
        else:
            s_star[t - 1] = code - 1
            c_star[t - 1] = 1
    return s_star, c_star, best


def learn_duration_dec(post: EdPosterior, model: EdModel, tie_initial=False):
    """EM update of the duration pmf from a dec sequential posterior.

    Returns (rho, tilde_rho) on the model's support; rows whose expected
    boundary count is zero are left unchanged.  With ``tie_initial`` the
    initial-count distribution shares the segment-duration parameters, so
    its posterior counts pool into the same update.
    """
    dm = model.pmf()
    alpha, gamma = post.alpha, post.gamma
    loge_cont, loge_new = getattr(post, "_branch_loge", (np.zeros(alpha.shape[:2]),) * 2)
    T, S, C = alpha.shape
    rho = dm.full_rho()[:, :C]
    supp = np.arange(1, C + 1) >= dm.d_min
    rho_supp = rho * supp[None, :]
    num = np.zeros((S, C))
    for t in range(1, T):
        a = alpha[t - 1]
        ec, en = _dec_branch_factors(loge_cont, loge_new, t)
        trans = model.chain.pi @ a[:, 0]
        fresh = rho_supp * (en * trans)[:, None]
        denom = fresh.copy()
        denom[:, :-1] += a[:, 1:] * ec[:, None]
        with np.errstate(invalid="ignore", divide="ignore"):
            share = np.where(denom > 0.0, fresh / np.where(denom > 0, denom, 1.0), 0.0)
        num += share * gamma[t]
    if tie_initial:
        num = num + gamma[0]
    new_rho = dm.rho.copy()
    totals = num.sum(axis=1)
    for s in range(S):
        if totals[s] <= 0.0:
            log.info("duration row %d never visited; leaving it unchanged", s)
            continue
        full = np.zeros(dm.d_max)
        full[:C] = num[s]
        new_rho[s] = full[dm.d_min - 1 :] / totals[s]
    if tie_initial:
        return new_rho, new_rho.copy()
    tilde_full = np.zeros((S, dm.d_max))
    tilde_full[:, :C] = gamma[0]
    row_sums = tilde_full.sum(axis=1, keepdims=True)
    old_tilde = dm.full_tilde_rho()
    tilde_full = np.where(row_sums > 0, tilde_full / np.where(row_sums > 0, row_sums, 1.0), old_tilde)
    return new_rho, tilde_full[:, dm.d_min - 1 :]


def boundary_pairwise_dec(post: EdPosterior, model: EdModel):
    """sum_t p(s_{t-1} = i, c_{t-1} = 1, s_t = j | v_{1:T}) as a (j, i) array."""
    dm = model.pmf()
    alpha, gamma = post.alpha, post.gamma
    loge_cont, loge_new = getattr(post, "_branch_loge", (np.zeros(alpha.shape[:2]),) * 2)
    T, S, C = alpha.shape
    rho = dm.full_rho()[:, :C]
    supp = np.arange(1, C + 1) >= dm.d_min
    rho_supp = rho * supp[None, :]
    pair = np.zeros((S, S))
    for t in range(1, T):
        a = alpha[t - 1]
        ec, en = _dec_branch_factors(loge_cont, loge_new, t)
        trans = model.chain.pi @ a[:, 0]
        denom = rho_supp * (en * trans)[:, None]
        denom[:, :-1] += a[:, 1:] * ec[:, None]
        with np.errstate(invalid="ignore", divide="ignore"):
            share = np.where(
                denom > 0.0, rho_supp * en[:, None] * gamma[t] / np.where(denom > 0, denom, 1.0), 0.0
            )
        weight = share.sum(axis=1)  # over c_t, per s_t = j
        pair += weight[:, None] * model.chain.pi * a[:, 0][None, :]
    return pair


# ---------------------------------------------------------------------------
# increasing count variables
# ---------------------------------------------------------------------------

def _inc_filter_seq(loge, chain, lam, tlam):
    T = loge.shape[0]
    S, C = lam.shape
    alpha = np.zeros((T, S, C))
    log_norms = np.empty(T)
    m = tlam.shape[1]
    e0 = _broadcast_e(_loge_at(loge, 0), C)
    shift = e0.max()
    a0 = np.zeros((S, C))
    a0[:, :m] = tlam * chain.tilde_pi[:, None]
    a0 = a0 * np.exp(e0 - shift)
    z = a0.sum()
    alpha[0] = a0 / z
    log_norms[0] = np.log(z) + shift
    for t in range(1, T):
        et = _broadcast_e(_loge_at(loge, t), C)
        shift = et.max()
        e = np.exp(et - shift)
        a = np.zeros((S, C))
        a[:, 1:] = lam[:, :-1] * alpha[t - 1][:, :-1]
        stop = ((1.0 - lam) * alpha[t - 1]).sum(axis=1)
        a[:, 0] = chain.pi @ stop
        a *= e
        z = a.sum()
        if z <= 0:
            raise FloatingPointError(f"filtered mass vanished at t={t}")
        alpha[t] = a / z
        log_norms[t] = np.log(z) + shift
    return alpha, log_norms


def _inc_gamma_seq(alpha, chain, lam):
    T, S, C = alpha.shape
    gamma = np.zeros_like(alpha)
    gamma[T - 1] = alpha[T - 1]
    for t in range(T - 2, -1, -1):
        a = alpha[t]
        w = ((1.0 - lam) * a).sum(axis=1)
        den = chain.pi @ w
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(den > 0.0, gamma[t + 1][:, 0] / np.where(den > 0, den, 1.0), 0.0)
        g = np.zeros((S, C))
        g[:, :-1] = gamma[t + 1][:, 1:]
        g += (1.0 - lam) * a * (chain.pi.T @ ratio)[:, None]
        gamma[t] = g
    return gamma


def _inc_parallel(loge, chain, lam, tlam):
    T = loge.shape[0]
    S, C = lam.shape
    with np.errstate(divide="ignore"):
        lpi = np.log(chain.pi)
        ltilde = np.log(chain.tilde_pi)
        llam = np.log(lam)
        lstop = np.log1p(-np.clip(lam, 0.0, 1.0))
        ltlam = np.log(tlam)
    m = tlam.shape[1]
    la = np.full((T, S, C), NEG_INF)
    la[0][:, :m] = ltilde[:, None] + ltlam
    la[0] += _broadcast_e(_loge_at(loge, 0), C)
    for t in range(1, T):
        e = _broadcast_e(_loge_at(loge, t), C)
        a = np.full((S, C), NEG_INF)
        a[:, 1:] = llam[:, :-1] + la[t - 1][:, :-1]
        stop = logsumexp(lstop + la[t - 1], axis=1)
        a[:, 0] = logsumexp(lpi + stop[None, :], axis=1)
        la[t] = a + e
    lb = np.full((T, S, C), NEG_INF)
    lb[T - 1] = 0.0
    for t in range(T - 2, -1, -1):
        nxt = lb[t + 1] + _broadcast_e(_loge_at(loge, t + 1), C)
        cont = np.full((S, C), NEG_INF)
        cont[:, :-1] = llam[:, :-1] + nxt[:, 1:]
        reset = logsumexp(lpi.T + nxt[:, 0][None, :], axis=1)
        lb[t] = np.logaddexp(cont, lstop + reset[:, None])
    loglik = float(logsumexp(la[T - 1]))
    lg = la + lb
    gamma = np.exp(lg - logsumexp(lg, axis=(1, 2), keepdims=True))
    alpha = np.exp(la - logsumexp(la, axis=(1, 2), keepdims=True))
    return la, lb, alpha, gamma, loglik


def _inc_emissions(model, emitter, v, asi, C):
    if asi and emitter.k > 0:
        return _emission_tables_inc_asi(emitter, v, C)
    return _emission_tables_markov(emitter, v)


def inc_forward_backward(model: EdModel, emitter, v, asi=False):
    """Log-domain alpha-bar/beta pass for the increasing encoding.

    With ``asi`` the emission window covers only the current segment
    (the min(c_t - 1, k) most recent observations).
    """
    lam, tlam, C = _inc_tables(model, len(v))
    loge = _inc_emissions(model, emitter, v, asi, C)
    la, lb, alpha, gamma, loglik = _inc_parallel(loge, model.chain, lam, tlam)
    return EdPosterior(
        encoding="inc", alpha=alpha, gamma=gamma, log_alpha_bar=la, log_beta=lb,
        loglik=loglik,
    )


def inc_smooth_sequential(model: EdModel, emitter, v, asi=False):
    """Linear-domain sequential filtering and smoothing (increasing counts)."""
    lam, tlam, C = _inc_tables(model, len(v))
    loge = _inc_emissions(model, emitter, v, asi, C)
    alpha, log_norms = _inc_filter_seq(loge, model.chain, lam, tlam)
    gamma = _inc_gamma_seq(alpha, model.chain, lam)
    return EdPosterior(
        encoding="inc", alpha=alpha, gamma=gamma, log_norms=log_norms,
        loglik=float(log_norms.sum()),
    )


def inc_viterbi(model: EdModel, emitter, v, asi=False):
    """Extended Viterbi over (s, c) for the increasing encoding."""
    lam, tlam, C = _inc_tables(model, len(v))
    loge = _inc_emissions(model, emitter, v, asi, C)
    T = loge.shape[0]
    S = model.n_regimes
    with np.errstate(divide="ignore"):
        lpi = np.log(model.chain.pi)
        llam = np.log(lam)
        lstop = np.log1p(-np.clip(lam, 0.0, 1.0))
        ltlam = np.log(tlam)
        ltilde = np.log(model.chain.tilde_pi)
    m = tlam.shape[1]
    xi = np.full((S, C), NEG_INF)
    xi[:, :m] = ltilde[:, None] + ltlam
    xi += _broadcast_e(_loge_at(loge, 0), C)
    psi = np.zeros((T, S, 2), dtype=int)  # best (s', c') feeding each c_t = 1 cell
    for t in range(1, T):
        e = _broadcast_e(_loge_at(loge, t), C)
        stop_scores = lstop + xi
        best_c = np.argmax(stop_scores, axis=1)
        stop_best = stop_scores[np.arange(S), best_c]
        scores = lpi + stop_best[None, :]
        best_prev = np.argmax(scores, axis=1)
        nxt = np.full((S, C), NEG_INF)
        nxt[:, 0] = scores[np.arange(S), best_prev]
        nxt[:, 1:] = llam[:, :-1] + xi[:, :-1]
        psi[t, :, 0] = best_prev
        psi[t, :, 1] = best_c[best_prev] + 1
        xi = nxt + e
    s_star = np.empty(T, dtype=int)
    c_star = np.empty(T, dtype=int)
    idx = int(np.argmax(xi))
    s_star[T - 1], c0 = divmod(idx, C)
    c_star[T - 1] = c0 + 1
    best = float(xi[s_star[T - 1], c0])
    for t in range(T - 1, 0, -1):
        if c_star[t] > 1:
            s_star[t - 1] = s_star[t]
            c_star[t - 1] = c_star[t] - 1
        else:
            s_star[t - 1] = psi[t, s_star[t], 0]
            c_star[t - 1] = psi[t, s_star[t], 1]
    return s_star, c_star, best


# ---------------------------------------------------------------------------
# count-duration variables (segment-recursive)
# ---------------------------------------------------------------------------

class MarkovSegmentEmission:
    """Segment-level evaluator assembled from a Markov emitter (ASI windows)."""

    def __init__(self, emitter, v):
        self.emitter = emitter
        self.v = v

    def table(self, T_ext, d_max):
        """cum[s, start0, j] = log p(v_{start..start+j} | s, fresh start)."""
        v, emitter = self.v, self.emitter
        T = len(v)
        S = emitter.n_regimes
        cum = np.zeros((S, T, d_max))
        for start in range(T):
            run = np.zeros(S)
            for j in range(d_max):
                t = start + j
                if t < T:
                    run = run + emitter.loglik_row_asi(v, t, j + 1)
                cum[:, start, j] = run
        return cum


class GaussianSegmentMeanEmission:
    """Non-Markovian segment law: one latent level per segment.

    Within a segment of regime s, v_t = mu + noise with mu drawn once from
    N(m_s, tau_s^2); the segment marginal is a correlated joint Gaussian,
    evaluated directly via its dense covariance.
    """

    def __init__(self, v, m, tau, sigma):
        self.v = np.asarray(v, dtype=float)
        self.m = np.atleast_1d(np.asarray(m, dtype=float))
        self.tau = np.atleast_1d(np.asarray(tau, dtype=float))
        self.sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
        self.n_regimes = len(self.m)

    def table(self, T_ext, d_max):
        from scipy.stats import multivariate_normal

        v = self.v
        T = len(v)
        cum = np.zeros((self.n_regimes, T, d_max))
        for s in range(self.n_regimes):
            for start in range(T):
                for j in range(d_max):
                    end = start + j
                    if end >= T:
                        cum[s, start, j] = cum[s, start, j - 1]
                        continue
                    n = j + 1
                    cov = self.sigma[s] ** 2 * np.eye(n) + self.tau[s] ** 2 * np.ones((n, n))
                    cum[s, start, j] = multivariate_normal.logpdf(
                        v[start : end + 1], mean=np.full(n, self.m[s]), cov=cov
                    )
        return cum


@dataclass
class CdTables:
    """Segmental quantities of the count-duration encoding.

    ``la1[t0, s, i]`` is log p(s, d = d_min + i, c = 1 at time t0 + 1,
    v_{1:min(t0+1, T)}); segment ends may overrun the horizon unless
    inference is conditioned on c_T = 1.  ``lb1[t0, s]`` is
    log p(v_{t0+2:T} | s, c = 1 at t0 + 1), and ``lbstar[t0, s]`` the same
    given a switch INTO s at t0 + 2.
    """

    la1: np.ndarray
    lb1: np.ndarray
    lbstar: np.ndarray
    logZ: float
    T: int
    d_min: int
    d_max: int
    condition_cT: bool
    eseg: np.ndarray = None
    _g1: np.ndarray = None

    @property
    def T_ext(self):
        return self.la1.shape[0]

    def gamma1(self):
        """p(segment of regime s and duration d ends at t0 + 1 | v_{1:T})."""
        if self._g1 is None:
            self._g1 = np.exp(self.la1 + self.lb1[:, :, None] - self.logZ)
        return self._g1

    def smoothed_sigma(self, t):
        """(S, n_d, d_max) table of p(s, d, c at step t | v_{1:T}), 1-based t."""
        g1 = self.gamma1()
        S, nd = g1.shape[1], g1.shape[2]
        out = np.zeros((S, nd, self.d_max))
        for i in range(nd):
            d = self.d_min + i
            for c in range(1, d + 1):
                t0 = (t - 1) + c - 1
                if t0 < self.T_ext:
                    out[:, i, c - 1] = g1[t0, :, i]
        return out

    def regime_marginals(self):
        """(T, S) smoothed regime marginals via the covering-segment sum."""
        g1 = self.gamma1()
        T, S = self.T, g1.shape[1]
        diff = np.zeros((T + 1, S))
        for i in range(g1.shape[2]):
            d = self.d_min + i
            for t0 in range(self.T_ext):
                lo = max(t0 - d + 1, 0)
                hi = min(t0, T - 1)
                if lo > hi:
                    continue
                diff[lo] += g1[t0, :, i]
                diff[hi + 1] -= g1[t0, :, i]
        return np.cumsum(diff[:T], axis=0)

    def count_marginals(self, t):
        """(S, d_max) table of p(s_t, c_t | v_{1:T}) (1-based t)."""
        return self.smoothed_sigma(t).sum(axis=1)


def _first_segment_logmass(chain, dm, log_efirst):
    """log(tilde_pi * tilde_rho * tilde_tilde_rho * e) over (c0, s, i)."""
    S, nd = dm.n_regimes, dm.n_durations
    out = np.full((dm.d_max, S, nd), NEG_INF)
    with np.errstate(divide="ignore"):
        for i, d in enumerate(dm.support):
            for c in range(1, d + 1):
                w = chain.tilde_pi * dm.tilde_rho[:, i] * dm.tilde_tilde_rho[i, c - 1]
                out[c - 1, :, i] = np.log(w) + log_efirst[:, i, c - 1]
    return out


def _first_segment_emissions(segment_emission, eseg, dm):
    S = eseg.shape[0]
    log_efirst = np.full((S, dm.n_durations, dm.d_max), NEG_INF)
    for i, d in enumerate(dm.support):
        for c in range(1, d + 1):
            if hasattr(segment_emission, "log_e_first"):
                log_efirst[:, i, c - 1] = segment_emission.log_e_first(d, c)
            else:
                log_efirst[:, i, c - 1] = eseg[:, 0, c - 1]
    return log_efirst


def cd_forward_backward(model: EdModel, segment_emission, T, condition_cT=False):
    """Segment-recursive alpha/beta tables for the count-duration encoding.

    ``segment_emission`` provides ``table(T_ext, d_max)`` with cumulative
    per-segment log likelihoods; observations beyond the horizon
    contribute nothing, so segments may overrun when inference is not
    conditioned on c_T = 1.  The normalizer sums, at t = 1, over all
    segments covering the first step.
    """
    dm = model.pmf()
    chain = model.chain
    S, nd = dm.n_regimes, dm.n_durations
    T_ext = T if condition_cT else T + dm.d_max - 1
    eseg = segment_emission.table(T_ext, dm.d_max)  # (S, T, d_max)
    with np.errstate(divide="ignore"):
        lrho = np.log(dm.rho)
        lpi = np.log(chain.pi)
    durations = dm.support

    first = _first_segment_logmass(chain, dm, _first_segment_emissions(segment_emission, eseg, dm))

    la1 = np.full((T_ext, S, nd), NEG_INF)
    lm = np.full((T_ext, S), NEG_INF)    # logsumexp over d of la1
    lmix = np.full((T_ext, S), NEG_INF)  # log sum_s' pi[s, s'] exp(lm[s'])
    for t0 in range(T_ext):
        vals = first[t0].copy() if t0 < dm.d_max else np.full((S, nd), NEG_INF)
        for i, d in enumerate(durations):
            prev = t0 - d
            start = t0 - d + 1
            if prev < 0 or start > T - 1:
                continue
            vals[:, i] = np.logaddexp(vals[:, i], eseg[:, start, d - 1] + lrho[:, i] + lmix[prev])
        la1[t0] = vals
        lm[t0] = logsumexp(vals, axis=1)
        lmix[t0] = logsumexp(lpi + lm[t0][None, :], axis=1)

    lb1 = np.full((T_ext, S), NEG_INF)
    lbstar = np.full((T_ext, S), NEG_INF)
    if condition_cT:
        lb1[T - 1] = 0.0
    else:
        lb1[T - 1 :] = 0.0
    for t0 in range(T - 2, -1, -1):
        terms = np.full((S, nd), NEG_INF)
        for i, d in enumerate(durations):
            end = t0 + d
            if end >= T_ext:
                continue
            terms[:, i] = lrho[:, i] + eseg[:, t0 + 1, d - 1] + lb1[end]
        lbstar[t0] = logsumexp(terms, axis=1)
        lb1[t0] = logsumexp(lpi.T + lbstar[t0][None, :], axis=1)

    if condition_cT:
        logZ = float(logsumexp(la1[T - 1]))
    else:
        cover = np.full((dm.d_max, S), NEG_INF)
        for t0 in range(min(dm.d_max, T_ext)):
            sel = durations >= max(dm.d_min, t0 + 1)
            if sel.any():
                cover[t0] = logsumexp(la1[t0][:, sel], axis=1) + lb1[t0]
        logZ = float(logsumexp(cover))
    return CdTables(
        la1=la1, lb1=lb1, lbstar=lbstar, logZ=logZ, T=T,
        d_min=dm.d_min, d_max=dm.d_max, condition_cT=condition_cT, eseg=eseg,
    )


def cd_smooth_sequential(tables: CdTables, model: EdModel):
    """Backward sweep over smoothed segment-end marginals.

    Cross-implementation companion of ``CdTables.gamma1`` for conditioned
    runs; propagates normalized filtered quantities only.
    """
    if not tables.condition_cT:
        raise ValueError("the sequential sweep assumes conditioning on c_T = 1")
    la1 = tables.la1
    T, S, nd = tables.T, la1.shape[1], la1.shape[2]
    chain = model.chain
    g1 = np.zeros_like(la1)
    g1[T - 1] = np.exp(la1[T - 1] - logsumexp(la1[T - 1]))
    for t0 in range(T - 2, -1, -1):
        start_next = t0 + 1
        gn = np.zeros(S)
        for i in range(nd):
            end = start_next + (tables.d_min + i) - 1
            if end <= T - 1:
                gn += g1[end, :, i]
        row_total = logsumexp(la1[t0])
        if not np.isfinite(row_total):  # no segment can end at this step
            g1[t0] = 0.0
            continue
        m = np.exp(la1[t0] - row_total)
        md = m.sum(axis=1)
        den = chain.pi @ md
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(den > 0.0, gn / np.where(den > 0, den, 1.0), 0.0)
        g1[t0] = m * (chain.pi.T @ ratio)[:, None]
    return g1


def cd_em_update(tables: CdTables, model: EdModel):
    """EM updates of (rho, tilde_rho, pi, tilde_pi) from segmental tables."""
    dm = model.pmf()
    chain = model.chain
    g1 = tables.gamma1()
    T_ext, S, nd = g1.shape
    durations = dm.support
    num = np.zeros((S, nd))
    first = np.zeros((S, nd))
    for t0 in range(T_ext):
        for i, d in enumerate(durations):
            if t0 - d >= 0:
                num[:, i] += g1[t0, :, i]
            else:
                first[:, i] += g1[t0, :, i]
    new_rho = dm.rho.copy()
    totals = num.sum(axis=1)
    for s in range(S):
        if totals[s] > 0:
            new_rho[s] = num[s] / totals[s]
        else:
            log.info("cd duration row %d never visited; leaving it unchanged", s)
    new_tilde_rho = dm.tilde_rho.copy()
    ftot = first.sum(axis=1)
    for s in range(S):
        if ftot[s] > 0:
            new_tilde_rho[s] = first[s] / ftot[s]

    lm = logsumexp(tables.la1, axis=2)
    pair = np.zeros((S, S))  # [j, i]
    for t0 in range(tables.T - 1):
        start_next = t0 + 1
        gn = np.zeros(S)
        for i, d in enumerate(durations):
            end = start_next + d - 1
            if end < T_ext:
                gn += g1[end, :, i]
        m = np.exp(lm[t0] - logsumexp(lm[t0]))
        den = chain.pi @ m
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(den > 0.0, gn / np.where(den > 0, den, 1.0), 0.0)
        pair += ratio[:, None] * chain.pi * m[None, :]
    cols = pair.sum(axis=0, keepdims=True)
    new_pi = np.where(cols > 0.0, pair / np.where(cols > 0, cols, 1.0), chain.pi)
    new_tilde_pi = tables.regime_marginals()[0]
    return new_rho, new_tilde_rho, new_pi, new_tilde_pi


def rabiner_beta_star_initial(tables: CdTables, model: EdModel):
    """Likelihood of all data given a first segment starting at t = 1."""
    dm = model.pmf()
    with np.errstate(divide="ignore"):
        ltrho = np.log(dm.tilde_rho)
    terms = np.full((dm.n_regimes, dm.n_durations), NEG_INF)
    for i, d in enumerate(dm.support):
        end = d - 1
        if end < tables.T_ext:
            terms[:, i] = ltrho[:, i] + tables.eseg[:, 0, d - 1] + tables.lb1[end]
    return logsumexp(terms, axis=1)


def rabiner_updates(tables: CdTables, model: EdModel):
    """Segment-model updates assembled from the alpha*/beta* quantities.

    alpha*_t(j) is the joint of v_{1:t} and a switch into regime j at
    t + 1; beta*_t(j) the likelihood of v_{t+1:T} given that switch.  The
    products alpha* rho e beta recover the same segment posteriors as the
    direct count-duration updates, and the smoothed regime marginal
    follows by subtracting segments that already ended from segments
    already started.  Returns (rho, pi, regime_marginals).
    """
    dm = model.pmf()
    chain = model.chain
    la1, lb1, lbstar, eseg = tables.la1, tables.lb1, tables.lbstar, tables.eseg
    T, S, nd = tables.T, la1.shape[1], la1.shape[2]
    with np.errstate(divide="ignore"):
        lpi = np.log(chain.pi)
        lrho = np.log(dm.rho)
        ltilde = np.log(chain.tilde_pi)
    lm = logsumexp(la1, axis=2)
    lastar = np.empty((T, S))
    for t0 in range(T):
        lastar[t0] = logsumexp(lpi + lm[t0][None, :], axis=1)

    num = np.full((S, nd), NEG_INF)
    for t0 in range(T - 1):
        for i, d in enumerate(dm.support):
            end = t0 + d
            if end >= tables.T_ext:
                continue
            term = lastar[t0] + lrho[:, i] + eseg[:, t0 + 1, d - 1] + lb1[end]
            num[:, i] = np.logaddexp(num[:, i], term)
    rho_new = np.exp(num - logsumexp(num, axis=1, keepdims=True))

    acc = np.full((S, S), NEG_INF)
    for t0 in range(T - 1):
        acc = np.logaddexp(acc, lpi + lm[t0][None, :] + lbstar[t0][:, None])
    pi_new = np.exp(acc - logsumexp(acc, axis=0, keepdims=True))

    star0 = ltilde + rabiner_beta_star_initial(tables, model)
    started = np.exp(
        np.concatenate([star0[None, :], lastar[: T - 1] + lbstar[: T - 1]], axis=0)
        - tables.logZ
    )
    ended = np.exp(lm[:T] + lb1[:T] - tables.logZ)
    marg = np.cumsum(started, axis=0) - np.concatenate(
        [np.zeros((1, S)), np.cumsum(ended[: T - 1], axis=0)], axis=0
    )
    return rho_new, pi_new, marg


def cd_viterbi(model: EdModel, segment_emission, T, allowed_durations=None):
    """Segmental extended Viterbi; the decoded last segment ends at T.

    ``allowed_durations`` optionally maps a 1-based segment END time to
    the set of admissible durations (constrained decoding).  Returns
    (s path, d path, c path, max log joint), or None when the constraints
    admit no segmentation of the horizon.
    """
    dm = model.pmf()
    chain = model.chain
    S, nd = dm.n_regimes, dm.n_durations
    eseg = segment_emission.table(T, dm.d_max)
    with np.errstate(divide="ignore"):
        lrho = np.log(dm.rho)
        lpi = np.log(chain.pi)
    first = _first_segment_logmass(chain, dm, _first_segment_emissions(segment_emission, eseg, dm))

    def allowed(t1):
        if allowed_durations is None:
            return None
        if isinstance(allowed_durations, dict):
            return allowed_durations.get(t1)
        return allowed_durations[t1]

    xi = np.full((T, S, nd), NEG_INF)
    psi = np.full((T, S, nd, 2), -1, dtype=int)
    best_prev = np.full((T, S), NEG_INF)
    arg_prev = np.zeros((T, S, 2), dtype=int)
    for t0 in range(T):
        vals = first[t0].copy() if t0 < dm.d_max else np.full((S, nd), NEG_INF)
        subset = allowed(t0 + 1)
        for i, d in enumerate(dm.support):
            if subset is not None and d not in subset:
                vals[:, i] = NEG_INF
                continue
            prev = t0 - d
            if prev < 0:
                continue
            cand = eseg[:, t0 - d + 1, d - 1] + lrho[:, i] + best_prev[prev]
            take = cand > vals[:, i]
            psi[t0, take, i, 0] = arg_prev[prev, take, 0]
            psi[t0, take, i, 1] = arg_prev[prev, take, 1]
            vals[:, i] = np.where(take, cand, vals[:, i])
        xi[t0] = vals
        resh = (lpi[:, :, None] + vals[None, :, :]).reshape(S, -1)
        idx = np.argmax(resh, axis=1)
        best_prev[t0] = resh[np.arange(S), idx]
        arg_prev[t0, :, 0], arg_prev[t0, :, 1] = divmod(idx, nd)

    if not np.isfinite(xi[T - 1]).any():
        return None
    s_path = np.empty(T, dtype=int)
    d_path = np.empty(T, dtype=int)
    c_path = np.empty(T, dtype=int)
    flat_idx = int(np.argmax(xi[T - 1]))
    s_cur, i_cur = divmod(flat_idx, nd)
    best = float(xi[T - 1, s_cur, i_cur])
    t0 = T - 1
    while True:
        d = dm.d_min + i_cur
        for u in range(max(t0 - d + 1, 0), t0 + 1):
            s_path[u] = s_cur
            d_path[u] = d
            c_path[u] = t0 - u + 1
        prev_s, prev_i = psi[t0, s_cur, i_cur]
        t0 = t0 - d
        if t0 < 0 or prev_s < 0:
            break
        s_cur, i_cur = int(prev_s), int(prev_i)
    return s_path, d_path, c_path, best
