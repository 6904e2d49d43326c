"""Explicit-duration switching linear Gaussian state-space models.

Joint posteriors over the augmented regime/duration chain sigma_t and the
continuous state h_t, under all three duration encodings.

With across-segment independence (ASI) the continuous state resets at
every boundary, so conditioning on a segmentation reduces to one Kalman
filter/smoother per (regime, segment start).  A shared bank of those
filters feeds every encoding: increasing counts and count-duration
variables read single Gaussians off it, decreasing counts mix over the
unknown segment start, and the sigma weights follow the same discrete
recursions as the pure switching case with innovation densities as
emissions.  These paths are exact.

With across-segment dependence the mixtures grow exponentially;
filtering collapses them to one moment-matched Gaussian per sigma, and
smoothing additionally substitutes smoothed means into the backward
regime weights (the expectation-correction scheme).  Those paths are
approximate by construction.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from edms.chains import DurationModel, RegimeTransition, make_rng, sample_chain
from edms.edmsm import (
    EdModel,
    _dec_cap_mask,
    _inc_filter_seq,
    _inc_gamma_seq,
    _inc_tables,
    cd_forward_backward,
)
from edms.lgssm import (
    GaussianBelief,
    GaussianMixtureBelief,
    LgssmParams,
    bank_correct,
    bank_predict,
    collapse,
    gaussian_logpdf,
    unscented_propagate,
)

log = logging.getLogger(__name__)

NEG_INF = -np.inf


# ---------------------------------------------------------------------------
# per-regime dynamics
# ---------------------------------------------------------------------------

class LinearDynamics:
    """h' = A h + N(0, Sigma_H)."""

    def __init__(self, A, Sigma_H):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.Sigma_H = np.atleast_2d(np.asarray(Sigma_H, dtype=float))

    def predict(self, mean, cov):
        m = self.A @ mean
        P = self.A @ cov @ self.A.T + self.Sigma_H
        return m, P, cov @ self.A.T

    def bank_predict(self, means, covs):
        return bank_predict(means, covs, self.A, self.Sigma_H)


class UnscentedDynamics:
    """h' = f(h) + N(0, Sigma_H), propagated through sigma points."""

    def __init__(self, f, Sigma_H, alpha=1.0, beta=0.0, kappa=None):
        self.f = f
        self.Sigma_H = np.atleast_2d(np.asarray(Sigma_H, dtype=float))
        self.alpha, self.beta, self.kappa = alpha, beta, kappa

    def predict(self, mean, cov):
        belief, cross = unscented_propagate(
            self.f, GaussianBelief(mean, cov), self.Sigma_H,
            alpha=self.alpha, beta=self.beta, kappa=self.kappa,
        )
        return belief.mean, belief.cov, cross

    def bank_predict(self, means, covs):
        out_m = np.empty_like(means)
        out_P = np.empty_like(covs)
        for n in range(means.shape[0]):
            out_m[n], out_P[n], _ = self.predict(means[n], covs[n])
        return out_m, out_P


def smooth_step(dyn, filt_mean, filt_cov, next_mean, next_cov):
    """One backward smoothing step through the given dynamics."""
    mp, Pp, cross = dyn.predict(filt_mean, filt_cov)
    G = np.linalg.solve(Pp, cross.T).T
    m = filt_mean + G @ (next_mean - mp)
    P = filt_cov + G @ (next_cov - Pp) @ G.T
    return m, 0.5 * (P + P.T)


@dataclass(frozen=True)
class SlgssmParams:
    """Per-regime state-space blocks plus the augmented regime chain."""

    dynamics: tuple                 # per-regime LinearDynamics/UnscentedDynamics
    B: np.ndarray                   # (S, V, H)
    Sigma_V: np.ndarray             # (S, V, V)
    mu: np.ndarray                  # (S, H)
    Sigma: np.ndarray               # (S, H, H)
    chain: RegimeTransition = None
    duration: object = None         # DurationModel or HazardModel
    encoding: str = "inc"
    asi: bool = True
    collapse_policy: str = "none"   # "none" | "to1"

    def __post_init__(self):
        for name in ("B", "Sigma_V", "mu", "Sigma"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if len(self.dynamics) != self.B.shape[0]:
            raise ValueError("one dynamics object per regime required")

    @property
    def n_regimes(self):
        return self.B.shape[0]

    @property
    def dim_h(self):
        return self.mu.shape[1]

    @property
    def dim_v(self):
        return self.B.shape[1]

    def ed_model(self):
        return EdModel(self.chain, self.duration)

    def regime_lgssm(self, s) -> LgssmParams:
        dyn = self.dynamics[s]
        if not isinstance(dyn, LinearDynamics):
            raise ValueError("regime dynamics is not linear")
        return LgssmParams(
            A=dyn.A, Sigma_H=dyn.Sigma_H, B=self.B[s], Sigma_V=self.Sigma_V[s],
            mu=self.mu[s], Sigma=self.Sigma[s],
        )


def linear_slgssm(A, Sigma_H, B, Sigma_V, mu, Sigma, **kw):
    """Constructor from stacked per-regime arrays."""
    A = np.asarray(A, dtype=float)
    Sigma_H = np.asarray(Sigma_H, dtype=float)
    dyn = tuple(LinearDynamics(A[s], Sigma_H[s]) for s in range(A.shape[0]))
    return SlgssmParams(dynamics=dyn, B=B, Sigma_V=Sigma_V, mu=mu, Sigma=Sigma, **kw)


def _as_obs(params, v):
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if v.shape[1] != params.dim_v:
        raise ValueError("observation dimension mismatch")
    return v


def _require_fresh_start(params):
    dm = params.duration
    if isinstance(dm, DurationModel):
        if not np.allclose(dm.tilde_rho, dm.rho):
            raise ValueError(
                "state-space ASI paths assume a fresh segment at t = 1 "
                "(tilde_rho tied to rho)"
            )
        expected = np.zeros_like(dm.tilde_tilde_rho)
        for i, d in enumerate(dm.support):
            expected[i, d - 1] = 1.0
        if not np.allclose(dm.tilde_tilde_rho, expected):
            raise ValueError("state-space ASI paths assume the first segment starts at t = 1")


# ---------------------------------------------------------------------------
# shared ASI machinery: one filter per (regime, segment start)
# ---------------------------------------------------------------------------

@dataclass
class AsiFilterBank:
    """Filtered moments of every within-segment Kalman track.

    Index layout is [t, s, j] with segment age j (j = 0: the segment
    started at t).  ``step_loglik[t, s, j]`` is the innovation log density
    of v_t under that track; ages beyond t are marked -inf.
    """

    means: np.ndarray        # (T, S, J, H)
    covs: np.ndarray         # (T, S, J, H, H)
    pred_means: np.ndarray
    pred_covs: np.ndarray
    step_loglik: np.ndarray  # (T, S, J)

    @property
    def shape(self):
        return self.step_loglik.shape

    def belief(self, t, s, j):
        return GaussianBelief(self.means[t, s, j], self.covs[t, s, j])


def build_asi_bank(params: SlgssmParams, v, max_age=None) -> AsiFilterBank:
    """Run the fresh-start filters of every (regime, start) in lock-step."""
    v = _as_obs(params, v)
    T = v.shape[0]
    S, H = params.n_regimes, params.dim_h
    if max_age is None:
        d_max = params.duration.d_max
        max_age = T if d_max is None else min(d_max, T)
    J = max_age
    bank = AsiFilterBank(
        means=np.zeros((T, S, J, H)),
        covs=np.zeros((T, S, J, H, H)),
        pred_means=np.zeros((T, S, J, H)),
        pred_covs=np.zeros((T, S, J, H, H)),
        step_loglik=np.full((T, S, J), NEG_INF),
    )
    for s in range(S):
        m_prev = np.zeros((0, H))
        P_prev = np.zeros((0, H, H))
        for t in range(T):
            n_active = min(t + 1, J)
            m_pred = np.empty((n_active, H))
            P_pred = np.empty((n_active, H, H))
            m_pred[0] = params.mu[s]
            P_pred[0] = params.Sigma[s]
            carried = min(n_active - 1, m_prev.shape[0])
            if carried > 0:
                mp, Pp = params.dynamics[s].bank_predict(m_prev[:carried], P_prev[:carried])
                m_pred[1 : 1 + carried] = mp
                P_pred[1 : 1 + carried] = Pp
            m_f, P_f, ll = bank_correct(m_pred, P_pred, params.B[s], params.Sigma_V[s], v[t])
            bank.pred_means[t, s, :n_active] = m_pred
            bank.pred_covs[t, s, :n_active] = P_pred
            bank.means[t, s, :n_active] = m_f
            bank.covs[t, s, :n_active] = P_f
            bank.step_loglik[t, s, :n_active] = ll
            m_prev, P_prev = m_f, P_f
    return bank


class InnovationSegmentEmission:
    """Segment-level log likelihoods assembled from an ASI bank."""

    def __init__(self, bank: AsiFilterBank):
        self.bank = bank

    def table(self, T_ext, d_max):
        T, S, J = self.bank.shape
        cum = np.zeros((S, T, d_max))
        for start in range(T):
            width = min(d_max, T - start, J)
            vals = np.stack(
                [self.bank.step_loglik[start + j, :, j] for j in range(width)], axis=1
            )
            run = np.cumsum(vals, axis=1)
            cum[:, start, :width] = run
            if width < d_max:
                cum[:, start, width:] = run[:, -1][:, None]
        return cum


def segment_smoother(params: SlgssmParams, bank: AsiFilterBank):
    """Smoothed within-segment moments, cached per (s, start, end).

    Ends beyond the data carry no information, so they share the
    trajectory truncated at the last observed step.
    """
    T = bank.shape[0]
    cache = {}

    def smooth(s, start, end):
        end_eff = min(end, T - 1)
        key = (s, start, end_eff)
        if key in cache:
            return cache[key]
        n = end_eff - start + 1
        ages = np.arange(n)
        means = bank.means[start + ages, s, ages].copy()
        covs = bank.covs[start + ages, s, ages].copy()
        for u in range(n - 2, -1, -1):
            mf, Pf = bank.means[start + u, s, u], bank.covs[start + u, s, u]
            mp = bank.pred_means[start + u + 1, s, u + 1]
            Pp = bank.pred_covs[start + u + 1, s, u + 1]
            _, _, cross = params.dynamics[s].predict(mf, Pf)
            G = np.linalg.solve(Pp, cross.T).T
            means[u] = mf + G @ (means[u + 1] - mp)
            P = Pf + G @ (covs[u + 1] - Pp) @ G.T
            covs[u] = 0.5 * (P + P.T)
        cache[key] = (means, covs)
        return cache[key]

    return smooth


# ---------------------------------------------------------------------------
# increasing counts, ASI (exact)
# ---------------------------------------------------------------------------

@dataclass
class IncAsiPosterior:
    params: SlgssmParams
    bank: AsiFilterBank
    alpha: np.ndarray      # (T, S, C)
    gamma: np.ndarray = None
    cd_tables: object = None
    log_norms: np.ndarray = None
    loglik: float = None

    def h_filtered(self, t, s, c):
        j = c - 1
        return GaussianMixtureBelief(
            weights=np.array([1.0]),
            means=self.bank.means[t, s, j][None, :],
            covs=self.bank.covs[t, s, j][None, :, :],
            labels=np.array([t - j]),
        )

    def _smoother(self):
        sm = getattr(self, "_segment_smoother", None)
        if sm is None:
            sm = segment_smoother(self.params, self.bank)
            self._segment_smoother = sm
        return sm

    def h_smoothed(self, t, s, c, collapse_to_one=False):
        """p(h_t | s, c, v_{1:T}): a mixture over the segment's end time."""
        if self.cd_tables is None:
            raise ValueError("smoothed conditionals need a bounded duration law")
        dm = self.params.duration
        d_max = dm.d_max
        start = t - (c - 1)
        q = self.cd_tables.gamma1()
        nd = q.shape[2]
        smooth = self._smoother()
        weights, means, covs, labels = [], [], [], []
        for end in range(t, start + d_max):
            i = (end - start + 1) - dm.d_min
            if i < 0 or i >= nd or end >= q.shape[0]:
                continue
            w = q[end, s, i]
            sm_means, sm_covs = smooth(s, start, end)
            weights.append(w)
            means.append(sm_means[t - start])
            covs.append(sm_covs[t - start])
            labels.append(end)
        weights = np.asarray(weights)
        total = weights.sum()
        if total <= 0:
            raise FloatingPointError("sigma state carries no smoothed mass")
        mix = GaussianMixtureBelief(
            weights=weights / total, means=np.asarray(means), covs=np.asarray(covs),
            labels=np.asarray(labels),
        )
        if collapse_to_one:
            m, P = collapse(mix.weights, mix.means, mix.covs)
            return GaussianMixtureBelief(np.array([1.0]), m[None], P[None])
        return mix

    def h_posterior(self, t, collapse_to_one=False):
        """Mixture over h_t assembled across all sigma states."""
        T, S, C = self.gamma.shape
        weights, mixes = [], []
        for s in range(S):
            for c in range(1, C + 1):
                w = self.gamma[t, s, c - 1]
                if w <= 0:
                    continue
                weights.append(w)
                mixes.append(self.h_smoothed(t, s, c))
        mix = assemble_h_posterior(weights, mixes)
        if collapse_to_one:
            m, P = collapse(mix.weights, mix.means, mix.covs)
            return GaussianMixtureBelief(np.array([1.0]), m[None], P[None])
        return mix


def inc_filter(params: SlgssmParams, v):
    """Filtering under increasing counts; exact for ASI, collapsed
    expectation-correction otherwise."""
    if params.asi:
        return _inc_filter_asi(params, v)
    return _inc_ec_filter(params, v)


def inc_smooth(params: SlgssmParams, filtered=None, v=None):
    if params.asi:
        return _inc_smooth_asi(params, filtered, v)
    return _inc_ec_smooth(params, filtered, v)


def _inc_filter_asi(params: SlgssmParams, v):
    _require_fresh_start(params) if isinstance(params.duration, DurationModel) else None
    model = params.ed_model()
    v = _as_obs(params, v)
    lam, tlam, C = _inc_tables(model, v.shape[0])
    if not model.hazard().starts_at_one:
        raise ValueError("ASI state-space runs assume the first segment starts at t = 1")
    bank = build_asi_bank(params, v, max_age=C)
    alpha, log_norms = _inc_filter_seq(bank.step_loglik, model.chain, lam, tlam)
    return IncAsiPosterior(
        params=params, bank=bank, alpha=alpha, log_norms=log_norms,
        loglik=float(log_norms.sum()),
    )


def _inc_smooth_asi(params: SlgssmParams, filtered: IncAsiPosterior, v):
    if filtered is None:
        filtered = _inc_filter_asi(params, v)
    model = params.ed_model()
    lam, _, C = _inc_tables(model, filtered.alpha.shape[0])
    filtered.gamma = _inc_gamma_seq(filtered.alpha, model.chain, lam)
    if model.d_max is not None:
        seg = InnovationSegmentEmission(filtered.bank)
        filtered.cd_tables = cd_forward_backward(
            EdModel(model.chain, model.pmf()), seg, filtered.bank.shape[0]
        )
    return filtered


# ---------------------------------------------------------------------------
# count-duration variables, ASI (exact)
# ---------------------------------------------------------------------------

@dataclass
class CdAsiPosterior:
    params: SlgssmParams
    bank: AsiFilterBank
    tables: object               # segmental sigma tables (exact)
    alpha_tilde: np.ndarray      # (T, S, J) filtered start-age factor
    alpha_lognorm: np.ndarray

    def alpha_sigma(self, t):
        """Filtered p(s, d, c | v_{1:t}) as an (S, n_d, d_max) array."""
        dm = self.params.duration
        T, S, J = self.alpha_tilde.shape
        out = np.zeros((S, dm.n_durations, dm.d_max))
        for j in range(min(t + 1, J)):
            rho_eff = dm.tilde_rho if j == t else dm.rho
            for i, d in enumerate(dm.support):
                c = d - j
                if 1 <= c <= d:
                    out[:, i, c - 1] = rho_eff[:, i] * self.alpha_tilde[t, :, j]
        total = out.sum()
        if total > 0:
            out /= total
        return out

    def gamma_sigma(self, t):
        """Smoothed p(s, d, c at step t | v_{1:T}) (0-based t)."""
        return self.tables.smoothed_sigma(t + 1)

    def h_filtered(self, t, s, d, c):
        j = d - c
        return GaussianMixtureBelief(
            weights=np.array([1.0]),
            means=self.bank.means[t, s, j][None, :],
            covs=self.bank.covs[t, s, j][None, :, :],
            labels=np.array([t - j]),
        )

    def h_smoothed(self, t, s, d, c):
        sm = getattr(self, "_segment_smoother", None)
        if sm is None:
            sm = segment_smoother(self.params, self.bank)
            self._segment_smoother = sm
        start = t - (d - c)
        end = t + c - 1
        means, covs = sm(s, start, end)
        return GaussianMixtureBelief(
            weights=np.array([1.0]), means=means[t - start][None, :],
            covs=covs[t - start][None, :, :], labels=np.array([end]),
        )

    def regime_gamma(self):
        return self.tables.regime_marginals()


def cd_filter(params: SlgssmParams, v, condition_cT=False):
    """Count-duration filtering via the start-age factorization.

    alpha over (s, d, c) factorizes as rho[s, d] times a recursion over
    the age d - c, which shares one Kalman track per (regime, start).
    Requires across-segment independence; the dependence case is served
    by the count encodings.
    """
    if not params.asi:
        raise ValueError(
            "the count-duration state-space path requires across-segment "
            "independence; use a count encoding for the dependence case"
        )
    _require_fresh_start(params)
    model = params.ed_model()
    dm = model.pmf()
    v = _as_obs(params, v)
    T = v.shape[0]
    bank = build_asi_bank(params, v, max_age=min(dm.d_max, T))
    J = bank.shape[2]
    S = params.n_regimes
    loge = bank.step_loglik
    full_rho = dm.full_rho()
    full_trho = dm.full_tilde_rho()
    at = np.zeros((T, S, J))
    log_norms = np.empty(T)
    for t in range(T):
        finite = loge[t][np.isfinite(loge[t])]
        shift = finite.max()
        e = np.exp(np.where(np.isfinite(loge[t]), loge[t] - shift, NEG_INF))
        vals = np.zeros((S, J))
        if t == 0:
            vals[:, 0] = model.chain.tilde_pi * e[:, 0]
        else:
            ended = np.zeros(S)
            for j in range(min(t, J)):
                rho_row = full_trho if j == t - 1 else full_rho
                ended += at[t - 1, :, j] * rho_row[:, j]
            vals[:, 0] = (model.chain.pi @ ended) * e[:, 0]
            vals[:, 1:] = at[t - 1][:, :-1] * e[:, 1:]
        z = vals.sum()
        if z <= 0:
            raise FloatingPointError(f"filtered mass vanished at t={t}")
        at[t] = vals / z
        log_norms[t] = np.log(z) + shift
    tables = cd_forward_backward(
        EdModel(model.chain, dm), InnovationSegmentEmission(bank), T, condition_cT
    )
    return CdAsiPosterior(
        params=params, bank=bank, tables=tables, alpha_tilde=at, alpha_lognorm=log_norms
    )


def cd_filter_naive(params: SlgssmParams, v):
    """Direct double-loop filtered table over (s, d, c); cross-check only."""
    model = params.ed_model()
    dm = model.pmf()
    v = _as_obs(params, v)
    T = v.shape[0]
    bank = build_asi_bank(params, v, max_age=min(dm.d_max, T))
    J = bank.shape[2]
    S = params.n_regimes
    loge = bank.step_loglik
    alpha = np.zeros((T, S, dm.n_durations, dm.d_max))
    for t in range(T):
        shift = loge[t][np.isfinite(loge[t])].max()
        vals = np.zeros((S, dm.n_durations, dm.d_max))
        for i, d in enumerate(dm.support):
            for c in range(1, d + 1):
                j = d - c
                if j > t or j >= J:
                    continue
                e = np.exp(loge[t, :, j] - shift)
                if t == 0:
                    if c == d:
                        vals[:, i, c - 1] = model.chain.tilde_pi * dm.tilde_rho[:, i] * e
                elif c == d:
                    ended = alpha[t - 1][:, :, 0].sum(axis=1)
                    vals[:, i, c - 1] = (model.chain.pi @ ended) * dm.rho[:, i] * e
                else:
                    vals[:, i, c - 1] = alpha[t - 1][:, i, c] * e
        alpha[t] = vals / vals.sum()
    return alpha


def cd_smooth(params: SlgssmParams, filtered: CdAsiPosterior = None, v=None, condition_cT=False):
    """Smoothing is already contained in the segmental tables; this wrapper
    exists to mirror the count-encoding interfaces."""
    if filtered is None:
        filtered = cd_filter(params, v, condition_cT=condition_cT)
    return filtered


# ---------------------------------------------------------------------------
# decreasing counts, ASI (exact, start-labelled mixtures)
# ---------------------------------------------------------------------------

@dataclass
class DecAsiPosterior:
    params: SlgssmParams
    bank: AsiFilterBank
    alpha: np.ndarray          # (T, S, C)
    start_weights: np.ndarray  # (T, S, C, J) filtered posterior over the start age
    share_cont: np.ndarray     # (T, S, C) entry-branch split, reused backward
    gamma: np.ndarray = None
    cd_tables: object = None
    log_norms: np.ndarray = None
    loglik: float = None

    def h_filtered(self, t, s, c):
        w = self.start_weights[t, s, c - 1]
        idx = np.flatnonzero(w > 0)
        return GaussianMixtureBelief(
            weights=w[idx] / w[idx].sum(),
            means=self.bank.means[t, s, idx],
            covs=self.bank.covs[t, s, idx],
            labels=t - idx,
        )

    def filtered_component_count(self, t, s, c):
        """One structural component per admissible segment start."""
        d_max = self.params.duration.d_max
        return len([j for j in range(min(t + 1, d_max)) if j + c <= d_max])

    def h_smoothed(self, t, s, c):
        """Mixture over hidden starts; the end is pinned at t + c - 1."""
        params = self.params
        dm = params.duration
        sm = getattr(self, "_segment_smoother", None)
        if sm is None:
            sm = segment_smoother(params, self.bank)
            self._segment_smoother = sm
        q = self.cd_tables.gamma1()
        end = t + c - 1
        weights, means, covs, labels = [], [], [], []
        for j in range(min(t + 1, dm.d_max)):
            start = t - j
            i = (end - start + 1) - dm.d_min
            if i < 0 or i >= dm.n_durations or end >= q.shape[0]:
                continue
            w = q[end, s, i]
            if w <= 0:
                continue
            sm_means, sm_covs = sm(s, start, end)
            weights.append(w)
            means.append(sm_means[t - start])
            covs.append(sm_covs[t - start])
            labels.append(start)
        weights = np.asarray(weights)
        return GaussianMixtureBelief(
            weights=weights / weights.sum(), means=np.asarray(means),
            covs=np.asarray(covs), labels=np.asarray(labels),
        )


def dec_filter(params: SlgssmParams, v, condition_cT=False):
    if params.asi:
        if condition_cT:
            raise ValueError("conditioning on c_T = 1 is not wired into the ASI "
                             "decreasing-count path")
        return _dec_filter_asi(params, v)
    return _dec_ec_filter(params, v, condition_cT=condition_cT)


def dec_smooth(params: SlgssmParams, filtered=None, v=None, condition_cT=False):
    if params.asi:
        return _dec_smooth_asi(params, filtered, v)
    return _dec_ec_smooth(params, filtered, v, condition_cT=condition_cT)


def _dec_filter_asi(params: SlgssmParams, v):
    """Start-labelled mixture filtering: the entry branches carry
    different predictive densities because the segment start is hidden."""
    _require_fresh_start(params)
    model = params.ed_model()
    dm = model.pmf()
    v = _as_obs(params, v)
    T = v.shape[0]
    C = dm.d_max
    bank = build_asi_bank(params, v, max_age=min(C, T))
    J = bank.shape[2]
    S = params.n_regimes
    rho = dm.full_rho()
    trho = dm.full_tilde_rho()
    alpha = np.zeros((T, S, C))
    wstart = np.zeros((T, S, C, J))
    share_cont = np.zeros((T, S, C))
    log_norms = np.empty(T)
    supp = (np.arange(1, C + 1) >= dm.d_min).astype(float)

    shift = bank.step_loglik[0, :, 0].max()
    e0 = np.exp(bank.step_loglik[0, :, 0] - shift)
    a0 = model.chain.tilde_pi[:, None] * trho * e0[:, None]
    z = a0.sum()
    alpha[0] = a0 / z
    wstart[0, :, :, 0] = 1.0
    log_norms[0] = np.log(z) + shift
    for t in range(1, T):
        finite = bank.step_loglik[t][np.isfinite(bank.step_loglik[t])]
        shift = finite.max()
        e_age = np.exp(np.where(np.isfinite(bank.step_loglik[t]), bank.step_loglik[t] - shift, NEG_INF))
        trans = model.chain.pi @ alpha[t - 1][:, 0]
        a_new = np.zeros((S, C))
        for s in range(S):
            # continue: (s, c+1) -> (s, c); every component ages one step
            w_prev = wstart[t - 1, s, 1:, : J - 1]          # (C-1, J-1)
            cont_comp = w_prev * e_age[s, 1:J][None, :]     # label j -> j+1
            cont_pred = cont_comp.sum(axis=1)               # predictive density
            cont_mass = cont_pred * alpha[t - 1, s, 1:]
            fresh_mass = supp * rho[s] * trans[s] * e_age[s, 0]
            a = fresh_mass.copy()
            a[: C - 1] += cont_mass
            a_new[s] = a
            with np.errstate(invalid="ignore"):
                share_cont[t, s, : C - 1] = np.where(
                    a[: C - 1] > 0, cont_mass / np.where(a[: C - 1] > 0, a[: C - 1], 1.0), 0.0
                )
            comp = np.zeros((C, J))
            comp[: C - 1, 1:] = cont_comp * alpha[t - 1, s, 1:][:, None]
            comp[:, 0] += fresh_mass
            totals = comp.sum(axis=1, keepdims=True)
            wstart[t, s] = np.where(totals > 0, comp / np.where(totals > 0, totals, 1.0), 0.0)
        z = a_new.sum()
        if z <= 0:
            raise FloatingPointError(f"filtered mass vanished at t={t}")
        alpha[t] = a_new / z
        log_norms[t] = np.log(z) + shift
    return DecAsiPosterior(
        params=params, bank=bank, alpha=alpha, start_weights=wstart,
        share_cont=share_cont, log_norms=log_norms, loglik=float(log_norms.sum()),
    )


def _dec_smooth_asi(params: SlgssmParams, filtered: DecAsiPosterior, v):
    """Backward sigma recursion reusing the recorded entry-branch split;
    resets sever the future, so no point substitution is needed."""
    if filtered is None:
        filtered = _dec_filter_asi(params, v)
    model = params.ed_model()
    dm = model.pmf()
    alpha, share_cont = filtered.alpha, filtered.share_cont
    T, S, C = alpha.shape
    gamma = np.zeros_like(alpha)
    gamma[T - 1] = alpha[T - 1]
    for t in range(T - 2, -1, -1):
        trans = model.chain.pi @ alpha[t][:, 0]
        g = np.zeros((S, C))
        g[:, 1:] = gamma[t + 1][:, : C - 1] * share_cont[t + 1][:, : C - 1]
        fresh_gamma = gamma[t + 1] * (1.0 - share_cont[t + 1])
        with np.errstate(invalid="ignore"):
            per_regime = np.where(
                trans > 0, fresh_gamma.sum(axis=1) / np.where(trans > 0, trans, 1.0), 0.0
            )
        g[:, 0] += alpha[t][:, 0] * (model.chain.pi.T @ per_regime)
        gamma[t] = g
    filtered.gamma = gamma
    filtered.cd_tables = cd_forward_backward(
        EdModel(model.chain, dm), InnovationSegmentEmission(filtered.bank),
        T, condition_cT=False,
    )
    return filtered


def assemble_h_posterior(weights, mixtures):
    """Flatten per-sigma conditionals into a single mixture over h_t."""
    ws, ms, cs = [], [], []
    for w, mix in zip(weights, mixtures):
        if w <= 0:
            continue
        ws.append(w * mix.weights)
        ms.append(mix.means)
        cs.append(mix.covs)
    ws = np.concatenate(ws)
    return GaussianMixtureBelief(
        weights=ws / ws.sum(), means=np.concatenate(ms), covs=np.concatenate(cs)
    )


# ---------------------------------------------------------------------------
# across-segment dependence: expectation correction with collapsing
# ---------------------------------------------------------------------------

@dataclass
class EcPosterior:
    """Collapsed per-sigma Gaussians of the dependence case."""

    params: SlgssmParams
    encoding: str
    alpha: np.ndarray          # (T, S, C)
    f_means: np.ndarray        # (T, S, C, H) filtered, collapsed
    f_covs: np.ndarray
    gamma: np.ndarray = None
    s_means: np.ndarray = None  # smoothed, collapsed
    s_covs: np.ndarray = None
    log_norms: np.ndarray = None
    loglik: float = None

    def regime_gamma(self):
        return self.gamma.sum(axis=2)

    def h_posterior_moments(self, t, smoothed=True):
        w = (self.gamma if smoothed else self.alpha)[t].reshape(-1)
        means = (self.s_means if smoothed else self.f_means)[t].reshape(-1, self.params.dim_h)
        covs = (self.s_covs if smoothed else self.f_covs)[t].reshape(
            -1, self.params.dim_h, self.params.dim_h
        )
        keep = w > 0
        return collapse(w[keep], means[keep], covs[keep])


def _correct_one(params, s, mean, cov, v_t):
    m, P, ll = bank_correct(mean[None], cov[None], params.B[s], params.Sigma_V[s], v_t)
    return m[0], P[0], float(ll[0])


def _inc_ec_filter(params: SlgssmParams, v):
    """Increasing counts, dependence case: the c = 1 cells mix over every
    predecessor sigma and are collapsed by moment matching."""
    model = params.ed_model()
    v = _as_obs(params, v)
    T = v.shape[0]
    lam, tlam, C = _inc_tables(model, T)
    S, H = params.n_regimes, params.dim_h
    alpha = np.zeros((T, S, C))
    fm = np.zeros((T, S, C, H))
    fc = np.zeros((T, S, C, H, H))
    log_norms = np.empty(T)
    m_tl = tlam.shape[1]
    # t = 0: h_1 ~ N(mu_s, Sigma_s) whatever the initial count
    lls = np.empty(S)
    for s in range(S):
        m0, P0, ll = _correct_one(params, s, params.mu[s], params.Sigma[s], v[0])
        for c in range(min(m_tl, C)):
            fm[0, s, c] = m0
            fc[0, s, c] = P0
        lls[s] = ll
    shift = lls.max()
    a0 = np.zeros((S, C))
    a0[:, :m_tl] = params.chain.tilde_pi[:, None] * tlam * np.exp(lls - shift)[:, None]
    z = a0.sum()
    alpha[0] = a0 / z
    log_norms[0] = np.log(z) + shift

    for t in range(1, T):
        masses = np.zeros((S, C))
        raw_ll = np.full((S, C), NEG_INF)
        cont_m = np.zeros((S, C, H))
        cont_P = np.zeros((S, C, H, H))
        boundary = []  # per target regime: (weights, means, covs)
        for s in range(S):
            # deterministic growth: (s, c-1) -> (s, c)
            mp, Pp = params.dynamics[s].bank_predict(
                fm[t - 1, s, : C - 1], fc[t - 1, s, : C - 1]
            )
            m_f, P_f, ll = bank_correct(mp, Pp, params.B[s], params.Sigma_V[s], v[t])
            cont_m[s, 1:] = m_f
            cont_P[s, 1:] = P_f
            raw_ll[s, 1:] = ll
        shift = raw_ll[:, 1:][np.isfinite(raw_ll[:, 1:])].max() if np.isfinite(raw_ll[:, 1:]).any() else 0.0
        # boundary cells mix over all predecessors under the new dynamics
        prev_m = fm[t - 1].reshape(S * C, H)
        prev_P = fc[t - 1].reshape(S * C, H, H)
        stop_w = ((1.0 - lam) * alpha[t - 1]).reshape(S * C)
        regime_of = np.repeat(np.arange(S), C)
        for s in range(S):
            mp, Pp = params.dynamics[s].bank_predict(prev_m, prev_P)
            m_f, P_f, ll = bank_correct(mp, Pp, params.B[s], params.Sigma_V[s], v[t])
            w = params.chain.pi[s, regime_of] * stop_w
            shift = max(shift, ll[w > 0].max()) if np.any(w > 0) else shift
            boundary.append((w, ll, m_f, P_f))
        for s in range(S):
            grow = lam[s, : C - 1] * alpha[t - 1, s, : C - 1] * np.exp(raw_ll[s, 1:] - shift)
            masses[s, 1:] = grow
            w, ll, m_f, P_f = boundary[s]
            bw = w * np.exp(ll - shift)
            total = bw.sum()
            masses[s, 0] = total
            if total > 0:
                m_c, P_c = collapse(bw / total, m_f, P_f)
                fm[t, s, 0] = m_c
                fc[t, s, 0] = P_c
            fm[t, s, 1:] = cont_m[s, 1:]
            fc[t, s, 1:] = cont_P[s, 1:]
        z = masses.sum()
        if z <= 0:
            raise FloatingPointError(f"filtered mass vanished at t={t}")
        alpha[t] = masses / z
        log_norms[t] = np.log(z) + shift
    return EcPosterior(
        params=params, encoding="inc", alpha=alpha, f_means=fm, f_covs=fc,
        log_norms=log_norms, loglik=float(log_norms.sum()),
    )


def _inc_ec_smooth(params: SlgssmParams, filtered: EcPosterior, v):
    """Backward pass with the smoothed-point substitution in the boundary
    weights; the within-segment branch needs no approximation."""
    if filtered is None:
        filtered = _inc_ec_filter(params, v)
    model = params.ed_model()
    T, S, C = filtered.alpha.shape
    H = params.dim_h
    lam, _, _ = _inc_tables(model, T)
    alpha, fm, fc = filtered.alpha, filtered.f_means, filtered.f_covs
    gamma = np.zeros_like(alpha)
    sm = np.zeros_like(fm)
    sc = np.zeros_like(fc)
    gamma[T - 1] = alpha[T - 1]
    sm[T - 1] = fm[T - 1]
    sc[T - 1] = fc[T - 1]
    for t in range(T - 2, -1, -1):
        # boundary reweighting: r[s', s, c] approx p(sigma_t, switch to s')
        r = np.zeros((S, S, C))
        for sp in range(S):
            target_m = sm[t + 1, sp, 0]
            dens = np.zeros((S, C))
            for s in range(S):
                for c in range(C):
                    w = params.chain.pi[sp, s] * (1.0 - lam[s, c]) * alpha[t, s, c]
                    if w <= 0:
                        continue
                    mp, Pp, _ = params.dynamics[sp].predict(fm[t, s, c], fc[t, s, c])
                    dens[s, c] = w * np.exp(gaussian_logpdf(target_m, mp, Pp))
            total = dens.sum()
            if total > 0:
                r[sp] = dens / total
        g = np.zeros((S, C))
        g[:, : C - 1] = gamma[t + 1][:, 1:]
        for sp in range(S):
            g += r[sp] * gamma[t + 1, sp, 0]
        gamma[t] = g
        # smoothed conditionals: grow branch + boundary branches, collapsed
        for s in range(S):
            for c in range(C):
                if gamma[t, s, c] <= 0:
                    sm[t, s, c] = fm[t, s, c]
                    sc[t, s, c] = fc[t, s, c]
                    continue
                comps_w, comps_m, comps_P = [], [], []
                if c < C - 1 and gamma[t + 1, s, c + 1] > 0:
                    w_cont = gamma[t + 1, s, c + 1]  # unique predecessor
                    m_, P_ = smooth_step(
                        params.dynamics[s], fm[t, s, c], fc[t, s, c],
                        sm[t + 1, s, c + 1], sc[t + 1, s, c + 1],
                    )
                    comps_w.append(w_cont)
                    comps_m.append(m_)
                    comps_P.append(P_)
                for sp in range(S):
                    w_end = r[sp, s, c] * gamma[t + 1, sp, 0]
                    if w_end <= 0:
                        continue
                    m_, P_ = smooth_step(
                        params.dynamics[sp], fm[t, s, c], fc[t, s, c],
                        sm[t + 1, sp, 0], sc[t + 1, sp, 0],
                    )
                    comps_w.append(w_end)
                    comps_m.append(m_)
                    comps_P.append(P_)
                m_c, P_c = collapse(np.asarray(comps_w), np.asarray(comps_m), np.asarray(comps_P))
                sm[t, s, c] = m_c
                sc[t, s, c] = P_c
    filtered.gamma = gamma
    filtered.s_means = sm
    filtered.s_covs = sc
    return filtered


def _dec_ec_filter(params: SlgssmParams, v, condition_cT=False):
    """Decreasing counts, dependence case, collapsed to one Gaussian per
    sigma: every admissible cell mixes a within-segment component with
    fresh entries from every regime."""
    model = params.ed_model()
    dm = model.pmf()
    v = _as_obs(params, v)
    T = v.shape[0]
    C = dm.d_max if not condition_cT else min(dm.d_max, T)
    S, H = params.n_regimes, params.dim_h
    rho = dm.full_rho()[:, :C]
    trho = dm.full_tilde_rho()[:, :C]
    supp = (np.arange(1, C + 1) >= dm.d_min).astype(float)
    rho_supp = rho * supp[None, :]
    mask = _dec_cap_mask(T, C, condition_cT)
    alpha = np.zeros((T, S, C))
    fm = np.zeros((T, S, C, H))
    fc = np.zeros((T, S, C, H, H))
    log_norms = np.empty(T)
    lls = np.empty(S)
    for s in range(S):
        m0, P0, ll = _correct_one(params, s, params.mu[s], params.Sigma[s], v[0])
        fm[0, s] = m0
        fc[0, s] = P0
        lls[s] = ll
    shift = lls.max()
    a0 = params.chain.tilde_pi[:, None] * trho * np.exp(lls - shift)[:, None] * mask[0][None, :]
    z = a0.sum()
    if z <= 0:
        raise FloatingPointError("initial mass vanished")
    alpha[0] = a0 / z
    log_norms[0] = np.log(z) + shift
    for t in range(1, T):
        masses = np.zeros((S, C))
        for s in range(S):
            # within-segment components from (s, c+1)
            mp, Pp = params.dynamics[s].bank_predict(fm[t - 1, s, 1:], fc[t - 1, s, 1:])
            mc, Pc, ll_c = bank_correct(mp, Pp, params.B[s], params.Sigma_V[s], v[t])
            # fresh components from every (s', 1) under this regime's dynamics
            mp2, Pp2 = params.dynamics[s].bank_predict(fm[t - 1, :, 0], fc[t - 1, :, 0])
            mf2, Pf2, ll_f = bank_correct(mp2, Pp2, params.B[s], params.Sigma_V[s], v[t])
            shift = max(ll_c.max(initial=NEG_INF), ll_f.max(initial=NEG_INF))
            cont_mass = np.zeros(C)
            cont_mass[: C - 1] = alpha[t - 1, s, 1:] * np.exp(ll_c - shift)
            fresh_w = params.chain.pi[s] * alpha[t - 1, :, 0] * np.exp(ll_f - shift)
            fresh_total = fresh_w.sum()
            for c in range(C):
                if not mask[t, c]:
                    continue
                w_cont = cont_mass[c]
                w_fresh = rho_supp[s, c] * fresh_total
                total = w_cont + w_fresh
                masses[s, c] = total
                if total <= 0:
                    continue
                comps_w = [w_cont] if w_cont > 0 else []
                comps_m = [mc[c]] if w_cont > 0 else []
                comps_P = [Pc[c]] if w_cont > 0 else []
                if w_fresh > 0:
                    keep = fresh_w > 0
                    comps_w.extend(rho_supp[s, c] * fresh_w[keep])
                    comps_m.extend(mf2[keep])
                    comps_P.extend(Pf2[keep])
                m_c, P_c = collapse(np.asarray(comps_w), np.asarray(comps_m), np.asarray(comps_P))
                fm[t, s, c] = m_c
                fc[t, s, c] = P_c
            log_norms[t] = 0.0  # set after normalization below
        z = masses.sum()
        if z <= 0:
            raise FloatingPointError(f"filtered mass vanished at t={t}")
        alpha[t] = masses / z
        log_norms[t] = np.log(z) + shift
    return EcPosterior(
        params=params, encoding="dec", alpha=alpha, f_means=fm, f_covs=fc,
        log_norms=log_norms, loglik=float(log_norms.sum()),
    )


def _dec_ec_smooth(params: SlgssmParams, filtered: EcPosterior, v, condition_cT=False):
    """Expectation-corrected smoothing for decreasing counts: both the
    sigma weights and the conditional means substitute the smoothed point
    of the next step."""
    if filtered is None:
        filtered = _dec_ec_filter(params, v, condition_cT=condition_cT)
    model = params.ed_model()
    dm = model.pmf()
    alpha, fm, fc = filtered.alpha, filtered.f_means, filtered.f_covs
    T, S, C = alpha.shape
    rho = dm.full_rho()[:, :C]
    supp = (np.arange(1, C + 1) >= dm.d_min).astype(float)
    rho_supp = rho * supp[None, :]
    gamma = np.zeros_like(alpha)
    sm = np.zeros_like(fm)
    sc = np.zeros_like(fc)
    if condition_cT:
        gT = np.zeros((S, C))
        gT[:, 0] = alpha[T - 1, :, 0]
        gamma[T - 1] = gT / gT.sum()
    else:
        gamma[T - 1] = alpha[T - 1]
    sm[T - 1] = fm[T - 1]
    sc[T - 1] = fc[T - 1]
    for t in range(T - 2, -1, -1):
        # entry split of each next-step cell, with point substitution
        w_cont = np.zeros((S, C))    # share of (s, c') explained by countdown
        w_fresh = np.zeros((S, S, C))  # [s_t, s_{t+1}, c'] fresh split
        for sp in range(S):
            for cp in range(C):
                if gamma[t + 1, sp, cp] <= 0:
                    continue
                target = sm[t + 1, sp, cp]
                dens_cont = 0.0
                if cp + 1 < C and alpha[t, sp, cp + 1] > 0:
                    mp, Pp, _ = params.dynamics[sp].predict(fm[t, sp, cp + 1], fc[t, sp, cp + 1])
                    dens_cont = alpha[t, sp, cp + 1] * np.exp(gaussian_logpdf(target, mp, Pp))
                dens_fresh = np.zeros(S)
                if rho_supp[sp, cp] > 0:
                    for s in range(S):
                        w = params.chain.pi[sp, s] * alpha[t, s, 0]
                        if w <= 0:
                            continue
                        mp, Pp, _ = params.dynamics[sp].predict(fm[t, s, 0], fc[t, s, 0])
                        dens_fresh[s] = w * np.exp(gaussian_logpdf(target, mp, Pp))
                    dens_fresh *= rho_supp[sp, cp]
                total = dens_cont + dens_fresh.sum()
                if total <= 0:
                    continue
                w_cont[sp, cp] = dens_cont / total
                w_fresh[:, sp, cp] = dens_fresh / total
        g = np.zeros((S, C))
        g[:, 1:] = gamma[t + 1][:, : C - 1] * w_cont[:, : C - 1]
        g[:, 0] = np.einsum("spc,pc->s", w_fresh, gamma[t + 1])
        gamma[t] = g
        for s in range(S):
            for c in range(C):
                if gamma[t, s, c] <= 0:
                    sm[t, s, c] = fm[t, s, c]
                    sc[t, s, c] = fc[t, s, c]
                    continue
                if c > 0:
                    m_, P_ = smooth_step(
                        params.dynamics[s], fm[t, s, c], fc[t, s, c],
                        sm[t + 1, s, c - 1], sc[t + 1, s, c - 1],
                    )
                    sm[t, s, c] = m_
                    sc[t, s, c] = P_
                else:
                    comps_w, comps_m, comps_P = [], [], []
                    for sp in range(S):
                        for cp in range(C):
                            w = w_fresh[s, sp, cp] * gamma[t + 1, sp, cp]
                            if w <= 0:
                                continue
                            m_, P_ = smooth_step(
                                params.dynamics[sp], fm[t, s, 0], fc[t, s, 0],
                                sm[t + 1, sp, cp], sc[t + 1, sp, cp],
                            )
                            comps_w.append(w)
                            comps_m.append(m_)
                            comps_P.append(P_)
                    m_c, P_c = collapse(
                        np.asarray(comps_w), np.asarray(comps_m), np.asarray(comps_P)
                    )
                    sm[t, s, 0] = m_c
                    sc[t, s, 0] = P_c
    filtered.gamma = gamma
    filtered.s_means = sm
    filtered.s_covs = sc
    return filtered


# ---------------------------------------------------------------------------
# two-wheeled robot localization demo
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RobotParams:
    """Two-wheeled robot: pose (x, y, phi), straight/right/left moves."""

    L: float = 0.5                       # axle width
    k: float = 0.1                       # wheel travel per step
    process_std: tuple = (0.01, 0.01, 0.005)
    meas_std: float = 0.05
    dwell: float = 0.9                   # self-transition probability
    mu: tuple = (0.0, 0.0, 0.0)
    pose_std: tuple = (0.01, 0.01, 0.01)

    def __post_init__(self):
        if self.L <= 0 or self.k <= 0:
            raise ValueError("axle width and step size must be positive")


def robot_motion(L, k, move):
    """Pose update of one movement type; move in {straight, right, left}.

    Wheel travel is (k, k) straight, (2k, 0) right rotation, (0, 2k) left
    rotation; the chord correction r = sin(dphi/2)/(dphi/2) applies to
    rotations only.
    """
    dr, dl = {"straight": (k, k), "right": (2 * k, 0.0), "left": (0.0, 2 * k)}[move]
    dD = 0.5 * (dr + dl)
    dphi = (dr - dl) / L
    r = 1.0 if move == "straight" else np.sin(dphi / 2.0) / (dphi / 2.0)

    def f(h):
        x, y, phi = h
        return np.array([
            x + r * dD * np.cos(phi + dphi / 2.0),
            y + r * dD * np.sin(phi + dphi / 2.0),
            phi + dphi,
        ])

    return f


def build_robot_model(rp: RobotParams) -> SlgssmParams:
    """Three-regime switching model with nonlinear pose dynamics.

    The dwell time is geometric, so the augmented chain degenerates to a
    plain self-transition chain (point-mass duration of one step); the
    pose never resets, which is the across-segment-dependence case.
    """
    S = 3
    Sigma_H = np.diag(np.asarray(rp.process_std, dtype=float) ** 2)
    dynamics = tuple(
        UnscentedDynamics(robot_motion(rp.L, rp.k, move), Sigma_H)
        for move in ("straight", "right", "left")
    )
    B = np.tile(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]), (S, 1, 1))
    Sigma_V = np.tile(rp.meas_std**2 * np.eye(2), (S, 1, 1))
    mu = np.tile(np.asarray(rp.mu, dtype=float), (S, 1))
    Sigma = np.tile(np.diag(np.asarray(rp.pose_std, dtype=float) ** 2), (S, 1, 1))
    off = (1.0 - rp.dwell) / (S - 1)
    pi = np.full((S, S), off)
    np.fill_diagonal(pi, rp.dwell)
    chain = RegimeTransition(np.full(S, 1.0 / S), pi)
    duration = DurationModel(d_min=1, d_max=1, rho=np.ones((S, 1)))
    return SlgssmParams(
        dynamics=dynamics, B=B, Sigma_V=Sigma_V, mu=mu, Sigma=Sigma,
        chain=chain, duration=duration, encoding="inc", asi=False,
        collapse_policy="to1",
    )


def simulate_robot(rp: RobotParams, T, seed=None):
    """Sample (regimes, true poses, noisy position measurements)."""
    rng = make_rng(seed)
    params = build_robot_model(rp)
    s, _ = sample_chain("inc", params.chain, params.ed_model().hazard(), T, seed=rng)
    moves = [params.dynamics[i].f for i in range(3)]
    h = np.zeros((T, 3))
    proc = np.asarray(rp.process_std, dtype=float)
    pose = np.asarray(rp.mu, dtype=float) + np.asarray(rp.pose_std) * rng.standard_normal(3)
    for t in range(T):
        pose = moves[s[t]](pose) + proc * rng.standard_normal(3)
        h[t] = pose
    v = h[:, :2] + rp.meas_std * rng.standard_normal((T, 2))
    return s, h, v


def ml_chain_from_regimes(s, n_regimes, pseudo=1e-6):
    """Maximum-likelihood initial/transition estimates from a regime path."""
    s = np.asarray(s)
    tilde = np.full(n_regimes, pseudo)
    tilde[s[0]] += 1.0
    counts = np.full((n_regimes, n_regimes), pseudo)
    for a, b in zip(s[:-1], s[1:]):
        counts[b, a] += 1.0
    return RegimeTransition(tilde / tilde.sum(), counts / counts.sum(axis=0, keepdims=True))


def fit_lgssm_given_states(h, v):
    """Closed-form ML state-space fit when the hidden path is available.

    Least squares for the dynamics and emission maps, residual covariances
    for the noises, sample moments for the initial state.
    """
    h = np.atleast_2d(np.asarray(h, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    A = np.linalg.lstsq(h[:-1], h[1:], rcond=None)[0].T
    resid_h = h[1:] - h[:-1] @ A.T
    Sigma_H = resid_h.T @ resid_h / max(len(resid_h), 1)
    B = np.linalg.lstsq(h, v, rcond=None)[0].T
    resid_v = v - h @ B.T
    Sigma_V = resid_v.T @ resid_v / len(v)
    return A, Sigma_H, B, Sigma_V
