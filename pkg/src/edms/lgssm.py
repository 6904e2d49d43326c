"""Linear Gaussian state-space model: filtering, smoothing, likelihoods.

Predictor-corrector filtering with Joseph-form covariance updates,
Rauch-Tung-Striebel smoothing, innovation log-likelihoods (the running
product that prices a data segment incrementally), moment-matched
collapsing of Gaussian mixtures, and the unscented transform for
nonlinear dynamics.  All solves go through Cholesky with an escalating
jitter ladder; covariances are symmetrized after every update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

LOG2PI = np.log(2.0 * np.pi)
JITTERS = (0.0, 1e-10, 1e-6)


def _sym(P):
    return 0.5 * (P + P.T)


def _chol(P):
    for j in JITTERS:
        try:
            return cho_factor(P + j * np.eye(P.shape[0]), lower=True)
        except np.linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError("matrix not positive definite after jitter ladder")


@dataclass(frozen=True)
class LgssmParams:
    """h_t = A h_{t-1} + N(0, Sigma_H); v_t = B h_t + N(0, Sigma_V);
    h_1 ~ N(mu, Sigma)."""

    A: np.ndarray
    Sigma_H: np.ndarray
    B: np.ndarray
    Sigma_V: np.ndarray
    mu: np.ndarray
    Sigma: np.ndarray

    def __post_init__(self):
        for name in ("A", "Sigma_H", "B", "Sigma_V", "mu", "Sigma"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
                               if name != "mu" else np.atleast_1d(np.asarray(self.mu, dtype=float)))
        for name in ("Sigma_H", "Sigma_V", "Sigma"):
            M = getattr(self, name)
            if not np.allclose(M, M.T, atol=1e-10):
                raise ValueError(f"{name} must be symmetric")
            _chol(M)  # PSD up to jitter

    @property
    def dim_h(self):
        return self.A.shape[0]

    @property
    def dim_v(self):
        return self.B.shape[0]


@dataclass
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.cov = _sym(np.atleast_2d(np.asarray(self.cov, dtype=float)))


@dataclass
class GaussianMixtureBelief:
    """Weighted Gaussian components; labels track segment bookkeeping."""

    weights: np.ndarray
    means: np.ndarray   # (N, H)
    covs: np.ndarray    # (N, H, H)
    labels: np.ndarray = None

    def __post_init__(self):
        self.weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must sum to 1")

    @property
    def n_components(self):
        return len(self.weights)

    def mean(self):
        return self.weights @ self.means

    def moments(self):
        return collapse(self.weights, self.means, self.covs)


def collapse(weights, means, covs):
    """Moment-matched single Gaussian of a mixture.

    Mean is the weighted mean; covariance the weighted second moment
    minus the outer product of the mean.
    """
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if total <= 0:
        raise ValueError("cannot collapse a mixture with zero total weight")
    w = weights / total
    means = np.asarray(means, dtype=float)
    covs = np.asarray(covs, dtype=float)
    m = w @ means
    diff = means - m[None, :]
    P = np.einsum("n,nij->ij", w, covs) + np.einsum("n,ni,nj->ij", w, diff, diff)
    return m, _sym(P)


def gaussian_logpdf(x, mean, cov):
    x = np.atleast_1d(x)
    d = x - np.atleast_1d(mean)
    c, low = _chol(np.atleast_2d(cov))
    sol = cho_solve((c, low), d)
    logdet = 2.0 * np.log(np.diag(c)).sum()
    return float(-0.5 * (d @ sol + logdet + len(d) * LOG2PI))


# ---------------------------------------------------------------------------
# single-track filtering and smoothing
# ---------------------------------------------------------------------------

def predict(belief: GaussianBelief, A, Sigma_H):
    """One dynamics step; returns the predicted belief and Cov(h_t, h_{t+1})."""
    cross = belief.cov @ A.T
    return GaussianBelief(A @ belief.mean, A @ belief.cov @ A.T + Sigma_H), cross


def correct(belief: GaussianBelief, B, Sigma_V, v):
    """Condition a predicted belief on one observation (Joseph form).

    Returns the corrected belief and the innovation log density.
    """
    v = np.atleast_1d(v)
    Sv = B @ belief.cov @ B.T + Sigma_V
    c, low = _chol(Sv)
    K = cho_solve((c, low), B @ belief.cov).T
    innov = v - B @ belief.mean
    mean = belief.mean + K @ innov
    IKB = np.eye(len(belief.mean)) - K @ B
    cov = IKB @ belief.cov @ IKB.T + K @ Sigma_V @ K.T
    logdet = 2.0 * np.log(np.diag(c)).sum()
    loglik = float(-0.5 * (innov @ cho_solve((c, low), innov) + logdet + len(v) * LOG2PI))
    return GaussianBelief(mean, _sym(cov)), loglik


@dataclass
class FilterResult:
    means: np.ndarray        # filtered means, (T, H)
    covs: np.ndarray         # filtered covariances, (T, H, H)
    pred_means: np.ndarray   # one-step predictions (prior at t = 0)
    pred_covs: np.ndarray
    step_logliks: np.ndarray

    @property
    def loglik(self):
        return float(self.step_logliks.sum())


def kalman_filter(params: LgssmParams, v) -> FilterResult:
    """Predictor-corrector pass; the t = 1 prediction is the prior."""
    v = np.atleast_2d(np.asarray(v, dtype=float))
    if v.ndim == 2 and v.shape[1] != params.dim_v:
        v = v.reshape(-1, params.dim_v)
    T = v.shape[0]
    H = params.dim_h
    out = FilterResult(
        means=np.empty((T, H)), covs=np.empty((T, H, H)),
        pred_means=np.empty((T, H)), pred_covs=np.empty((T, H, H)),
        step_logliks=np.empty(T),
    )
    belief = GaussianBelief(params.mu, params.Sigma)
    for t in range(T):
        if t > 0:
            belief, _ = predict(belief, params.A, params.Sigma_H)
        out.pred_means[t] = belief.mean
        out.pred_covs[t] = belief.cov
        belief, ll = correct(belief, params.B, params.Sigma_V, v[t])
        out.means[t] = belief.mean
        out.covs[t] = belief.cov
        out.step_logliks[t] = ll
    return out


def rts_smooth(params: LgssmParams, filtered: FilterResult):
    """Backward Rauch-Tung-Striebel pass over a filter result."""
    T, H = filtered.means.shape
    means = filtered.means.copy()
    covs = filtered.covs.copy()
    for t in range(T - 2, -1, -1):
        G = rts_gain(filtered.covs[t], params.A, filtered.pred_covs[t + 1])
        means[t] = filtered.means[t] + G @ (means[t + 1] - filtered.pred_means[t + 1])
        covs[t] = _sym(filtered.covs[t] + G @ (covs[t + 1] - filtered.pred_covs[t + 1]) @ G.T)
    return means, covs


def rts_gain(P_filt, A, P_pred_next):
    c, low = _chol(P_pred_next)
    return cho_solve((c, low), A @ P_filt).T


def reverse_dynamics(P_filt, mean_filt, A, Sigma_H):
    """Coefficients of h_t = G h_{t+1} + m + noise given the filtered belief.

    G is the smoother gain; the residual covariance is P - G A P.  Used to
    push a smoothed next-step belief one step back.
    """
    P_pred = A @ P_filt @ A.T + Sigma_H
    G = rts_gain(P_filt, A, P_pred)
    m = mean_filt - G @ (A @ mean_filt)
    resid_cov = _sym(P_filt - G @ A @ P_filt)
    return G, m, resid_cov


def innovations_loglik(params: LgssmParams, v):
    """log p(v_{a:b}) of a fresh segment plus its per-step factors."""
    res = kalman_filter(params, v)
    return res.loglik, res.step_logliks


# ---------------------------------------------------------------------------
# batched (bank) operations over stacked beliefs
# ---------------------------------------------------------------------------

def bank_predict(means, covs, A, Sigma_H):
    """Vectorized predict over a stack of beliefs sharing one dynamics."""
    m = means @ A.T
    P = np.einsum("ij,njk,lk->nil", A, covs, A) + Sigma_H[None, :, :]
    return m, P


def bank_correct(means, covs, B, Sigma_V, v):
    """Vectorized correct; returns means, covs and innovation log densities."""
    v = np.atleast_1d(v)
    N, H = means.shape
    Vd = B.shape[0]
    Sv = np.einsum("ij,njk,lk->nil", B, covs, B) + Sigma_V[None, :, :]
    PBt = np.einsum("nij,kj->nik", covs, B)
    K = np.linalg.solve(Sv, np.swapaxes(PBt, 1, 2))
    K = np.swapaxes(K, 1, 2)  # (N, H, V)
    innov = v[None, :] - means @ B.T
    mean_new = means + np.einsum("nhv,nv->nh", K, innov)
    IKB = np.eye(H)[None, :, :] - np.einsum("nhv,vk->nhk", K, B)
    cov_new = np.einsum("nij,njk,nlk->nil", IKB, covs, IKB) + np.einsum(
        "nhv,vw,nkw->nhk", K, Sigma_V, K
    )
    cov_new = 0.5 * (cov_new + np.swapaxes(cov_new, 1, 2))
    sol = np.linalg.solve(Sv, innov[:, :, None])[:, :, 0]
    sign, logdet = np.linalg.slogdet(Sv)
    loglik = -0.5 * (np.einsum("nv,nv->n", innov, sol) + logdet + Vd * LOG2PI)
    return mean_new, cov_new, loglik


# ---------------------------------------------------------------------------
# unscented transform
# ---------------------------------------------------------------------------

def sigma_points(mean, cov, alpha=1.0, beta=0.0, kappa=None):
    """Scaled sigma points and weights; defaults reduce to the classical
    set with kappa = 3 - H (documented choice, configurable)."""
    mean = np.atleast_1d(mean)
    H = len(mean)
    if kappa is None:
        kappa = 3.0 - H
    lam = alpha**2 * (H + kappa) - H
    scale = H + lam
    c, low = _chol(np.atleast_2d(cov) * scale)
    L = np.tril(c) if low else np.triu(c).T
    points = np.empty((2 * H + 1, H))
    points[0] = mean
    for i in range(H):
        points[1 + i] = mean + L[:, i]
        points[1 + H + i] = mean - L[:, i]
    wm = np.full(2 * H + 1, 1.0 / (2.0 * scale))
    wm[0] = lam / scale
    wc = wm.copy()
    wc[0] += 1.0 - alpha**2 + beta
    return points, wm, wc


def unscented_propagate(f, belief: GaussianBelief, Sigma_H, alpha=1.0, beta=0.0, kappa=None):
    """Push a Gaussian belief through a nonlinear map, adding process noise.

    Returns the predicted belief and the input-output cross covariance
    (the quantity the smoother gain needs).
    """
    pts, wm, wc = sigma_points(belief.mean, belief.cov, alpha, beta, kappa)
    fp = np.array([f(p) for p in pts])
    if not np.all(np.isfinite(fp)):
        raise FloatingPointError("nonlinear map returned non-finite sigma points")
    m = wm @ fp
    dev = fp - m[None, :]
    dev_in = pts - belief.mean[None, :]
    P = np.einsum("n,ni,nj->ij", wc, dev, dev) + Sigma_H
    cross = np.einsum("n,ni,nj->ij", wc, dev_in, dev)
    return GaussianBelief(m, _sym(P)), cross
