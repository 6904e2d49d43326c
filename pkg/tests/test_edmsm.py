import numpy as np
import pytest

from edms import oracle
from edms.chains import (
    CD,
    DEC,
    INC,
    DurationModel,
    HazardModel,
    RegimeTransition,
    duration_to_hazard,
    geometric_pmf,
    point_mass_pmf,
    sample_chain,
    uniform_switch_transition,
)
from edms.edmsm import (
    EdModel,
    GaussianSegmentMeanEmission,
    MarkovSegmentEmission,
    boundary_pairwise_dec,
    cd_em_update,
    cd_forward_backward,
    cd_smooth_sequential,
    cd_viterbi,
    dec_forward_backward,
    dec_smooth_sequential,
    dec_viterbi,
    inc_forward_backward,
    inc_smooth_sequential,
    inc_viterbi,
    learn_duration_dec,
    rabiner_updates,
)
from edms.hmm import (
    GaussianLocEmission,
    SarmEmission,
    SarmParams,
    TabularEmission,
    emission_log_table,
    filter_sequential,
)


def random_chain(rng, S, zero_diag=False):
    pi = rng.dirichlet(np.ones(S), size=S).T
    if zero_diag and S > 1:
        np.fill_diagonal(pi, 0.0)
        pi = pi / pi.sum(axis=0, keepdims=True)
    return RegimeTransition(rng.dirichlet(np.ones(S)), pi, zero_diag=zero_diag)


def random_model(rng, S, d_min, d_max):
    rho = rng.dirichlet(np.ones(d_max - d_min + 1), size=S)
    dm = DurationModel(d_min=d_min, d_max=d_max, rho=rho)
    return EdModel(random_chain(rng, S), dm)


def random_instance(rng, allow_dmin=True):
    S = int(rng.integers(1, 3))
    d_min = int(rng.integers(1, 3)) if allow_dmin else 1
    d_max = d_min + int(rng.integers(0, 3))
    T = int(rng.integers(2, 7))
    model = random_model(rng, S, d_min, d_max)
    emitter = TabularEmission(rng.dirichlet(np.ones(3), size=S))
    v = rng.integers(0, 3, size=T)
    return model, emitter, v, T


def dec_dicts_to_array(dicts, S, C):
    out = np.zeros((len(dicts), S, C))
    for t, d in enumerate(dicts):
        for state, p in d.items():
            out[t, state.s, state.c - 1] = p
    return out


class TestDecExact:
    @pytest.mark.parametrize("condition_cT", [False, True])
    def test_matches_enumeration(self, condition_cT):
        rng = np.random.default_rng(0)
        for _ in range(25):
            model, emitter, v, T = random_instance(rng)
            loge = emission_log_table(emitter, v)
            step = oracle.markov_step_loglik(loge)
            filt, smoo, ll = oracle.enumerate_posterior(
                DEC, model.chain, model.duration, T, step, condition_cT=condition_cT
            )
            if ll == -np.inf:  # conditioning admits no segmentation
                with pytest.raises(FloatingPointError):
                    dec_forward_backward(model, emitter, v, condition_cT=condition_cT)
                continue
            par = dec_forward_backward(model, emitter, v, condition_cT=condition_cT)
            seq = dec_smooth_sequential(model, emitter, v, condition_cT=condition_cT)
            C = par.alpha.shape[2]
            smoo_ref = dec_dicts_to_array(smoo, model.n_regimes, C)
            np.testing.assert_allclose(par.gamma, smoo_ref, atol=1e-10)
            np.testing.assert_allclose(seq.gamma, smoo_ref, atol=1e-10)
            assert abs(par.loglik - ll) < 1e-9
            assert abs(seq.loglik - ll) < 1e-9
            if not condition_cT:
                filt_ref = dec_dicts_to_array(filt, model.n_regimes, C)
                np.testing.assert_allclose(par.alpha, filt_ref, atol=1e-10)
                np.testing.assert_allclose(seq.alpha, filt_ref, atol=1e-10)

    def test_asi_cut_matches_enumeration(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            S = int(rng.integers(1, 3))
            model = random_model(rng, S, 1, int(rng.integers(1, 4)))
            params = SarmParams(
                k=1, a=rng.uniform(-0.9, 0.9, size=(S, 1)),
                sigma=rng.uniform(0.5, 1.5, size=S), chain=model.chain,
            )
            emitter = SarmEmission(params)
            T = int(rng.integers(2, 6))
            v = rng.standard_normal(T)
            step = oracle.asi_step_loglik(emitter, v, DEC)
            _, smoo, ll = oracle.enumerate_posterior(DEC, model.chain, model.duration, T, step)
            seq = dec_smooth_sequential(model, emitter, v, asi_cut=True)
            C = seq.alpha.shape[2]
            np.testing.assert_allclose(
                seq.gamma, dec_dicts_to_array(smoo, S, C), atol=1e-10
            )
            assert abs(seq.loglik - ll) < 1e-9

    def test_asi_cut_rejected_for_higher_order(self):
        rng = np.random.default_rng(2)
        model = random_model(rng, 2, 1, 2)
        params = SarmParams(k=2, a=[[0.5, 0.1], [0.2, -0.1]], sigma=[1.0, 1.0], chain=model.chain)
        with pytest.raises(ValueError):
            dec_smooth_sequential(model, SarmEmission(params), np.zeros(5), asi_cut=True)

    def test_marginals_normalized(self):
        rng = np.random.default_rng(3)
        model, emitter, v, T = random_instance(rng)
        post = dec_smooth_sequential(model, emitter, v)
        np.testing.assert_allclose(post.gamma.sum(axis=(1, 2)), 1.0, atol=1e-9)
        np.testing.assert_allclose(post.alpha.sum(axis=(1, 2)), 1.0, atol=1e-9)

    def test_unbounded_requires_conditioning(self):
        hm = HazardModel(d_min=1, d_max=None, lam=[[0.7]], tail=[0.7])
        model = EdModel(RegimeTransition([1.0], [[1.0]]), hm)
        emitter = GaussianLocEmission([0.0], [1.0])
        with pytest.raises(ValueError):
            dec_forward_backward(model, emitter, np.zeros(4), condition_cT=False)
        post = dec_forward_backward(model, emitter, np.zeros(4), condition_cT=True)
        np.testing.assert_allclose(post.gamma.sum(axis=(1, 2)), 1.0, atol=1e-9)


class TestIncExact:
    @pytest.mark.parametrize("asi", [False, True])
    def test_matches_enumeration(self, asi):
        rng = np.random.default_rng(4)
        for _ in range(25):
            S = int(rng.integers(1, 3))
            d_min = int(rng.integers(1, 3))
            d_max = d_min + int(rng.integers(0, 3))
            model_pmf = random_model(rng, S, d_min, d_max)
            hm = duration_to_hazard(model_pmf.duration)
            model = EdModel(model_pmf.chain, hm)
            T = int(rng.integers(2, 7))
            if asi:
                params = SarmParams(
                    k=1, a=rng.uniform(-0.9, 0.9, size=(S, 1)),
                    sigma=rng.uniform(0.5, 1.5, size=S), chain=model.chain,
                )
                emitter = SarmEmission(params)
                v = rng.standard_normal(T)
                step = oracle.asi_step_loglik(emitter, v, INC)
            else:
                emitter = TabularEmission(rng.dirichlet(np.ones(3), size=S))
                v = rng.integers(0, 3, size=T)
                step = oracle.markov_step_loglik(emission_log_table(emitter, v))
            filt, smoo, ll = oracle.enumerate_posterior(INC, model.chain, hm, T, step)
            par = inc_forward_backward(model, emitter, v, asi=asi)
            seq = inc_smooth_sequential(model, emitter, v, asi=asi)
            C = par.alpha.shape[2]
            smoo_ref = dec_dicts_to_array(smoo, S, C)
            filt_ref = dec_dicts_to_array(filt, S, C)
            np.testing.assert_allclose(par.gamma, smoo_ref, atol=1e-10)
            np.testing.assert_allclose(seq.gamma, smoo_ref, atol=1e-10)
            np.testing.assert_allclose(par.alpha, filt_ref, atol=1e-10)
            np.testing.assert_allclose(seq.alpha, filt_ref, atol=1e-10)
            assert abs(par.loglik - ll) < 1e-9
            assert abs(seq.loglik - ll) < 1e-9

    def test_zero_propagation(self):
        # killing alpha at (s, c) forces gamma = 0 on the whole forced ladder
        rng = np.random.default_rng(5)
        model_pmf = random_model(rng, 2, 1, 4)
        model = EdModel(model_pmf.chain, duration_to_hazard(model_pmf.duration))
        emitter = TabularEmission(rng.dirichlet(np.ones(3), size=2))
        v = rng.integers(0, 3, size=8)
        post = inc_smooth_sequential(model, emitter, v)
        t0, s0, c0 = 3, 0, 1
        alpha = post.alpha.copy()
        from edms.edmsm import _inc_gamma_seq, _inc_tables

        lam, _, C = _inc_tables(model, len(v))
        # a filtered zero forces zeros along the whole deterministic ladder,
        # exactly what pruned filtering produces; gamma must honour them
        ladder = [(t0 + j, c0 + j) for j in range(min(C - c0, len(v) - t0))]
        for t, c in ladder:
            alpha[t, s0, c] = 0.0
            alpha[t] /= alpha[t].sum()
        gamma = _inc_gamma_seq(alpha, model.chain, lam)
        for t, c in ladder:
            assert gamma[t, s0, c] == 0.0

    def test_unbounded_geometric_hazard_runs(self):
        hm = HazardModel(d_min=1, d_max=None, lam=[[0.8], [0.6]], tail=[0.8, 0.6])
        model = EdModel(uniform_switch_transition(2), hm)
        emitter = GaussianLocEmission([-1.0, 1.0], [1.0, 1.0])
        v = np.random.default_rng(6).standard_normal(20)
        post = inc_smooth_sequential(model, emitter, v)
        np.testing.assert_allclose(post.gamma.sum(axis=(1, 2)), 1.0, atol=1e-9)
        # counts cannot exceed the time index when segments start at t = 1
        for t in range(20):
            assert post.alpha[t, :, t + 1 :].sum() == 0.0


class TestCrossEncoding:
    def test_geometric_duration_agrees_dec_vs_inc(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            S = 2
            chain = random_chain(rng, S, zero_diag=True)
            d_max = 6
            rho = np.stack([geometric_pmf(p, 1, d_max) for p in rng.uniform(0.3, 0.7, S)])
            dm = DurationModel(d_min=1, d_max=d_max, rho=rho)
            emitter = TabularEmission(rng.dirichlet(np.ones(3), size=S))
            v = rng.integers(0, 3, size=8)
            dec = dec_forward_backward(EdModel(chain, dm), emitter, v)
            inc = inc_forward_backward(EdModel(chain, duration_to_hazard(dm)), emitter, v)
            np.testing.assert_allclose(dec.regime_gamma(), inc.regime_gamma(), atol=1e-10)
            assert abs(dec.loglik - inc.loglik) < 1e-9

    def test_all_encodings_share_regime_marginals(self):
        rng = np.random.default_rng(8)
        for _ in range(5):
            model, emitter, v, T = random_instance(rng)
            dec = dec_forward_backward(model, emitter, v)
            inc = inc_forward_backward(EdModel(model.chain, duration_to_hazard(model.duration)), emitter, v)
            seg = MarkovSegmentEmission(emitter, v)
            cd = cd_forward_backward(model, seg, T, condition_cT=False)
            np.testing.assert_allclose(dec.regime_gamma(), inc.regime_gamma(), atol=1e-10)
            np.testing.assert_allclose(dec.regime_gamma(), cd.regime_marginals(), atol=1e-10)


class TestViterbi:
    def test_dec_matches_enumeration(self):
        rng = np.random.default_rng(9)
        for _ in range(15):
            model, emitter, v, T = random_instance(rng)
            loge = emission_log_table(emitter, v)
            step = oracle.markov_step_loglik(loge)
            _, best = oracle.enumerate_map(DEC, model.chain, model.duration, T, step)
            s, c, got = dec_viterbi(model, emitter, v)
            assert abs(got - best) < 1e-10

    def test_inc_matches_enumeration(self):
        rng = np.random.default_rng(10)
        for _ in range(15):
            model, emitter, v, T = random_instance(rng)
            hm = duration_to_hazard(model.duration)
            loge = emission_log_table(emitter, v)
            step = oracle.markov_step_loglik(loge)
            _, best = oracle.enumerate_map(INC, model.chain, hm, T, step)
            s, c, got = inc_viterbi(EdModel(model.chain, hm), emitter, v)
            assert abs(got - best) < 1e-10

    def test_cd_matches_enumeration_under_conditioning(self):
        rng = np.random.default_rng(11)
        for _ in range(15):
            model, emitter, v, T = random_instance(rng)
            loge = emission_log_table(emitter, v)
            step = oracle.markov_step_loglik(loge)
            _, best = oracle.enumerate_map(
                CD, model.chain, model.duration, T, step, condition_cT=True
            )
            out = cd_viterbi(model, MarkovSegmentEmission(emitter, v), T)
            if best == -np.inf:
                assert out is None
                continue
            s, d, c, got = out
            assert abs(got - best) < 1e-10
            assert c[-1] == 1

    def test_point_mass_duration_gives_fixed_grid(self):
        chain = uniform_switch_transition(2)
        dm = DurationModel(d_min=3, d_max=3, rho=[[1.0], [1.0]])
        emitter = TabularEmission([[0.9, 0.1], [0.1, 0.9]])
        v = np.array([0, 0, 0, 1, 1, 1, 0, 0, 0])
        model = EdModel(chain, dm)
        s, c, _ = dec_viterbi(model, emitter, v)
        assert list(c) == [3, 2, 1] * 3
        assert list(s) == [0, 0, 0, 1, 1, 1, 0, 0, 0]
        s2, d2, c2, _ = cd_viterbi(model, MarkovSegmentEmission(emitter, v), 9)
        np.testing.assert_array_equal(s2, s)

    def test_dec_inc_agree_on_decoded_regimes(self):
        # the encodings price the trailing partial segment differently
        # (full duration factor vs survival mass), so only the decoded
        # regimes are comparable, and only when the signal dominates
        rng = np.random.default_rng(12)
        for trial in range(8):
            S = 2
            chain = uniform_switch_transition(S)
            rho = rng.dirichlet(np.ones(3), size=S)
            dm = DurationModel(d_min=2, d_max=4, rho=rho)
            emitter = GaussianLocEmission([-3.0, 3.0], [0.5, 0.5])
            s_true, c_true = sample_chain(DEC, chain, dm, T=12, seed=100 + trial)
            v = np.array([(-3.0, 3.0)[s] for s in s_true]) + 0.3 * rng.standard_normal(12)
            s1, _, _ = dec_viterbi(EdModel(chain, dm), emitter, v)
            s2, _, _ = inc_viterbi(EdModel(chain, duration_to_hazard(dm)), emitter, v)
            np.testing.assert_array_equal(s1, s2)


class TestCdSegmental:
    def test_matches_enumeration_conditioned(self):
        rng = np.random.default_rng(13)
        for _ in range(15):
            model, emitter, v, T = random_instance(rng)
            loge = emission_log_table(emitter, v)
            step = oracle.markov_step_loglik(loge)
            _, smoo, ll = oracle.enumerate_posterior(
                CD, model.chain, model.duration, T, step, condition_cT=True
            )
            mass = sum(smoo[-1].values())
            if mass < 0.5:  # conditioning removed every path
                continue
            tables = cd_forward_backward(model, MarkovSegmentEmission(emitter, v), T, condition_cT=True)
            assert abs(tables.logZ - ll) < 1e-9
            dm = model.pmf()
            for t in range(1, T + 1):
                got = tables.smoothed_sigma(t)
                want = np.zeros_like(got)
                for state, p in smoo[t - 1].items():
                    want[state.s, state.d - dm.d_min, state.c - 1] = p
                np.testing.assert_allclose(got, want, atol=1e-10)

    def test_matches_enumeration_unconditioned(self):
        rng = np.random.default_rng(14)
        for _ in range(15):
            model, emitter, v, T = random_instance(rng)
            loge = emission_log_table(emitter, v)
            step = oracle.markov_step_loglik(loge)
            _, smoo, ll = oracle.enumerate_posterior(CD, model.chain, model.duration, T, step)
            tables = cd_forward_backward(model, MarkovSegmentEmission(emitter, v), T)
            assert abs(tables.logZ - ll) < 1e-9
            dm = model.pmf()
            for t in range(1, T + 1):
                got = tables.smoothed_sigma(t)
                want = np.zeros_like(got)
                for state, p in smoo[t - 1].items():
                    want[state.s, state.d - dm.d_min, state.c - 1] = p
                np.testing.assert_allclose(got, want, atol=1e-10)

    def test_sequential_sweep_matches_parallel(self):
        rng = np.random.default_rng(15)
        for _ in range(10):
            model, emitter, v, T = random_instance(rng)
            tables = cd_forward_backward(model, MarkovSegmentEmission(emitter, v), T, condition_cT=True)
            if not np.isfinite(tables.logZ):
                continue
            g_par = tables.gamma1()
            g_seq = cd_smooth_sequential(tables, model)
            np.testing.assert_allclose(g_seq, g_par[: tables.T], atol=1e-10)

    def test_segment_mean_emission_matches_enumeration(self):
        # non-Markovian within-segment dependence, priced pathwise by the
        # oracle through the same cumulative segment table
        rng = np.random.default_rng(16)
        for _ in range(6):
            S = int(rng.integers(1, 3))
            model = random_model(rng, S, 1, 3)
            T = int(rng.integers(3, 6))
            v = rng.standard_normal(T) * 2.0
            seg = GaussianSegmentMeanEmission(
                v, m=rng.normal(size=S), tau=rng.uniform(0.5, 2.0, S), sigma=rng.uniform(0.3, 1.0, S)
            )
            cum = seg.table(T, model.d_max)

            def step(t, state, history):
                j = state.d - state.c
                start = t - j
                prev = cum[state.s, start, j - 1] if j > 0 else 0.0
                return cum[state.s, start, j] - prev

            _, smoo, ll = oracle.enumerate_posterior(CD, model.chain, model.duration, T, step)
            tables = cd_forward_backward(model, seg, T)
            assert abs(tables.logZ - ll) < 1e-9
            marg = tables.regime_marginals()
            want = np.zeros_like(marg)
            for t in range(T):
                for state, p in smoo[t].items():
                    want[t, state.s] += p
            np.testing.assert_allclose(marg, want, atol=1e-10)


class TestDurationLearning:
    def test_point_mass_fixpoint(self):
        # one full segment of length 3: the pmf converges onto d = 3
        chain = RegimeTransition([1.0], [[1.0]])
        dm = DurationModel(d_min=1, d_max=4, rho=[[0.25, 0.25, 0.25, 0.25]])
        emitter = GaussianLocEmission([0.0], [1.0])
        v = np.zeros(3)
        model = EdModel(chain, dm)
        rho = dm.rho
        for _ in range(200):
            model = EdModel(chain, DurationModel(d_min=1, d_max=4, rho=rho, tilde_rho=rho))
            post = dec_smooth_sequential(model, emitter, v, condition_cT=True)
            rho, _ = learn_duration_dec(post, model, tie_initial=True)
        assert rho[0, 2] > 0.999

    def test_symmetric_two_duration_mixture(self):
        # boundaries are visible through the regime means, so the duration
        # posterior concentrates and EM recovers the 50/50 mixture
        rng = np.random.default_rng(17)
        chain = uniform_switch_transition(2)
        true = DurationModel(d_min=2, d_max=3, rho=[[0.5, 0.5], [0.5, 0.5]])
        T = 8000
        s, c = sample_chain(DEC, chain, true, T=T, seed=17)
        v = np.where(s == 0, -3.0, 3.0) + 0.3 * rng.standard_normal(T)
        emitter = GaussianLocEmission([-3.0, 3.0], [0.3, 0.3])
        rho = np.array([[0.7, 0.3], [0.7, 0.3]])
        for _ in range(8):
            model = EdModel(chain, DurationModel(d_min=2, d_max=3, rho=rho))
            post = dec_smooth_sequential(model, emitter, v)
            rho, _ = learn_duration_dec(post, model)
        np.testing.assert_allclose(rho, 0.5, atol=0.02)

    def test_update_preserves_support(self):
        rng = np.random.default_rng(18)
        model, emitter, v, T = random_instance(rng)
        post = dec_smooth_sequential(model, emitter, v)
        rho, tilde = learn_duration_dec(post, model)
        assert rho.shape == model.pmf().rho.shape
        np.testing.assert_allclose(rho.sum(axis=1), 1.0, atol=1e-9)

    def test_duration_em_increases_loglik(self):
        rng = np.random.default_rng(19)
        chain = uniform_switch_transition(2)
        true = DurationModel(d_min=1, d_max=5, rho=[point_mass_pmf(4, 1, 5), point_mass_pmf(2, 1, 5)])
        emitter = GaussianLocEmission([-1.5, 1.5], [1.0, 1.0])
        s, c = sample_chain(DEC, chain, true, T=300, seed=20)
        v = np.array([emitter.mu[x] for x in s]) + rng.standard_normal(300)
        rho = np.full((2, 5), 0.2)
        lls = []
        for _ in range(15):
            model = EdModel(chain, DurationModel(d_min=1, d_max=5, rho=rho))
            post = dec_smooth_sequential(model, emitter, v)
            lls.append(post.loglik)
            rho, _ = learn_duration_dec(post, model)
        diffs = np.diff(lls)
        assert np.all(diffs >= -1e-9 * np.maximum(1.0, np.abs(np.array(lls[:-1]))))


class TestCdLearning:
    def test_cd_updates_match_rabiner_assembly(self):
        rng = np.random.default_rng(21)
        for _ in range(8):
            S = int(rng.integers(1, 3))
            model = random_model(rng, S, 1, 3)
            T = int(rng.integers(4, 8))
            emitter = TabularEmission(rng.dirichlet(np.ones(3), size=S))
            v = rng.integers(0, 3, size=T)
            tables = cd_forward_backward(model, MarkovSegmentEmission(emitter, v), T)
            rho_cd, _, pi_cd, _ = cd_em_update(tables, model)
            rho_rb, pi_rb, marg_rb = rabiner_updates(tables, model)
            np.testing.assert_allclose(rho_cd, rho_rb, atol=1e-10)
            np.testing.assert_allclose(pi_cd, pi_rb, atol=1e-10)
            # subtraction form of the regime marginal equals the covering sum
            marg = tables.regime_marginals()
            np.testing.assert_allclose(marg_rb, marg, atol=1e-10)

    def test_updates_are_stochastic(self):
        rng = np.random.default_rng(22)
        model = random_model(rng, 2, 1, 3)
        emitter = TabularEmission(rng.dirichlet(np.ones(3), size=2))
        v = rng.integers(0, 3, size=8)
        tables = cd_forward_backward(model, MarkovSegmentEmission(emitter, v), 8)
        rho, tilde_rho, pi, tilde_pi = cd_em_update(tables, model)
        np.testing.assert_allclose(rho.sum(axis=1), 1.0, atol=1e-9)
        np.testing.assert_allclose(pi.sum(axis=0), 1.0, atol=1e-9)
        assert abs(tilde_pi.sum() - 1.0) < 1e-9


class TestHmmEquivalence:
    def test_dec_geometric_reduces_to_plain_chain(self):
        # self-transition chain <-> zero-diagonal chain + geometric pmf;
        # forward quantities factor as pi_ss^{c-1} alpha^{s,1}
        rng = np.random.default_rng(23)
        S = 3
        T = 25
        pi_hat = rng.dirichlet(np.full(S, 2.0), size=S).T
        pi_hat = 0.5 * pi_hat + 0.5 * np.eye(S)  # keep diagonals well below 1
        pi_hat /= pi_hat.sum(axis=0, keepdims=True)
        tilde = rng.dirichlet(np.ones(S))
        hat_chain = RegimeTransition(tilde, pi_hat)
        diag = np.diag(pi_hat)
        switch = pi_hat / (1.0 - diag)[None, :]
        np.fill_diagonal(switch, 0.0)
        switch /= switch.sum(axis=0, keepdims=True)
        D = 420  # truncation error ~ max(diag)^D, far below tolerance
        rho = np.stack([geometric_pmf(p, 1, D) for p in diag])
        model = EdModel(
            RegimeTransition(tilde, switch, zero_diag=True),
            DurationModel(d_min=1, d_max=D, rho=rho),
        )
        emitter = GaussianLocEmission(rng.normal(size=S), rng.uniform(0.5, 1.5, S))
        v = rng.standard_normal(T)
        post = dec_forward_backward(model, emitter, v)
        la = post.log_alpha_bar
        # induction identity on the augmented forward pass
        for t in range(T):
            cap = min(30, la.shape[2] - 1)
            for s in range(S):
                want = la[t, s, 0] + np.arange(cap) * np.log(diag[s])
                np.testing.assert_allclose(la[t, s, :cap], want, atol=1e-10)
        # summed counts give the plain-chain forward quantities
        alpha_hat, log_norms = filter_sequential(emitter, hat_chain, v)
        np.testing.assert_allclose(post.regime_alpha(), alpha_hat, atol=1e-10)
        hmm_ll = float(log_norms.sum())
        assert abs(post.loglik - hmm_ll) < 1e-8

    def test_inc_constant_hazard_matches_hmm_filter(self):
        rng = np.random.default_rng(24)
        S = 3
        T = 50
        pi_hat = rng.dirichlet(np.full(S, 2.0), size=S).T
        pi_hat = 0.6 * pi_hat + 0.4 * np.eye(S)
        pi_hat /= pi_hat.sum(axis=0, keepdims=True)
        tilde = rng.dirichlet(np.ones(S))
        diag = np.diag(pi_hat)
        switch = pi_hat / (1.0 - diag)[None, :]
        np.fill_diagonal(switch, 0.0)
        switch /= switch.sum(axis=0, keepdims=True)
        hm = HazardModel(d_min=1, d_max=None, lam=diag[:, None], tail=diag)
        model = EdModel(RegimeTransition(tilde, switch, zero_diag=True), hm)
        emitter = GaussianLocEmission(rng.normal(size=S), rng.uniform(0.5, 1.5, S))
        v = rng.standard_normal(T)
        post = inc_smooth_sequential(model, emitter, v)
        alpha_hat, log_norms = filter_sequential(emitter, RegimeTransition(tilde, pi_hat), v)
        np.testing.assert_allclose(post.regime_alpha(), alpha_hat, atol=1e-10)
        assert abs(post.loglik - float(log_norms.sum())) < 1e-8
