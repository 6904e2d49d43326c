import numpy as np
import pytest

from edms import chains, oracle
from edms.chains import (
    CD,
    DEC,
    INC,
    CdState,
    DecState,
    DurationModel,
    HazardModel,
    IncState,
    RegimeTransition,
    boundary_segments,
    convert_duration_representation,
    duration_to_hazard,
    expanded_duration_pmf,
    geometric_pmf,
    hazard_to_duration,
    initial_states,
    negative_binomial_expansion,
    negative_binomial_pmf,
    point_mass_pmf,
    sample_chain,
    sample_plain_regimes,
    successor_states,
    transition_kernel,
    uniform_switch_transition,
)


def random_duration_model(rng, S, d_min, d_max):
    rho = rng.dirichlet(np.ones(d_max - d_min + 1), size=S)
    return DurationModel(d_min=d_min, d_max=d_max, rho=rho)


def random_chain(rng, S, zero_diag=False):
    pi = rng.dirichlet(np.ones(S), size=S).T
    if zero_diag and S > 1:
        np.fill_diagonal(pi, 0.0)
        pi = pi / pi.sum(axis=0, keepdims=True)
    tilde = rng.dirichlet(np.ones(S))
    return RegimeTransition(tilde, pi, zero_diag=zero_diag)


class TestValidation:
    def test_rejects_nonstochastic_columns(self):
        with pytest.raises(ValueError):
            RegimeTransition([0.5, 0.5], [[0.9, 0.3], [0.2, 0.7]])

    def test_rejects_bad_duration_support(self):
        with pytest.raises(ValueError):
            DurationModel(d_min=3, d_max=2, rho=[[1.0]])

    def test_zero_diag_flag_enforced(self):
        with pytest.raises(ValueError):
            RegimeTransition([1.0, 0.0], [[0.5, 0.5], [0.5, 0.5]], zero_diag=True)

    def test_hazard_requires_zero_at_dmax(self):
        with pytest.raises(ValueError):
            HazardModel(d_min=1, d_max=3, lam=[[0.5, 0.5, 0.5]])


class TestConversion:
    def test_geometric_hazard_is_constant(self):
        # closed form: rho_d = (1-p) p^{d-1} gives hazard p at every count
        p = 0.65
        d_max = 200  # wide enough that truncation error is < 1e-12 up front
        d = np.arange(1, d_max + 1)
        rho = (1 - p) * p ** (d - 1)
        rho = rho / rho.sum()
        dm = DurationModel(d_min=1, d_max=d_max, rho=[rho])
        hm = duration_to_hazard(dm)
        np.testing.assert_allclose(hm.lam[0, :100], p, atol=1e-12)
        assert hm.lam[0, -1] == 0.0

    def test_point_mass_hazard(self):
        dm = DurationModel(d_min=1, d_max=5, rho=[point_mass_pmf(3, 1, 5)])
        hm = duration_to_hazard(dm)
        np.testing.assert_allclose(hm.lam[0, :2], 1.0)
        assert hm.lam[0, 2] == 0.0  # forced stop at d* = 3
        assert hm.lam[0, 4] == 0.0  # and at d_max by truncation

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        dm = random_duration_model(rng, S=3, d_min=2, d_max=7)
        back = hazard_to_duration(duration_to_hazard(dm))
        np.testing.assert_allclose(back.rho, dm.rho, atol=1e-12)
        again = convert_duration_representation(convert_duration_representation(dm))
        np.testing.assert_allclose(again.rho, dm.rho, atol=1e-12)

    def test_zero_tail_convention(self):
        rho = np.array([[0.5, 0.5, 0.0, 0.0]])
        dm = DurationModel(d_min=1, d_max=4, rho=rho)
        hm = duration_to_hazard(dm)
        assert hm.lam[0, 2] == 0.0 and hm.lam[0, 3] == 0.0


class TestKernels:
    @pytest.mark.parametrize("encoding", [DEC, INC, CD])
    def test_rows_sum_to_one(self, encoding):
        rng = np.random.default_rng(7)
        for trial in range(20):
            S = int(rng.integers(1, 4))
            d_min = int(rng.integers(1, 3))
            d_max = d_min + int(rng.integers(0, 4))
            chain = random_chain(rng, S)
            dm = random_duration_model(rng, S, d_min, d_max)
            model_dur = dm if encoding != INC else duration_to_hazard(dm)
            for state, _ in initial_states(encoding, chain, model_dur):
                succ = successor_states(encoding, state, chain, model_dur)
                total = sum(p for _, p in succ)
                assert abs(total - 1.0) < 1e-12

    def test_initial_distribution_normalized(self):
        rng = np.random.default_rng(3)
        chain = random_chain(rng, 2)
        dm = random_duration_model(rng, 2, 1, 3)
        for encoding, dur in [(DEC, dm), (CD, dm), (INC, duration_to_hazard(dm))]:
            total = sum(p for _, p in initial_states(encoding, chain, dur))
            assert abs(total - 1.0) < 1e-12

    def test_dec_deterministic_countdown(self):
        chain = uniform_switch_transition(2)
        dm = random_duration_model(np.random.default_rng(1), 2, 1, 4)
        assert transition_kernel(DEC, DecState(0, 3), DecState(0, 2), chain, dm) == 1.0
        assert transition_kernel(DEC, DecState(0, 3), DecState(1, 2), chain, dm) == 0.0

    def test_inc_continuation_probability(self):
        chain = uniform_switch_transition(2)
        hm = duration_to_hazard(random_duration_model(np.random.default_rng(2), 2, 1, 4))
        lam = hm.lam[0, 1]
        got = transition_kernel(INC, IncState(0, 2), IncState(0, 3), chain, hm)
        assert abs(got - lam) < 1e-15

    def test_cd_boundary_product(self):
        rng = np.random.default_rng(5)
        chain = random_chain(rng, 2)
        dm = random_duration_model(rng, 2, 1, 3)
        got = transition_kernel(CD, CdState(0, 2, 1), CdState(1, 3, 3), chain, dm)
        want = chain.pi[1, 0] * dm.rho[1, 2]
        assert abs(got - want) < 1e-15

    def test_encoding_mismatch_rejected(self):
        chain = uniform_switch_transition(2)
        dm = random_duration_model(np.random.default_rng(0), 2, 1, 3)
        with pytest.raises(ValueError):
            transition_kernel(DEC, IncState(0, 1), IncState(0, 2), chain, dm)


class TestSampling:
    def test_point_mass_duration_boundaries(self):
        chain = uniform_switch_transition(2)
        dm = DurationModel(d_min=3, d_max=3, rho=[[1.0], [1.0]])
        s, c = sample_chain(DEC, chain, dm, T=9, seed=0)
        assert list(c) == [3, 2, 1] * 3
        segs = boundary_segments(s, c, DEC)
        assert [d for _, d in segs] == [3, 3, 3]

    def test_reproducible(self):
        chain = uniform_switch_transition(3)
        dm = random_duration_model(np.random.default_rng(0), 3, 1, 4)
        a = sample_chain(DEC, chain, dm, T=50, seed=123)
        b = sample_chain(DEC, chain, dm, T=50, seed=123)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    def test_zero_diag_never_repeats(self):
        chain = uniform_switch_transition(3)
        dm = random_duration_model(np.random.default_rng(1), 3, 1, 3)
        s, c = sample_chain(DEC, chain, dm, T=400, seed=5)
        segs = boundary_segments(s, c, DEC)
        regs = [r for r, _ in segs]
        assert all(a != b for a, b in zip(regs, regs[1:]))

    def test_durations_within_support(self):
        rng = np.random.default_rng(9)
        chain = uniform_switch_transition(2)
        dm = random_duration_model(rng, 2, 2, 5)
        for encoding, dur in [(DEC, dm), (CD, dm), (INC, duration_to_hazard(dm))]:
            out = sample_chain(encoding, chain, dur, T=300, seed=11)
            s, c = out[0], out[1]
            segs = boundary_segments(s, c, encoding)
            for _, d in segs[:-1]:  # last segment may be cut by the horizon
                assert 2 <= d <= 5

    def test_sampled_duration_pmf_matches_rho(self):
        chain = uniform_switch_transition(2)
        pmf = np.array([0.2, 0.5, 0.3])
        dm = DurationModel(d_min=1, d_max=3, rho=[pmf, pmf])
        s, c = sample_chain(DEC, chain, dm, T=60_000, seed=2)
        durations = [d for _, d in boundary_segments(s, c, DEC)[:-1]]
        emp = oracle.empirical_pmf(durations, [1, 2, 3])
        assert oracle.tv_distance(emp, pmf) < 0.01

    def test_hazard_pmf_sampling_duality(self):
        chain = uniform_switch_transition(2)
        pmf = np.array([0.1, 0.3, 0.4, 0.2])
        dm = DurationModel(d_min=1, d_max=4, rho=[pmf, pmf])
        hm = duration_to_hazard(dm)
        s1, c1 = sample_chain(DEC, chain, dm, T=60_000, seed=3)
        s2, c2 = sample_chain(INC, chain, hm, T=60_000, seed=4)
        d1 = [d for _, d in boundary_segments(s1, c1, DEC)[:-1]]
        d2 = [d for _, d in boundary_segments(s2, c2, INC)[1:-1]]
        emp1 = oracle.empirical_pmf(d1, [1, 2, 3, 4])
        emp2 = oracle.empirical_pmf(d2, [1, 2, 3, 4])
        assert oracle.tv_distance(emp1, emp2) < 0.01


class TestExpansion:
    def test_identity_at_dmin_one(self):
        rng = np.random.default_rng(0)
        chain = random_chain(rng, 3)
        expanded, owner = negative_binomial_expansion(chain, 1)
        assert expanded is chain
        np.testing.assert_array_equal(owner, np.arange(3))

    def test_closed_form_value(self):
        # pi_ii = 0.5, d_min = 5: p(d = 5) = 0.5^5 = 0.03125
        val = negative_binomial_pmf(5, 0.5, 5)
        assert abs(val - 0.03125) < 1e-15

    def test_expanded_chain_matches_closed_form(self):
        rng = np.random.default_rng(4)
        S = 2
        pi = np.array([[0.6, 0.3], [0.4, 0.7]])
        chain = RegimeTransition([0.5, 0.5], pi)
        for d_min in (2, 5):
            expanded, owner = negative_binomial_expansion(chain, d_min)
            d_vals = np.arange(1, 31)
            for i in range(S):
                dp = expanded_duration_pmf(expanded, owner, i, d_vals)
                closed = negative_binomial_pmf(d_vals, pi[i, i], d_min)
                np.testing.assert_allclose(dp, closed, atol=1e-10)

    def test_expanded_is_valid_transition(self):
        chain = RegimeTransition([0.3, 0.7], [[0.8, 0.4], [0.2, 0.6]])
        expanded, owner = negative_binomial_expansion(chain, 4)
        assert expanded.pi.shape == (8, 8)
        np.testing.assert_allclose(expanded.pi.sum(axis=0), 1.0, atol=1e-12)

    def test_sampled_super_durations(self):
        pi = np.array([[0.5, 0.5], [0.5, 0.5]])
        chain = RegimeTransition([0.5, 0.5], pi)
        expanded, owner = negative_binomial_expansion(chain, 3)
        copies = sample_plain_regimes(expanded, 250_000, seed=8)
        supers = owner[copies]
        durations = [d for _, d in chains.realized_segments(supers)][1:-1]
        support = np.arange(3, 40)
        emp = oracle.empirical_pmf([d for d in durations if d < 40], support)
        closed = negative_binomial_pmf(support, 0.5, 3)
        closed = closed / closed.sum()
        kept = sum(1 for d in durations if d < 40) / len(durations)
        assert oracle.tv_distance(emp * kept, closed * 1.0) < 0.01


class TestGeometricPmf:
    def test_matches_chain_dwell_law(self):
        # implicit dwell of a plain chain: (1 - p) p^{d-1}
        p = 0.5
        pmf = geometric_pmf(p, 1, 25)
        d = np.arange(1, 26)
        want = (1 - p) * p ** (d - 1)
        np.testing.assert_allclose(pmf, want / want.sum(), atol=1e-12)
        assert abs(pmf[1] - 0.25) < 1e-7  # p(2) = 0.25 before truncation
