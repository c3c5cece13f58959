import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from steermoments.errors import ConfigurationError
from steermoments.operators import Operator, generalized_quadratures, identity, pauli_set, tensor
from steermoments.scenarios import (
    Assemblage,
    AssemblageSource,
    GaussianSource,
    GaussianStdForm,
    LhsModel,
    QuantumState,
    StateSource,
    build_separable_model,
    conditional_assemblage,
    default_outcome_labels,
    gaussian_scenario,
    joint_moment,
    lossy_noon_state,
    measurement_from_observable,
    noon_scenario,
    random_std_form,
    random_unsteerable_assemblage,
    two_mode_squeezed_std_form,
    werner_scenario,
    werner_state,
)

X, Y, Z, I2 = pauli_set()


class TestQuantumState:
    def test_rejects_unnormalized(self):
        with pytest.raises(ConfigurationError):
            QuantumState(np.eye(4), 2, 2)

    def test_rejects_negative(self):
        with pytest.raises(ConfigurationError):
            QuantumState(np.diag([1.5, -0.5, 0, 0]), 2, 2)

    def test_reduced_bob(self):
        state = werner_state(1.0)
        np.testing.assert_allclose(state.reduced_bob(), np.eye(2) / 2, atol=1e-12)


class TestWernerState:
    def test_w0_is_white_noise(self):
        np.testing.assert_allclose(werner_state(0.0).rho, np.eye(4) / 4, atol=1e-15)

    def test_singlet_correlations(self):
        state = werner_state(1.0)
        assert state.expectation(tensor(X, X)).real == pytest.approx(-1.0, abs=1e-12)

    def test_zz_scaling(self):
        for w in (0.25, 0.37, 0.8):
            val = werner_state(w).expectation(tensor(Z, Z))
            assert val.real == pytest.approx(-w, abs=1e-12)
            assert val.imag == pytest.approx(0.0, abs=1e-12)

    def test_cross_correlations_vanish(self):
        assert abs(werner_state(0.9).expectation(tensor(X, Z))) < 1e-12

    def test_range_check(self):
        with pytest.raises(ConfigurationError):
            werner_state(1.2)


class TestLossyNoonState:
    def test_eta0_is_vacuum(self):
        rho = lossy_noon_state(1, 0.0, 4).rho
        expected = np.zeros((16, 16))
        expected[0, 0] = 1.0
        np.testing.assert_allclose(rho, expected, atol=1e-15)

    def test_qq_moment(self):
        # hand value: <psi| q (x) q |psi> = -1/2 on the one-photon superposition
        q, _ = generalized_quadratures(1, 6)
        for eta in (0.3, 1.0):
            state = lossy_noon_state(1, eta, 6)
            val = state.expectation(tensor(q, q))
            assert val.real == pytest.approx(-eta / 2, abs=1e-12)

    def test_bob_marginal_at_eta1(self):
        state = lossy_noon_state(1, 1.0, 5)
        expected = np.zeros((5, 5))
        expected[0, 0] = expected[1, 1] = 0.5
        np.testing.assert_allclose(state.reduced_bob(), expected, atol=1e-12)

    def test_rank_at_most_two(self):
        vals = np.linalg.eigvalsh(lossy_noon_state(2, 0.6, 7).rho)
        assert np.sum(vals > 1e-12) == 2

    def test_truncation_too_small(self):
        with pytest.raises(ConfigurationError):
            lossy_noon_state(3, 0.5, 3)


class TestGaussianStdForm:
    def test_two_mode_squeezed(self):
        g = two_mode_squeezed_std_form(0.5)
        assert g.a == pytest.approx(np.cosh(1.0))
        assert g.c1 == pytest.approx(-g.c2)

    def test_vacuum(self):
        g = two_mode_squeezed_std_form(0.0)
        assert (g.a, g.b, g.c1, g.c2) == (1.0, 1.0, 0.0, 0.0)

    def test_purity_determinant(self):
        for r in (0.2, 0.7, 1.4):
            g = two_mode_squeezed_std_form(r)
            assert np.linalg.det(g.covariance()) == pytest.approx(1.0, abs=1e-8)

    def test_rejects_bob_block_below_vacuum(self):
        with pytest.raises(ConfigurationError):
            GaussianStdForm(1.0, 0.8, 0.0, 0.0)

    def test_rejects_unphysical_correlations(self):
        with pytest.raises(ConfigurationError):
            GaussianStdForm(1.0, 1.0, 2.0, 0.0)

    @pytest.mark.parametrize("seed", range(12))
    def test_random_forms_are_physical(self, seed):
        g = random_std_form(seed)
        assert g.b * g.b >= 1.0 - 1e-12

    def test_random_form_deterministic(self):
        g1, g2 = random_std_form(123), random_std_form(123)
        assert (g1.a, g1.b, g1.c1, g1.c2) == (g2.a, g2.b, g2.c1, g2.c2)


class TestMeasurementFromObservable:
    def test_pauli_z(self):
        meas = measurement_from_observable(Z)
        assert meas.outcomes == (-1.0, 1.0)
        np.testing.assert_allclose(meas.projectors[0].entries, np.diag([0, 1]), atol=1e-12)

    def test_identity_merges_completely(self):
        meas = measurement_from_observable(identity(3))
        assert meas.outcomes == (1.0,)
        np.testing.assert_allclose(meas.projectors[0].entries, np.eye(3), atol=1e-12)

    def test_quadrature_spectrum(self):
        q, _ = generalized_quadratures(1, 8)
        meas = measurement_from_observable(q)
        assert meas.n_outcomes == 8
        for proj in meas.projectors:
            assert np.trace(proj.entries).real == pytest.approx(1.0, abs=1e-9)

    def test_rejects_non_hermitian(self):
        with pytest.raises(ConfigurationError):
            measurement_from_observable(Operator([[0, 1], [0, 0]]))


class TestConditionalAssemblage:
    def test_product_state_factorizes(self):
        rho_b = np.array([[0.6, 0.2], [0.2, 0.4]])
        rho = np.kron(np.diag([0.3, 0.7]), rho_b)
        state = QuantumState(rho, 2, 2)
        asm = conditional_assemblage(state, [measurement_from_observable(Z)])
        np.testing.assert_allclose(asm.sigma(0, 1).entries, 0.3 * rho_b, atol=1e-12)
        np.testing.assert_allclose(asm.sigma(0, 0).entries, 0.7 * rho_b, atol=1e-12)

    def test_singlet_steers_to_orthogonal_states(self):
        asm = conditional_assemblage(werner_state(1.0), [measurement_from_observable(Z)])
        # outcome +1 is the second entry (ascending eigenvalues)
        np.testing.assert_allclose(asm.sigma(0, 1).entries, np.diag([0, 0.5]), atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigurationError):
            conditional_assemblage(
                werner_state(0.5), [measurement_from_observable(identity(3))]
            )


class TestRandomUnsteerable:
    def test_single_hidden_state_is_proportional(self):
        asm, model = random_unsteerable_assemblage(2, 2, 2, 1, seed=5)
        rho = model.hidden_states[0].entries
        for x in range(2):
            for i in range(2):
                s = asm.sigma(x, i).entries
                np.testing.assert_allclose(s, np.trace(s).real * rho, atol=1e-12)

    def test_reconstruction(self):
        asm, model = random_unsteerable_assemblage(3, 2, 3, 4, seed=11)
        states = np.stack([s.entries for s in model.hidden_states])
        for x in range(3):
            rebuilt = np.einsum("l,al,lij->aij", model.weights, model.response[x], states)
            for i in range(2):
                np.testing.assert_allclose(rebuilt[i], asm.sigma(x, i).entries, atol=1e-12)

    def test_default_labels(self):
        asm2, _ = random_unsteerable_assemblage(2, 2, 2, 2, seed=0)
        assert asm2.outcomes_per_input[0] == (-1.0, 1.0)
        asm3, _ = random_unsteerable_assemblage(1, 3, 2, 2, seed=0)
        assert asm3.outcomes_per_input[0] == (1.0, 2.0, 3.0)
        assert default_outcome_labels(4) == (1.0, 2.0, 3.0, 4.0)

    def test_deterministic(self):
        a1, _ = random_unsteerable_assemblage(2, 2, 2, 3, seed=42)
        a2, _ = random_unsteerable_assemblage(2, 2, 2, 3, seed=42)
        for x in range(2):
            for i in range(2):
                np.testing.assert_array_equal(a1.sigma(x, i).entries, a2.sigma(x, i).entries)


class TestSeparableModel:
    def test_observables_commute(self):
        _, model = random_unsteerable_assemblage(3, 2, 2, 3, seed=9)
        _, observables = build_separable_model(model)
        for i in range(3):
            for j in range(i + 1, 3):
                comm = (observables[i] @ observables[j] - observables[j] @ observables[i])
                assert np.max(np.abs(comm.entries)) == 0.0

    @pytest.mark.parametrize("n_inputs,n_outcomes,dim_b", [(2, 2, 2), (2, 3, 3)])
    def test_round_trip(self, n_inputs, n_outcomes, dim_b):
        asm, model = random_unsteerable_assemblage(n_inputs, n_outcomes, dim_b, 3, seed=21)
        state, observables = build_separable_model(model)
        rebuilt = conditional_assemblage(
            state, [measurement_from_observable(a) for a in observables]
        )
        assert rebuilt.outcomes_per_input == asm.outcomes_per_input
        for x in range(n_inputs):
            for i in range(n_outcomes):
                np.testing.assert_allclose(
                    rebuilt.sigma(x, i).entries, asm.sigma(x, i).entries, atol=1e-9
                )

    def test_dimension_cap(self):
        _, model = random_unsteerable_assemblage(4, 9, 2, 2, seed=1)
        with pytest.raises(ConfigurationError):
            build_separable_model(model)


class TestJointMoment:
    def test_normalization(self):
        source = werner_scenario(0.5).source
        assert joint_moment(source, 0, 0, identity(2)) == pytest.approx(1.0)

    def test_werner_correlation(self):
        source = StateSource(werner_state(0.62), (X, Y, Z))
        assert joint_moment(source, 0, 1, X).real == pytest.approx(-0.62, abs=1e-12)

    def test_noon_raw_sign(self):
        q, p = generalized_quadratures(1, 6)
        source = StateSource(lossy_noon_state(1, 0.8, 6), (q, p))
        assert joint_moment(source, 0, 1, q).real == pytest.approx(-0.4, abs=1e-12)

    def test_noon_scenario_sign_flip(self):
        # the scenario relabels Alice's outcomes, flipping the cross moment
        scen = noon_scenario(1, 0.8)
        q = scen.bob_operators[0]
        assert joint_moment(scen.source, 0, 1, q).real == pytest.approx(0.4, abs=1e-12)

    def test_rejects_bad_power(self):
        source = werner_scenario(0.5).source
        with pytest.raises(ConfigurationError):
            joint_moment(source, 0, -1, X)
        with pytest.raises(ConfigurationError):
            joint_moment(source, None, 2, X)
        with pytest.raises(ConfigurationError):
            joint_moment(source, 7, 1, X)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000))
    def test_route_equivalence_unsteerable(self, seed):
        asm, model = random_unsteerable_assemblage(2, 2, 2, 3, seed=seed)
        state, observables = build_separable_model(model)
        state_src = StateSource(state, observables)
        asm_src = AssemblageSource(asm)
        rng = np.random.default_rng(seed + 1)
        g = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        bob = Operator((g + g.conj().T) / 2)
        for x in range(2):
            for power in (1, 2):
                lhs = joint_moment(state_src, x, power, bob)
                rhs = joint_moment(asm_src, x, power, bob)
                assert abs(lhs - rhs) < 1e-8

    def test_route_equivalence_noon(self):
        scen = noon_scenario(1, 0.7)
        asm_src = AssemblageSource(scen.source.to_assemblage())
        q = scen.bob_operators[0]
        for power in (0, 1, 2, 3):
            lhs = joint_moment(scen.source, 1, power, q)
            rhs = joint_moment(asm_src, 1, power, q)
            assert abs(lhs - rhs) < 1e-8

    def test_assemblage_rejects_cross_products(self):
        asm, _ = random_unsteerable_assemblage(2, 2, 2, 2, seed=3)
        with pytest.raises(ConfigurationError):
            AssemblageSource(asm).moment(((0, 1), (1, 1)), I2)


class TestGaussianSource:
    def test_vacuum_second_moments(self):
        src = GaussianSource(two_mode_squeezed_std_form(0.0))
        assert src.word_moment((), ("q", "q")) == pytest.approx(0.5)
        assert src.word_moment((), ("q", "p")) == pytest.approx(0.5j)
        assert src.word_moment((), ("p", "q")) == pytest.approx(-0.5j)

    def test_vacuum_fourth_moments(self):
        src = GaussianSource(two_mode_squeezed_std_form(0.0))
        assert src.word_moment((), ("q", "q", "q", "q")) == pytest.approx(0.75)
        assert src.word_moment((), ("q", "q", "p", "p")) == pytest.approx(-0.25)

    def test_odd_moments_vanish(self):
        src = GaussianSource(random_std_form(2))
        assert src.word_moment(((0, 1),), ("q", "q")) == 0.0
        assert src.word_moment((), ("q",)) == 0.0

    def test_squeezed_correlations(self):
        r = 0.6
        src = GaussianSource(two_mode_squeezed_std_form(r))
        assert src.word_moment(((0, 1),), ("q",)).real == pytest.approx(np.sinh(2 * r) / 2)
        assert src.word_moment(((0, 2),), ()).real == pytest.approx(np.cosh(2 * r) / 2)

    def test_alice_cross_quadrature(self):
        src = GaussianSource(random_std_form(7))
        assert src.word_moment(((0, 1), (1, 1)), ()).imag == pytest.approx(0.5)

    def test_continuous_outcomes(self):
        src = gaussian_scenario(two_mode_squeezed_std_form(0.3)).source
        assert src.alice_outcomes(0) is None
        with pytest.raises(ConfigurationError):
            src.bob_index("z")


class TestAssemblageJson:
    def test_round_trip(self, tmp_path):
        asm, _ = random_unsteerable_assemblage(2, 3, 3, 2, seed=17)
        path = tmp_path / "assemblage.json"
        asm.save(path)
        loaded = Assemblage.load(path)
        assert loaded.outcomes_per_input == asm.outcomes_per_input
        for x in range(2):
            for i in range(3):
                np.testing.assert_allclose(
                    loaded.sigma(x, i).entries, asm.sigma(x, i).entries, atol=1e-15
                )

    def test_rejects_unknown_keys(self):
        doc = random_unsteerable_assemblage(1, 2, 2, 1, seed=0)[0].to_json_dict()
        doc["extra"] = 1
        with pytest.raises(ConfigurationError):
            Assemblage.from_json_dict(doc)

    def test_rejects_wrong_dimension(self):
        doc = random_unsteerable_assemblage(1, 2, 2, 1, seed=0)[0].to_json_dict()
        doc["dim_b"] = 5
        with pytest.raises(ConfigurationError):
            Assemblage.from_json_dict(doc)


class TestModelValidation:
    def test_bad_weights(self):
        rho = Operator(np.eye(2) / 2)
        with pytest.raises(ConfigurationError):
            LhsModel([0.5, 0.2], [np.full((2, 2), 0.5)], [rho, rho])

    def test_bad_response(self):
        rho = Operator(np.eye(2) / 2)
        with pytest.raises(ConfigurationError):
            LhsModel([1.0], [np.array([[0.9], [0.3]])], [rho])

    def test_no_signalling_enforced(self):
        quarter = np.eye(2) / 4
        good = [[np.diag([0.5, 0.0]), np.diag([0.0, 0.5])], [quarter, quarter]]
        bad = [[np.diag([0.6, 0.0]), np.diag([0.0, 0.4])], [quarter, quarter]]
        Assemblage([(-1, 1), (-1, 1)], good)
        with pytest.raises(ConfigurationError):
            Assemblage([(-1, 1), (-1, 1)], bad)


class TestScenarios:
    def test_werner_outcomes_are_dichotomic(self):
        scen = werner_scenario(0.5)
        for x in range(3):
            np.testing.assert_allclose(scen.source.alice_outcomes(x), (-1.0, 1.0), atol=1e-9)

    def test_noon_outcomes_are_not_dichotomic(self):
        scen = noon_scenario(1, 0.5)
        outs = scen.source.alice_outcomes(0)
        assert len(outs) == 6
        assert any(abs(abs(a) - 1.0) > 1e-6 for a in outs)

    def test_noon_default_truncation(self):
        assert noon_scenario(1, 0.5).source.state.dim_b == 6
        assert noon_scenario(2, 0.5).source.state.dim_b == 10
