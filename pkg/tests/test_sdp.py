"""Solver tests: embedding, closed forms, certificates, degenerate rescues."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from steermoments.errors import ConfigurationError, NumericalTroubleError
from steermoments.moments import (
    MomentWord,
    build_template,
    custom_string_set,
    generate_level,
    named_string_set,
)
from steermoments.operators import Operator
from steermoments.scenarios import (
    AssemblageSource,
    gaussian_scenario,
    noon_scenario,
    random_unsteerable_assemblage,
    two_mode_squeezed_std_form,
    werner_scenario,
)
from steermoments.sdp import (
    SdpProblem,
    SdpSolution,
    _polish_simple,
    certify,
    embed_hermitian,
    export_sdpa,
    problem_from_template,
    read_sdpa,
    solve,
    steering_decision,
    unembed_dual,
)


def random_hermitian(dim, seed):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return (g + g.conj().T) / 2


def werner_problem(w):
    sc = werner_scenario(w)
    tpl = build_template(
        named_string_set("werner-pauli"), sc.bob_operators, "full", sc.source
    )
    return problem_from_template(tpl)


def noon_problem(eta, d=6):
    sc = noon_scenario(1, eta, d)
    tpl = build_template(
        named_string_set("noon-11"), sc.bob_operators, "local-restricted", sc.source
    )
    return problem_from_template(tpl)


OFF = np.zeros((3, 3))
OFF[0, 1] = OFF[1, 0] = 1.0


class TestEmbedding:
    @given(st.integers(min_value=0, max_value=1000))
    @settings(max_examples=25, deadline=None)
    def test_spectrum_doubles(self, seed):
        dim = 2 + seed % 4
        h = random_hermitian(dim, seed)
        embedded = embed_hermitian(h)
        np.testing.assert_allclose(
            np.linalg.eigvalsh(embedded),
            np.sort(np.repeat(np.linalg.eigvalsh(h), 2)),
            atol=1e-9,
        )

    def test_unembed_recovers_doubled_hermitian(self):
        h = random_hermitian(4, 3)
        np.testing.assert_allclose(
            unembed_dual(embed_hermitian(h)), 2 * h, atol=1e-12
        )

    def test_unembed_rejects_odd_size(self):
        with pytest.raises(ConfigurationError):
            unembed_dual(np.eye(3))

    def test_pairings_survive_the_embedding(self):
        x = random_hermitian(3, 8)
        f = random_hermitian(3, 9)
        lhs = np.trace(unembed_dual(embed_hermitian(x)) @ f) / 2
        rhs = np.trace(embed_hermitian(x) @ embed_hermitian(f)) / 2
        np.testing.assert_allclose(complex(lhs).real, float(rhs.real), atol=1e-10)
        assert abs(complex(lhs).imag) < 1e-10


class TestProblemConstruction:
    def test_rejects_nonsymmetric_gamma(self):
        with pytest.raises(ConfigurationError):
            SdpProblem(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_rejects_nonsymmetric_direction(self):
        with pytest.raises(ConfigurationError):
            SdpProblem(np.eye(2), (np.array([[0.0, 1.0], [0.0, 0.0]]),))

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ConfigurationError):
            SdpProblem(np.eye(2), (np.eye(3),))

    def test_rejects_label_count_mismatch(self):
        with pytest.raises(ConfigurationError):
            SdpProblem(np.eye(3), (OFF,), labels=("a", "b"))

    def test_rejects_vanishing_direction(self):
        with pytest.raises(ConfigurationError):
            SdpProblem(np.eye(2), (np.zeros((2, 2)),))

    def test_rejects_dependent_directions(self):
        with pytest.raises(ConfigurationError):
            SdpProblem(np.eye(3), (OFF, 2.0 * OFF))

    def test_gamma_at_checks_length(self):
        problem = SdpProblem(np.eye(3), (OFF,))
        with pytest.raises(ConfigurationError):
            problem.gamma_at([1.0, 2.0])

    def test_default_labels_and_complex_detection(self):
        h = random_hermitian(3, 1)
        f = random_hermitian(3, 2)
        problem = SdpProblem(h, (f,))
        assert problem.labels == ("t0",)
        assert problem.complex_dim == 3
        assert problem.m == 6
        real = SdpProblem(np.eye(2))
        assert real.complex_dim is None
        assert real.m == 2


class TestSolveBasics:
    def test_plain_diagonal(self):
        solution = solve(SdpProblem(np.diag([3.0, -2.0])))
        assert solution.status == "optimal"
        np.testing.assert_allclose(solution.lambda_star, -2.0, atol=1e-7)

    def test_tol_range_is_enforced(self):
        problem = SdpProblem(np.eye(2))
        with pytest.raises(ConfigurationError):
            solve(problem, tol=1e-11)
        with pytest.raises(ConfigurationError):
            solve(problem, tol=1e-3)

    def test_unbounded_direction_is_refused(self):
        with pytest.raises(NumericalTroubleError) as info:
            solve(SdpProblem(np.eye(2), (np.eye(2),)))
        assert info.value.best_bounds == (-np.inf, np.inf)

    def test_repeat_solves_are_bit_identical(self):
        problem = werner_problem(0.63)
        first = solve(problem)
        second = solve(problem)
        assert first.lambda_star == second.lambda_star
        assert np.array_equal(first.t_star, second.t_star)
        assert np.array_equal(first.Z, second.Z)

    def test_all_zero_matrix_short_circuits(self):
        solution = solve(SdpProblem(np.zeros((2, 2))))
        assert solution.lambda_star == 0.0
        assert solution.iterations == 0
        np.testing.assert_allclose(solution.Z, np.eye(2) / 2, atol=1e-12)


class TestWernerClosedForm:
    def test_grid_matches_closed_form(self):
        for w in (0.30, 0.45, 1 / np.sqrt(3.0), 0.60, 0.80, 1.00):
            solution = solve(werner_problem(w))
            np.testing.assert_allclose(
                solution.lambda_star, 1.0 - np.sqrt(3.0) * w, atol=1e-7
            )

    @given(st.floats(min_value=0.0, max_value=1.0))
    @settings(max_examples=15, deadline=None)
    def test_closed_form_holds_across_the_mixing_range(self, w):
        solution = solve(werner_problem(w))
        np.testing.assert_allclose(
            solution.lambda_star, 1.0 - np.sqrt(3.0) * w, atol=1e-6
        )

    def test_decisions_either_side_of_threshold(self):
        assert steering_decision(solve(werner_problem(0.8)).lambda_star) == "steering"
        assert (
            steering_decision(solve(werner_problem(0.5)).lambda_star) == "no-steering"
        )

    def test_certificate_pairing_matches_the_optimum(self):
        problem = werner_problem(0.8)
        solution = solve(problem)
        cert = certify(solution, problem)
        assert cert.accepted
        assert abs(cert.beta - solution.lambda_star) <= 1e-6

    def test_optimal_parameters_stay_feasible(self):
        problem = werner_problem(0.8)
        solution = solve(problem)
        lowest = float(np.linalg.eigvalsh(problem.gamma_at(solution.t_star))[0])
        assert lowest >= solution.lambda_star - 1e-7


class TestGoldenSectionCrossCheck:
    def test_single_parameter_optimum_agrees_with_scalar_search(self):
        sc = gaussian_scenario(two_mode_squeezed_std_form(0.8))
        tpl = build_template(
            named_string_set("gaussian-quadrature"), sc.bob_operators, "full", sc.source
        )
        problem = problem_from_template(tpl)
        assert problem.n_free == 1
        solution = solve(problem)

        def negated_floor(t):
            return -float(np.linalg.eigvalsh(problem.gamma_at([t]))[0])

        scan = minimize_scalar(
            negated_floor, bounds=(-10.0, 10.0), method="bounded",
            options={"xatol": 1e-12},
        )
        np.testing.assert_allclose(solution.lambda_star, -scan.fun, atol=1e-6)


class TestCertificates:
    def test_tampered_dual_is_rejected(self):
        problem = werner_problem(0.8)
        solution = solve(problem)
        k = solution.Z.shape[0]
        bad = SdpSolution(
            lambda_star=solution.lambda_star,
            t_star=solution.t_star,
            Z=solution.Z - 2e-8 * np.eye(k),
            mu=solution.mu,
            duality_gap=solution.duality_gap,
            status=solution.status,
            iterations=solution.iterations,
            residuals=solution.residuals,
        )
        cert = certify(bad, problem)
        assert not cert.accepted
        assert any("min_eigenvalue" in failure for failure in cert.failures)

    def test_only_optimal_solutions_certify(self):
        problem = SdpProblem(np.eye(2))
        solution = solve(problem)
        broken = SdpSolution(
            lambda_star=solution.lambda_star,
            t_star=solution.t_star,
            Z=solution.Z,
            mu=solution.mu,
            duality_gap=solution.duality_gap,
            status="numerical-trouble",
            iterations=solution.iterations,
            residuals=solution.residuals,
        )
        with pytest.raises(ConfigurationError):
            certify(broken, problem)


class TestMonotonicity:
    def test_extra_word_never_raises_the_optimum(self):
        sc = werner_scenario(0.8)
        base = named_string_set("werner-pauli")
        extended = custom_string_set(
            list(base.words) + [MomentWord([(0, 1), (1, 1)], [0, 1])]
        )
        lam = {}
        for name, string_set in (("base", base), ("ext", extended)):
            tpl = build_template(string_set, sc.bob_operators, "full", sc.source)
            lam[name] = solve(problem_from_template(tpl)).lambda_star
        assert lam["ext"] <= lam["base"] + 1e-6

    def test_quadrature_products_sharpen_the_lossy_template(self):
        sc = noon_scenario(1, 0.75, 6)
        full = named_string_set("noon-11")
        sub = custom_string_set(list(full.words)[:7])
        lam = {}
        for name, string_set in (("sub", sub), ("full", full)):
            tpl = build_template(
                string_set, sc.bob_operators, "local-restricted", sc.source
            )
            lam[name] = solve(problem_from_template(tpl)).lambda_star
        assert lam["full"] <= lam["sub"] + 1e-6
        assert lam["sub"] > 0.1
        assert lam["full"] < -1e-4


class TestNoFalsePositives:
    def test_unsteerable_batch_never_reports_steering(self):
        for seed in range(20):
            n_inputs = 2 + seed % 2
            dim_b = 2 + seed % 2
            assemblage, _ = random_unsteerable_assemblage(
                n_inputs, 2, dim_b, 3 + seed % 2, seed=seed
            )
            ops = tuple(
                Operator(random_hermitian(dim_b, 100 + seed + k)) for k in range(2)
            )
            tpl = build_template(
                generate_level(n_inputs, ops, 2),
                ops,
                "full",
                source=AssemblageSource(assemblage),
            )
            problem = problem_from_template(tpl)
            solution = solve(problem)
            assert solution.lambda_star >= -1e-7, seed
            assert steering_decision(solution.lambda_star) != "steering", seed
            assert certify(solution, problem).accepted, seed

    def test_plateau_settle_keeps_interior_optimum_honest(self):
        # This instance converges in value while strict complementarity
        # fails, so the run settles at the cap with the measured gap.
        assemblage, _ = random_unsteerable_assemblage(3, 2, 3, 4, seed=1)
        ops = tuple(Operator(random_hermitian(3, 101 + k)) for k in range(2))
        tpl = build_template(
            generate_level(3, ops, 2), ops, "full", source=AssemblageSource(assemblage)
        )
        problem = problem_from_template(tpl)
        solution = solve(problem)
        assert solution.residuals.get("gap_plateau") is True
        np.testing.assert_allclose(solution.lambda_star, 0.156722, atol=1e-5)
        assert solution.duality_gap <= 1e-6
        assert certify(solution, problem).accepted


class TestDegenerateRescues:
    def test_unsteerable_lossy_point_solves_on_the_face(self):
        problem = noon_problem(0.6)
        solution = solve(problem)
        assert solution.lambda_star == 0.0
        assert solution.residuals["degenerate_face_dimension"] == 2
        assert certify(solution, problem).accepted
        assert steering_decision(solution.lambda_star) == "inconclusive-margin"

    def test_threshold_sliver_settles_with_certified_gap(self):
        problem = noon_problem(0.6667)
        solution = solve(problem)
        assert "gap_plateau" in solution.residuals
        assert -5e-9 < solution.lambda_star < 0.0
        assert solution.duality_gap <= 1e-6
        assert certify(solution, problem).accepted
        assert steering_decision(solution.lambda_star) == "inconclusive-margin"

    def test_steerable_lossy_point_is_certified(self):
        problem = noon_problem(0.75)
        solution = solve(problem)
        np.testing.assert_allclose(solution.lambda_star, -9.8554e-4, atol=1e-6)
        assert certify(solution, problem).accepted
        assert steering_decision(solution.lambda_star) == "steering"

    def test_annihilated_direction_caps_the_optimum(self):
        solution = solve(SdpProblem(np.diag([1.0, 2.0, 0.0]), (OFF,)))
        assert abs(solution.lambda_star) <= 1e-8
        assert solution.residuals["forced_null_dimension"] == 1
        assert certify(solution, SdpProblem(np.diag([1.0, 2.0, 0.0]), (OFF,))).accepted

    def test_annihilated_direction_keeps_binding_negative_part(self):
        problem = SdpProblem(np.diag([-1.0, 2.0, 0.0]), (OFF,))
        solution = solve(problem)
        np.testing.assert_allclose(solution.lambda_star, -1.0, atol=1e-7)
        assert solution.residuals["forced_null_dimension"] == 1
        assert certify(solution, problem).accepted


class TestPolish:
    def test_refines_a_perturbed_optimum_to_closed_form(self):
        problem = werner_problem(0.8)
        reference = solve(problem)
        rng = np.random.default_rng(7)
        start = reference.t_star + 1e-3 * rng.normal(size=reference.t_star.shape)
        polished = _polish_simple(problem, start, 1e-8)
        assert polished is not None
        assert polished.residuals["polished"] is True
        np.testing.assert_allclose(
            polished.lambda_star, 1.0 - np.sqrt(3.0) * 0.8, atol=1e-9
        )
        assert certify(polished, problem).accepted

    def test_declines_when_the_lowest_eigenvalue_coalesces(self):
        problem = SdpProblem(np.diag([5.0, -1.0, -1.0]), (OFF,))
        assert _polish_simple(problem, np.zeros(1), 1e-8) is None


class TestSdpaRoundTrip:
    def test_export_matches_read_back(self):
        gamma = np.diag([3.0, -2.0, 1.0])
        problem = SdpProblem(gamma, (OFF,))
        data = read_sdpa(export_sdpa(problem))
        assert data["n_vars"] == 2
        assert data["block_size"] == 3
        np.testing.assert_allclose(data["c"], [-1.0, 0.0])
        np.testing.assert_allclose(data["matrices"][0], -gamma, atol=1e-15)
        np.testing.assert_allclose(data["matrices"][1], -np.eye(3), atol=1e-15)
        np.testing.assert_allclose(data["matrices"][2], OFF, atol=1e-15)

    def test_rejects_truncated_input(self):
        with pytest.raises(ConfigurationError):
            read_sdpa("2\n1\n3\n")

    def test_rejects_multiple_blocks(self):
        with pytest.raises(ConfigurationError):
            read_sdpa("1\n2\n3 3\n-1\n")

    def test_rejects_malformed_entry(self):
        text = "1\n1\n2\n-1\n0 1 1 1\n"
        with pytest.raises(ConfigurationError):
            read_sdpa(text)

    def test_rejects_out_of_range_matrix_number(self):
        text = "1\n1\n2\n-1\n5 1 1 1 2.0\n"
        with pytest.raises(ConfigurationError):
            read_sdpa(text)


class TestDecisionBand:
    def test_band_edges(self):
        assert steering_decision(-1.1e-7, tol=1e-8) == "steering"
        assert steering_decision(-0.9e-7, tol=1e-8) == "inconclusive-margin"
        assert steering_decision(0.0, tol=1e-8) == "inconclusive-margin"
        assert steering_decision(0.9e-7, tol=1e-8) == "inconclusive-margin"
        assert steering_decision(1.1e-7, tol=1e-8) == "no-steering"

    def test_rejects_nonpositive_tolerance(self):
        with pytest.raises(ConfigurationError):
            steering_decision(0.5, tol=0.0)
