"""Closed-form steering criteria for qubit and Gaussian families.

These detectors are independent of the moment-matrix pipeline: each one
is a short arithmetic or eigenvalue test on observed correlations, and
the test suite holds both routes to the same answers.  Violation must be
strict; equality cases classify as not steering since the inequalities
are necessary conditions for unsteerability.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ConfigurationError
from .scenarios import GaussianStdForm

#: Strict-violation margin for closed-form (arithmetic) criteria.
CLOSED_FORM_ATOL = 1e-12

#: Strict-violation margin for eigenvalue-based criteria.
EIGENVALUE_ATOL = 1e-10

#: Slack admitted when checking that correlations sit inside [-1, 1].
CORRELATION_ATOL = 1e-12


class PauliCorrelations:
    """Diagonal correlations of three Pauli measurement pairs.

    ``cxx`` is the expectation of Alice's first setting times Bob's X,
    and likewise for Y and Z; each lies in [-1, 1].
    """

    __slots__ = ("cxx", "cyy", "czz")

    def __init__(self, cxx: float, cyy: float, czz: float):
        values = (float(cxx), float(cyy), float(czz))
        for name, v in zip(("cxx", "cyy", "czz"), values):
            if abs(v) > 1.0 + CORRELATION_ATOL:
                raise ConfigurationError(f"{name} = {v} lies outside [-1, 1]")
        self.cxx, self.cyy, self.czz = values

    def __repr__(self) -> str:
        return f"PauliCorrelations({self.cxx}, {self.cyy}, {self.czz})"


class PairCriterion:
    """One two-setting test: 1 minus the two squared correlations."""

    __slots__ = ("axes", "value", "steering")

    def __init__(self, axes, value, steering):
        self.axes = axes
        self.value = float(value)
        self.steering = bool(steering)

    def __repr__(self) -> str:
        return f"PairCriterion({'+'.join(self.axes)}, {self.value:.6g}, {self.steering})"


class GaussianCompletion:
    """Best positive-semidefinite completion found over the free moment."""

    __slots__ = ("exists", "best_r", "min_eigenvalue")

    def __init__(self, exists, best_r, min_eigenvalue):
        self.exists = bool(exists)
        self.best_r = float(best_r)
        self.min_eigenvalue = float(min_eigenvalue)

    def __repr__(self) -> str:
        return (
            f"GaussianCompletion(exists={self.exists}, best_r={self.best_r:.6g}, "
            f"min_eigenvalue={self.min_eigenvalue:.6g})"
        )


def pauli_linear_witness(c: PauliCorrelations) -> tuple[float, bool]:
    """Sum of the three diagonal correlations against the -sqrt(3) bound."""
    value = c.cxx + c.cyy + c.czz
    return value, bool(value < -np.sqrt(3.0) - CLOSED_FORM_ATOL)


def pauli_nonlinear_criterion(c: PauliCorrelations) -> tuple[float, bool]:
    """Sum of squared correlations; above 1 certifies steering."""
    value = c.cxx**2 + c.cyy**2 + c.czz**2
    return value, value > 1.0 + CLOSED_FORM_ATOL


def pauli_two_setting_criteria(c: PauliCorrelations) -> tuple[PairCriterion, ...]:
    """The three pairwise tests, each using two of the three settings.

    Every pair drops one axis and checks 1 - ci^2 - cj^2; a strictly
    negative value certifies steering with two settings only.  Whenever
    any pair fires, the three-setting sum-of-squares criterion fires as
    well, never the other way around.
    """
    pairs = (
        (("y", "z"), c.cyy, c.czz),
        (("x", "z"), c.cxx, c.czz),
        (("x", "y"), c.cxx, c.cyy),
    )
    out = []
    for axes, u, v in pairs:
        value = 1.0 - u * u - v * v
        out.append(PairCriterion(axes, value, value < -CLOSED_FORM_ATOL))
    return tuple(out)


def _require_std_form(g) -> GaussianStdForm:
    if not isinstance(g, GaussianStdForm):
        raise ConfigurationError(
            "expected a GaussianStdForm; physicality is enforced by that type"
        )
    return g


def gaussian_det_criterion(g: GaussianStdForm) -> tuple[float, bool]:
    """Determinant gap between the full covariance and Alice's block.

    For a standard form the value is (ab - c1^2)(ab - c2^2) - a^2; a
    strictly negative value certifies steering.
    """
    g = _require_std_form(g)
    ab = g.a * g.b
    value = (ab - g.c1**2) * (ab - g.c2**2) - g.a**2
    return value, value < -CLOSED_FORM_ATOL


def gaussian_wiseman_criterion(g: GaussianStdForm) -> tuple[float, bool]:
    """Positivity of the covariance with Bob's symplectic form attached.

    Adds i*Omega on Bob's block only and tests the resulting Hermitian
    4x4 matrix; a strictly negative bottom eigenvalue certifies steering.
    """
    g = _require_std_form(g)
    m = g.covariance().astype(complex)
    m[2, 3] += 1j
    m[3, 2] += -1j
    min_eig = float(np.linalg.eigvalsh(m)[0])
    return min_eig, min_eig < -EIGENVALUE_ATOL


def gaussian_moment_matrix(g: GaussianStdForm, r: float) -> np.ndarray:
    """Quadrature moment matrix with the unobservable cross moment r.

    Rows are ordered (A1, A2, q, p); r stands in for Alice's cross
    moment, the only entry no measurement fixes.  A constant positive
    prefactor is dropped since it cannot affect positivity.
    """
    g = _require_std_form(g)
    r = float(r)
    return np.array(
        [
            [g.a, r, g.c1, 0.0],
            [r, g.a, 0.0, g.c2],
            [g.c1, 0.0, g.b, 1j],
            [0.0, g.c2, -1j, g.b],
        ],
        dtype=complex,
    )


def gaussian_exists_completion(g: GaussianStdForm) -> GaussianCompletion:
    """Search the free cross moment for a positive-semidefinite completion.

    The bottom eigenvalue is concave in r, so a bounded scalar
    maximization over |r| <= a (forced by the Alice 2x2 minor) finds the
    global optimum; existence means the maximum clears the eigenvalue
    margin.  Agrees with the determinant criterion on every physical
    standard form.
    """
    g = _require_std_form(g)

    def negative_min_eig(r: float) -> float:
        return -float(np.linalg.eigvalsh(gaussian_moment_matrix(g, r))[0])

    result = minimize_scalar(
        negative_min_eig,
        bounds=(-g.a, g.a),
        method="bounded",
        options={"xatol": 1e-12},
    )
    best_r = float(result.x)
    min_eig = -negative_min_eig(best_r)
    return GaussianCompletion(min_eig >= -EIGENVALUE_ATOL, best_r, min_eig)
