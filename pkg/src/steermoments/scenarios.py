"""States, measurements, assemblages, and the moment data sources built on them.

Everything downstream consumes data through a small "source" interface:
``source.moment(alice_word, bob)`` returns the cross moment of a (sorted)
word of Alice observables against a Bob operator.  Three sources exist:

* :class:`StateSource`: expectation values on a simulated bipartite state
  with Alice's actual observables (the ground-truth route),
* :class:`AssemblageSource`: sums over Bob's conditional states only, with
  no access to Alice's side (the device-independent route),
* :class:`GaussianSource`: phase-space moments of a two-mode Gaussian state
  computed from its standard-form covariance matrix by Wick pairing.

Conventions: bipartite operators act on Alice (x) Bob with Alice's factor
first; Gaussian covariance matrices are vacuum-normalized (vacuum =
identity) with mode ordering (q_A, p_A, q_B, p_B).
"""

from __future__ import annotations

import json
from typing import Sequence

import numpy as np

from .errors import ConfigurationError
from .operators import Operator, generalized_quadratures, identity, pauli_set, tensor

Array = np.ndarray

#: Tolerances for density-matrix validation (Hermiticity, trace, spectrum).
STATE_ATOL = 1e-10

#: Tolerance for projector completeness, idempotence, and reconstruction.
PROJECTOR_ATOL = 1e-9

#: Most negative eigenvalue tolerated in a conditional state.
ASSEMBLAGE_PSD_FLOOR = -1e-9

#: Tolerance on the total trace of each input's conditional states.
ASSEMBLAGE_TRACE_ATOL = 1e-8

#: Entrywise tolerance for the no-signalling check across inputs.
NO_SIGNALLING_ATOL = 1e-8

#: Eigenvalues closer than this are treated as one degenerate outcome.
EIGENVALUE_MERGE_TOL = 1e-8

#: Most negative eigenvalue tolerated in gamma + i*Omega physicality tests.
GAUSSIAN_PSD_FLOOR = -1e-9

#: Largest Alice dimension build_separable_model will materialize.
SEPARABLE_DIM_CAP = 4096

#: Single-mode symplectic form in (q, p) ordering.
OMEGA_SINGLE_MODE = np.array([[0.0, 1.0], [-1.0, 0.0]])


def complex_matrix_to_pairs(m: Array) -> list:
    """Encode a complex matrix as nested lists of [re, im] pairs."""
    m = np.asarray(m, dtype=complex)
    return [[[float(v.real), float(v.imag)] for v in row] for row in m]


def complex_matrix_from_pairs(data) -> Array:
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 3 or arr.shape[0] != arr.shape[1] or arr.shape[2] != 2:
        raise ConfigurationError(
            f"expected a square matrix of [re, im] pairs, got shape {arr.shape}"
        )
    return arr[:, :, 0] + 1j * arr[:, :, 1]


def default_outcome_labels(n_outcomes: int) -> tuple[float, ...]:
    """Outcome labels used when none are supplied: +-1 for two outcomes,
    1..n otherwise."""
    if n_outcomes == 2:
        return (-1.0, 1.0)
    return tuple(float(k) for k in range(1, n_outcomes + 1))


class QuantumState:
    """A validated density matrix on a bipartite space.

    :param rho: (dim_a*dim_b) x (dim_a*dim_b) complex matrix; must be
        Hermitian, unit trace, and positive semidefinite within
        :data:`STATE_ATOL`.
    """

    __slots__ = ("dim_a", "dim_b", "rho")

    def __init__(self, rho, dim_a: int, dim_b: int):
        if dim_a < 1 or dim_b < 1:
            raise ConfigurationError("subsystem dimensions must be positive")
        arr = np.array(rho, dtype=complex)
        dim = dim_a * dim_b
        if arr.shape != (dim, dim):
            raise ConfigurationError(
                f"density matrix shape {arr.shape} does not match a "
                f"{dim_a}x{dim_b} bipartition"
            )
        if np.max(np.abs(arr - arr.conj().T)) > STATE_ATOL:
            raise ConfigurationError("density matrix is not Hermitian")
        if abs(np.trace(arr).real - 1.0) > STATE_ATOL or abs(np.trace(arr).imag) > STATE_ATOL:
            raise ConfigurationError("density matrix must have unit trace")
        if np.linalg.eigvalsh(arr)[0] < -STATE_ATOL:
            raise ConfigurationError("density matrix has a negative eigenvalue")
        arr.setflags(write=False)
        self.dim_a = int(dim_a)
        self.dim_b = int(dim_b)
        self.rho = arr

    def expectation(self, op: Operator) -> complex:
        """Tr[rho O] for an operator on the full bipartite space."""
        if op.dim != self.dim_a * self.dim_b:
            raise ConfigurationError(
                f"operator dimension {op.dim} does not match state "
                f"dimension {self.dim_a * self.dim_b}"
            )
        return complex(np.einsum("ij,ji->", self.rho, op.entries))

    def reduced_bob(self) -> Array:
        """Partial trace over Alice."""
        four = self.rho.reshape(self.dim_a, self.dim_b, self.dim_a, self.dim_b)
        return np.einsum("ikil->kl", four)


class ProjectiveMeasurement:
    """Spectral data of an observable: real outcomes with orthogonal projectors."""

    __slots__ = ("outcomes", "projectors", "source_observable")

    def __init__(self, outcomes, projectors: Sequence[Operator], source_observable: Operator):
        outcomes = tuple(float(a) for a in outcomes)
        projectors = tuple(projectors)
        if len(outcomes) != len(projectors) or not outcomes:
            raise ConfigurationError("need one projector per outcome")
        dim = source_observable.dim
        total = np.zeros((dim, dim), dtype=complex)
        recon = np.zeros((dim, dim), dtype=complex)
        for a, proj in zip(outcomes, projectors):
            if proj.dim != dim:
                raise ConfigurationError("projector dimension mismatch")
            sq = proj.entries @ proj.entries
            if np.max(np.abs(sq - proj.entries)) > PROJECTOR_ATOL:
                raise ConfigurationError("measurement element is not idempotent")
            total += proj.entries
            recon += a * proj.entries
        for i in range(len(projectors)):
            for j in range(i + 1, len(projectors)):
                cross = projectors[i].entries @ projectors[j].entries
                if np.max(np.abs(cross)) > PROJECTOR_ATOL:
                    raise ConfigurationError("projectors are not mutually orthogonal")
        if np.max(np.abs(total - np.eye(dim))) > PROJECTOR_ATOL:
            raise ConfigurationError("projectors do not sum to the identity")
        if np.max(np.abs(recon - source_observable.entries)) > PROJECTOR_ATOL:
            raise ConfigurationError(
                "outcome-weighted projectors do not reconstruct the observable"
            )
        self.outcomes = outcomes
        self.projectors = projectors
        self.source_observable = source_observable

    @property
    def n_outcomes(self) -> int:
        return len(self.outcomes)


class Assemblage:
    """Bob's unnormalized conditional states sigma_{a|x}.

    Stored per input as parallel tuples of outcome values and Operators.
    Construction enforces positivity, normalization, and no-signalling.
    """

    __slots__ = ("outcomes_per_input", "sigmas", "dim_b")

    def __init__(self, outcomes_per_input, sigmas):
        outcomes_per_input = tuple(tuple(float(a) for a in row) for row in outcomes_per_input)
        sigmas = tuple(
            tuple(s if isinstance(s, Operator) else Operator(s) for s in row) for row in sigmas
        )
        if len(outcomes_per_input) != len(sigmas) or not sigmas:
            raise ConfigurationError("need one list of conditional states per input")
        dim_b = sigmas[0][0].dim
        reference = None
        for outs, row in zip(outcomes_per_input, sigmas):
            if len(outs) != len(row) or not row:
                raise ConfigurationError("need one conditional state per outcome")
            if len(set(outs)) != len(outs):
                raise ConfigurationError("outcome values must be distinct per input")
            total = np.zeros((dim_b, dim_b), dtype=complex)
            trace = 0.0
            for s in row:
                if s.dim != dim_b:
                    raise ConfigurationError("conditional states must share one dimension")
                if not s.hermitian:
                    raise ConfigurationError("conditional state is not Hermitian")
                if np.linalg.eigvalsh(s.entries)[0] < ASSEMBLAGE_PSD_FLOOR:
                    raise ConfigurationError("conditional state has a negative eigenvalue")
                total += s.entries
                trace += s.trace().real
            if abs(trace - 1.0) > ASSEMBLAGE_TRACE_ATOL:
                raise ConfigurationError(f"conditional traces sum to {trace}, expected 1")
            if reference is None:
                reference = total
            elif np.max(np.abs(total - reference)) > NO_SIGNALLING_ATOL:
                raise ConfigurationError("assemblage violates no-signalling across inputs")
        self.outcomes_per_input = outcomes_per_input
        self.sigmas = sigmas
        self.dim_b = dim_b

    @property
    def n_inputs(self) -> int:
        return len(self.sigmas)

    def sigma(self, x: int, a_index: int) -> Operator:
        return self.sigmas[x][a_index]

    def reduced(self) -> Array:
        """Bob's marginal state (same for every input by no-signalling)."""
        return sum(s.entries for s in self.sigmas[0])

    def to_json_dict(self) -> dict:
        return {
            "dim_b": self.dim_b,
            "inputs": [
                {
                    "outcomes": list(outs),
                    "sigmas": [complex_matrix_to_pairs(s.entries) for s in row],
                }
                for outs, row in zip(self.outcomes_per_input, self.sigmas)
            ],
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Assemblage":
        if not isinstance(doc, dict) or set(doc) != {"dim_b", "inputs"}:
            raise ConfigurationError(
                "assemblage document must have exactly the keys 'dim_b' and 'inputs'"
            )
        outcomes = []
        sigmas = []
        for block in doc["inputs"]:
            if not isinstance(block, dict) or set(block) != {"outcomes", "sigmas"}:
                raise ConfigurationError(
                    "each input block needs exactly the keys 'outcomes' and 'sigmas'"
                )
            outcomes.append(block["outcomes"])
            sigmas.append([complex_matrix_from_pairs(m) for m in block["sigmas"]])
        built = cls(outcomes, sigmas)
        if built.dim_b != int(doc["dim_b"]):
            raise ConfigurationError("declared dim_b does not match the matrices")
        return built

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path) -> "Assemblage":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


class LhsModel:
    """An explicit local-hidden-state model.

    :param weights: probability vector q over hidden variables.
    :param response: per input x, an (n_outcomes, n_lambda) table whose
        columns are the distributions p(.|x, lambda).
    :param hidden_states: density matrices rho_lambda on Bob's space.
    """

    __slots__ = ("weights", "response", "hidden_states")

    def __init__(self, weights, response, hidden_states: Sequence[Operator]):
        weights = np.array(weights, dtype=float)
        if weights.ndim != 1 or weights.size == 0:
            raise ConfigurationError("weights must be a nonempty vector")
        if weights.min() < -1e-12 or abs(weights.sum() - 1.0) > 1e-10:
            raise ConfigurationError("weights must form a probability vector")
        hidden_states = tuple(
            s if isinstance(s, Operator) else Operator(s) for s in hidden_states
        )
        if len(hidden_states) != weights.size:
            raise ConfigurationError("need one hidden state per weight")
        dim_b = hidden_states[0].dim
        for s in hidden_states:
            if s.dim != dim_b or not s.hermitian:
                raise ConfigurationError("hidden states must be Hermitian, same dimension")
            if abs(s.trace().real - 1.0) > 1e-9 or np.linalg.eigvalsh(s.entries)[0] < -1e-10:
                raise ConfigurationError("hidden states must be unit-trace and positive")
        tables = []
        for tab in response:
            tab = np.array(tab, dtype=float)
            if tab.ndim != 2 or tab.shape[1] != weights.size:
                raise ConfigurationError("response tables need one column per hidden variable")
            if tab.min() < -1e-12 or np.max(np.abs(tab.sum(axis=0) - 1.0)) > 1e-9:
                raise ConfigurationError("response table columns must be distributions")
            tab.setflags(write=False)
            tables.append(tab)
        if not tables:
            raise ConfigurationError("need at least one input")
        weights.setflags(write=False)
        self.weights = weights
        self.response = tuple(tables)
        self.hidden_states = hidden_states

    @property
    def n_inputs(self) -> int:
        return len(self.response)

    @property
    def n_lambda(self) -> int:
        return self.weights.size

    @property
    def dim_b(self) -> int:
        return self.hidden_states[0].dim

    def assemblage(self, outcomes_per_input=None) -> Assemblage:
        """The assemblage sigma_{a|x} = sum_lambda q p(a|x,lambda) rho_lambda."""
        states = np.stack([s.entries for s in self.hidden_states])
        outcomes = []
        sigmas = []
        for x, tab in enumerate(self.response):
            if outcomes_per_input is None:
                outs = default_outcome_labels(tab.shape[0])
            else:
                outs = tuple(float(a) for a in outcomes_per_input[x])
                if len(outs) != tab.shape[0]:
                    raise ConfigurationError("outcome label count mismatch")
            outcomes.append(outs)
            sigmas.append(list(np.einsum("l,al,lij->aij", self.weights, tab, states)))
        return Assemblage(outcomes, sigmas)


class GaussianStdForm:
    """Two-mode covariance matrix in standard form, vacuum = identity.

    Blocks diag(a, a) for Alice, diag(b, b) for Bob, correlations
    diag(c1, c2).  Physicality (gamma + i*Omega >= 0) and det of the Bob
    block >= 1 are enforced on construction.
    """

    __slots__ = ("a", "b", "c1", "c2")

    def __init__(self, a: float, b: float, c1: float, c2: float):
        a, b, c1, c2 = float(a), float(b), float(c1), float(c2)
        if b * b < 1.0 - 1e-12:
            raise ConfigurationError(f"Bob block determinant b^2 = {b * b} is below 1")
        gamma = _std_form_covariance(a, b, c1, c2)
        omega = np.kron(np.eye(2), OMEGA_SINGLE_MODE)
        if np.linalg.eigvalsh(gamma + 1j * omega)[0] < GAUSSIAN_PSD_FLOOR:
            raise ConfigurationError(
                "covariance matrix violates the uncertainty relation"
            )
        self.a, self.b, self.c1, self.c2 = a, b, c1, c2

    def __repr__(self) -> str:
        return f"GaussianStdForm(a={self.a}, b={self.b}, c1={self.c1}, c2={self.c2})"

    def covariance(self) -> Array:
        """The 4x4 matrix in (q_A, p_A, q_B, p_B) ordering."""
        return _std_form_covariance(self.a, self.b, self.c1, self.c2)


def _std_form_covariance(a: float, b: float, c1: float, c2: float) -> Array:
    return np.array(
        [
            [a, 0.0, c1, 0.0],
            [0.0, a, 0.0, c2],
            [c1, 0.0, b, 0.0],
            [0.0, c2, 0.0, b],
        ]
    )


def werner_state(w: float) -> QuantumState:
    """Singlet fraction w mixed with white noise on two qubits."""
    if not 0.0 <= w <= 1.0:
        raise ConfigurationError(f"mixing parameter must lie in [0, 1], got {w}")
    psi = np.zeros(4, dtype=complex)
    psi[1] = 1.0 / np.sqrt(2.0)
    psi[2] = -1.0 / np.sqrt(2.0)
    rho = w * np.outer(psi, psi.conj()) + (1.0 - w) * np.eye(4) / 4.0
    return QuantumState(rho, 2, 2)


def lossy_noon_state(N: int, eta: float, d: int) -> QuantumState:
    """Two-mode N-photon path superposition mixed with vacuum.

    rho = (1 - eta) |00><00| + eta |psi><psi| where
    psi = (|N 0> - |0 N>) / sqrt(2), on a d x d Fock truncation.
    """
    if N < 1 or int(N) != N:
        raise ConfigurationError(f"photon number must be a positive integer, got {N}")
    if not 0.0 <= eta <= 1.0:
        raise ConfigurationError(f"eta must lie in [0, 1], got {eta}")
    if d < N + 1:
        raise ConfigurationError(f"truncation d = {d} cannot hold {N} photons")
    vac = np.zeros(d * d, dtype=complex)
    vac[0] = 1.0
    psi = np.zeros(d * d, dtype=complex)
    psi[N * d + 0] = 1.0 / np.sqrt(2.0)
    psi[0 * d + N] = -1.0 / np.sqrt(2.0)
    rho = (1.0 - eta) * np.outer(vac, vac.conj()) + eta * np.outer(psi, psi.conj())
    return QuantumState(rho, d, d)


def two_mode_squeezed_std_form(r: float) -> GaussianStdForm:
    """Standard form of a two-mode squeezed vacuum with squeezing r."""
    if r < 0.0:
        raise ConfigurationError(f"squeezing parameter must be non-negative, got {r}")
    return GaussianStdForm(np.cosh(2 * r), np.cosh(2 * r), np.sinh(2 * r), -np.sinh(2 * r))


def random_std_form(seed, *, max_tries: int = 500) -> GaussianStdForm:
    """A random physical standard-form covariance matrix (rejection sampled)."""
    rng = np.random.default_rng(seed)
    omega = np.kron(np.eye(2), OMEGA_SINGLE_MODE)
    for _ in range(max_tries):
        a = 1.0 + rng.uniform(0.0, 3.0)
        b = 1.0 + rng.uniform(0.0, 3.0)
        bound = np.sqrt(a * b)
        c1 = rng.uniform(-bound, bound)
        c2 = rng.uniform(-bound, bound)
        gamma = _std_form_covariance(a, b, c1, c2)
        if np.linalg.eigvalsh(gamma + 1j * omega)[0] >= 1e-8:
            return GaussianStdForm(a, b, c1, c2)
    raise ConfigurationError("failed to sample a physical covariance matrix")


def measurement_from_observable(observable: Operator) -> ProjectiveMeasurement:
    """Spectral decomposition with near-degenerate eigenvalues merged.

    Eigenvalues closer than :data:`EIGENVALUE_MERGE_TOL` collapse into one
    outcome whose projector spans the merged eigenvectors, so analytically
    degenerate observables do not split into spurious rank-1 pieces.
    """
    if not observable.hermitian:
        raise ConfigurationError("measurements require a Hermitian observable")
    vals, vecs = np.linalg.eigh(observable.entries)
    outcomes = []
    projectors = []
    start = 0
    for i in range(1, len(vals) + 1):
        if i == len(vals) or vals[i] - vals[i - 1] > EIGENVALUE_MERGE_TOL:
            block = vecs[:, start:i]
            outcomes.append(float(np.mean(vals[start:i])))
            projectors.append(Operator(block @ block.conj().T))
            start = i
    return ProjectiveMeasurement(outcomes, projectors, observable)


def conditional_assemblage(
    state: QuantumState, measurements: Sequence[ProjectiveMeasurement]
) -> Assemblage:
    """sigma_{a|x} = Tr_A[(M_{a|x} (x) 1) rho] for each measurement x."""
    four = state.rho.reshape(state.dim_a, state.dim_b, state.dim_a, state.dim_b)
    outcomes = []
    sigmas = []
    for meas in measurements:
        if meas.source_observable.dim != state.dim_a:
            raise ConfigurationError(
                f"measurement dimension {meas.source_observable.dim} does not "
                f"match Alice dimension {state.dim_a}"
            )
        outcomes.append(meas.outcomes)
        sigmas.append(
            [np.einsum("ij,jkil->kl", m.entries, four) for m in meas.projectors]
        )
    return Assemblage(outcomes, sigmas)


def random_unsteerable_assemblage(
    n_inputs: int,
    n_outcomes: int,
    dim_b: int,
    n_lambda: int,
    seed,
    *,
    outcome_labels=None,
) -> tuple[Assemblage, LhsModel]:
    """Sample a local-hidden-state model and return its assemblage.

    Weights and response columns are flat-simplex samples; hidden states are
    normalized G G^dagger with complex Gaussian G.  Deterministic in seed.
    """
    if min(n_inputs, n_outcomes, dim_b, n_lambda) < 1:
        raise ConfigurationError("all counts must be positive")
    rng = np.random.default_rng(seed)
    weights = rng.dirichlet(np.ones(n_lambda))
    response = [
        rng.dirichlet(np.ones(n_outcomes), size=n_lambda).T for _ in range(n_inputs)
    ]
    hidden = []
    for _ in range(n_lambda):
        g = rng.standard_normal((dim_b, dim_b)) + 1j * rng.standard_normal((dim_b, dim_b))
        m = g @ g.conj().T
        hidden.append(Operator(m / np.trace(m).real))
    model = LhsModel(weights, response, hidden)
    labels = [outcome_labels] * n_inputs if outcome_labels is not None else None
    return model.assemblage(labels), model


def build_separable_model(
    model: LhsModel,
    *,
    outcomes_per_input=None,
    dim_cap: int = SEPARABLE_DIM_CAP,
) -> tuple[QuantumState, tuple[Operator, ...]]:
    """Realize an LHS model as a separable state with commuting observables.

    Alice's space is indexed by joint outcome tuples (a_1, ..., a_n); the
    state is block diagonal with blocks omega_{a_1...a_n} = sum_lambda
    q_lambda prod_x p(a_x|x,lambda) rho_lambda, and each observable A_x is
    diagonal with eigenvalue equal to the outcome label of its slot.
    Measuring the returned observables reproduces the model's assemblage.
    """
    counts = [tab.shape[0] for tab in model.response]
    dim_alice = int(np.prod(counts))
    if dim_alice > dim_cap:
        raise ConfigurationError(
            f"Alice dimension {dim_alice} exceeds the cap {dim_cap}"
        )
    if outcomes_per_input is None:
        labels = [default_outcome_labels(c) for c in counts]
    else:
        labels = [tuple(float(a) for a in row) for row in outcomes_per_input]
        if [len(row) for row in labels] != counts:
            raise ConfigurationError("outcome label shape does not match the model")
    dim_b = model.dim_b
    states = np.stack([s.entries for s in model.hidden_states])
    rho = np.zeros((dim_alice * dim_b, dim_alice * dim_b), dtype=complex)
    diagonals = [np.zeros(dim_alice) for _ in counts]
    for idx, joint in enumerate(np.ndindex(*counts)):
        probs = model.weights.copy()
        for x, a in enumerate(joint):
            probs = probs * model.response[x][a]
            diagonals[x][idx] = labels[x][a]
        block = np.einsum("l,lij->ij", probs, states)
        rho[idx * dim_b : (idx + 1) * dim_b, idx * dim_b : (idx + 1) * dim_b] = block
    observables = tuple(
        Operator(np.diag(diag), name=f"A{x}") for x, diag in enumerate(diagonals)
    )
    return QuantumState(rho, dim_alice, dim_b), observables


def joint_moment(source, x, power: int, bob) -> complex:
    """The cross moment <A_x^power (x) B> on any moment source.

    With power = 0 the Alice side is trivial and x is ignored; bob is an
    Operator for finite-dimensional sources and a tuple of operator names
    for Gaussian sources.
    """
    if power < 0 or int(power) != power:
        raise ConfigurationError(f"power must be a non-negative integer, got {power}")
    if power == 0:
        return source.moment((), bob)
    if x is None:
        raise ConfigurationError("a positive power needs an input index")
    return source.moment(((int(x), int(power)),), bob)


def _check_alice_word(alice_word, n_inputs: int) -> tuple[tuple[int, int], ...]:
    word = []
    seen = set()
    for x, power in alice_word:
        if not 0 <= x < n_inputs:
            raise ConfigurationError(f"unknown input index {x}")
        if x in seen:
            raise ConfigurationError("alice word must list each input at most once")
        if power < 1 or int(power) != power:
            raise ConfigurationError("alice multiplicities must be positive integers")
        seen.add(x)
        word.append((int(x), int(power)))
    return tuple(sorted(word))


class StateSource:
    """Moments evaluated directly on a simulated state with true observables."""

    symbolic = False

    __slots__ = ("state", "observables", "_measurements")

    def __init__(self, state: QuantumState, observables: Sequence[Operator]):
        observables = tuple(observables)
        if not observables:
            raise ConfigurationError("need at least one Alice observable")
        for obs in observables:
            if obs.dim != state.dim_a:
                raise ConfigurationError(
                    f"observable dimension {obs.dim} does not match Alice "
                    f"dimension {state.dim_a}"
                )
            if not obs.hermitian:
                raise ConfigurationError("Alice observables must be Hermitian")
        self.state = state
        self.observables = observables
        self._measurements: dict[int, ProjectiveMeasurement] = {}

    @property
    def n_inputs(self) -> int:
        return len(self.observables)

    @property
    def dim_b(self) -> int:
        return self.state.dim_b

    def measurement(self, x: int) -> ProjectiveMeasurement:
        if x not in self._measurements:
            self._measurements[x] = measurement_from_observable(self.observables[x])
        return self._measurements[x]

    def alice_outcomes(self, x: int) -> tuple[float, ...]:
        return self.measurement(x).outcomes

    def alice_word_operator(self, alice_word) -> Operator:
        """Product over the sorted word, one factor A_x^power per input."""
        word = _check_alice_word(alice_word, self.n_inputs)
        op = identity(self.state.dim_a)
        for x, power in word:
            op = op @ self.observables[x].power(power)
        return op

    def moment(self, alice_word, bob: Operator) -> complex:
        return self.state.expectation(tensor(self.alice_word_operator(alice_word), bob))

    def to_assemblage(self) -> Assemblage:
        return conditional_assemblage(
            self.state, [self.measurement(x) for x in range(self.n_inputs)]
        )


class AssemblageSource:
    """Moments computed from conditional states alone.

    Only trivial or single-input Alice words are meaningful here; products
    across different inputs have no assemblage expression and are rejected.
    """

    symbolic = False

    __slots__ = ("assemblage",)

    def __init__(self, assemblage: Assemblage):
        self.assemblage = assemblage

    @property
    def n_inputs(self) -> int:
        return self.assemblage.n_inputs

    @property
    def dim_b(self) -> int:
        return self.assemblage.dim_b

    def alice_outcomes(self, x: int) -> tuple[float, ...]:
        if not 0 <= x < self.n_inputs:
            raise ConfigurationError(f"unknown input index {x}")
        return self.assemblage.outcomes_per_input[x]

    def moment(self, alice_word, bob: Operator) -> complex:
        word = _check_alice_word(alice_word, self.n_inputs)
        if bob.dim != self.dim_b:
            raise ConfigurationError(
                f"Bob operator dimension {bob.dim} does not match {self.dim_b}"
            )
        if not word:
            return complex(np.einsum("ij,ji->", self.assemblage.reduced(), bob.entries))
        if len(word) > 1:
            raise ConfigurationError(
                "assemblage data cannot evaluate products across different inputs"
            )
        x, power = word[0]
        total = 0.0 + 0.0j
        for a, s in zip(self.assemblage.outcomes_per_input[x], self.assemblage.sigmas[x]):
            total += (a**power) * np.einsum("ij,ji->", s.entries, bob.entries)
        return complex(total)


class GaussianSource:
    """Phase-space moments of a zero-mean two-mode Gaussian state.

    Moments of arbitrary words in (q_A, p_A, q_B, p_B) follow from the
    covariance matrix by summing ordered Wick pairings with pair value
    <R_k R_l> = (gamma_kl + i Omega_kl) / 2.  Alice's inputs 0 and 1 are
    her two quadratures; Bob's operators are addressed by name, "q" or "p".
    """

    symbolic = True
    n_inputs = 2
    dim_b = None

    _BOB_INDEX = {"q": 2, "p": 3}

    __slots__ = ("form", "_pair", "_cache")

    def __init__(self, form: GaussianStdForm):
        omega = np.kron(np.eye(2), OMEGA_SINGLE_MODE)
        self.form = form
        self._pair = (form.covariance() + 1j * omega) / 2.0
        self._cache: dict[tuple[int, ...], complex] = {}

    def alice_outcomes(self, x: int):
        """Continuous spectrum: there is no finite outcome list."""
        if x not in (0, 1):
            raise ConfigurationError(f"unknown input index {x}")
        return None

    def bob_index(self, name: str) -> int:
        try:
            return self._BOB_INDEX[name]
        except KeyError:
            raise ConfigurationError(
                f"unknown Bob quadrature {name!r}, expected 'q' or 'p'"
            ) from None

    def sequence_moment(self, indices: tuple[int, ...]) -> complex:
        """<R_{i1} ... R_{ik}> for an explicit index sequence."""
        indices = tuple(indices)
        if len(indices) % 2:
            return 0.0 + 0.0j
        if not indices:
            return 1.0 + 0.0j
        if indices in self._cache:
            return self._cache[indices]
        head = indices[0]
        total = 0.0 + 0.0j
        for j in range(1, len(indices)):
            rest = indices[1:j] + indices[j + 1 :]
            total += self._pair[head, indices[j]] * self.sequence_moment(rest)
        self._cache[indices] = total
        return total

    def word_moment(self, alice_word, bob_word) -> complex:
        word = _check_alice_word(alice_word, 2)
        seq = []
        for x, power in word:
            seq.extend([x] * power)
        for name in bob_word:
            seq.append(self.bob_index(name))
        return self.sequence_moment(tuple(seq))

    def moment(self, alice_word, bob) -> complex:
        """bob is a tuple of quadrature names forming Bob's word."""
        return self.word_moment(alice_word, tuple(bob))


class Scenario:
    """A moment source bundled with the Bob operators its templates use.

    ``bob_operators`` holds Operators for finite-dimensional sources and
    plain name strings for symbolic (Gaussian) sources.
    """

    __slots__ = ("name", "source", "bob_operators")

    def __init__(self, name: str, source, bob_operators):
        self.name = name
        self.source = source
        self.bob_operators = tuple(bob_operators)


def werner_scenario(w: float) -> Scenario:
    """Singlet-fraction state with Pauli measurements on both sides."""
    x, y, z, _ = pauli_set()
    return Scenario("werner", StateSource(werner_state(w), (x, y, z)), (x, y, z))


def noon_scenario(N: int, eta: float, d: int | None = None) -> Scenario:
    """Lossy N-photon path-superposition scenario with quadrature readout.

    Alice's observables are the negated order-N quadratures (a sign
    relabeling of her outcomes that leaves steering thresholds untouched);
    Bob's named operators are the plain order-N quadratures.  The default
    truncation d = 4N + 2 keeps every moment used by the witness templates
    exact on the (vacuum + N photon) support.
    """
    if d is None:
        d = 4 * N + 2
    q, p = generalized_quadratures(N, d)
    alice = ((-1.0) * q).renamed("A0"), ((-1.0) * p).renamed("A1")
    state = lossy_noon_state(N, eta, d)
    return Scenario(
        "noon", StateSource(state, alice), (q.renamed("q"), p.renamed("p"))
    )


def gaussian_scenario(form: GaussianStdForm) -> Scenario:
    """Two-mode Gaussian standard-form scenario with quadrature moments."""
    return Scenario("gaussian-std", GaussianSource(form), ("q", "p"))
