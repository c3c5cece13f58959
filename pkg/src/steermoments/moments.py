"""The constraint compiler: moment-matrix templates over operator string sets.

A template is built from three ingredients: a string set (words of Alice
inputs and Bob operators), an observability policy deciding which moments
the data can pin, and a data source answering moment queries.  Every matrix
entry <S_i^dag S_j> is decomposed into a pinned constant plus a real-linear
combination of free unknowns, so the completion question "is there an
assignment of the unknowns making the matrix positive semidefinite" becomes
a semidefinite program over the exported direction matrices.

Alice's operators are assumed to commute with one another (the model class
being tested), so her words are canonical sorted multisets.  Bob's
operators are trusted matrices with no commutation assumed; his words keep
their order and products are evaluated numerically, never by rewrite rules.
"""

from __future__ import annotations

import itertools
from typing import Sequence

import numpy as np

from .errors import ConfigurationError
from .operators import (
    COEFF_SNAP_TOL,
    EXPANSION_RESIDUAL_TOL,
    Operator,
    gell_mann_basis,
    tensor,
)
from .scenarios import GaussianSource, StateSource

Array = np.ndarray

#: Policy names: pin every single-input cross moment, or restrict Bob's
#: side of cross moments to pure powers of his named operators.
FULL = "full"
LOCAL_RESTRICTED = "local-restricted"
POLICIES = (FULL, LOCAL_RESTRICTED)

#: Outcome labels within this distance of +-1 count as dichotomic.
DICHOTOMIC_ATOL = 1e-9

#: Pinned values whose imaginary part must vanish are checked against this.
VALUE_IMAG_ATOL = 1e-8

#: Orthonormalization keeps a candidate basis vector if its residual norm
#: (after projection, candidates pre-normalized) exceeds this.  The power
#: ladders feeding this step are badly conditioned at large truncation, so
#: the threshold sits well above the cancellation noise floor; a kept
#: vector is then accurate to roughly machine epsilon over the threshold,
#: which keeps expansion residuals inside their own tolerance.
BASIS_KEEP_TOL = 1e-6

#: A free direction is dropped as redundant if its residual against the
#: span of the directions kept so far falls below this relative norm.
FREE_PRUNE_TOL = 1e-9

_IDENTITY_LABEL = None


class MomentWord:
    """One operator string: a sorted Alice multiset and an ordered Bob word.

    ``alice`` is a tuple of (input index, multiplicity) pairs, sorted by
    input; ``bob`` is a tuple of indices into the scenario's Bob operator
    list, order preserved.
    """

    __slots__ = ("alice", "bob")

    def __init__(self, alice=(), bob=()):
        counts: dict[int, int] = {}
        for x, power in alice:
            if x < 0 or int(x) != x:
                raise ConfigurationError(f"input index must be a non-negative integer, got {x}")
            if power < 1 or int(power) != power:
                raise ConfigurationError(f"multiplicity must be a positive integer, got {power}")
            counts[int(x)] = counts.get(int(x), 0) + int(power)
        bob = tuple(int(t) for t in bob)
        if any(t < 0 for t in bob):
            raise ConfigurationError("Bob operator indices must be non-negative")
        object.__setattr__(self, "alice", tuple(sorted(counts.items())))
        object.__setattr__(self, "bob", bob)

    def __setattr__(self, key, value):
        raise AttributeError("MomentWord is immutable")

    @property
    def length(self) -> int:
        return sum(p for _, p in self.alice) + len(self.bob)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, MomentWord)
            and self.alice == other.alice
            and self.bob == other.bob
        )

    def __hash__(self) -> int:
        return hash((self.alice, self.bob))

    def __repr__(self) -> str:
        parts = [f"A{x}" + (f"^{p}" if p > 1 else "") for x, p in self.alice]
        parts += [f"B{t}" for t in self.bob]
        return "(" + " ".join(parts) + ")" if parts else "(1)"


class StringSet:
    """An ordered, duplicate-free list of moment words."""

    __slots__ = ("words", "level", "raw_stratum_counts")

    def __init__(self, words: Sequence[MomentWord], level, raw_stratum_counts=None):
        words = tuple(words)
        if not words:
            raise ConfigurationError("a string set needs at least one word")
        if len(set(words)) != len(words):
            raise ConfigurationError("string set contains duplicate canonical words")
        if isinstance(level, int):
            if level < 0:
                raise ConfigurationError("level must be non-negative")
            if words[0] != MomentWord():
                raise ConfigurationError("leveled string sets must start with the identity word")
        self.words = words
        self.level = level
        self.raw_stratum_counts = raw_stratum_counts

    def __len__(self) -> int:
        return len(self.words)

    @property
    def max_bob_index(self) -> int:
        return max((max(w.bob) for w in self.words if w.bob), default=-1)

    @property
    def max_alice_index(self) -> int:
        return max((w.alice[-1][0] for w in self.words if w.alice), default=-1)


def generate_level(n_alice: int, bob_ops, k: int) -> StringSet:
    """All words of total length <= k with distinct letters on each side.

    Alice sub-words are products of distinct inputs (canonically sorted, so
    reorderings collapse); Bob sub-words are ordered sequences of distinct
    operator indices, every order kept.  ``bob_ops`` may be the operator
    list itself or just a count.
    """
    if k < 0 or int(k) != k:
        raise ConfigurationError(f"level must be a non-negative integer, got {k}")
    n_bob = bob_ops if isinstance(bob_ops, int) else len(bob_ops)
    if n_alice < 0 or n_bob < 0:
        raise ConfigurationError("operator counts must be non-negative")
    words: list[MomentWord] = [MomentWord()]
    raw_counts = [1]
    for total in range(1, k + 1):
        seen: set[MomentWord] = set()
        stratum: list[MomentWord] = []
        raw = 0
        for alice_len in range(0, total + 1):
            bob_len = total - alice_len
            if alice_len > n_alice or bob_len > n_bob:
                continue
            n_alice_orders = 1
            for i in range(alice_len):
                n_alice_orders *= alice_len - i
            for alice_subset in itertools.combinations(range(n_alice), alice_len):
                for bob_word in itertools.permutations(range(n_bob), bob_len):
                    raw += n_alice_orders
                    word = MomentWord([(x, 1) for x in alice_subset], bob_word)
                    if word not in seen:
                        seen.add(word)
                        stratum.append(word)
        words.extend(stratum)
        raw_counts.append(raw)
    return StringSet(words, k, tuple(raw_counts))


def custom_string_set(words: Sequence[MomentWord]) -> StringSet:
    """Wrap an explicit word list, preserving its order."""
    return StringSet(words, "custom")


#: Named sets: Bob operator index conventions are documented per name.
WERNER_PAULI = "werner-pauli"
NOON_11 = "noon-11"
GAUSSIAN_QUADRATURE = "gaussian-quadrature"


def named_string_set(name: str) -> StringSet:
    """Bundled string sets.

    ``werner-pauli``: {1, A0 B0, A1 B1, A2 B2} with Bob ops ordered (X, Y, Z).
    ``noon-11``: the 11-word quadrature set, Bob ops ordered (q, p).
    ``gaussian-quadrature``: {A0, A1, B_q, B_p}, no identity word.
    """
    w = MomentWord
    if name == WERNER_PAULI:
        return custom_string_set(
            [w(), w([(0, 1)], [0]), w([(1, 1)], [1]), w([(2, 1)], [2])]
        )
    if name == NOON_11:
        return custom_string_set(
            [
                w(),
                w([(0, 1)], [0]),
                w([(0, 1)], [1]),
                w([(1, 1)], [0]),
                w([(1, 1)], [1]),
                w([(0, 2)]),
                w([(1, 2)]),
                w(bob=[0, 0]),
                w(bob=[0, 1]),
                w(bob=[1, 0]),
                w(bob=[1, 1]),
            ]
        )
    if name == GAUSSIAN_QUADRATURE:
        return custom_string_set([w([(0, 1)]), w([(1, 1)]), w(bob=[0]), w(bob=[1])])
    raise ConfigurationError(f"unknown string set name {name!r}")


def bob_word_operator(word, bob_operators: Sequence[Operator], dim_b: int) -> Operator:
    """Ordered matrix product of Bob operators addressed by index."""
    m = np.eye(dim_b, dtype=complex)
    for t in word:
        m = m @ bob_operators[t].entries
    return Operator(m)


class LrBasisElement:
    """One orthonormal element of the locally observable Bob subspace.

    ``expansion`` writes the element over the generating power words as
    (operator index or None for the identity, power, weight) triples.
    """

    __slots__ = ("matrix", "expansion")

    def __init__(self, matrix: Operator, expansion):
        self.matrix = matrix
        self.expansion = tuple(expansion)


class PinComponent:
    """One real number pinned by data, with its location pattern.

    ``kind`` is "word" (a whole-entry moment, re or im part, addressed by a
    Bob word in canonical orientation) or "element" (the coefficient of an
    orthonormal observable-subspace element, always real).  ``pattern`` is
    the Hermitian matrix H with Gamma_obs = sum_over_pins value * H.
    """

    __slots__ = ("kind", "alice", "bob_word", "element_index", "component", "value", "pattern")

    def __init__(self, kind, alice, bob_word, element_index, component, value, pattern):
        pattern = np.asarray(pattern, dtype=complex)
        pattern.setflags(write=False)
        self.kind = kind
        self.alice = alice
        self.bob_word = bob_word
        self.element_index = element_index
        self.component = component
        self.value = float(value)
        self.pattern = pattern

    def describe(self) -> str:
        alice = " ".join(f"A{x}^{p}" if p > 1 else f"A{x}" for x, p in self.alice) or "1"
        if self.kind == "word":
            bob = " ".join(f"B{t}" for t in self.bob_word) or "1"
            return f"{self.component}<{alice} (x) {bob}>"
        return f"<{alice} (x) V{self.element_index}>"


class FreeDirection:
    """One real free unknown and the Hermitian direction it multiplies."""

    __slots__ = ("alice", "space", "element_index", "direction")

    def __init__(self, alice, space, element_index, direction):
        direction = np.asarray(direction, dtype=complex)
        direction.setflags(write=False)
        self.alice = alice
        self.space = space
        self.element_index = element_index
        self.direction = direction

    def describe(self) -> str:
        alice = " ".join(f"A{x}^{p}" if p > 1 else f"A{x}" for x, p in self.alice) or "1"
        if self.space == "scalar":
            return f"<{alice}>"
        tag = "E" if self.space == "gm" else "C"
        return f"<{alice} (x) {tag}{self.element_index}>"


class MomentTemplate:
    """A compiled symbolic moment matrix.

    Gamma(t) = gamma_obs + sum_v t_v * free_dirs[v], with gamma_obs held
    together exactly as sum_p pins[p].value * pins[p].pattern.  Substituting
    any real t gives a Hermitian matrix.
    """

    __slots__ = (
        "words",
        "policy",
        "symbolic",
        "bob_operators",
        "dim_b",
        "n_inputs",
        "folded_inputs",
        "pins",
        "frees",
        "dropped_frees",
        "gamma_obs",
        "lr_basis",
        "complement",
    )

    def __init__(
        self,
        *,
        words,
        policy,
        symbolic,
        bob_operators,
        dim_b,
        n_inputs,
        folded_inputs,
        pins,
        frees,
        dropped_frees,
        lr_basis,
        complement,
    ):
        self.words = tuple(words)
        self.policy = policy
        self.symbolic = symbolic
        self.bob_operators = tuple(bob_operators)
        self.dim_b = dim_b
        self.n_inputs = n_inputs
        self.folded_inputs = tuple(folded_inputs)
        self.pins = tuple(pins)
        self.frees = tuple(frees)
        self.dropped_frees = tuple(dropped_frees)
        self.lr_basis = lr_basis
        self.complement = complement
        k = len(self.words)
        gamma = np.zeros((k, k), dtype=complex)
        for pin in self.pins:
            gamma += pin.value * pin.pattern
        assert np.max(np.abs(gamma - gamma.conj().T)) < 1e-10
        gamma.setflags(write=False)
        self.gamma_obs = gamma

    @property
    def size(self) -> int:
        return len(self.words)

    @property
    def n_free(self) -> int:
        return len(self.frees)

    def free_dirs(self) -> list[Array]:
        return [f.direction for f in self.frees]

    def substitute(self, t) -> Array:
        """Gamma at a concrete assignment of the free unknowns."""
        t = np.asarray(t, dtype=float)
        if t.shape != (self.n_free,):
            raise ConfigurationError(
                f"expected {self.n_free} free values, got shape {t.shape}"
            )
        gamma = self.gamma_obs.copy()
        for value, free in zip(t, self.frees):
            gamma = gamma + value * free.direction
        return gamma

    def entry_expansion(self, i: int, j: int):
        """(constant, {free index: coefficient}) for one matrix entry."""
        coeffs = {
            v: free.direction[i, j]
            for v, free in enumerate(self.frees)
            if free.direction[i, j] != 0
        }
        return self.gamma_obs[i, j], coeffs

    def to_debug_dict(self) -> dict:
        entries = []
        for i in range(self.size):
            row = []
            for j in range(self.size):
                const, coeffs = self.entry_expansion(i, j)
                row.append(
                    {
                        "const": [const.real, const.imag],
                        "terms": [
                            {"free": self.frees[v].describe(), "coeff": [c.real, c.imag]}
                            for v, c in sorted(coeffs.items())
                        ],
                    }
                )
            entries.append(row)
        return {
            "policy": self.policy,
            "words": [repr(w) for w in self.words],
            "folded_inputs": list(self.folded_inputs),
            "pins": [
                {"label": p.describe(), "value": p.value} for p in self.pins
            ],
            "frees": [f.describe() for f in self.frees],
            "dropped_frees": list(self.dropped_frees),
            "entries": entries,
        }


def _merge_alice(a, b):
    counts: dict[int, int] = {}
    for x, p in itertools.chain(a, b):
        counts[x] = counts.get(x, 0) + p
    return tuple(sorted(counts.items()))


def _fold_alice(alice, folded_inputs):
    out = []
    for x, p in alice:
        q = p % 2 if folded_inputs[x] else p
        if q:
            out.append((x, q))
    return tuple(out)


def _canonical_word(word):
    """Canonical orientation of a Bob word: lexicographic minimum of the
    word and its reversal.  Returns (canonical, +1 or -1)."""
    rev = word[::-1]
    if word <= rev:
        return word, 1
    return rev, -1


def _hermitian_inner(a: Array, b: Array) -> float:
    return float(np.real(np.vdot(a, b)))


def _orthonormalize_tracking(candidates):
    """Gram-Schmidt over Hermitian matrices with coefficient tracking.

    ``candidates`` is a list of (label, matrix).  Returns kept orthonormal
    matrices together with their expansions over the original candidates as
    lists of (label, weight).
    """
    norms = [np.linalg.norm(m) for _, m in candidates]
    kept_vecs: list[Array] = []
    kept_coeffs: list[Array] = []
    kept_index: list[int] = []
    n = len(candidates)
    for idx, (_, matrix) in enumerate(candidates):
        if norms[idx] < 1e-14:
            continue
        v = matrix / norms[idx]
        c = np.zeros(n)
        c[idx] = 1.0 / norms[idx]
        for _ in range(2):
            for basis_vec, basis_coeff in zip(kept_vecs, kept_coeffs):
                w = _hermitian_inner(basis_vec, v)
                v = v - w * basis_vec
                c = c - w * basis_coeff
        nv = np.linalg.norm(v)
        if nv > BASIS_KEEP_TOL:
            kept_vecs.append(v / nv)
            kept_coeffs.append(c / nv)
            kept_index.append(idx)
    expansions = []
    for coeff in kept_coeffs:
        expansion = [
            (candidates[i][0], float(w))
            for i, w in enumerate(coeff)
            if abs(w) > COEFF_SNAP_TOL
        ]
        expansions.append(expansion)
    return kept_vecs, expansions


def _lr_observable_basis(bob_operators: Sequence[Operator], dim_b: int):
    """Orthonormal basis of span{1, B_y^tau} plus an orthonormal complement.

    Powers are generated up to the space dimension (higher powers are
    linearly dependent by the characteristic polynomial) and reduced by
    Gram-Schmidt with expansion tracking, so every basis element knows how
    to write itself over identity and pure power words.  The complement is
    the singular-value null space of the kept span written in an
    orthonormal Hermitian coordinate system; completing by rank rather
    than by projecting each remaining element in sequence avoids the noise
    buildup that otherwise produces spurious near-duplicate directions at
    large truncation.
    """
    candidates = [((_IDENTITY_LABEL, 0), np.eye(dim_b, dtype=complex))]
    running = [np.eye(dim_b, dtype=complex) for _ in bob_operators]
    for tau in range(1, dim_b + 1):
        for y, op in enumerate(bob_operators):
            running[y] = running[y] @ op.entries
            candidates.append(((y, tau), running[y].copy()))
    vecs, expansions = _orthonormalize_tracking(candidates)
    elements = [
        LrBasisElement(Operator(v), [(lab[0], lab[1], w) for lab, w in exp])
        for v, exp in zip(vecs, expansions)
    ]
    gm = gell_mann_basis(dim_b).elements
    gm_stack = np.stack([e.entries for e in gm])
    coords = np.array(
        [
            [float(np.real(np.vdot(e.entries, v))) for e in gm]
            for v in vecs
        ]
    )
    _, _, vt = np.linalg.svd(coords)
    comp_mats = np.einsum("ck,kij->cij", vt[len(vecs):], gm_stack)
    complement = tuple(
        Operator((m + m.conj().T) / 2) for m in comp_mats
    )
    return tuple(elements), complement


def _snap(z: complex) -> complex:
    re = 0.0 if abs(z.real) < COEFF_SNAP_TOL else z.real
    im = 0.0 if abs(z.imag) < COEFF_SNAP_TOL else z.imag
    return complex(re, im)


class _PatternAccumulator:
    """Collects per-entry coefficients of one unknown into a Hermitian matrix."""

    def __init__(self, k: int):
        self.matrix = np.zeros((k, k), dtype=complex)

    def add(self, i: int, j: int, coeff: complex):
        if i == j:
            if abs(coeff.imag) > VALUE_IMAG_ATOL:
                raise ConfigurationError(
                    f"diagonal coefficient {coeff} is not real"
                )
            self.matrix[i, i] += coeff.real
        else:
            self.matrix[i, j] += coeff
            self.matrix[j, i] += np.conj(coeff)


def _prune_free_directions(order, patterns):
    """Drop directions that are real-linear combinations of earlier ones."""
    kept_keys = []
    dropped_keys = []
    basis: list[Array] = []
    for key in order:
        mat = patterns[key].matrix
        norm = np.linalg.norm(mat)
        if norm < 1e-14:
            dropped_keys.append(key)
            continue
        v = mat / norm
        for b in basis:
            v = v - _hermitian_inner(b, v) * b
        residual = np.linalg.norm(v)
        if residual > FREE_PRUNE_TOL:
            basis.append(v / residual)
            kept_keys.append(key)
        else:
            dropped_keys.append(key)
    return kept_keys, dropped_keys


def build_template(string_set: StringSet, bob_operators, policy: str, source) -> MomentTemplate:
    """Compile a string set against a data source under a policy.

    For every entry (i, j) the Bob-side product is computed as a matrix (or
    kept as a word for symbolic Gaussian sources) and the merged Alice word
    is classified: trivial and single-input words are observable per the
    policy, words mixing inputs are free.  When every outcome label of an
    input is +-1, even multiplicities of that input cancel before
    classification (its square acts as the identity in the model class
    under test, and label powers collapse on data).
    """
    if policy not in POLICIES:
        raise ConfigurationError(f"unknown policy {policy!r}, expected one of {POLICIES}")
    symbolic = bool(getattr(source, "symbolic", False))
    bob_operators = tuple(bob_operators)
    words = string_set.words
    k = len(words)
    n_inputs = source.n_inputs
    if string_set.max_alice_index >= n_inputs:
        raise ConfigurationError(
            f"string set references input {string_set.max_alice_index} but the "
            f"source has {n_inputs}"
        )
    if string_set.max_bob_index >= len(bob_operators):
        raise ConfigurationError(
            f"string set references Bob operator {string_set.max_bob_index} but "
            f"{len(bob_operators)} were given"
        )

    if symbolic:
        if policy == LOCAL_RESTRICTED:
            raise ConfigurationError(
                "the local-restricted policy needs a finite-dimensional Bob algebra"
            )
        if not all(isinstance(b, str) for b in bob_operators):
            raise ConfigurationError("symbolic sources take Bob operator names, not matrices")
        dim_b = None
        bob_basis = None
        lr_basis = None
        complement = ()
    else:
        if not all(isinstance(b, Operator) for b in bob_operators):
            raise ConfigurationError("finite-dimensional sources take Operator instances")
        dim_b = source.dim_b
        for b in bob_operators:
            if b.dim != dim_b:
                raise ConfigurationError(
                    f"Bob operator dimension {b.dim} does not match the source ({dim_b})"
                )
            if not b.hermitian:
                raise ConfigurationError("Bob operators must be Hermitian")
        bob_basis = gell_mann_basis(dim_b)
        if policy == LOCAL_RESTRICTED:
            lr_basis, complement = _lr_observable_basis(bob_operators, dim_b)
        else:
            lr_basis, complement = None, ()

    folded_inputs = []
    for x in range(n_inputs):
        outcomes = source.alice_outcomes(x)
        folded_inputs.append(
            outcomes is not None
            and all(abs(abs(a) - 1.0) <= DICHOTOMIC_ATOL for a in outcomes)
        )
    folded_inputs = tuple(folded_inputs)

    word_pins: dict[tuple, dict] = {}
    element_pins: dict[tuple, dict] = {}
    free_coeffs: dict[tuple, _PatternAccumulator] = {}

    def add_free(key, i, j, coeff):
        coeff = _snap(coeff)
        if coeff == 0:
            return
        if key not in free_coeffs:
            free_coeffs[key] = _PatternAccumulator(k)
        free_coeffs[key].add(i, j, coeff)

    def pin_word(alice, bob_word, i, j):
        canon, orient = _canonical_word(bob_word)
        key = (alice, canon)
        if key not in word_pins:
            if symbolic:
                names = tuple(bob_operators[t] for t in canon)
                value = source.word_moment(alice, names)
            else:
                value = source.moment(alice, bob_word_operator(canon, bob_operators, dim_b))
            word_pins[key] = {"value": complex(value), "positions": []}
        word_pins[key]["positions"].append((i, j, orient))

    def pin_elements(alice, matrix, i, j):
        """Project onto the observable subspace, route the rest to frees."""
        approx = np.zeros_like(matrix)
        for idx, el in enumerate(lr_basis):
            z = _snap(np.vdot(el.matrix.entries, matrix))
            if z != 0:
                key = (alice, idx)
                if key not in element_pins:
                    value = source.moment(alice, el.matrix)
                    if abs(value.imag) > VALUE_IMAG_ATOL:
                        raise ConfigurationError(
                            f"observable element moment {value} is not real"
                        )
                    element_pins[key] = {
                        "value": value.real,
                        "pattern": _PatternAccumulator(k),
                    }
                element_pins[key]["pattern"].add(i, j, z)
                approx += z * el.matrix.entries
        for idx, el in enumerate(complement):
            z = _snap(np.vdot(el.entries, matrix))
            if z != 0:
                add_free((alice, "complement", idx), i, j, z)
                approx += z * el.entries
        scale = max(1.0, float(np.max(np.abs(matrix))))
        if np.max(np.abs(approx - matrix)) > EXPANSION_RESIDUAL_TOL * scale:
            raise ConfigurationError("basis expansion residual above tolerance")

    for i in range(k):
        for j in range(i, k):
            alice_raw = _merge_alice(words[i].alice, words[j].alice)
            bob_word = tuple(reversed(words[i].bob)) + words[j].bob
            alice = _fold_alice(alice_raw, folded_inputs)
            distinct = len(alice)
            if symbolic:
                if distinct <= 1:
                    pin_word(alice, bob_word, i, j)
                elif bob_word:
                    raise ConfigurationError(
                        "unobservable cross-input moments must carry an empty Bob "
                        "word for symbolic sources"
                    )
                else:
                    add_free((alice, "scalar", 0), i, j, 1.0)
                continue
            if distinct == 0 or (distinct == 1 and policy == FULL):
                pin_word(alice, bob_word, i, j)
            elif distinct == 1:
                matrix = bob_word_operator(bob_word, bob_operators, dim_b).entries
                pin_elements(alice, matrix, i, j)
            else:
                matrix = bob_word_operator(bob_word, bob_operators, dim_b).entries
                approx = np.zeros_like(matrix)
                for idx, e in enumerate(bob_basis.elements):
                    z = _snap(np.vdot(e.entries, matrix))
                    if z != 0:
                        add_free((alice, "gm", idx), i, j, z)
                        approx += z * e.entries
                scale = max(1.0, float(np.max(np.abs(matrix))))
                if np.max(np.abs(approx - matrix)) > EXPANSION_RESIDUAL_TOL * scale:
                    raise ConfigurationError("basis expansion residual above tolerance")

    pins: list[PinComponent] = []
    for (alice, canon), data in sorted(word_pins.items()):
        value = data["value"]
        chiral = canon != canon[::-1]
        if not chiral and abs(value.imag) > VALUE_IMAG_ATOL:
            raise ConfigurationError(
                f"palindromic word moment {value} has a non-vanishing imaginary part"
            )
        re_pattern = _PatternAccumulator(k)
        im_pattern = _PatternAccumulator(k) if chiral else None
        for i, j, orient in data["positions"]:
            re_pattern.add(i, j, 1.0)
            if chiral:
                if i == j:
                    raise ConfigurationError("chiral word pinned on the diagonal")
                im_pattern.matrix[i, j] += orient * 1j
                im_pattern.matrix[j, i] += orient * -1j
        pins.append(
            PinComponent("word", alice, canon, None, "re", value.real, re_pattern.matrix)
        )
        if chiral:
            pins.append(
                PinComponent("word", alice, canon, None, "im", value.imag, im_pattern.matrix)
            )
    for (alice, idx), data in sorted(element_pins.items()):
        pins.append(
            PinComponent(
                "element", alice, None, idx, "re", data["value"], data["pattern"].matrix
            )
        )

    order = sorted(free_coeffs.keys())
    kept_keys, dropped_keys = _prune_free_directions(order, free_coeffs)
    frees = [
        FreeDirection(key[0], key[1], key[2], free_coeffs[key].matrix) for key in kept_keys
    ]
    dropped = [
        FreeDirection(key[0], key[1], key[2], free_coeffs[key].matrix).describe()
        for key in dropped_keys
    ]

    return MomentTemplate(
        words=words,
        policy=policy,
        symbolic=symbolic,
        bob_operators=bob_operators,
        dim_b=dim_b,
        n_inputs=n_inputs,
        folded_inputs=folded_inputs,
        pins=pins,
        frees=frees,
        dropped_frees=dropped,
        lr_basis=lr_basis,
        complement=complement,
    )


def instantiate_true(template: MomentTemplate, source) -> Array:
    """The actual Gram matrix <S_i^dag S_j> of the template's words.

    Every entry, free or pinned, is evaluated on the real model with
    Alice's true operators (no commutation canonicalization beyond the
    stored word order), so the result is a genuine Gram matrix and always
    positive semidefinite up to roundoff.
    """
    words = template.words
    k = len(words)
    gram = np.zeros((k, k), dtype=complex)
    if template.symbolic:
        if not isinstance(source, GaussianSource):
            raise ConfigurationError("a symbolic template needs a Gaussian source")
        seqs = []
        for w in words:
            seq = []
            for x, p in w.alice:
                seq.extend([x] * p)
            seq.extend(source.bob_index(template.bob_operators[t]) for t in w.bob)
            seqs.append(tuple(seq))
        for i in range(k):
            for j in range(i, k):
                gram[i, j] = source.sequence_moment(seqs[i][::-1] + seqs[j])
                gram[j, i] = np.conj(gram[i, j])
        return gram
    if not isinstance(source, StateSource):
        raise ConfigurationError(
            "instantiating true moments needs a source with actual Alice observables"
        )
    dim_b = source.dim_b
    ops = [
        tensor(
            source.alice_word_operator(w.alice),
            bob_word_operator(w.bob, template.bob_operators, dim_b),
        )
        for w in words
    ]
    for i in range(k):
        for j in range(i, k):
            gram[i, j] = source.state.expectation(ops[i].dagger() @ ops[j])
            gram[j, i] = np.conj(gram[i, j])
    return gram
