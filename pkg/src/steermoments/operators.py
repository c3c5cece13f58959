"""Finite-dimensional complex operator algebra.

Construction of standard observables (Pauli matrices, truncated bosonic
quadratures), tensor products, Hermitian-basis expansions, and spectral
utilities. Everything downstream builds on the two value types here:
:class:`Operator` (a dense complex square matrix with cached Hermiticity)
and :class:`HermitianBasis` (a real-linear basis of Hermitian matrices
under the trace inner product).
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError

#: Absolute entrywise tolerance for Hermiticity checks.
HERMITIAN_ATOL = 1e-10

#: Maximum allowed residual when expanding a matrix over a basis.
EXPANSION_RESIDUAL_TOL = 1e-9

#: Expansion coefficients below this magnitude are snapped to zero.
COEFF_SNAP_TOL = 1e-12


class Operator:
    """A dense complex square matrix with Hermiticity metadata.

    Instances are immutable: the entry array is copied on construction and
    marked read-only, so operators can be shared freely across threads.

    :param entries: square array-like of complex entries.
    :param name: optional short label (e.g. ``"X"`` or ``"q"``), used when
        words of operators are reported in witnesses and debug dumps.
    """

    __slots__ = ("entries", "dim", "hermitian", "name")

    def __init__(self, entries, name: str | None = None):
        arr = np.array(entries, dtype=complex)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ConfigurationError(
                f"operator entries must be a square matrix, got shape {arr.shape}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)
        object.__setattr__(self, "dim", arr.shape[0])
        herm = bool(np.max(np.abs(arr - arr.conj().T)) <= HERMITIAN_ATOL) if arr.size else True
        object.__setattr__(self, "hermitian", herm)
        object.__setattr__(self, "name", name)

    def __setattr__(self, key, value):
        raise AttributeError("Operator is immutable")

    def __repr__(self) -> str:
        label = self.name or "Operator"
        return f"<{label} dim={self.dim} hermitian={self.hermitian}>"

    def __matmul__(self, other: "Operator") -> "Operator":
        if self.dim != other.dim:
            raise ConfigurationError(
                f"dimension mismatch in product: {self.dim} vs {other.dim}"
            )
        return Operator(self.entries @ other.entries)

    def __add__(self, other: "Operator") -> "Operator":
        return Operator(self.entries + other.entries)

    def __sub__(self, other: "Operator") -> "Operator":
        return Operator(self.entries - other.entries)

    def __mul__(self, scalar: complex) -> "Operator":
        return Operator(self.entries * scalar)

    __rmul__ = __mul__

    def dagger(self) -> "Operator":
        return Operator(self.entries.conj().T, name=self.name)

    def trace(self) -> complex:
        return complex(np.trace(self.entries))

    def power(self, k: int) -> "Operator":
        """Matrix power with non-negative integer exponent."""
        if k < 0 or int(k) != k:
            raise ConfigurationError(f"power must be a non-negative integer, got {k}")
        return Operator(np.linalg.matrix_power(self.entries, int(k)))

    def renamed(self, name: str) -> "Operator":
        return Operator(self.entries, name=name)

    def allclose(self, other: "Operator", atol: float = 1e-12) -> bool:
        return self.dim == other.dim and bool(
            np.allclose(self.entries, other.entries, atol=atol, rtol=0.0)
        )


def identity(dim: int) -> Operator:
    return Operator(np.eye(dim), name="1")


def pauli_set() -> tuple[Operator, Operator, Operator, Operator]:
    """The 2x2 Pauli matrices and identity, as ``(X, Y, Z, I)``."""
    x = Operator([[0, 1], [1, 0]], name="X")
    y = Operator([[0, -1j], [1j, 0]], name="Y")
    z = Operator([[1, 0], [0, -1]], name="Z")
    return x, y, z, identity(2)


def ladder(d: int) -> Operator:
    """Truncated annihilation operator: sqrt(n) on the first superdiagonal."""
    a = np.zeros((d, d), dtype=complex)
    for n in range(1, d):
        a[n - 1, n] = np.sqrt(n)
    return Operator(a, name="a")


def generalized_quadratures(N: int, d: int) -> tuple[Operator, Operator]:
    """Order-N quadrature pair on a d-dimensional Fock truncation.

    q = (a^dag^N + a^N)/sqrt(2) and p = i (a^dag^N - a^N)/sqrt(2). Both are
    Hermitian by construction. The commutator [q, p] equals i times the
    identity away from the truncation edge; the deviation is confined to the
    top N Fock levels and is controlled by re-running at a larger d.

    :raises ConfigurationError: if ``d <= N`` (no nonzero matrix elements
        would survive the truncation).
    """
    if N < 1 or int(N) != N:
        raise ConfigurationError(f"N must be a positive integer, got {N}")
    if d <= N:
        raise ConfigurationError(f"truncation d={d} too small for N={N}; need d >= N+1")
    a_n = ladder(d).power(N).entries
    q = Operator((a_n.conj().T + a_n) / np.sqrt(2), name="q" if N == 1 else f"q{N}")
    p = Operator(1j * (a_n.conj().T - a_n) / np.sqrt(2), name="p" if N == 1 else f"p{N}")
    return q, p


def tensor(a: Operator, b: Operator) -> Operator:
    """Kronecker product A (x) B."""
    name = None
    if a.name and b.name:
        name = f"{a.name}(x){b.name}"
    return Operator(np.kron(a.entries, b.entries), name=name)


class HermitianBasis:
    """A list of Hermitian operators spanning (part of) Hermitian matrix space.

    The Gram matrix G_jk = Tr[E_j E_k] is computed once; expansions solve the
    Gram linear system, so the basis need not be orthonormal (the default
    :func:`gell_mann_basis` is).
    """

    __slots__ = ("dim", "elements", "gram", "gram_condition", "_gram_factor")

    def __init__(self, elements: Sequence[Operator]):
        if not elements:
            raise ConfigurationError("basis needs at least one element")
        dim = elements[0].dim
        for e in elements:
            if e.dim != dim:
                raise ConfigurationError("basis elements must share one dimension")
            if not e.hermitian:
                raise ConfigurationError("basis elements must be Hermitian")
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "elements", tuple(elements))
        n = len(elements)
        gram = np.empty((n, n), dtype=float)
        for j in range(n):
            for k in range(j, n):
                val = np.trace(elements[j].entries @ elements[k].entries).real
                gram[j, k] = val
                gram[k, j] = val
        gram.setflags(write=False)
        object.__setattr__(self, "gram", gram)
        cond = float(np.linalg.cond(gram))
        object.__setattr__(self, "gram_condition", cond)
        if not np.isfinite(cond) or cond > 1e12:
            raise ConfigurationError(
                f"basis Gram matrix is singular or ill-conditioned (cond={cond:.3g})"
            )
        object.__setattr__(self, "_gram_factor", np.linalg.inv(gram))

    def __setattr__(self, key, value):
        raise AttributeError("HermitianBasis is immutable")

    def __len__(self) -> int:
        return len(self.elements)

    @property
    def complete(self) -> bool:
        return len(self.elements) == self.dim * self.dim


def gell_mann_basis(dim: int) -> HermitianBasis:
    """Orthonormal Hermitian basis with Tr[E_j E_k] = delta_jk.

    Element 0 is the normalized identity 1/sqrt(dim); the rest are the
    generalized Gell-Mann generators (symmetric, antisymmetric, diagonal),
    each normalized to unit Frobenius norm. The identity-first ordering is
    relied on by the template compiler to fold constant contributions.
    """
    if dim < 1:
        raise ConfigurationError(f"dimension must be positive, got {dim}")
    elems: list[Operator] = [Operator(np.eye(dim) / np.sqrt(dim), name="E0")]
    idx = 1
    for i in range(dim):
        for j in range(i + 1, dim):
            sym = np.zeros((dim, dim), dtype=complex)
            sym[i, j] = sym[j, i] = 1 / np.sqrt(2)
            elems.append(Operator(sym, name=f"E{idx}"))
            idx += 1
            asym = np.zeros((dim, dim), dtype=complex)
            asym[i, j] = -1j / np.sqrt(2)
            asym[j, i] = 1j / np.sqrt(2)
            elems.append(Operator(asym, name=f"E{idx}"))
            idx += 1
    for l in range(1, dim):
        diag = np.zeros(dim, dtype=complex)
        diag[:l] = 1
        diag[l] = -l
        diag /= np.sqrt(l * (l + 1))
        elems.append(Operator(np.diag(diag), name=f"E{idx}"))
        idx += 1
    return HermitianBasis(elems)


def expand_in_basis(m: Operator, basis: HermitianBasis) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients (c, d) with M = sum_k (c_k + i d_k) E_k.

    Solves the Gram system under the trace inner product and verifies the
    reconstruction residual. Coefficients smaller than ``COEFF_SNAP_TOL``
    in magnitude are snapped to zero so downstream constraint data stays
    sparse and reproducible.

    :raises ConfigurationError: if M's dimension does not match the basis or
        the residual exceeds ``EXPANSION_RESIDUAL_TOL``.
    """
    if m.dim != basis.dim:
        raise ConfigurationError(f"dimension mismatch: operator {m.dim}, basis {basis.dim}")
    t = np.array([np.trace(e.entries @ m.entries) for e in basis.elements])
    z = basis._gram_factor @ t
    recon = sum(zk * e.entries for zk, e in zip(z, basis.elements))
    residual = float(np.max(np.abs(m.entries - recon)))
    scale = max(1.0, float(np.max(np.abs(m.entries))))
    if residual > EXPANSION_RESIDUAL_TOL * scale:
        raise ConfigurationError(
            f"basis expansion residual {residual:.3g} exceeds {EXPANSION_RESIDUAL_TOL:.1g} "
            "at the operator's scale; the basis does not span this operator"
        )
    c = z.real.copy()
    d = z.imag.copy()
    c[np.abs(c) < COEFF_SNAP_TOL] = 0.0
    d[np.abs(d) < COEFF_SNAP_TOL] = 0.0
    return c, d


def min_eigenvalue(m: Operator) -> float:
    """Smallest eigenvalue of a Hermitian operator.

    :raises ConfigurationError: if the operator fails the Hermiticity check.
    """
    if not m.hermitian:
        raise ConfigurationError("min_eigenvalue requires a Hermitian operator")
    return float(np.linalg.eigvalsh(m.entries)[0])


def product(ops: Iterable[Operator], dim: int | None = None) -> Operator:
    """Ordered matrix product of a sequence of operators; identity if empty."""
    ops = list(ops)
    if not ops:
        if dim is None:
            raise ConfigurationError("empty product needs an explicit dimension")
        return identity(dim)
    out = ops[0].entries
    for op in ops[1:]:
        out = out @ op.entries
    return Operator(out)
