"""Completion feasibility as a semidefinite program.

The question "can the free unknowns make the moment matrix positive
semidefinite" is decided by maximizing lambda subject to
Gamma(t) - lambda*1 >= 0.  A negative optimum means no completion exists.
The conic dual of this program produces a unit-trace PSD matrix Z that is
orthogonal to every free direction; its pairing with the observed part of
the matrix certifies the optimum and is the raw material for witness
extraction.

Everything runs on the real symmetric embedding of the complex Hermitian
problem.  The solver is a Nesterov-Todd-scaled predictor-corrector
interior-point method written for the small dense problems this library
produces (embedded sizes of a few dozen); it is deterministic and carries
no randomized pivoting, so repeated runs give identical output.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .errors import ConfigurationError, NumericalTroubleError
from .moments import MomentTemplate

Array = np.ndarray

#: Input matrices must be symmetric/Hermitian to this absolute tolerance.
SYMMETRY_ATOL = 1e-12

#: Default duality-gap tolerance; solve() accepts values in TOL_RANGE.
DEFAULT_TOL = 1e-8
TOL_RANGE = (1e-10, 1e-4)

MAX_ITERATIONS = 200

#: Sign decisions use a dead band of +-DECISION_BAND * tol around zero.
DECISION_BAND = 10.0

#: Fraction of the step to the cone boundary taken each iteration.
STEP_FRACTION = 0.97

#: A diagonal slot counts as free of the free directions below this.
GUARD_DIAG_ATOL = 1e-14

#: Singular values of the stacked (gamma_obs, F_1..F_m) matrix below this
#: relative cutoff mark directions annihilated by every completion.
FORCED_NULL_RTOL = 1e-11

#: Eigenvalues of a fully pinned sub-block below this relative cutoff mark
#: quadratic degeneracies (the block is an exact Gram matrix).
QUAD_NULL_RTOL = 1e-10

#: Residual threshold for the linear system that restricts the unknowns to
#: the face Gamma(t) v = 0.
FACE_RESIDUAL_ATOL = 1e-9

#: Iteration budget for the face pre-solve; it monitors an exact
#: eigenvalue and usually exits within a handful of iterations.
FACE_MAX_ITERATIONS = 60

#: Newton polish of a stalled run: step/convergence controls.
POLISH_MAX_STEPS = 40
POLISH_GRAD_TOL = 1e-11
POLISH_EIG_GAP = 1e-11

#: A run that would otherwise give up settles for its current iterate
#: when both residuals are within tol and the relative duality gap is
#: within this factor of tol (absolute gap also bounded, see _ipm).
#: Optima with coalescing eigenvalues plateau in exactly this state.
ENDGAME_GAP_FACTOR = 100.0

#: Dual certificate tolerances, re-checked independently of the solver.
CERT_PSD_FLOOR = -1e-8
CERT_TRACE_ATOL = 1e-8
CERT_ORTHOGONALITY_ATOL = 1e-7
CERT_GAP_ATOL = 1e-6

_STATUS_OPTIMAL = "optimal"
_STATUS_TROUBLE = "numerical-trouble"


def embed_hermitian(h: Array) -> Array:
    """Real symmetric embedding [[Re H, -Im H], [Im H, Re H]].

    H >= 0 exactly when the embedding is >= 0; every eigenvalue of H shows
    up twice on the embedded side.
    """
    h = np.asarray(h)
    re, im = h.real, h.imag
    return np.block([[re, -im], [im, re]])


def unembed_dual(x_e: Array) -> Array:
    """Recover the complex dual matrix from an embedded primal solution.

    Averages the redundant blocks and doubles, so the complex trace equals
    the embedded trace and pairings Tr[Z F] match Tr[X_e embed(F)].
    """
    n = x_e.shape[0]
    if n % 2:
        raise ConfigurationError("embedded matrix must have even size")
    k = n // 2
    a = (x_e[:k, :k] + x_e[k:, k:]) / 2
    b = (x_e[k:, :k] - x_e[:k, k:]) / 2
    z = a + 1j * b
    return (z + z.conj().T)


def _check_hermitian(m: Array, what: str) -> Array:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ConfigurationError(f"{what} must be a square matrix")
    if np.max(np.abs(m - m.conj().T)) > SYMMETRY_ATOL:
        raise ConfigurationError(f"{what} is not symmetric within {SYMMETRY_ATOL}")
    return m


class SdpProblem:
    """Data of one completion problem: Gamma(t) = gamma_obs + sum t_k F_k.

    Complex Hermitian input (detected by dtype) is embedded on
    construction; plain real symmetric input is used as-is.  ``pins``
    optionally carries (pattern, value, label) triples with
    gamma_obs = sum value * pattern, used for certification bookkeeping
    and witness extraction.
    """

    __slots__ = (
        "gamma_obs",
        "free_dirs",
        "labels",
        "pins",
        "complex_dim",
        "m",
        "_c_e",
        "_dirs_e",
        "_dir_norms",
    )

    def __init__(self, gamma_obs, free_dirs=(), *, labels=None, pins=None):
        free_dirs = tuple(free_dirs)
        is_complex = np.iscomplexobj(gamma_obs) or any(
            np.iscomplexobj(f) for f in free_dirs
        )
        gamma_obs = _check_hermitian(gamma_obs, "gamma_obs")
        k = gamma_obs.shape[0]
        for idx, f in enumerate(free_dirs):
            f = _check_hermitian(f, f"free direction {idx}")
            if f.shape != gamma_obs.shape:
                raise ConfigurationError("free directions must match gamma_obs in shape")
        if labels is None:
            labels = tuple(f"t{idx}" for idx in range(len(free_dirs)))
        labels = tuple(labels)
        if len(labels) != len(free_dirs):
            raise ConfigurationError("one label per free direction")
        self.gamma_obs = np.asarray(
            gamma_obs, dtype=complex if is_complex else float
        )
        self.free_dirs = tuple(
            np.asarray(f, dtype=complex if is_complex else float) for f in free_dirs
        )
        self.labels = labels
        self.pins = tuple(pins) if pins is not None else ()
        self.complex_dim = k if is_complex else None
        if is_complex:
            self._c_e = embed_hermitian(self.gamma_obs)
            self._dirs_e = [embed_hermitian(f) for f in self.free_dirs]
        else:
            self._c_e = np.asarray(self.gamma_obs, dtype=float).copy()
            self._dirs_e = [np.asarray(f, dtype=float).copy() for f in self.free_dirs]
        self.m = self._c_e.shape[0]
        norms = []
        basis: list[Array] = []
        for idx, d in enumerate(self._dirs_e):
            norm = np.linalg.norm(d)
            if norm < 1e-13:
                raise ConfigurationError(f"free direction {idx} vanishes")
            norms.append(norm)
            v = d / norm
            for b in basis:
                v = v - float(np.sum(b * v)) * b
            residual = np.linalg.norm(v)
            if residual < 1e-10:
                raise ConfigurationError("linear dependence among free directions")
            basis.append(v / residual)
        self._dir_norms = np.array(norms) if norms else np.zeros(0)

    @property
    def n_free(self) -> int:
        return len(self.free_dirs)

    def gamma_at(self, t) -> Array:
        """Gamma(t) on the complex (or plain real) side."""
        t = np.asarray(t, dtype=float)
        if t.shape != (self.n_free,):
            raise ConfigurationError(f"expected {self.n_free} free values")
        gamma = self.gamma_obs.copy()
        for value, f in zip(t, self.free_dirs):
            gamma = gamma + value * f
        return gamma


def problem_from_template(template: MomentTemplate) -> SdpProblem:
    """Package a compiled moment template as a solvable problem.

    Pin order is preserved, so the solution's dual multipliers ``mu`` align
    one-to-one with ``template.pins``.
    """
    return SdpProblem(
        template.gamma_obs,
        template.free_dirs(),
        labels=tuple(f.describe() for f in template.frees),
        pins=tuple((p.pattern, p.value, p.describe()) for p in template.pins),
    )


class SdpSolution:
    """Solver output: the optimum, its completion, and the dual certificate."""

    __slots__ = (
        "lambda_star",
        "t_star",
        "Z",
        "mu",
        "duality_gap",
        "status",
        "iterations",
        "residuals",
    )

    def __init__(
        self,
        *,
        lambda_star,
        t_star,
        Z,
        mu,
        duality_gap,
        status,
        iterations,
        residuals,
    ):
        self.lambda_star = float(lambda_star)
        self.t_star = np.asarray(t_star, dtype=float)
        self.Z = Z
        self.mu = np.asarray(mu, dtype=float)
        self.duality_gap = float(duality_gap)
        self.status = status
        self.iterations = int(iterations)
        self.residuals = dict(residuals)


def _max_step(m: Array, dm: Array) -> float:
    """Largest alpha with m + alpha*dm still in the cone (capped at 10)."""
    chol = np.linalg.cholesky(m)
    y = solve_triangular(chol, dm, lower=True)
    y = solve_triangular(chol, y.T, lower=True)
    lam_min = float(np.linalg.eigvalsh((y + y.T) / 2)[0])
    if lam_min > -1e-12:
        return 10.0
    return min(10.0, -1.0 / lam_min)


def _ipm(
    c: Array,
    a_mats: list[Array],
    b: Array,
    tol: float,
    *,
    max_iterations: int = MAX_ITERATIONS,
    watch=None,
):
    """Infeasible-start NT predictor-corrector on max b.y, C - sum y A >= 0.

    ``watch``, when given, is called with the current multiplier vector at
    the top of every iteration; returning True stops the run early with
    the iterate at hand (used by the face pre-solve, which monitors an
    exact feasibility quantity of its own and does not need residual
    convergence).

    A run that stalls, loses its step length, or hits the iteration cap
    does not raise immediately: if the iterate is residual-feasible on
    both sides and its remaining duality gap fits the certification
    budget, it is returned with ``gap_plateau`` set in the residuals.
    The reported gap stays honest; downstream certification re-measures
    it from the raw matrices.
    """
    n = c.shape[0]
    n_vars = len(a_mats)
    a_flat = np.array([a.ravel() for a in a_mats])
    x = np.eye(n) / n
    s = np.eye(n) * max(1.0, np.linalg.norm(c) / np.sqrt(n))
    y = np.zeros(n_vars)
    b_scale = 1.0 + np.linalg.norm(b)
    c_scale = 1.0 + np.linalg.norm(c)
    best_bounds = (-np.inf, np.inf)
    best_score = np.inf
    best_iteration = 0
    iteration = 0

    def trouble(reason: str):
        return NumericalTroubleError(
            f"solver failed to converge ({reason}); best objective bounds "
            f"[{best_bounds[0]:.6g}, {best_bounds[1]:.6g}]",
            best_bounds=best_bounds,
        )

    def settle(reason: str):
        # Before giving up, check whether the iterate at hand already
        # answers the question: residual-feasible on both sides with the
        # leftover gap inside the certification budget.  Optima whose
        # smallest eigenvalue coalesces stall in exactly this state, with
        # step lengths collapsing while the gap creeps instead of closing.
        r_dual_c = c - (a_flat.T @ y).reshape(n, n) - s
        r_primal_c = b - a_flat @ x.ravel()
        p_obj = float(np.sum(c * x))
        d_obj = float(b @ y)
        feas_p = np.linalg.norm(r_primal_c) / b_scale
        feas_d = np.linalg.norm(r_dual_c) / c_scale
        gap = abs(p_obj - d_obj) / (1.0 + abs(p_obj) + abs(d_obj))
        if (
            feas_p <= tol
            and feas_d <= tol
            and gap <= ENDGAME_GAP_FACTOR * tol
            and abs(p_obj - d_obj) <= 0.5 * CERT_GAP_ATOL
        ):
            return x, y, s, iteration, {
                "primal_residual": feas_p,
                "dual_residual": feas_d,
                "relative_gap": gap,
                "gap_plateau": True,
            }
        raise trouble(reason) from None

    for iteration in range(1, max_iterations + 1):
        r_dual = c - (a_flat.T @ y).reshape(n, n) - s
        r_primal = b - a_flat @ x.ravel()
        mu = float(np.sum(x * s)) / n
        p_obj = float(np.sum(c * x))
        d_obj = float(b @ y)
        feas_p = np.linalg.norm(r_primal) / b_scale
        feas_d = np.linalg.norm(r_dual) / c_scale
        gap = abs(p_obj - d_obj) / (1.0 + abs(p_obj) + abs(d_obj))
        score = max(feas_p, feas_d, gap)
        if score < best_score:
            best_score = score
            best_bounds = (min(d_obj, p_obj), max(d_obj, p_obj))
            best_iteration = iteration
        if watch is not None and watch(y):
            return x, y, s, iteration, {
                "primal_residual": feas_p,
                "dual_residual": feas_d,
                "relative_gap": gap,
                "early_exit": True,
            }
        if feas_p <= tol and feas_d <= tol and gap <= tol:
            return x, y, s, iteration, {
                "primal_residual": feas_p,
                "dual_residual": feas_d,
                "relative_gap": gap,
            }
        if iteration - best_iteration > 30:
            return settle("stalled")
        try:
            chol_x = np.linalg.cholesky(x)
            chol_s = np.linalg.cholesky(s)
        except np.linalg.LinAlgError:
            raise trouble("iterate left the cone") from None
        u_mat, sing, vt = np.linalg.svd(chol_s.T @ chol_x)
        del u_mat
        if sing[-1] < 1e-150:
            return settle("scaling point degenerate")
        g = (chol_x @ vt.T) / np.sqrt(sing)[None, :]
        w = g @ g.T
        waw = np.array([(w @ a @ w).ravel() for a in a_mats])
        schur = a_flat @ waw.T
        schur = (schur + schur.T) / 2
        try:
            schur_f = cho_factor(schur, lower=True)

            def schur_solve(rhs):
                return cho_solve(schur_f, rhs)

        except np.linalg.LinAlgError:
            # Near degenerate optima the Schur complement develops a
            # numerical null space; solve in its well-conditioned
            # eigenspace instead of giving up.
            schur_w, schur_v = np.linalg.eigh(schur)
            keep = schur_w > max(float(schur_w[-1]), 0.0) * 1e-14
            if not np.any(keep):
                return settle("singular reduced system")
            schur_v = schur_v[:, keep]
            schur_inv_w = 1.0 / schur_w[keep]

            def schur_solve(rhs):
                return schur_v @ (schur_inv_w * (schur_v.T @ rhs))

        w_rd_w = w @ r_dual @ w
        s_inv_half = solve_triangular(chol_s, np.eye(n), lower=True)
        s_inv = s_inv_half.T @ s_inv_half

        def newton(r_center):
            rhs = r_primal - a_flat @ (r_center - w_rd_w).ravel()
            dy = schur_solve(rhs)
            ds = r_dual - (a_flat.T @ dy).reshape(n, n)
            ds = (ds + ds.T) / 2
            dx = r_center - w @ ds @ w
            dx = (dx + dx.T) / 2
            return dy, dx, ds

        dy_aff, dx_aff, ds_aff = newton(-x)
        alpha_p = min(1.0, STEP_FRACTION * _max_step(x, dx_aff))
        alpha_d = min(1.0, STEP_FRACTION * _max_step(s, ds_aff))
        mu_aff = float(
            np.sum((x + alpha_p * dx_aff) * (s + alpha_d * ds_aff))
        ) / n
        sigma = min(1.0, max(mu_aff / mu, 0.0) ** 3)
        correction = dx_aff @ ds_aff @ s_inv
        r_center = sigma * mu * s_inv - x - (correction + correction.T) / 2
        dy, dx, ds = newton(r_center)
        fraction = min(
            0.999, max(STEP_FRACTION, 0.9 + 0.09 * min(alpha_p, alpha_d))
        )
        alpha_p = min(1.0, fraction * _max_step(x, dx))
        alpha_d = min(1.0, fraction * _max_step(s, ds))
        if max(alpha_p, alpha_d) < 1e-10:
            return settle("step length collapsed")
        # The eigenvalue-based step bound can be slightly optimistic in
        # ill-conditioned endgames; back off until both factors exist.
        for _ in range(40):
            x_new = x + alpha_p * dx
            x_new = (x_new + x_new.T) / 2
            s_new = s + alpha_d * ds
            s_new = (s_new + s_new.T) / 2
            try:
                np.linalg.cholesky(x_new)
                np.linalg.cholesky(s_new)
                break
            except np.linalg.LinAlgError:
                alpha_p *= 0.5
                alpha_d *= 0.5
        else:
            return settle("step length collapsed")
        x = x_new
        y = y + alpha_d * dy
        s = s_new
    return settle("iteration cap reached")


def _forced_null_split(problem: SdpProblem):
    """Split off directions annihilated by gamma_obs and every free F_k.

    Operator identities among the words (a product collapsing to a
    combination of other words) leave a vector v with Gamma(t) v = 0 for
    every t.  Such a vector caps the optimum at zero and destroys strict
    complementarity exactly where the sign of lambda* matters, which
    stalls interior-point iterations.  Quotienting it out restores a
    well-conditioned boundary; the discarded block re-enters the dual
    solution as an explicit rank-one certificate.

    Returns (range_basis, null_basis) as column matrices, or None when
    the stacked constraint data has full column rank.
    """
    stack = np.vstack([problem.gamma_obs, *problem.free_dirs])
    _, svals, vh = np.linalg.svd(stack, full_matrices=False)
    top = float(svals[0]) if svals.size else 0.0
    rank = int(np.sum(svals > FORCED_NULL_RTOL * max(1.0, top)))
    if rank == problem.gamma_obs.shape[0]:
        return None
    basis = vh.conj().T
    return basis[:, :rank], basis[:, rank:]


def _pinned_block_null(problem: SdpProblem):
    """Null vectors of a fully pinned sub-block of gamma_obs.

    Finds an index set whose mutual entries carry no free direction at
    all.  On that set the observed block is final, and if it is an exact
    Gram matrix its null vectors v satisfy v' Gamma(t) v = v' gamma_obs v
    for every t, capping the optimum at (essentially) zero.  Such a cap
    destroys strict complementarity right where the sign decision
    happens, which is the one regime where the interior-point iteration
    struggles; the caller then resolves the optimum through the face
    Gamma(t) v = 0 instead.

    Returns the null vectors as columns, or None.
    """
    gamma = problem.gamma_obs
    k = gamma.shape[0]
    if k < 2:
        return None
    touched = np.zeros((k, k), dtype=bool)
    for f in problem.free_dirs:
        touched |= np.abs(f) > GUARD_DIAG_ATOL
    alive = list(range(k))
    while alive:
        counts = [int(np.sum(touched[np.ix_([i], alive)])) for i in alive]
        worst = max(counts)
        if worst == 0:
            break
        alive.pop(counts.index(worst))
    if len(alive) < 2:
        return None
    block = gamma[np.ix_(alive, alive)]
    block = (block + block.conj().T) / 2
    eigvals, eigvecs = np.linalg.eigh(block)
    scale = max(1.0, float(np.max(np.abs(eigvals))))
    sel = np.abs(eigvals) <= QUAD_NULL_RTOL * scale
    if not np.any(sel):
        return None
    v0 = np.zeros((k, int(np.sum(sel))), dtype=gamma.dtype)
    v0[alive, :] = eigvecs[:, sel]
    return v0


def _complement_basis(v0: Array) -> Array:
    """Orthonormal basis of the complement of span(v0), as columns.

    Standard basis vectors outside the support of v0 are kept verbatim so
    that diagonal slots untouched by free directions stay recognizable
    after projection (the boundedness guard relies on that).
    """
    k, q = v0.shape
    supp = [i for i in range(k) if np.linalg.norm(v0[i, :]) > 1e-12]
    rest = [i for i in range(k) if i not in supp]
    p = np.zeros((k, k - q), dtype=v0.dtype)
    for col, i in enumerate(rest):
        p[i, col] = 1.0
    if supp:
        u_s, _, _ = np.linalg.svd(v0[supp, :], full_matrices=True)
        tail = u_s[:, q:]
        p[np.ix_(supp, range(len(rest), k - q))] = tail
    return p


def _solve_on_face(problem: SdpProblem, v0: Array, tol: float):
    """Optimize restricted to completions with Gamma(t) v0 = 0.

    Any PSD completion must annihilate v0 (its quadratic form there is
    pinned at zero), so lambda = 0 is feasible exactly when this face
    contains a PSD point.  The face is the affine set of t solving
    sum_k t_k F_k v0 = -gamma_obs v0; on it the problem decouples and the
    v0 block contributes a flat zero eigenvalue, leaving a smaller,
    generically nondegenerate program over the complement.

    The run maximizes the smallest eigenvalue on the face, but tracks
    that eigenvalue directly instead of relying on solver residuals: the
    iteration stops as soon as some face point is PSD, and the best face
    point seen survives even if the ascent itself stalls.  Returns
    (lambda_face, t_face, iterations, residuals), or None when the face
    is empty or unusable; lambda_face is the exact smallest eigenvalue at
    t_face, hence a certified lower bound on min(0, lambda_star).
    """
    gamma = problem.gamma_obs
    dirs = problem.free_dirs
    k, q = v0.shape
    m = len(dirs)
    rhs = -(gamma @ v0)
    rhs_vec = np.concatenate([rhs.ravel().real, rhs.ravel().imag])
    if m:
        cols = np.array([(f @ v0).ravel() for f in dirs]).T
        a_sys = np.vstack([cols.real, cols.imag])
        t_p, _, _, _ = np.linalg.lstsq(a_sys, rhs_vec, rcond=None)
        residual = np.linalg.norm(a_sys @ t_p - rhs_vec)
    else:
        a_sys = np.zeros((rhs_vec.size, 0))
        t_p = np.zeros(0)
        residual = np.linalg.norm(rhs_vec)
    if residual > FACE_RESIDUAL_ATOL * (1.0 + np.linalg.norm(rhs_vec)):
        return None
    if m:
        _, svals, vh = np.linalg.svd(a_sys, full_matrices=True)
        top = float(svals[0]) if svals.size else 0.0
        rank = int(np.sum(svals > 1e-11 * max(1.0, top)))
        null_basis = vh[rank:].T
    else:
        null_basis = np.zeros((0, 0))
    p = _complement_basis(v0)
    gamma_p = gamma.copy()
    for value, f in zip(t_p, dirs):
        gamma_p = gamma_p + value * f
    g_face = p.conj().T @ gamma_p @ p
    g_face = (g_face + g_face.conj().T) / 2
    complex_mode = problem.complex_dim is not None
    c_e = embed_hermitian(g_face) if complex_mode else np.asarray(g_face.real)
    kept = []
    face_dirs = []
    dirs_e = []
    norm_list = []
    gs: list[Array] = []
    for col in range(null_basis.shape[1]):
        f_comb = np.zeros_like(gamma)
        for j in range(m):
            coeff = null_basis[j, col]
            if coeff != 0.0:
                f_comb = f_comb + coeff * dirs[j]
        fr = p.conj().T @ f_comb @ p
        fr = (fr + fr.conj().T) / 2
        d_e = embed_hermitian(fr) if complex_mode else np.asarray(fr.real)
        norm = np.linalg.norm(d_e)
        if norm < 1e-12:
            continue
        v = d_e / norm
        for bvec in gs:
            v = v - float(np.sum(bvec * v)) * bvec
        res = np.linalg.norm(v)
        if res < 1e-10:
            continue
        gs.append(v / res)
        kept.append(col)
        face_dirs.append(fr)
        dirs_e.append(d_e)
        norm_list.append(norm)
    n = c_e.shape[0]
    guarded = any(
        all(abs(d[i, i]) <= GUARD_DIAG_ATOL for d in dirs_e) for i in range(n)
    )
    if not guarded:
        return None
    best = {"lam": -np.inf, "t": None}

    def note(weights) -> float:
        g = g_face
        for value, fr in zip(weights, face_dirs):
            g = g + value * fr
        lam = float(np.linalg.eigvalsh(g)[0])
        if lam > best["lam"]:
            t_face = np.asarray(t_p, dtype=float).copy()
            if kept:
                t_face = t_face + null_basis[:, kept] @ np.asarray(weights)
            best["lam"] = lam
            best["t"] = t_face
        return lam

    iterations = 0
    residuals: dict = {}
    if note(np.zeros(len(kept))) < 0.0 and kept:
        norms_arr = np.array(norm_list)

        def watch(y_vec) -> bool:
            return note(y_vec[1:] / norms_arr) >= 0.0

        a_mats = [np.eye(n)]
        for d, norm in zip(dirs_e, norm_list):
            a_mats.append(-d / norm)
        b = np.zeros(1 + len(dirs_e))
        b[0] = 1.0
        try:
            _, _, _, iterations, residuals = _ipm(
                c_e,
                a_mats,
                b,
                tol,
                max_iterations=FACE_MAX_ITERATIONS,
                watch=watch,
            )
        except NumericalTroubleError:
            iterations = FACE_MAX_ITERATIONS
            residuals = {}
    return best["lam"], best["t"], iterations, residuals


def _polish_simple(problem: SdpProblem, t_init, tol: float):
    """Newton refinement of the optimum through a simple eigenpair.

    Where the smallest eigenvalue of Gamma(t) is simple, it is a smooth
    concave function of t and its maximizer can be pinned down to machine
    precision with a damped Newton iteration, using standard first and
    second order eigenvalue perturbation formulas.  At the stationary
    point the minimizing eigenvector u satisfies u' F_k u = 0 for every
    free direction, so u u' is an exact dual certificate.  This succeeds
    precisely in the regime where the interior-point endgame is at its
    worst (an optimum hugging a degenerate face).

    Returns an SdpSolution, or None when the eigenvalue separation is too
    small to trust the smooth model.
    """
    t = np.asarray(t_init, dtype=float).copy()
    dirs = problem.free_dirs
    gamma = problem.gamma_at(t)
    eigvals, eigvecs = np.linalg.eigh(gamma)
    lam = float(eigvals[0])
    steps = 0
    for steps in range(1, POLISH_MAX_STEPS + 1):
        if eigvals[1] - eigvals[0] < POLISH_EIG_GAP:
            return None
        u = eigvecs[:, 0]
        grad = np.array([float(np.real(u.conj() @ (f @ u))) for f in dirs])
        if np.linalg.norm(grad) <= POLISH_GRAD_TOL:
            break
        fu = np.array([f @ u for f in dirs])
        proj = eigvecs[:, 1:].conj().T @ fu.T
        denom = eigvals[1:] - lam
        hess = -2.0 * np.real(proj.conj().T @ (proj / denom[:, None]))
        hess = (hess + hess.T) / 2
        shift = 1e-12 * (1.0 + float(np.abs(hess).max()))
        try:
            step = np.linalg.solve(hess - shift * np.eye(len(dirs)), -grad)
        except np.linalg.LinAlgError:
            return None
        improved = False
        for _ in range(25):
            cand = t + step
            gamma_c = problem.gamma_at(cand)
            eig_c, vec_c = np.linalg.eigh(gamma_c)
            if eig_c[0] > lam:
                t, gamma = cand, gamma_c
                eigvals, eigvecs = eig_c, vec_c
                lam = float(eig_c[0])
                improved = True
                break
            step = step / 2
        if not improved:
            break
    u = eigvecs[:, 0]
    grad = np.array([float(np.real(u.conj() @ (f @ u))) for f in dirs])
    grad_norm = float(np.linalg.norm(grad)) if len(dirs) else 0.0
    if grad_norm > 1e-9 or eigvals[1] - eigvals[0] < POLISH_EIG_GAP:
        return None
    z = np.outer(u, u.conj())
    z = (z + z.conj().T) / 2
    if problem.complex_dim is None:
        z = np.asarray(z.real)
    gap = abs(lam - float(np.real(u.conj() @ (gamma @ u))))
    mu = np.array(
        [float(np.real(np.trace(z @ pattern))) for pattern, _, _ in problem.pins]
    )
    return SdpSolution(
        lambda_star=lam,
        t_star=t,
        Z=z,
        mu=mu,
        duality_gap=gap,
        status=_STATUS_OPTIMAL,
        iterations=steps,
        residuals={
            "stationarity": grad_norm,
            "eigenvalue_separation": float(eigvals[1] - eigvals[0]),
            "polished": True,
        },
    )


def _null_projector_solution(
    problem: SdpProblem,
    v0: Array,
    lambda_star: float,
    t_star,
    iterations: int,
    residuals: dict,
) -> SdpSolution:
    """Package a solution certified by the pinned-block null projector.

    The projector onto the singular directions of the fully pinned
    sub-block is positive semidefinite, has unit trace, and pairs to
    exactly zero with the observed matrix and every free direction, so it
    is a dual certificate for lambda <= 0 at any t.  Combined with the
    directly measured smallest eigenvalue at t_star (a lower bound on the
    optimum), it encloses the optimum two-sidedly; the reported duality
    gap is the width of that enclosure.
    """
    q = v0.shape[1]
    z = (v0 @ v0.conj().T) / q
    z = (z + z.conj().T) / 2
    gamma_t = problem.gamma_at(t_star)
    gap = abs(lambda_star - float(np.real(np.trace(z @ gamma_t))))
    mu = np.array(
        [float(np.real(np.trace(z @ pattern))) for pattern, _, _ in problem.pins]
    )
    residuals = dict(residuals)
    residuals["degenerate_face_dimension"] = q
    return SdpSolution(
        lambda_star=lambda_star,
        t_star=t_star,
        Z=z,
        mu=mu,
        duality_gap=gap,
        status=_STATUS_OPTIMAL,
        iterations=iterations,
        residuals=residuals,
    )


def solve(problem: SdpProblem, tol: float = DEFAULT_TOL) -> SdpSolution:
    """Maximize lambda with Gamma(t) - lambda*1 >= 0.

    Forced null directions (see _forced_null_split) are projected out
    before the interior-point run; since they pin the optimum at or below
    zero, the quotient problem gains an extra 1x1 slack block enforcing
    lambda <= 0, which also guarantees boundedness.  A quadratic
    degeneracy (a fully pinned singular sub-block, see _pinned_block_null)
    is resolved through its face whenever the optimum lands within the
    decision band of zero, with the block's null projector as an exact
    dual certificate.  A run that still fails is rescued in two stages:
    first a Newton polish through the smallest eigenpair
    (_polish_simple), then, when the degenerate block exists and the best
    iterate came within the certificate budget of zero, a two-sided
    enclosure built from the null projector
    (_null_projector_solution).  Without degenerate structure,
    boundedness is checked by looking for a diagonal slot no free
    direction touches.  Raises NumericalTroubleError when boundedness
    cannot be guaranteed or every strategy fails to converge; the error
    carries the best objective bounds seen.
    """
    if not TOL_RANGE[0] <= tol <= TOL_RANGE[1]:
        raise ConfigurationError(
            f"tol {tol} outside supported range {TOL_RANGE}"
        )
    complex_mode = problem.complex_dim is not None
    split = _forced_null_split(problem)
    v0 = None
    if split is None:
        v0 = _pinned_block_null(problem)
        if v0 is not None:
            face = _solve_on_face(problem, v0, tol)
            if face is not None and face[0] >= -DECISION_BAND * tol:
                lambda_face, t_face, iterations, residuals = face
                return _null_projector_solution(
                    problem,
                    v0,
                    lambda_star=min(0.0, lambda_face),
                    t_star=t_face,
                    iterations=iterations,
                    residuals=residuals,
                )
        n = problem.m
        guarded = any(
            all(abs(d[i, i]) <= GUARD_DIAG_ATOL for d in problem._dirs_e)
            for i in range(n)
        )
        if not guarded:
            raise NumericalTroubleError(
                "no diagonal slot is free of the free directions, so the "
                "objective may be unbounded above",
                best_bounds=(-np.inf, np.inf),
            )
        nullity = 0
        c_e = problem._c_e
        dirs_e = list(problem._dirs_e)
        norms = problem._dir_norms
        kept = list(range(problem.n_free))
    else:
        range_basis, null_basis = split
        nullity = null_basis.shape[1]
        if range_basis.shape[1] == 0:
            # Everything is annihilated; the zero matrix is the optimal
            # completion and the maximally mixed dual certifies it.
            k = problem.gamma_obs.shape[0]
            z = np.eye(k, dtype=problem.gamma_obs.dtype) / k
            mu = np.array(
                [
                    float(np.real(np.trace(z @ pattern)))
                    for pattern, _, _ in problem.pins
                ]
            )
            return SdpSolution(
                lambda_star=0.0,
                t_star=np.zeros(problem.n_free),
                Z=z,
                mu=mu,
                duality_gap=abs(float(np.real(np.trace(z @ problem.gamma_obs)))),
                status=_STATUS_OPTIMAL,
                iterations=0,
                residuals={
                    "primal_residual": 0.0,
                    "dual_residual": 0.0,
                    "relative_gap": 0.0,
                    "forced_null_dimension": nullity,
                },
            )
        gr = range_basis.conj().T @ problem.gamma_obs @ range_basis
        gr = (gr + gr.conj().T) / 2
        core_c = embed_hermitian(gr) if complex_mode else np.asarray(gr.real)
        kept = []
        dirs_core = []
        norm_list = []
        gs: list[Array] = []
        for idx, f in enumerate(problem.free_dirs):
            fr = range_basis.conj().T @ f @ range_basis
            fr = (fr + fr.conj().T) / 2
            d_e = embed_hermitian(fr) if complex_mode else np.asarray(fr.real)
            norm = np.linalg.norm(d_e)
            if norm < 1e-12:
                continue
            v = d_e / norm
            for bvec in gs:
                v = v - float(np.sum(bvec * v)) * bvec
            residual = np.linalg.norm(v)
            if residual < 1e-10:
                continue
            gs.append(v / residual)
            kept.append(idx)
            dirs_core.append(d_e)
            norm_list.append(norm)
        core = core_c.shape[0]
        n = core + 1
        c_e = np.zeros((n, n))
        c_e[:core, :core] = core_c
        dirs_e = []
        for d in dirs_core:
            padded = np.zeros((n, n))
            padded[:core, :core] = d
            dirs_e.append(padded)
        norms = np.array(norm_list) if norm_list else np.zeros(0)

    a_mats = [np.eye(n)]
    for d, norm in zip(dirs_e, norms):
        a_mats.append(-d / norm)
    b = np.zeros(1 + len(dirs_e))
    b[0] = 1.0

    # Track the dual iterate with the best directly measured smallest
    # eigenvalue; a stalled endgame can often be rescued from that point.
    best_seen = {"lam": -np.inf, "t": None, "count": 0}

    def record(y_vec) -> bool:
        best_seen["count"] += 1
        t_vec = np.zeros(problem.n_free)
        if dirs_e:
            t_vec[np.asarray(kept, dtype=int)] = y_vec[1:] / norms
        lam = float(np.linalg.eigvalsh(problem.gamma_at(t_vec))[0])
        if lam > best_seen["lam"]:
            best_seen["lam"] = lam
            best_seen["t"] = t_vec
        return False

    try:
        x_e, y, _, iterations, residuals = _ipm(
            c_e, a_mats, b, tol, watch=record
        )
    except NumericalTroubleError:
        if best_seen["t"] is not None:
            polished = _polish_simple(problem, best_seen["t"], tol)
            if polished is not None:
                if split is not None:
                    polished.residuals["forced_null_dimension"] = nullity
                return polished
            if v0 is not None and best_seen["lam"] >= -CERT_GAP_ATOL:
                return _null_projector_solution(
                    problem,
                    v0,
                    lambda_star=min(0.0, best_seen["lam"]),
                    t_star=best_seen["t"],
                    iterations=best_seen["count"],
                    residuals={"two_sided_enclosure": abs(best_seen["lam"])},
                )
        raise

    if split is None:
        x_cap = 0.0
        x_core = x_e
    else:
        x_cap = float(x_e[-1, -1])
        x_core = x_e[:-1, :-1]
    if complex_mode:
        half = x_core.shape[0] // 2
        rot = np.zeros_like(x_core)
        rot[:half, half:] = -np.eye(half)
        rot[half:, :half] = np.eye(half)
        x_core = (x_core + rot @ x_core @ rot.T) / 2
    total = float(np.trace(x_core)) + x_cap
    x_core = x_core / total
    x_cap = x_cap / total
    z_core = unembed_dual(x_core) if complex_mode else x_core
    if split is None:
        z = z_core
    else:
        range_basis, null_basis = split
        z = range_basis @ z_core @ range_basis.conj().T
        z = z + (x_cap / nullity) * (null_basis @ null_basis.conj().T)
        z = (z + z.conj().T) / 2
        residuals = dict(residuals)
        residuals["forced_null_dimension"] = nullity
    lambda_star = float(y[0])
    t_star = np.zeros(problem.n_free)
    if dirs_e:
        t_star[np.asarray(kept, dtype=int)] = y[1:] / norms
    gamma_t = problem.gamma_at(t_star)
    gap = abs(lambda_star - float(np.real(np.trace(z @ gamma_t))))
    mu = np.array(
        [float(np.real(np.trace(z @ pattern))) for pattern, _, _ in problem.pins]
    )
    return SdpSolution(
        lambda_star=lambda_star,
        t_star=t_star,
        Z=z,
        mu=mu,
        duality_gap=gap,
        status=_STATUS_OPTIMAL,
        iterations=iterations,
        residuals=residuals,
    )


class Certificate:
    """Independent re-verification of a dual solution.

    ``accepted`` is the conjunction of all checks; ``failures`` lists the
    violated quantities with their values.
    """

    __slots__ = ("accepted", "failures", "checks", "beta", "mu_dot_b", "lambda_star")

    def __init__(self, *, accepted, failures, checks, beta, mu_dot_b, lambda_star):
        self.accepted = accepted
        self.failures = tuple(failures)
        self.checks = dict(checks)
        self.beta = beta
        self.mu_dot_b = mu_dot_b
        self.lambda_star = lambda_star

    def __repr__(self) -> str:
        state = "accepted" if self.accepted else "rejected"
        return f"Certificate({state}, beta={self.beta:.6g})"


def certify(solution: SdpSolution, problem: SdpProblem) -> Certificate:
    """Re-check every dual feasibility condition from the raw matrices.

    A passing certificate proves, independently of solver internals, that
    no completion can have minimum eigenvalue above beta: Z is PSD with
    unit trace and orthogonal to every free direction, so
    Tr[Z Gamma(t)] = beta for all t.
    """
    if solution.status != _STATUS_OPTIMAL:
        raise ConfigurationError("only optimal solutions can be certified")
    z = np.asarray(solution.Z)
    checks = {}
    failures = []

    def record(name, value, ok):
        checks[name] = (float(value), bool(ok))
        if not ok:
            failures.append(f"{name}={value:.3e}")

    eigs = np.linalg.eigvalsh((z + z.conj().T) / 2)
    record("min_eigenvalue", float(eigs[0]), eigs[0] >= CERT_PSD_FLOOR)
    trace_err = abs(float(np.real(np.trace(z))) - 1.0)
    record("trace_error", trace_err, trace_err <= CERT_TRACE_ATOL)
    worst_pairing = 0.0
    for f in problem.free_dirs:
        worst_pairing = max(worst_pairing, abs(complex(np.trace(z @ f))))
    record(
        "free_direction_pairing",
        worst_pairing,
        worst_pairing <= CERT_ORTHOGONALITY_ATOL,
    )
    beta = float(np.real(np.trace(z @ problem.gamma_obs)))
    gamma_t = problem.gamma_at(solution.t_star)
    gap = abs(solution.lambda_star - float(np.real(np.trace(z @ gamma_t))))
    record("duality_gap", gap, gap <= CERT_GAP_ATOL)
    mu_dot_b = float(
        sum(m * value for m, (_, value, _) in zip(solution.mu, problem.pins))
    )
    if problem.pins:
        bookkeeping = abs(beta - mu_dot_b)
        record("pin_bookkeeping", bookkeeping, bookkeeping <= CERT_GAP_ATOL)
    return Certificate(
        accepted=not failures,
        failures=failures,
        checks=checks,
        beta=beta,
        mu_dot_b=mu_dot_b,
        lambda_star=solution.lambda_star,
    )


def steering_decision(lambda_star: float, tol: float = DEFAULT_TOL) -> str:
    """Three-way sign decision with a +-10*tol dead band."""
    if tol <= 0:
        raise ConfigurationError("tol must be positive")
    if lambda_star < -DECISION_BAND * tol:
        return "steering"
    if lambda_star > DECISION_BAND * tol:
        return "no-steering"
    return "inconclusive-margin"


def export_sdpa(problem: SdpProblem) -> str:
    """Serialize the embedded problem in SDPA sparse format.

    Variables are y = (lambda, t_1..t_m); the objective line is the SDPA
    minimization vector c = (-1, 0, ..., 0), so external solvers report
    -c.y = lambda.  Matrix 0 holds -gamma_obs (embedded), matrix 1 holds
    -identity, matrix 1+k holds the embedded free direction F_k in its
    original (unnormalized) scale.  Entries are upper-triangle, 1-indexed,
    one per line: "matno blockno i j value" with 17 significant digits.
    """
    n = problem.m
    lines = [
        str(1 + problem.n_free),
        "1",
        str(n),
        " ".join(["-1"] + ["0"] * problem.n_free),
    ]
    mats = [-problem._c_e, -np.eye(n)] + list(problem._dirs_e)
    for matno, mat in enumerate(mats):
        for i in range(n):
            for j in range(i, n):
                v = mat[i, j]
                if v != 0.0:
                    lines.append(f"{matno} 1 {i + 1} {j + 1} {v:.17g}")
    return "\n".join(lines) + "\n"


def read_sdpa(text: str) -> dict:
    """Parse the subset of SDPA sparse format written by export_sdpa.

    Returns {"n_vars", "block_size", "c", "matrices"} with dense symmetric
    matrices indexed 0..n_vars (0 is the constant matrix).
    """
    rows = [
        line.strip()
        for line in text.splitlines()
        if line.strip() and not line.lstrip().startswith(("*", '"'))
    ]
    if len(rows) < 4:
        raise ConfigurationError("truncated SDPA input")
    n_vars = int(rows[0])
    n_blocks = int(rows[1])
    if n_blocks != 1:
        raise ConfigurationError("only single-block problems are supported")
    block_size = int(abs(int(rows[2].split()[0])))
    c = np.array([float(v) for v in rows[3].split()])
    if c.shape != (n_vars,):
        raise ConfigurationError("objective vector length mismatch")
    matrices = [np.zeros((block_size, block_size)) for _ in range(n_vars + 1)]
    for line in rows[4:]:
        parts = line.split()
        if len(parts) != 5:
            raise ConfigurationError(f"malformed entry line: {line!r}")
        matno, blockno = int(parts[0]), int(parts[1])
        i, j = int(parts[2]) - 1, int(parts[3]) - 1
        value = float(parts[4])
        if blockno != 1 or not 0 <= matno <= n_vars:
            raise ConfigurationError(f"entry outside the declared problem: {line!r}")
        matrices[matno][i, j] = value
        matrices[matno][j, i] = value
    return {
        "n_vars": n_vars,
        "block_size": block_size,
        "c": c,
        "matrices": matrices,
    }
