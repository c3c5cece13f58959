"""Linear steering witnesses extracted from dual certificates.

A dual matrix Z pairs with the pinned entries of a moment template to
give beta = sum_i mu_i b_i, a linear functional of the observable
moments that is nonnegative on every unsteerable assemblage and equals
lambda_star on the generating data.  This module turns that pairing
into a portable object: terms labeled by (Alice input, power, Bob word)
with complex coefficients, plus a real constant.  Witnesses can be
evaluated on any moment source, serialized to a versioned document, and
driven through parameter scans that bisect for a steering threshold.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import BracketingError, ConfigurationError, NumericalTroubleError
from .moments import MomentTemplate, bob_word_operator, build_template
from .scenarios import Assemblage, AssemblageSource, Scenario, joint_moment
from .sdp import (
    DECISION_BAND,
    DEFAULT_TOL,
    certify,
    problem_from_template,
    solve,
)

#: Document schema version written by serialize and required by deserialize.
SCHEMA_VERSION = 1

#: Dual multipliers below this magnitude are dropped during extraction.
MU_PRUNE_ATOL = 1e-12

#: A Bob word whose operator product is this close to a multiple of the
#: identity is folded out of the term list during extraction.
IDENTITY_FOLD_ATOL = 1e-10

#: Witness values must be real; larger imaginary parts mean the witness
#: and the data do not belong together (missing conjugate partners).
EVAL_IMAG_ATOL = 1e-6


class WitnessTerm:
    """One moment label with its coefficient.

    ``x`` is Alice's input index (None for a trivial Alice side, in which
    case ``power`` is 0) and ``bob`` is a product word over Bob operator
    indices, empty for the identity.
    """

    __slots__ = ("x", "power", "bob", "coefficient")

    def __init__(self, x, power, bob, coefficient):
        power = int(power)
        if power < 0:
            raise ConfigurationError("alice power must be nonnegative")
        if (x is None) != (power == 0):
            raise ConfigurationError(
                "a trivial Alice side means no input index and power 0"
            )
        bob = tuple(int(t) for t in bob)
        if any(t < 0 for t in bob):
            raise ConfigurationError("Bob operator indices must be nonnegative")
        self.x = None if x is None else int(x)
        self.power = power
        self.bob = bob
        self.coefficient = complex(coefficient)

    def label(self) -> str:
        alice = "1" if self.x is None else f"A{self.x}" + (
            f"^{self.power}" if self.power > 1 else ""
        )
        bob = " ".join(f"B{t}" for t in self.bob) or "1"
        return f"<{alice} (x) {bob}>"

    def __eq__(self, other) -> bool:
        if not isinstance(other, WitnessTerm):
            return NotImplemented
        return (
            self.x == other.x
            and self.power == other.power
            and self.bob == other.bob
            and self.coefficient == other.coefficient
        )

    def __repr__(self) -> str:
        return f"WitnessTerm({self.label()}, {self.coefficient})"


class Witness:
    """constant + sum of coefficient * moment, nonnegative without steering."""

    __slots__ = ("terms", "constant", "provenance")

    def __init__(self, terms, constant, provenance=None):
        self.terms = tuple(terms)
        for term in self.terms:
            if not isinstance(term, WitnessTerm):
                raise ConfigurationError("terms must be WitnessTerm instances")
        self.constant = float(constant)
        self.provenance = dict(provenance) if provenance else {}

    def normalized(self) -> "Witness":
        """Scale so the largest coefficient magnitude is one.

        The scale divides the constant as well, so the sign of every
        evaluation is preserved; it is recorded in the provenance.  A
        witness with no terms is returned unchanged.
        """
        if not self.terms:
            return self
        scale = max(abs(t.coefficient) for t in self.terms)
        if scale == 0.0:
            return self
        provenance = dict(self.provenance)
        provenance["normalization_scale"] = scale
        return Witness(
            tuple(
                WitnessTerm(t.x, t.power, t.bob, t.coefficient / scale)
                for t in self.terms
            ),
            self.constant / scale,
            provenance,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, Witness):
            return NotImplemented
        return (
            self.terms == other.terms
            and self.constant == other.constant
            and self.provenance == other.provenance
        )

    def __repr__(self) -> str:
        return f"Witness({len(self.terms)} terms, constant={self.constant:.6g})"


def witness_from_dual(template: MomentTemplate, solution) -> Witness:
    """Read the witness off a certified dual solution.

    The dual multipliers mu pair one-to-one with the template pins.  Real
    and imaginary components of one chiral word merge into a conjugate
    pair of terms carrying half the complex weight each, so the witness
    value stays real on any data; observable-subspace element pins are
    rewritten over identity and power words through their recorded
    expansions.  Contributions hitting the identity on both sides fold
    into the constant.  Evaluating the result on the generating data
    reproduces the certified pairing Tr[Z Gamma_obs].
    """
    problem = problem_from_template(template)
    cert = certify(solution, problem)
    if not cert.accepted:
        raise ConfigurationError(
            "only certified solutions yield witnesses; failed checks: "
            + ", ".join(cert.failures)
        )
    if len(solution.mu) != len(template.pins):
        raise ConfigurationError("dual multipliers do not match the template pins")

    word_mu: dict[tuple, dict[str, float]] = {}
    for pin, mu in zip(template.pins, solution.mu):
        if pin.kind == "word":
            parts = word_mu.setdefault((pin.alice, pin.bob_word), {})
            parts[pin.component] = float(mu)

    constant = 0.0
    accum: dict[tuple, complex] = {}

    def identity_weight(bob_word):
        """c when the word's operator product is c * identity, else None."""
        if bob_word == ():
            return 1.0
        if template.symbolic:
            return None
        op = bob_word_operator(bob_word, template.bob_operators, template.dim_b)
        c = np.trace(op.entries) / template.dim_b
        if np.max(np.abs(op.entries - c * np.eye(template.dim_b))) <= IDENTITY_FOLD_ATOL:
            return c
        return None

    def add(alice, bob_word, coeff):
        nonlocal constant
        c = identity_weight(bob_word)
        if c is not None:
            coeff = coeff * c
            bob_word = ()
        if alice == () and bob_word == ():
            constant += coeff.real
            return
        key = (alice, bob_word)
        accum[key] = accum.get(key, 0.0 + 0.0j) + coeff

    for (alice, canon), parts in sorted(word_mu.items()):
        z = complex(parts.get("re", 0.0), -parts.get("im", 0.0))
        if abs(z) <= MU_PRUNE_ATOL:
            continue
        if canon == canon[::-1]:
            add(alice, canon, z)
        else:
            add(alice, canon, z / 2)
            add(alice, canon[::-1], np.conj(z) / 2)

    for pin, mu in zip(template.pins, solution.mu):
        if pin.kind != "element" or abs(mu) <= MU_PRUNE_ATOL:
            continue
        element = template.lr_basis[pin.element_index]
        for op_index, power, weight in element.expansion:
            word = () if op_index is None else (op_index,) * power
            add(pin.alice, word, complex(mu * weight))

    terms = []
    for (alice, word), coeff in sorted(accum.items()):
        if abs(coeff) <= MU_PRUNE_ATOL:
            continue
        if len(alice) > 1:
            raise ConfigurationError(
                "pinned moments never mix Alice inputs; the template is corrupt"
            )
        x, power = alice[0] if alice else (None, 0)
        terms.append(WitnessTerm(x, power, word, coeff))

    provenance = {
        "policy": template.policy,
        "words": [repr(w) for w in template.words],
        "n_inputs": template.n_inputs,
        "lambda_star": solution.lambda_star,
        "duality_gap": solution.duality_gap,
        "beta_star": cert.beta,
    }
    return Witness(terms, constant, provenance)


def _resolve_source(data):
    if isinstance(data, Assemblage):
        return AssemblageSource(data)
    if isinstance(data, Scenario):
        return data.source
    if hasattr(data, "moment"):
        return data
    raise ConfigurationError(
        "data must be an Assemblage, a Scenario, or a moment source"
    )


def evaluate(witness: Witness, data, bob_operators=None) -> float:
    """The witness value beta on concrete data.

    ``data`` is an Assemblage, a Scenario, or any moment source;
    ``bob_operators`` resolves the Bob indices in the term labels and
    defaults to the Scenario's own operators when one is given.  A
    negative return certifies steering of the data.
    """
    source = _resolve_source(data)
    if bob_operators is None:
        if isinstance(data, Scenario):
            bob_operators = data.bob_operators
        else:
            raise ConfigurationError(
                "bob_operators is required unless data is a Scenario"
            )
    bob_operators = tuple(bob_operators)
    total = complex(witness.constant)
    for term in witness.terms:
        for t in term.bob:
            if t >= len(bob_operators):
                raise ConfigurationError(
                    f"term {term.label()} references Bob operator {t} but only "
                    f"{len(bob_operators)} were given"
                )
        if getattr(source, "symbolic", False):
            bob = tuple(bob_operators[t] for t in term.bob)
        else:
            bob = bob_word_operator(term.bob, bob_operators, source.dim_b)
        total += term.coefficient * joint_moment(source, term.x, term.power, bob)
    if abs(total.imag) > EVAL_IMAG_ATOL:
        raise NumericalTroubleError(
            f"witness value {total} has a non-vanishing imaginary part; "
            "the witness terms are not conjugate-paired for this data"
        )
    return float(total.real)


def serialize(witness: Witness) -> str:
    """Versioned JSON document; numbers as 17-significant-digit strings."""

    def num(v: float) -> str:
        return format(float(v), ".17g")

    doc = {
        "version": SCHEMA_VERSION,
        "constant": num(witness.constant),
        "terms": [
            {
                "x": term.x,
                "power": term.power,
                "bob": (
                    {"kind": "basis", "ref": term.bob[0]}
                    if len(term.bob) == 1
                    else {"kind": "word", "ref": list(term.bob)}
                ),
                "coeff": [num(term.coefficient.real), num(term.coefficient.imag)],
            }
            for term in witness.terms
        ],
        "provenance": witness.provenance,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def deserialize(text: str) -> Witness:
    """Parse a witness document, rejecting unknown versions and keys."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigurationError(f"malformed witness document: {err}") from None
    if not isinstance(doc, dict):
        raise ConfigurationError("witness document must be a JSON object")
    extra = set(doc) - {"version", "constant", "terms", "provenance"}
    if extra:
        raise ConfigurationError(f"unknown witness document keys: {sorted(extra)}")
    if doc.get("version") != SCHEMA_VERSION:
        raise ConfigurationError(
            f"unsupported witness schema version {doc.get('version')!r}"
        )
    try:
        constant = float(doc["constant"])
        terms = []
        for entry in doc["terms"]:
            bob = entry["bob"]
            if bob["kind"] == "basis":
                word = (int(bob["ref"]),)
            elif bob["kind"] == "word":
                word = tuple(int(t) for t in bob["ref"])
            else:
                raise ConfigurationError(
                    f"unknown Bob descriptor kind {bob['kind']!r}"
                )
            re, im = entry["coeff"]
            terms.append(
                WitnessTerm(
                    entry["x"], entry["power"], word, complex(float(re), float(im))
                )
            )
    except (KeyError, TypeError, ValueError, IndexError) as err:
        raise ConfigurationError(f"malformed witness document: {err}") from None
    return Witness(terms, constant, doc.get("provenance"))


def lossy_photon_witness() -> Witness:
    """The published optimal witness for the noisy single photon family.

    Coefficients are transcribed verbatim (four printed decimals), with
    Bob indices 0 and 1 addressing the q and p quadratures.  The lone
    complex coefficient sits on the qp word; its conjugate partner was
    folded into the printed form, so the value is real exactly on data
    with a vanishing symmetrized cross moment, as in the family it
    certifies.
    """
    t = WitnessTerm
    terms = (
        t(0, 1, (0,), -1.0),
        t(1, 1, (1,), -1.0),
        t(0, 1, (0, 0, 0), 0.2508),
        t(1, 1, (1, 1, 1), 0.2508),
        t(0, 2, (), -0.3110),
        t(1, 2, (), -0.3110),
        t(0, 2, (0, 0), 0.3205),
        t(1, 2, (1, 1), 0.3205),
        t(0, 2, (1, 1), 0.3020),
        t(1, 2, (0, 0), 0.3020),
        t(0, 3, (0,), -0.0001),
        t(1, 3, (1,), -0.0001),
        t(None, 0, (0, 0, 0, 0), 7.7217),
        t(None, 0, (1, 1, 1, 1), 7.7217),
        t(None, 0, (0, 0, 1, 1), 15.5451),
        t(None, 0, (0, 0), -31.0941),
        t(None, 0, (1, 1), -31.0941),
        t(None, 0, (0, 1), complex(0.0, -31.0903)),
    )
    return Witness(terms, 8.1657, {"fixture": "lossy-single-photon"})


class ScanPoint:
    """One solved parameter value inside a threshold scan."""

    __slots__ = (
        "param",
        "lambda_star",
        "detected",
        "certified",
        "duality_gap",
        "iterations",
    )

    def __init__(self, *, param, lambda_star, detected, certified, duality_gap, iterations):
        self.param = float(param)
        self.lambda_star = None if lambda_star is None else float(lambda_star)
        self.detected = bool(detected)
        self.certified = bool(certified)
        self.duality_gap = None if duality_gap is None else float(duality_gap)
        self.iterations = int(iterations)

    def as_dict(self) -> dict:
        return {
            "param": self.param,
            "lambda_star": self.lambda_star,
            "detected": self.detected,
            "certified": self.certified,
            "duality_gap": self.duality_gap,
            "iterations": self.iterations,
        }


class ScanResult:
    """Bisection outcome: the bracket, its midpoint, and the full trace."""

    __slots__ = ("critical", "bracket", "points", "param_name")

    def __init__(self, *, critical, bracket, points, param_name):
        self.critical = float(critical)
        self.bracket = (float(bracket[0]), float(bracket[1]))
        self.points = tuple(points)
        self.param_name = param_name

    def as_dict(self) -> dict:
        return {
            "param_name": self.param_name,
            "critical": self.critical,
            "bracket": list(self.bracket),
            "points": [p.as_dict() for p in self.points],
        }


def threshold_scan(
    family,
    lo: float,
    hi: float,
    *,
    string_set,
    policy: str,
    param_tol: float,
    tol: float = DEFAULT_TOL,
    param_name: str = "param",
) -> ScanResult:
    """Bisect for the parameter where steering detection switches on.

    ``family`` maps a parameter value to a Scenario; each probed value is
    compiled against ``string_set`` under ``policy`` and solved, and
    detection means lambda_star below the decision band.  Both endpoints
    are probed first; matching detection at both ends raises
    BracketingError since no threshold is bracketed.  A solve that ends in
    numerical trouble still classifies its point when the reported bounds
    sit entirely on one side of the band.  The trace records every solve
    in evaluation order, so identical inputs reproduce identical scans.
    """
    lo = float(lo)
    hi = float(hi)
    if not lo < hi:
        raise ConfigurationError("scan range must satisfy lo < hi")
    if param_tol <= 0:
        raise ConfigurationError("param_tol must be positive")
    band = DECISION_BAND * tol
    points: list[ScanPoint] = []

    def probe(value: float) -> bool:
        scenario = family(value)
        template = build_template(
            string_set, scenario.bob_operators, policy, scenario.source
        )
        problem = problem_from_template(template)
        try:
            solution = solve(problem, tol)
        except NumericalTroubleError as err:
            bounds = err.best_bounds
            if bounds is not None and np.isfinite(bounds[0]) and np.isfinite(bounds[1]):
                if bounds[1] < -band:
                    detected = True
                elif bounds[0] > -band:
                    detected = False
                else:
                    raise
                points.append(
                    ScanPoint(
                        param=value,
                        lambda_star=None,
                        detected=detected,
                        certified=False,
                        duality_gap=None,
                        iterations=0,
                    )
                )
                return detected
            raise
        detected = solution.lambda_star < -band
        cert = certify(solution, problem)
        points.append(
            ScanPoint(
                param=value,
                lambda_star=solution.lambda_star,
                detected=detected,
                certified=cert.accepted,
                duality_gap=solution.duality_gap,
                iterations=solution.iterations,
            )
        )
        return detected

    det_lo = probe(lo)
    det_hi = probe(hi)
    if det_lo == det_hi:
        raise BracketingError(
            f"no threshold in range [{lo}, {hi}]: detection is "
            f"{'on' if det_lo else 'off'} at both endpoints"
        )
    while hi - lo > param_tol:
        mid = (lo + hi) / 2
        if probe(mid) == det_hi:
            hi = mid
        else:
            lo = mid
    return ScanResult(
        critical=(lo + hi) / 2,
        bracket=(lo, hi),
        points=points,
        param_name=param_name,
    )
