"""The crossed product ``linf(Gamma) x S`` of a discrete group by a finite
symmetry group, as a quantum-group-style algebra.

Elements are finite sums ``sum_s f_s lambda_s`` with ``f_s`` finitely
supported functions on ``Gamma``; multiplication twists by the action
(``lambda_s f lambda_s^* = s.f``).  Every element carries a *window*: the ball
radius within which its coefficients are certified correct (``inf`` for
exactly supported elements).  The convolution Markov operator of an invariant
state acts componentwise,

    (P x)_s(y) = sum_g c(g, s) f_s(g y),

and shrinks windows by the state radius, so iterated values are exact inside
the light cone instead of carrying unquantified truncation error.

Invariant (tracial) states are stored as weight functions ``c(g, s)`` on
pairs with ``s`` in the stabilizer of ``g``; the pair form (an invariant
marginal on ``Gamma`` plus a central positive-definite function per orbit) is
a constructor, since weight functions are closed under state convolution and
pairs are not obviously so.

The algebra splits over ``S``-orbits into finite-dimensional pieces; each
orbit algebra is represented faithfully on pairs ``(g, u)`` and decomposed
into matrix blocks by eigensplitting a seeded generic self-adjoint central
element.  Blocks index the irreducible labels of the ambient quantum-group
dual; :class:`CrossedIrrRing` materializes their fusion ring.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    ConsistencyError,
    ContractError,
    DegenerateEigensplitError,
    DomainError,
    ResourceError,
    ScenarioParseError,
    SplitUndefinedError,
    WindowExhaustedError,
)
from .fusion import FusionRing, LabelMeasure
from .groups import Element, FiniteSymmetry, FreeProductGroup

INF = float("inf")

#: Tolerance for positive-semidefiniteness checks on state data.
PSD_TOL = 1e-10

#: Eigenvalue clustering tolerance in the block eigensplit.
DEGENERACY_TOL = 1e-8

#: Default cap on materialized coefficients of a single element.
DEFAULT_SUPPORT_CAP = 4_000_000


PairKey = tuple[Element, int]


class CrossedContext:
    """A group with a finite symmetry, plus cached orbit/block data."""

    def __init__(self, group: FreeProductGroup, symmetry: FiniteSymmetry):
        if symmetry.group is not group:
            raise ContractError("symmetry must act on the given group")
        self.group = group
        self.symmetry = symmetry
        self.n_sym = len(symmetry)
        self._orbit_base: dict[Element, Element] = {}
        self._orbits: dict[Element, tuple[Element, ...]] = {}
        self._stabs: dict[Element, tuple[int, ...]] = {}
        self._blocks: dict[Element, list["Block"]] = {}
        self._inv_cache: dict[int, int] = {}

    # -- orbit bookkeeping ---------------------------------------------------

    def orbit_base(self, g: Element) -> Element:
        if g not in self._orbit_base:
            orbit = self.symmetry.orbit(g)
            base = orbit[0]
            for x in orbit:
                self._orbit_base[x] = base
            self._orbits[base] = orbit
        return self._orbit_base[g]

    def orbit(self, g: Element) -> tuple[Element, ...]:
        return self._orbits[self.orbit_base(g)]

    def stabilizer(self, g: Element) -> tuple[int, ...]:
        base = self.orbit_base(g)
        key = g
        if key not in self._stabs:
            self._stabs[key] = self.symmetry.stabilizer(g)
        return self._stabs[key]

    def pair_key(self, key: PairKey):
        g, s = key
        return (self.group.sort_key(g), s)

    def sym_inverse(self, s: int) -> int:
        return self.symmetry.table.inverse(s)

    def sym_name(self, s: int) -> str:
        return self.symmetry.table.names[s]

    def parse_sym(self, name: str) -> int:
        return self.symmetry.table.index(name)

    # -- element constructors --------------------------------------------------

    def element(self, coeffs: Mapping[PairKey, complex], window=INF) -> "CrossedElement":
        return CrossedElement(self, coeffs, window)

    def zero(self, window=INF) -> "CrossedElement":
        return CrossedElement(self, {}, window)

    def one(self, window: int, cap: int = DEFAULT_SUPPORT_CAP) -> "CrossedElement":
        """The identity, materialized on a finite window (the constant
        ``lambda_e``-coefficient 1); an infinite window would need infinite
        support."""
        if window == INF:
            raise ContractError("the identity needs a finite window to materialize")
        e = self.symmetry.table.identity
        ball = self.group.ball(int(window), cap=cap)
        return CrossedElement(self, {(g, e): 1.0 for g in ball}, window)

    def point_mass(self, g: Element, s: int | None = None, window=INF) -> "CrossedElement":
        if s is None:
            s = self.symmetry.table.identity
        return CrossedElement(self, {(g, s): 1.0}, window)

    def counit_unit(self) -> "CrossedElement":
        """The central unit of the counit block: ``delta_e (1/|S|) sum_s lambda_s``."""
        e = self.group.identity
        w = 1.0 / self.n_sym
        return CrossedElement(self, {(e, s): w for s in range(self.n_sym)}, INF)

    def point_projection(self) -> "CrossedElement":
        """``delta_e lambda_e``: the central support projection of the unit fiber."""
        return self.point_mass(self.group.identity)

    def embed_function(self, values: Mapping[Element, complex], window=INF) -> "CrossedElement":
        e = self.symmetry.table.identity
        return CrossedElement(self, {(g, e): v for g, v in values.items()}, window)

    # -- the faithful orbit representation ------------------------------------

    def orbit_pairs(self, base: Element) -> list[tuple[Element, int]]:
        return [(g, u) for g in self.orbit(base) for u in range(self.n_sym)]

    def orbit_matrix(self, x: "CrossedElement", base: Element) -> np.ndarray:
        """The image of the orbit restriction of ``x`` in the faithful
        representation on pairs ``(g, u)``:

            (pi(f lambda_t) xi)(g, u) = f(g) xi(t^{-1}.g, t^{-1} u).
        """
        orbit = self.orbit(base)
        pairs = self.orbit_pairs(base)
        index = {p: i for i, p in enumerate(pairs)}
        n = len(pairs)
        mat = np.zeros((n, n), dtype=complex)
        sym = self.symmetry
        orbit_set = set(orbit)
        for (g, t), v in x.coeffs.items():
            if g not in orbit_set:
                continue
            ti = self.sym_inverse(t)
            gt = sym.apply(ti, g)
            for u in range(self.n_sym):
                mat[index[(g, u)], index[(gt, sym.table.multiply(ti, u))]] += v
        return mat

    def matrix_to_coeffs(self, mat: np.ndarray, base: Element) -> dict[PairKey, complex]:
        """Read an orbit-representation matrix back into coefficients,
        averaging over the ``u``-redundancy for numerical robustness."""
        orbit = self.orbit(base)
        pairs = self.orbit_pairs(base)
        index = {p: i for i, p in enumerate(pairs)}
        sym = self.symmetry
        out: dict[PairKey, complex] = {}
        for g in orbit:
            for t in range(self.n_sym):
                ti = self.sym_inverse(t)
                gt = sym.apply(ti, g)
                acc = 0.0 + 0.0j
                for u in range(self.n_sym):
                    acc += mat[index[(g, u)], index[(gt, sym.table.multiply(ti, u))]]
                val = acc / self.n_sym
                if val != 0:
                    out[(g, t)] = val
        return out

    # -- block decomposition ----------------------------------------------------

    def orbit_blocks(self, g: Element) -> list["Block"]:
        base = self.orbit_base(g)
        if base not in self._blocks:
            self._blocks[base] = _decompose_orbit(self, base)
        return self._blocks[base]

    def block(self, index: "BlockIndex") -> "Block":
        blocks = self.orbit_blocks(index.base)
        if not 0 <= index.index < len(blocks):
            raise DomainError(f"no block {index.index} over orbit of {index.base!r}")
        return blocks[index.index]

    def counit_block(self) -> "Block":
        """The one-dimensional block whose state is the counit."""
        for b in self.orbit_blocks(self.group.identity):
            if b.dim == 1 and all(
                abs(b.weights.get((self.group.identity, s), 0) - 1.0) < 1e-8
                for s in range(self.n_sym)
            ):
                return b
        raise ConsistencyError("counit block not found over the unit orbit")


class CrossedElement:
    """A finitely supported element ``sum_s f_s lambda_s`` with a certainty window.

    Coefficients are stored sparsely on pairs ``(g, s)``; entries not stored
    are zero inside the window and unknown beyond it.  All arithmetic
    propagates windows conservatively (products take the min, the Markov
    operator shrinks by the state radius).
    """

    __slots__ = ("ctx", "coeffs", "window")

    def __init__(self, ctx: CrossedContext, coeffs: Mapping[PairKey, complex], window=INF):
        self.ctx = ctx
        self.window = window
        cleaned: dict[PairKey, complex] = {}
        length = ctx.group.length
        for (g, s), v in coeffs.items():
            if v == 0:
                continue
            if not 0 <= s < ctx.n_sym:
                raise ContractError(f"symmetry index {s} out of range")
            if window != INF and length(g) > window:
                raise ContractError(
                    f"coefficient at {ctx.group.format(g)} lies outside window {window}"
                )
            cleaned[(g, s)] = complex(v)
        self.coeffs = cleaned

    # -- bookkeeping -------------------------------------------------------

    def items_sorted(self):
        return sorted(self.coeffs.items(), key=lambda kv: self.ctx.pair_key(kv[0]))

    def support_radius(self) -> int:
        length = self.ctx.group.length
        return max((length(g) for (g, _s) in self.coeffs), default=0)

    def component(self, s: int) -> dict[Element, complex]:
        return {g: v for (g, t), v in self.coeffs.items() if t == s}

    def components(self) -> set[int]:
        return {s for (_g, s) in self.coeffs}

    def restrict(self, window) -> "CrossedElement":
        """Shrink the window, dropping coefficients beyond it."""
        if window > self.window:
            raise ContractError("cannot grow a window; coefficients beyond it are unknown")
        length = self.ctx.group.length
        kept = {
            (g, s): v for (g, s), v in self.coeffs.items() if length(g) <= window
        }
        return CrossedElement(self.ctx, kept, window)

    def copy(self) -> "CrossedElement":
        return CrossedElement(self.ctx, dict(self.coeffs), self.window)

    def __repr__(self):
        w = "inf" if self.window == INF else self.window
        return f"CrossedElement({len(self.coeffs)} coeffs, window={w})"

    # -- linear structure -----------------------------------------------------

    def _common_window(self, other):
        return min(self.window, other.window)

    def __add__(self, other: "CrossedElement") -> "CrossedElement":
        w = self._common_window(other)
        length = self.ctx.group.length
        out: dict[PairKey, complex] = {}
        for src in (self.coeffs, other.coeffs):
            for k, v in src.items():
                if w == INF or length(k[0]) <= w:
                    out[k] = out.get(k, 0.0) + v
        return CrossedElement(self.ctx, out, w)

    def __sub__(self, other: "CrossedElement") -> "CrossedElement":
        return self + (-1.0) * other

    def __rmul__(self, scalar) -> "CrossedElement":
        if isinstance(scalar, (int, float, complex)):
            return CrossedElement(
                self.ctx, {k: scalar * v for k, v in self.coeffs.items()}, self.window
            )
        return NotImplemented

    def __mul__(self, other):
        if isinstance(other, (int, float, complex)):
            return self.__rmul__(other)
        if not isinstance(other, CrossedElement):
            return NotImplemented
        # (f lambda_s)(g lambda_t) = f (s.g) lambda_{st}
        ctx = self.ctx
        w = self._common_window(other)
        length = ctx.group.length
        sym = ctx.symmetry
        by_component: dict[int, dict[Element, complex]] = {}
        for (g, t), v in other.coeffs.items():
            by_component.setdefault(t, {})[g] = v
        out: dict[PairKey, complex] = {}
        for (g, s), v in self.items_sorted():
            if w != INF and length(g) > w:
                continue
            si = ctx.sym_inverse(s)
            gs = sym.apply(si, g)
            for t, comp in by_component.items():
                u = comp.get(gs)
                if u is not None:
                    key = (g, sym.table.multiply(s, t))
                    out[key] = out.get(key, 0.0) + v * u
        return CrossedElement(ctx, out, w)

    def adjoint(self) -> "CrossedElement":
        """``(f lambda_s)^* = (s^{-1}.conj(f)) lambda_{s^{-1}}``."""
        ctx = self.ctx
        sym = ctx.symmetry
        out: dict[PairKey, complex] = {}
        for (g, s), v in self.coeffs.items():
            si = ctx.sym_inverse(s)
            out[(sym.apply(si, g), si)] = np.conj(v)
        return CrossedElement(ctx, out, self.window)

    # -- analysis ---------------------------------------------------------------

    def norm(self) -> float:
        """Operator norm: the max over orbits meeting the support of the
        spectral norm of the orbit-block image (exact per orbit)."""
        if not self.coeffs:
            return 0.0
        bases = sorted(
            {self.ctx.orbit_base(g) for (g, _s) in self.coeffs},
            key=self.ctx.group.sort_key,
        )
        best = 0.0
        for base in bases:
            mat = self.ctx.orbit_matrix(self, base)
            best = max(best, float(np.linalg.norm(mat, 2)))
        return best

    def max_coeff_diff(self, other: "CrossedElement", window=None) -> float:
        w = min(self.window, other.window) if window is None else window
        length = self.ctx.group.length
        keys = set(self.coeffs) | set(other.coeffs)
        worst = 0.0
        for k in keys:
            if w != INF and length(k[0]) > w:
                continue
            worst = max(worst, abs(self.coeffs.get(k, 0.0) - other.coeffs.get(k, 0.0)))
        return worst

    def close_to(self, other: "CrossedElement", tol=1e-12, window=None) -> bool:
        return self.max_coeff_diff(other, window=window) <= tol


# ---------------------------------------------------------------------------
# invariant states
# ---------------------------------------------------------------------------


class InvariantState:
    """A tracial normal state as a weight function ``c(g, s)``, ``s in S_g``.

    Semantics: ``phi(f lambda_s) = sum_{g: s in S_g} c(g, s) f(g)``.  The
    validated invariants are exactly what makes ``phi`` a state: the marginal
    ``c(., e)`` is an S-invariant probability on ``Gamma``; on each orbit the
    normalized stabilizer section is a positive-definite central function;
    the weights are equivariant across the orbit.
    """

    __slots__ = ("ctx", "weights", "radius")

    def __init__(
        self,
        ctx: CrossedContext,
        weights: Mapping[PairKey, complex],
        validate: bool = True,
        tol: float = PSD_TOL,
    ):
        self.ctx = ctx
        cleaned = {}
        for (g, s), v in weights.items():
            v = complex(v)
            if v != 0:
                cleaned[(g, s)] = v
        self.weights = cleaned
        self.radius = max(
            (ctx.group.length(g) for (g, _s) in cleaned), default=0
        )
        if validate:
            self._validate(tol)

    def _validate(self, tol: float):
        ctx = self.ctx
        e_sym = ctx.symmetry.table.identity
        marg: dict[Element, float] = {}
        for (g, s), v in self.weights.items():
            if s not in ctx.stabilizer(g):
                raise ContractError(
                    f"weight at ({ctx.group.format(g)}, {ctx.sym_name(s)}) is outside "
                    "the stabilizer"
                )
            if s == e_sym:
                if abs(v.imag) > tol or v.real < -tol:
                    raise ContractError("marginal weights must be nonnegative reals")
                marg[g] = v.real
        total = sum(marg.values())
        if abs(total - 1.0) > 1e-12:
            raise ContractError(f"marginal mass {total} is not 1")
        sym = ctx.symmetry
        tbl = sym.table
        for (g, s), v in self.weights.items():
            if self.weights.get((g, e_sym), 0) == 0 and abs(v) > tol:
                raise ContractError(
                    "nonzero weight over a point with zero marginal mass"
                )
            for t in range(ctx.n_sym):
                tg = sym.apply(t, g)
                ts = tbl.multiply(t, tbl.multiply(s, tbl.inverse(t)))
                if abs(self.weights.get((tg, ts), 0.0) - v) > tol:
                    raise ContractError(
                        f"weights are not equivariant at ({ctx.group.format(g)}, "
                        f"{ctx.sym_name(s)}) under {ctx.sym_name(t)}"
                    )
        seen_bases = set()
        for (g, _s) in self.weights:
            base = ctx.orbit_base(g)
            if base in seen_bases:
                continue
            seen_bases.add(base)
            c_e = self.weights.get((base, e_sym), 0.0).real
            if c_e <= 0:
                continue
            stab = ctx.stabilizer(base)
            gram = np.zeros((len(stab), len(stab)), dtype=complex)
            for i, u in enumerate(stab):
                for j, w in enumerate(stab):
                    uw = tbl.multiply(tbl.inverse(u), w)
                    gram[i, j] = self.weights.get((base, uw), 0.0) / c_e
            if np.max(np.abs(gram - gram.conj().T)) > tol:
                raise ContractError(
                    f"stabilizer section at {ctx.group.format(base)} is not hermitian"
                )
            if float(np.linalg.eigvalsh(gram)[0]) < -tol:
                raise ContractError(
                    f"stabilizer section at {ctx.group.format(base)} is not "
                    "positive definite"
                )

    # -- views ------------------------------------------------------------------

    def items_sorted(self):
        return sorted(self.weights.items(), key=lambda kv: self.ctx.pair_key(kv[0]))

    def marginal(self) -> dict[Element, float]:
        e = self.ctx.symmetry.table.identity
        return {g: v.real for (g, s), v in self.weights.items() if s == e}

    def symmetry_section(self) -> dict[int, complex]:
        """The normalized weights over the unit fiber: ``s -> c(e,s)/c(e,e)``."""
        e_g = self.ctx.group.identity
        e_s = self.ctx.symmetry.table.identity
        c_e = self.weights.get((e_g, e_s), 0.0)
        if c_e == 0:
            raise SplitUndefinedError("the state has no mass at the group unit")
        return {
            s: self.weights.get((e_g, s), 0.0) / c_e for s in range(self.ctx.n_sym)
        }

    def evaluate(self, x: CrossedElement) -> complex:
        """``phi(x)``; requires the state support inside the element window."""
        if self.radius > x.window:
            raise WindowExhaustedError("state support exceeds the element window")
        return sum(
            v * x.coeffs.get(k, 0.0) for k, v in self.items_sorted()
        )

    def __repr__(self):
        return f"InvariantState({len(self.weights)} weights, radius={self.radius})"


def counit_state(ctx: CrossedContext) -> InvariantState:
    """The counit as a state: weight 1 at ``(e, s)`` for every ``s``."""
    e = ctx.group.identity
    return InvariantState(ctx, {(e, s): 1.0 for s in range(ctx.n_sym)})


def state_from_pair(
    ctx: CrossedContext,
    marginal: Mapping[Element, float],
    sections: Mapping[Element, Mapping[int, complex]] | None = None,
) -> InvariantState:
    """Build a state from an invariant marginal and per-orbit central sections.

    ``marginal`` may list any orbit representatives (or full orbits, checked
    for consistency); ``sections[rep][s]`` gives the normalized stabilizer
    weight ``tau_rep(lambda_s)`` with the convention ``tau(lambda_id) = 1``;
    omitted sections default to the Haar trace (all zero off the identity).
    Weights across each orbit are filled in by equivariance.
    """
    sections = dict(sections or {})
    sym = ctx.symmetry
    tbl = sym.table
    e_s = tbl.identity
    weights: dict[PairKey, complex] = {}
    by_base: dict[Element, float] = {}
    for g, mass in marginal.items():
        base = ctx.orbit_base(g)
        prev = by_base.get(base)
        if prev is not None and abs(prev - float(mass)) > 1e-12:
            raise ContractError(
                f"marginal is not constant on the orbit of {ctx.group.format(base)}"
            )
        by_base[base] = float(mass)
    section_by_base: dict[Element, dict[int, complex]] = {}
    for rep, sec in sections.items():
        base = ctx.orbit_base(rep)
        if base in section_by_base:
            raise ContractError(
                f"two sections given for the orbit of {ctx.group.format(base)}"
            )
        # translate the section from rep to the canonical base point:
        # tau_{t.g}(lambda_u) = tau_g(lambda_{t^{-1} u t})
        mover = next(
            t for t in tbl.elements() if sym.apply(t, rep) == base
        )
        moved = {}
        for s, val in sec.items():
            ts = tbl.multiply(tbl.multiply(mover, s), tbl.inverse(mover))
            moved[ts] = complex(val)
        section_by_base[base] = moved
    for base, mass in by_base.items():
        if mass == 0:
            continue
        sec = section_by_base.get(base, {})
        sec = {**sec, e_s: 1.0}
        stab = set(ctx.stabilizer(base))
        for s, val in sec.items():
            if s not in stab:
                raise ContractError(
                    f"section element {ctx.sym_name(s)} is not in the stabilizer of "
                    f"{ctx.group.format(base)}"
                )
        for t in tbl.elements():
            tg = sym.apply(t, base)
            for s, val in sec.items():
                ts = tbl.multiply(tbl.multiply(t, s), tbl.inverse(t))
                key = (tg, ts)
                prev = weights.get(key)
                new = mass * val
                if prev is not None and abs(prev - new) > 1e-12:
                    raise ContractError("section is not conjugation-consistent")
                weights[key] = new
    return InvariantState(ctx, weights)


# ---------------------------------------------------------------------------
# the Markov operator and state calculus
# ---------------------------------------------------------------------------


def markov_apply(state: InvariantState, x: CrossedElement) -> CrossedElement:
    """The convolution Markov operator of ``state`` applied to ``x``.

    Componentwise ``g_s(y) = sum_g c(g, s) f_s(g y)``; the output window is
    the input window minus the state radius (light-cone shrink).
    """
    ctx = x.ctx
    if state.ctx is not ctx:
        raise ContractError("state and element live over different contexts")
    if x.window == INF:
        new_window = INF
    else:
        new_window = x.window - state.radius
        if new_window < 0:
            raise WindowExhaustedError(
                f"window {x.window} cannot absorb a state of radius {state.radius}"
            )
    group = ctx.group
    length = group.length
    by_component: dict[int, list[tuple[Element, complex]]] = {}
    for (g, s), w in state.items_sorted():
        by_component.setdefault(s, []).append((group.inverse(g), w))
    out: dict[PairKey, complex] = {}
    for s, shifts in by_component.items():
        comp = sorted(
            ((g, v) for (g, t), v in x.coeffs.items() if t == s),
            key=lambda kv: group.sort_key(kv[0]),
        )
        if not comp:
            continue
        for g_inv, w in shifts:
            for d, v in comp:
                y = group.multiply(g_inv, d)
                if new_window != INF and length(y) > new_window:
                    continue
                key = (y, s)
                out[key] = out.get(key, 0.0) + w * v
    return CrossedElement(ctx, out, new_window)


def convolve_states(a: InvariantState, b: InvariantState) -> InvariantState:
    """State convolution: ``(a * b)(g, s) = sum_{g1 g2 = g} a(g1, s) b(g2, s)``
    over pairs stabilized by ``s`` on both sides.  Satisfies
    ``P_{a*b} = P_b o P_a``."""
    ctx = a.ctx
    if b.ctx is not ctx:
        raise ContractError("states live over different contexts")
    group = ctx.group
    out: dict[PairKey, complex] = {}
    b_by_s: dict[int, list[tuple[Element, complex]]] = {}
    for (g, s), w in b.items_sorted():
        b_by_s.setdefault(s, []).append((g, w))
    for (g1, s), w1 in a.items_sorted():
        for g2, w2 in b_by_s.get(s, ()):
            key = (group.multiply(g1, g2), s)
            out[key] = out.get(key, 0.0) + w1 * w2
    try:
        return InvariantState(ctx, out)
    except ContractError as exc:
        raise ConsistencyError(f"state convolution left the state cone: {exc}") from exc


def convolution_power_state(state: InvariantState, n: int) -> InvariantState:
    if n < 1:
        raise ContractError("n must be >= 1")
    out = state
    for _ in range(n - 1):
        out = convolve_states(out, state)
    return out


def mix_state(state: InvariantState, n_terms: int, support_cap: int = 200_000) -> InvariantState:
    """The normalized geometric mixture ``sum_{n<=N} 2^{-n} phi^n``.

    Mixing guarantees mass at the group unit whenever some ``g`` in the
    support has finite order reachable within ``N`` steps.
    """
    if n_terms < 1:
        raise ContractError("n_terms must be >= 1")
    acc: dict[PairKey, complex] = {}
    power = state
    scale = 0.0
    for n in range(1, n_terms + 1):
        coef = 2.0 ** (-n)
        scale += coef
        for k, v in power.weights.items():
            acc[k] = acc.get(k, 0.0) + coef * v
        if len(acc) > support_cap:
            raise ResourceError("mixed state support exceeds the cap")
        if n < n_terms:
            power = convolve_states(power, state)
    return InvariantState(ctx=state.ctx, weights={k: v / scale for k, v in acc.items()})


@dataclass
class StateSplit:
    """Convex split of a state at the unit fiber.

    ``weight`` is the mass of the unit fiber; ``section`` the normalized
    symmetry-group state there (the part acting diagonally on components);
    ``diagonal`` that part as a state; ``complement`` the rest (None when the
    state is entirely concentrated at the unit fiber).
    """

    weight: float
    section: dict[int, complex]
    diagonal: InvariantState
    complement: InvariantState | None


def split_state(state: InvariantState) -> StateSplit:
    ctx = state.ctx
    e_g = ctx.group.identity
    e_s = ctx.symmetry.table.identity
    t = state.weights.get((e_g, e_s), 0.0).real
    if t <= 0:
        raise SplitUndefinedError(
            "no mass at the group unit; mix the state first"
        )
    section = state.symmetry_section()
    diagonal = InvariantState(ctx, {(e_g, s): v for s, v in section.items()})
    if t >= 1.0 - 1e-14:
        return StateSplit(1.0, section, diagonal, None)
    rest: dict[PairKey, complex] = {}
    for (g, s), v in state.weights.items():
        adj = v - t * section[s] if g == e_g else v
        if adj != 0:
            rest[(g, s)] = adj / (1.0 - t)
    complement = InvariantState(ctx, rest)
    return StateSplit(t, section, diagonal, complement)


def faithfulness_gap(section: Mapping[int, complex], ctx: CrossedContext) -> float:
    """The largest ``delta`` with ``nu - delta * haar >= 0`` on the symmetry
    group algebra.

    Positivity of a functional on ``C*[S]`` is positive-semidefiniteness of
    its Gram matrix ``[nu(u^{-1} w)]``; the Haar trace has Gram identity, so
    the answer is the least Gram eigenvalue.  It is positive exactly when
    ``nu`` is faithful, and coincides with the blockwise weight ratio
    ``min_b nu(z_b)/haar(z_b)`` for central ``nu``.
    """
    tbl = ctx.symmetry.table
    n = len(tbl)
    gram = np.zeros((n, n), dtype=complex)
    for u in range(n):
        ui = tbl.inverse(u)
        for w in range(n):
            gram[u, w] = complex(section.get(tbl.multiply(ui, w), 0.0))
    if np.max(np.abs(gram - gram.conj().T)) > PSD_TOL:
        raise DomainError("symmetry section is not hermitian")
    eigs = np.linalg.eigvalsh(gram)
    if float(eigs[0]) < -PSD_TOL:
        raise DomainError("symmetry section is not positive")
    return max(0.0, float(eigs[0]))


# ---------------------------------------------------------------------------
# structure maps
# ---------------------------------------------------------------------------


def invariant_expectation(x: CrossedElement) -> CrossedElement:
    """The Haar-averaging conditional expectation: keep the ``lambda_e`` part."""
    e = x.ctx.symmetry.table.identity
    return CrossedElement(
        x.ctx, {k: v for k, v in x.coeffs.items() if k[1] == e}, x.window
    )


def counit(x: CrossedElement) -> complex:
    """``sum_s f_s(e)``; the character the counit block implements."""
    e_g = x.ctx.group.identity
    return sum(v for (g, _s), v in x.items_sorted() if g == e_g)


def antipode(x: CrossedElement) -> CrossedElement:
    """``S(f lambda_s) = (s^{-1}.(f o inv)) lambda_{s^{-1}}``; involutive here."""
    ctx = x.ctx
    sym = ctx.symmetry
    out: dict[PairKey, complex] = {}
    for (g, s), v in x.coeffs.items():
        si = ctx.sym_inverse(s)
        out[(sym.apply(si, ctx.group.inverse(g)), si)] = v
    return CrossedElement(ctx, out, x.window)


def left_action(x: CrossedElement) -> dict[int, CrossedElement]:
    """Component decomposition tagging the group-algebra leg on the left:
    ``f lambda_s -> lambda_s (x) f lambda_s``."""
    ctx = x.ctx
    return {
        s: CrossedElement(
            ctx, {(g, t): v for (g, t), v in x.coeffs.items() if t == s}, x.window
        )
        for s in x.components()
    }


def right_action(x: CrossedElement) -> dict[int, CrossedElement]:
    """Component decomposition tagging the group-algebra leg on the right."""
    return left_action(x)


# ---------------------------------------------------------------------------
# block decomposition of an orbit algebra
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class BlockIndex:
    """Identifies a matrix block: canonical orbit base point + position."""

    base: Element
    index: int


@dataclass
class Block:
    """One matrix block of an orbit algebra ``linf(O) x S``."""

    index: BlockIndex
    dim: int
    orbit: tuple[Element, ...]
    idempotent: CrossedElement
    weights: dict[PairKey, complex]  # normalized block trace on pair masses

    def trace_state(self, ctx: CrossedContext) -> InvariantState:
        return InvariantState(ctx, self.weights)

    def value(self, x: CrossedElement) -> complex:
        """The normalized block trace of (the orbit restriction of) ``x``."""
        # insertion order of the weights is deterministic by construction
        return sum(v * x.coeffs.get(k, 0.0) for k, v in self.weights.items())


def _stab_conjugacy_count(ctx: CrossedContext, stab: Sequence[int]) -> int:
    tbl = ctx.symmetry.table
    members = set(stab)
    seen = set()
    count = 0
    for s in stab:
        if s in seen:
            continue
        cls = {tbl.multiply(u, tbl.multiply(s, tbl.inverse(u))) for u in members}
        seen |= cls
        count += 1
    return count


def _pair_orbits(ctx: CrossedContext, base: Element) -> list[tuple[PairKey, ...]]:
    """Orbits of S on stabilizer pairs ``(g, s in S_g)`` of one group orbit,
    under ``t.(g, s) = (t.g, t s t^{-1})``; these index a center basis."""
    sym = ctx.symmetry
    tbl = sym.table
    pairs = [(g, s) for g in ctx.orbit(base) for s in ctx.stabilizer(g)]
    seen = set()
    orbits = []
    for p in sorted(pairs, key=ctx.pair_key):
        if p in seen:
            continue
        g, s = p
        orb = set()
        for t in tbl.elements():
            orb.add(
                (sym.apply(t, g), tbl.multiply(t, tbl.multiply(s, tbl.inverse(t))))
            )
        seen |= orb
        orbits.append(tuple(sorted(orb, key=ctx.pair_key)))
    return orbits


def _decompose_orbit(ctx: CrossedContext, base: Element, max_attempts: int = 8) -> list[Block]:
    """Numerical block decomposition by eigensplitting a seeded generic
    self-adjoint central element in the faithful orbit representation."""
    sym = ctx.symmetry
    tbl = sym.table
    orbit = ctx.orbit(base)
    stab = ctx.stabilizer(base)
    expected = _stab_conjugacy_count(ctx, stab)
    pair_orbits = _pair_orbits(ctx, base)
    if len(pair_orbits) != expected:
        raise ConsistencyError(
            "center dimension does not match the stabilizer class count"
        )
    # the adjoint pairs the basis element of (g, s) with that of (g, s^{-1})
    basis_index = {}
    for k, orb in enumerate(pair_orbits):
        for p in orb:
            basis_index[p] = k
    star = [basis_index[(orb[0][0], tbl.inverse(orb[0][1]))] for orb in pair_orbits]

    pairs = ctx.orbit_pairs(base)
    index = {p: i for i, p in enumerate(pairs)}
    n = len(pairs)

    def basis_matrix(k: int) -> np.ndarray:
        coeffs = {p: 1.0 for p in pair_orbits[k]}
        return ctx.orbit_matrix(CrossedElement(ctx, coeffs, INF), base)

    mats = [basis_matrix(k) for k in range(len(pair_orbits))]
    seed = zlib.crc32(ctx.group.format(base).encode()) & 0xFFFFFFFF
    for attempt in range(max_attempts):
        rng = np.random.default_rng(seed + 1009 * attempt)
        z = np.zeros((n, n), dtype=complex)
        for k in range(len(pair_orbits)):
            if star[k] == k:
                z += rng.standard_normal() * mats[k]
            elif star[k] > k:
                r1, r2 = rng.standard_normal(2)
                z += r1 * (mats[k] + mats[star[k]])
                z += r2 * 1j * (mats[k] - mats[star[k]])
        if np.max(np.abs(z - z.conj().T)) > 1e-12:
            raise ConsistencyError("generic central element is not self-adjoint")
        vals, vecs = np.linalg.eigh(z)
        scale = max(1.0, float(np.max(np.abs(vals))))
        clusters: list[list[int]] = [[0]]
        for i in range(1, n):
            if vals[i] - vals[i - 1] <= DEGENERACY_TOL * scale:
                clusters[-1].append(i)
            else:
                clusters.append([i])
        if len(clusters) != expected:
            continue
        blocks = []
        for cl in clusters:
            v = vecs[:, cl]
            proj = v @ v.conj().T
            coeffs = ctx.matrix_to_coeffs(proj, base)
            rank = float(np.real(np.trace(proj)))
            dim = round(np.sqrt(rank))
            if abs(dim * dim - rank) > 1e-6:
                raise ConsistencyError(
                    f"block rank {rank} is not a perfect square over "
                    f"{ctx.group.format(base)}"
                )
            idem = CrossedElement(ctx, coeffs, INF)
            tr_total = rank
            weights = {}
            # normalized block trace: Tr(pi(delta_g lambda_s) proj) / Tr(proj)
            for g in orbit:
                for s in ctx.stabilizer(g):
                    si = tbl.inverse(s)
                    acc = 0.0 + 0.0j
                    for u in range(ctx.n_sym):
                        acc += proj[
                            index[(sym.apply(si, g), tbl.multiply(si, u))], index[(g, u)]
                        ]
                    weights[(g, s)] = acc / tr_total
            blocks.append((dim, idem, weights))
        # canonical deterministic ordering: by (dim, rounded weight vector)
        def block_key(item):
            dim, _idem, weights = item
            vec = tuple(
                (round(float(np.real(weights.get(p, 0.0))), 8),
                 round(float(np.imag(weights.get(p, 0.0))), 8))
                for orb in pair_orbits
                for p in orb
            )
            return (dim, vec)

        blocks.sort(key=block_key)
        out = []
        for i, (dim, idem, weights) in enumerate(blocks):
            out.append(
                Block(
                    index=BlockIndex(base, i),
                    dim=dim,
                    orbit=orbit,
                    idempotent=idem,
                    weights={k: v for k, v in weights.items() if abs(v) > 1e-14},
                )
            )
        _verify_blocks(ctx, base, out)
        return out
    raise DegenerateEigensplitError(
        f"eigensplit over {ctx.group.format(base)} stayed degenerate after "
        f"{max_attempts} attempts"
    )


def _verify_blocks(ctx: CrossedContext, base: Element, blocks: list[Block]):
    tol = 1e-9
    total = ctx.zero()
    for b in blocks:
        z = b.idempotent
        if (z * z).max_coeff_diff(z) > tol:
            raise ConsistencyError("block idempotent is not idempotent")
        if z.adjoint().max_coeff_diff(z) > tol:
            raise ConsistencyError("block idempotent is not self-adjoint")
        total = total + z
    e_s = ctx.symmetry.table.identity
    unit = CrossedElement(ctx, {(g, e_s): 1.0 for g in ctx.orbit(base)}, INF)
    if total.max_coeff_diff(unit) > tol:
        raise ConsistencyError("block idempotents do not sum to the orbit unit")
    for a in blocks:
        for b in blocks:
            if a is b:
                continue
            if (a.idempotent * b.idempotent).norm() > tol:
                raise ConsistencyError("block idempotents are not orthogonal")


def state_from_blocks(
    ctx: CrossedContext, measure: Mapping[BlockIndex, float]
) -> InvariantState:
    """The invariant state ``sum_b mu(b) * (normalized block trace)``."""
    weights: dict[PairKey, complex] = {}
    total = 0.0
    for bi, mass in measure.items():
        mass = float(mass)
        if mass < 0:
            raise ContractError("block measure must be nonnegative")
        if mass == 0:
            continue
        total += mass
        block = ctx.block(bi)
        for k, v in block.weights.items():
            weights[k] = weights.get(k, 0.0) + mass * v
    if abs(total - 1.0) > 1e-12:
        raise ContractError(f"block measure mass {total} is not 1")
    return InvariantState(ctx, weights)


def dual_block(ctx: CrossedContext, bi: BlockIndex, tol: float = 1e-8) -> BlockIndex:
    """The block of the antipode image of a central idempotent, matched over
    the inverse orbit by coefficients."""
    block = ctx.block(bi)
    image = antipode(block.idempotent)
    inv_base = ctx.orbit_base(ctx.group.inverse(bi.base))
    for cand in ctx.orbit_blocks(inv_base):
        if image.max_coeff_diff(cand.idempotent) <= tol:
            return cand.index
    raise ConsistencyError(
        f"no dual block found for {bi}; antipode image matched nothing"
    )


def state_block_support(
    state: InvariantState, ctx: CrossedContext
) -> dict[BlockIndex, float]:
    """Block-by-block mass of a state: ``phi(z_b)`` over blocks meeting the support."""
    bases = sorted(
        {ctx.orbit_base(g) for (g, _s) in state.weights}, key=ctx.group.sort_key
    )
    out = {}
    for base in bases:
        for b in ctx.orbit_blocks(base):
            val = sum(
                v * b.idempotent.coeffs.get(k, 0.0) for k, v in state.items_sorted()
            )
            out[b.index] = float(np.real(val))
    return out


def state_generates(
    state: InvariantState,
    ctx: CrossedContext,
    probe: Iterable[BlockIndex],
    depth: int,
    tol: float = 1e-12,
) -> dict[BlockIndex, int | None]:
    """Block-level generating surrogate: the first power ``n <= depth`` whose
    block mass at each probe block exceeds ``tol`` (None if never)."""
    probe = list(probe)
    first: dict[BlockIndex, int | None] = {b: None for b in probe}
    power = state
    for n in range(1, depth + 1):
        support = state_block_support(power, ctx)
        for b in probe:
            if first[b] is None and support.get(b, 0.0) > tol:
                first[b] = n
        if all(v is not None for v in first.values()):
            break
        if n < depth:
            power = convolve_states(power, state)
    return first


# ---------------------------------------------------------------------------
# the materialized fusion ring of the irreducible labels
# ---------------------------------------------------------------------------


class CrossedIrrRing(FusionRing):
    """Fusion ring of the crossed product's irreducible labels (= blocks),
    materialized over orbits within a radius cap.

    Multiplicities are computed from the coproduct: the multiplicity of block
    ``w`` in ``u (x) v`` is the canonical trace of ``(z_u (x) z_v) Delta(z_w)``
    divided by ``dim w``, which reduces to the finite sum

        m^w_{uv} = (d_u d_v / d_w) * sum_{(g,s)} zcoef_w(g,s)
                   * sum_{g1 g2 = g} c_u(g1,s) c_v(g2,s).
    """

    def __init__(self, ctx: CrossedContext, radius_cap: int, orbit_cap: int = 4000):
        self.ctx = ctx
        self.radius_cap = int(radius_cap)
        self.orbit_cap = orbit_cap
        self._fusion_cache: dict[tuple[BlockIndex, BlockIndex], dict[BlockIndex, int]] = {}
        self._labels: list[BlockIndex] = []
        count = 0
        for g in ctx.group.ball(radius_cap):
            if ctx.orbit_base(g) != g:
                continue
            for b in ctx.orbit_blocks(g):
                self._labels.append(b.index)
                count += 1
                if count > orbit_cap:
                    raise ResourceError("materialized block count exceeds the cap")
        self._label_set = set(self._labels)
        self._unit = ctx.counit_block().index

    @property
    def unit(self):
        return self._unit

    def labels(self) -> list[BlockIndex]:
        return list(self._labels)

    def contains(self, label) -> bool:
        return label in self._label_set

    def dim(self, label) -> float:
        self.check_label(label)
        return float(self.ctx.block(label).dim)

    def dual(self, label) -> BlockIndex:
        self.check_label(label)
        out = dual_block(self.ctx, label)
        if out not in self._label_set:
            raise ResourceError("dual block lies outside the materialized radius")
        return out

    def label_key(self, label: BlockIndex):
        return (self.ctx.group.sort_key(label.base), label.index)

    def format_label(self, label: BlockIndex) -> str:
        return f"{self.ctx.group.format(label.base)}:{label.index}"

    def parse_label(self, text: str) -> BlockIndex:
        base_s, _, idx_s = text.rpartition(":")
        if not base_s:
            raise ScenarioParseError(f"block label {text!r} needs 'base:index'")
        try:
            idx = int(idx_s)
        except ValueError:
            raise ScenarioParseError(f"bad block index in {text!r}") from None
        base = self.ctx.orbit_base(self.ctx.group.parse(base_s))
        return BlockIndex(base, idx)

    def fusion(self, u: BlockIndex, v: BlockIndex) -> dict[BlockIndex, int]:
        self.check_label(u)
        self.check_label(v)
        if (u, v) in self._fusion_cache:
            return self._fusion_cache[(u, v)]
        ctx = self.ctx
        group = ctx.group
        bu = ctx.block(u)
        bv = ctx.block(v)
        orbit_v = set(bv.orbit)
        target_bases = sorted(
            {
                ctx.orbit_base(group.multiply(g1, g2))
                for g1 in bu.orbit
                for g2 in bv.orbit
            },
            key=group.sort_key,
        )
        out: dict[BlockIndex, int] = {}
        for base in target_bases:
            if group.length(base) > self.radius_cap:
                raise ResourceError(
                    f"fusion target orbit of {group.format(base)} lies beyond the "
                    f"materialized radius {self.radius_cap}"
                )
            for bw in ctx.orbit_blocks(base):
                acc = 0.0 + 0.0j
                for (g, s), zc in sorted(
                    bw.idempotent.coeffs.items(), key=lambda kv: ctx.pair_key(kv[0])
                ):
                    inner = 0.0 + 0.0j
                    for g1 in bu.orbit:
                        g2 = group.multiply(group.inverse(g1), g)
                        if g2 not in orbit_v:
                            continue
                        c1 = bu.weights.get((g1, s))
                        if not c1:
                            continue
                        c2 = bv.weights.get((g2, s))
                        if not c2:
                            continue
                        inner += c1 * c2
                    acc += zc * inner
                m_float = float(np.real(acc)) * bu.dim * bv.dim / bw.dim
                m = round(m_float)
                if abs(m_float - m) > 1e-6:
                    raise ConsistencyError(
                        f"non-integer fusion multiplicity {m_float} at "
                        f"({self.format_label(u)}, {self.format_label(v)}, "
                        f"{self.format_label(bw.index)})"
                    )
                if m:
                    out[bw.index] = m
        self._fusion_cache[(u, v)] = out
        return out


def block_measure(ring: CrossedIrrRing, masses: Mapping[BlockIndex, float]) -> LabelMeasure:
    for b in masses:
        ring.check_label(b)
    return LabelMeasure(dict(masses))
