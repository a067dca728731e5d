"""Fusion-ring arithmetic, measures on simple labels, and the induced
classical random walk with truncated Green/Martin kernels.

A fusion ring is described by an enumerable set of simple labels with a unit,
a dual involution, positive dimensions, and nonnegative integer structure
constants ``mult(s, r, t)`` (finitely many nonzero ``t`` per pair).  Measures
convolve by

    (nu * mu)(t) = sum_{s,r} nu(s) mu(r) mult(s,r,t) dim(t) / (dim(s) dim(r)),

which maps probabilities to probabilities whenever the dimension identity
``sum_t mult(s,r,t) dim(t) = dim(s) dim(r)`` holds.  The induced classical
walk moves from ``s`` with one-step law ``delta_s * mu``; its truncated Green
kernel is a partial sum of n-step masses computed by sparse matrix powers on
a deterministically enumerated, possibly truncated label space.  Truncation
kills mass that leaves the space; the leak and a geometric tail estimate are
reported rather than hidden.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Iterator, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import (
    ContractError,
    DomainError,
    NotYetReachedError,
    ResourceError,
    ScenarioParseError,
)
from .groups import FreeProductGroup, TableGroup

Label = Hashable

#: Mass tolerance for probability checks.
MASS_TOL = 1e-12

#: Martin-kernel denominators below this floor count as not yet reached.
DENOMINATOR_FLOOR = 1e-9

#: Default cap on materialized labels in a walk space.
DEFAULT_LABEL_CAP = 400_000

#: Default cap on the horizon of a single kernel run.
DEFAULT_HORIZON_CAP = 100_000


class FusionRing(ABC):
    """Simple labels with unit, duals, dimensions, and fusion multiplicities."""

    @property
    @abstractmethod
    def unit(self) -> Label: ...

    @abstractmethod
    def dim(self, label: Label) -> float: ...

    @abstractmethod
    def dual(self, label: Label) -> Label: ...

    @abstractmethod
    def fusion(self, s: Label, r: Label) -> Mapping[Label, int]:
        """All labels ``t`` with ``mult(s, r, t) > 0``, with multiplicities."""

    @abstractmethod
    def contains(self, label: Label) -> bool: ...

    @abstractmethod
    def label_key(self, label: Label):
        """Deterministic sort key; fixes enumeration and summation order."""

    def mult(self, s: Label, r: Label, t: Label) -> int:
        return int(self.fusion(s, r).get(t, 0))

    def check_label(self, label: Label):
        if not self.contains(label):
            raise DomainError(f"label {label!r} is not in the ring")


class PointedRing(FusionRing):
    """The pointed ring of a group: labels are group elements, all dims 1.

    Works over either a :class:`FreeProductGroup` (elements are syllable
    tuples) or a :class:`TableGroup` (elements are indices).
    """

    def __init__(self, group):
        self.group = group
        self._finite = isinstance(group, TableGroup)

    @property
    def unit(self) -> Label:
        return self.group.identity

    def dim(self, label) -> float:
        return 1.0

    def dual(self, label) -> Label:
        return self.group.inverse(label)

    def fusion(self, s, r) -> Mapping[Label, int]:
        return {self.group.multiply(s, r): 1}

    def contains(self, label) -> bool:
        if self._finite:
            return isinstance(label, int) and 0 <= label < len(self.group)
        try:
            return self.group.normal_form(label) == label
        except Exception:
            return False

    def label_key(self, label):
        return label if self._finite else self.group.sort_key(label)

    def format_label(self, label) -> str:
        return self.group.names[label] if self._finite else self.group.format(label)

    def parse_label(self, text: str) -> Label:
        return self.group.index(text) if self._finite else self.group.parse(text)


class TableRing(FusionRing):
    """A fusion ring given by explicit labels, dims, duals, and sparse triples."""

    def __init__(
        self,
        labels: Sequence[str],
        dims: Sequence[float],
        duals: Mapping[str, str],
        triples: Mapping[tuple[str, str, str], int],
        unit: str,
    ):
        self._labels = tuple(labels)
        if len(set(self._labels)) != len(self._labels):
            raise ContractError("ring labels must be distinct")
        label_set = set(self._labels)
        if unit not in label_set:
            raise ContractError("unit must be one of the labels")
        self._unit = unit
        self._dims = {l: float(d) for l, d in zip(self._labels, dims)}
        for l, d in self._dims.items():
            if d <= 0:
                raise ContractError(f"dimension of {l!r} must be positive")
        if abs(self._dims[unit] - 1.0) > MASS_TOL:
            raise ContractError("unit must have dimension 1")
        self._dual = dict(duals)
        for l in self._labels:
            if self._dual.get(l) not in label_set:
                raise ContractError(f"dual of {l!r} missing or unknown")
            if self._dual[self._dual[l]] != l:
                raise ContractError("dual map must be an involution")
        self._fusion: dict[tuple[str, str], dict[str, int]] = {}
        for (s, r, t), m in triples.items():
            if {s, r, t} - label_set:
                raise ContractError(f"triple ({s},{r},{t}) uses unknown labels")
            m = int(m)
            if m < 0:
                raise ContractError("multiplicities must be nonnegative")
            if m:
                self._fusion.setdefault((s, r), {})[t] = m
        # the unit rows/columns are implied when absent
        for l in self._labels:
            self._fusion.setdefault((unit, l), {l: 1})
            self._fusion.setdefault((l, unit), {l: 1})
        self._order = {l: i for i, l in enumerate(self._labels)}

    @property
    def unit(self):
        return self._unit

    def labels(self) -> tuple[str, ...]:
        return self._labels

    def dim(self, label):
        self.check_label(label)
        return self._dims[label]

    def dual(self, label):
        self.check_label(label)
        return self._dual[label]

    def fusion(self, s, r):
        self.check_label(s)
        self.check_label(r)
        return self._fusion.get((s, r), {})

    def contains(self, label):
        return label in self._dims

    def label_key(self, label):
        return self._order[label]

    @classmethod
    def from_text(cls, text: str) -> "TableRing":
        """Parse the structured ring description format.

        ::

            labels = 1 sgn V
            unit = 1
            dims = 1 1 2
            duals = 1 sgn V            # image of each label, in order
            mult 1 . 1 . 1 = 1         # sparse triples; omitted unit rows implied
            mult V . V . sgn = 1
        """
        fields: dict[str, str] = {}
        triples: dict[tuple[str, str, str], int] = {}
        for ln, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ScenarioParseError("expected 'key = value'", line=ln)
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key.startswith("mult "):
                parts = [p.strip() for p in key[len("mult "):].split(".")]
                if len(parts) != 3:
                    raise ScenarioParseError("mult key needs 's . r . t'", line=ln)
                try:
                    triples[tuple(parts)] = int(value)
                except ValueError:
                    raise ScenarioParseError("multiplicity must be an integer", line=ln)
            elif key in ("labels", "unit", "dims", "duals"):
                fields[key] = value
            else:
                raise ScenarioParseError(f"unknown ring key {key!r}", line=ln)
        for need in ("labels", "unit", "dims", "duals"):
            if need not in fields:
                raise ScenarioParseError(f"ring description lacks {need!r}")
        labels = fields["labels"].split()
        dims = [float(v) for v in fields["dims"].split()]
        dual_images = fields["duals"].split()
        if len(dims) != len(labels) or len(dual_images) != len(labels):
            raise ScenarioParseError("dims/duals must list one entry per label")
        duals = dict(zip(labels, dual_images))
        return cls(labels, dims, duals, triples, fields["unit"])


class CharacterRing(FusionRing):
    """Character ring of a finite group, computed from its multiplication table.

    Irreducible characters are found numerically (simultaneous diagonalization
    of the class-sum multiplication matrices with a seeded generic
    combination), then fusion multiplicities come from the inner product
    ``<chi_s chi_r, chi_t>`` rounded to integers.
    """

    def __init__(self, table: TableGroup, seed: int = 11):
        self.table = table
        self.classes = table.conjugacy_classes()
        k = len(self.classes)
        n = len(table)
        class_of = [0] * n
        for ci, cls in enumerate(self.classes):
            for g in cls:
                class_of[g] = ci
        self._class_of = class_of
        # class multiplication coefficients a[i][j][k]
        a = np.zeros((k, k, k))
        for i, ci in enumerate(self.classes):
            for j, cj in enumerate(self.classes):
                for x in ci:
                    for y in cj:
                        a[i, j, class_of[table.multiply(x, y)]] += 1.0
        for kk, cls in enumerate(self.classes):
            a[:, :, kk] /= len(cls)
        self._characters = self._solve_characters(a, seed)
        self._names, self._by_name = self._assign_names()
        self._unit = self._names[self._trivial_index]
        self._fusion_cache: dict[tuple[str, str], dict[str, int]] = {}

    def _solve_characters(self, a: np.ndarray, seed: int) -> list[np.ndarray]:
        k = a.shape[0]
        sizes = np.array([len(c) for c in self.classes], dtype=float)
        order = float(len(self.table))
        inv_class = [self._class_of[self.table.inverse(c[0])] for c in self.classes]
        rng = np.random.default_rng(seed)
        for attempt in range(20):
            coeff = rng.standard_normal(k)
            m = np.einsum("i,ijk->jk", coeff, a)
            vals, vecs = np.linalg.eig(m)
            if len(np.unique(np.round(vals, 8))) < k:
                continue
            chars = []
            for idx in range(k):
                v = vecs[:, idx]
                # normalize so the identity-class entry is 1, giving the
                # central character omega_i = |K_i| chi(g_i) / chi(1)
                id_cls = self._class_of[self.table.identity]
                if abs(v[id_cls]) < 1e-12:
                    break
                omega = v / v[id_cls]
                norm = float(np.real(np.sum(omega * np.conj(omega) / sizes)))
                if norm <= 0:
                    break
                degree = math.sqrt(order / norm)
                chi = omega * degree / sizes
                chars.append(chi)
            if len(chars) != k:
                continue
            # second orthogonality sanity: sum over classes |K| chi chibar = |G| delta
            gram = np.einsum("ik,jk,k->ij", np.array(chars), np.conj(np.array(chars)), sizes)
            if np.max(np.abs(gram - order * np.eye(k))) < 1e-6 * order:
                # characters of the inverse classes must be the conjugates
                ok = all(
                    np.max(np.abs(np.conj(chi) - chi[inv_class])) < 1e-6 for chi in chars
                )
                if ok:
                    return chars
        raise ResourceError("character table did not stabilize; table may be invalid")

    def _assign_names(self) -> tuple[list[str], dict[str, int]]:
        id_cls = self._class_of[self.table.identity]
        keyed = []
        for i, chi in enumerate(self._characters):
            vec = tuple(
                (round(float(np.real(v)), 6), round(float(np.imag(v)), 6)) for v in chi
            )
            trivial = all(abs(re - 1.0) < 1e-6 and abs(im) < 1e-6 for re, im in vec)
            degree = round(float(np.real(chi[id_cls])))
            keyed.append((0 if trivial else 1, degree, vec, i))
        keyed.sort()
        order = [i for (_t, _d, _v, i) in keyed]
        self._characters = [np.asarray(self._characters[i]) for i in order]
        self._trivial_index = 0
        names = ["triv"] + [f"chi{i}" for i in range(1, len(order))]
        return names, {name: i for i, name in enumerate(names)}

    @property
    def unit(self):
        return self._unit

    def labels(self) -> tuple[str, ...]:
        return tuple(self._names)

    def character(self, label: str) -> np.ndarray:
        """Character values of ``label`` over the conjugacy classes."""
        self.check_label(label)
        return self._characters[self._by_name[label]].copy()

    def dim(self, label):
        chi = self._characters[self._by_name[label]]
        raw = float(np.real(chi[self._class_of[self.table.identity]]))
        snapped = round(raw)
        if abs(raw - snapped) > 1e-6:
            raise DomainError(f"non-integer degree {raw} for {label!r}")
        return float(snapped)

    def dual(self, label):
        chi = np.conj(self.character(label))
        for name in self._names:
            if np.max(np.abs(chi - self._characters[self._by_name[name]])) < 1e-8:
                return name
        raise DomainError(f"no conjugate character found for {label!r}")

    def fusion(self, s, r):
        self.check_label(s)
        self.check_label(r)
        if (s, r) in self._fusion_cache:
            return self._fusion_cache[(s, r)]
        sizes = np.array([len(c) for c in self.classes], dtype=float)
        prod = self._characters[self._by_name[s]] * self._characters[self._by_name[r]]
        out = {}
        for t in self._names:
            chi_t = self._characters[self._by_name[t]]
            m = float(np.real(np.sum(prod * np.conj(chi_t) * sizes))) / len(self.table)
            mi = round(m)
            if abs(m - mi) > 1e-6:
                raise DomainError(f"non-integer multiplicity {m} for ({s},{r},{t})")
            if mi:
                out[t] = mi
        self._fusion_cache[(s, r)] = out
        return out

    def contains(self, label):
        return label in self._by_name

    def label_key(self, label):
        return self._by_name[label]


# ---------------------------------------------------------------------------
# measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LabelMeasure:
    """A finitely supported measure on ring labels (nonnegative weights)."""

    weights: Mapping[Label, float]

    def __post_init__(self):
        object.__setattr__(
            self, "weights", {l: float(w) for l, w in self.weights.items() if w != 0.0}
        )
        for l, w in self.weights.items():
            if w < 0:
                raise ContractError(f"negative weight {w} at {l!r}")

    @property
    def mass(self) -> float:
        return float(sum(self.weights.values()))

    def is_probability(self, tol: float = MASS_TOL) -> bool:
        return abs(self.mass - 1.0) <= tol

    def support(self) -> set:
        return set(self.weights)

    def __call__(self, label) -> float:
        return self.weights.get(label, 0.0)

    def normalized(self) -> "LabelMeasure":
        m = self.mass
        if m <= 0:
            raise DomainError("cannot normalize the zero measure")
        return LabelMeasure({l: w / m for l, w in self.weights.items()})

    def items_sorted(self, ring: FusionRing):
        return sorted(self.weights.items(), key=lambda kv: ring.label_key(kv[0]))

    def close_to(self, other: "LabelMeasure", tol: float = MASS_TOL) -> bool:
        keys = set(self.weights) | set(other.weights)
        return all(abs(self(l) - other(l)) <= tol for l in keys)


def delta(label) -> LabelMeasure:
    return LabelMeasure({label: 1.0})


def convolve(nu: LabelMeasure, mu: LabelMeasure, ring: FusionRing) -> LabelMeasure:
    """Measure convolution weighted by fusion multiplicities and dimensions."""
    for l in nu.weights:
        ring.check_label(l)
    for l in mu.weights:
        ring.check_label(l)
    out: dict[Label, float] = {}
    for s, ws in nu.items_sorted(ring):
        ds = ring.dim(s)
        for r, wr in mu.items_sorted(ring):
            dd = ds * ring.dim(r)
            # dimension ratio first: the unit factor then contributes an
            # exact 1.0 and point masses convolve without rounding
            for t, m in ring.fusion(s, r).items():
                out[t] = out.get(t, 0.0) + ws * wr * ((m * ring.dim(t)) / dd)
    return LabelMeasure(out)


def convolution_power(mu: LabelMeasure, n: int, ring: FusionRing) -> LabelMeasure:
    """``mu * ... * mu`` (n factors); ``n = 0`` returns the unit point mass."""
    if n < 0:
        raise ContractError("n must be >= 0")
    if n == 0:
        return delta(ring.unit)
    out = mu
    for _ in range(n - 1):
        out = convolve(out, mu, ring)
    return out


def transition(s: Label, mu: LabelMeasure, ring: FusionRing) -> LabelMeasure:
    """One-step law of the induced classical walk started at ``s``."""
    ring.check_label(s)
    if not mu.is_probability():
        raise ContractError("transition requires a probability measure")
    return convolve(delta(s), mu, ring)


def dual_measure(mu: LabelMeasure, ring: FusionRing) -> LabelMeasure:
    """Pushforward along the dual involution; an involution on measures."""
    return LabelMeasure({ring.dual(l): w for l, w in mu.weights.items()})


@dataclass(frozen=True)
class GeneratingReport:
    generating: bool
    first_hit: dict[Label, int | None]
    depth: int


def is_generating(
    mu: LabelMeasure, ring: FusionRing, depth: int, probe: Iterable[Label]
) -> GeneratingReport:
    """Do the convolution powers of ``mu`` charge every probe label by ``depth``?

    Decides only up to ``depth``; ``first_hit`` records the minimal power at
    which each probe label was charged (``None`` if never within depth).
    """
    probe = list(probe)
    if not probe:
        raise ContractError("probe set must be nonempty")
    if depth < 1:
        raise ContractError("depth must be >= 1")
    for l in probe:
        ring.check_label(l)
    first_hit: dict[Label, int | None] = {l: None for l in probe}
    support = {ring.unit}
    pending = set(probe)
    if ring.unit in pending:
        # the zeroth power charges the unit by convention only when probed at n>=1
        pass
    current = {ring.unit}
    for n in range(1, depth + 1):
        nxt: set = set()
        for s in current:
            for r in mu.weights:
                nxt.update(ring.fusion(s, r).keys())
        current = nxt
        for l in list(pending):
            if l in current:
                first_hit[l] = n
                pending.discard(l)
        if not pending:
            break
    return GeneratingReport(not pending, first_hit, depth)


# ---------------------------------------------------------------------------
# the induced classical walk: killed label space and truncated kernels
# ---------------------------------------------------------------------------


@dataclass
class TailEstimate:
    """Geometric extrapolation of the remaining Green mass past the horizon."""

    value: float
    ratio: float
    decaying: bool


@dataclass
class WalkState:
    """Resumable state of a truncated kernel summation.

    ``dist`` is the current n-step vector, ``total`` the accumulated Green
    vector, ``increments`` the per-step values at the tracked indices
    (shape ``(steps + 1, len(track))``), and ``leaked`` the mass killed at
    the space boundary so far.  Advancing is a pure deterministic function of
    this state, which is what makes horizon resumption bit-identical.
    """

    dist: np.ndarray
    total: np.ndarray
    increments: np.ndarray
    track: tuple[int, ...]
    steps: int
    leaked: float
    adjoint: bool = False


@dataclass
class WalkSpace:
    """A deterministically enumerated, possibly truncated label space with the
    one-step matrix of the induced walk.

    Labels are discovered breadth-first from the sources through the support
    of ``delta_s * mu``; layers are added whole (never partially) until the
    cap would be exceeded, so the space depends only on (ring, mu, sources,
    cap) and never on the horizon.  Transitions leaving the space are killed;
    the killed mass per row is recorded instead of silently dropped.
    """

    ring: FusionRing
    mu: LabelMeasure
    labels: list
    index: dict
    matrix: sp.csr_matrix
    matrix_t: sp.csr_matrix
    leak: np.ndarray
    complete: bool
    layers: int

    @classmethod
    def build(
        cls,
        ring: FusionRing,
        mu: LabelMeasure,
        sources: Iterable[Label],
        cap: int = DEFAULT_LABEL_CAP,
    ) -> "WalkSpace":
        if not mu.is_probability():
            raise ContractError("walks require a probability measure")
        sources = sorted(set(sources), key=ring.label_key)
        if not sources:
            raise ContractError("at least one source label is required")
        for s in sources:
            ring.check_label(s)
        mu_items = mu.items_sorted(ring)
        dim = ring.dim
        fusion = ring.fusion

        def step_row(s):
            ds = dim(s)
            out: dict = {}
            for r, wr in mu_items:
                scale = wr / (ds * dim(r))
                for t, m in fusion(s, r).items():
                    out[t] = out.get(t, 0.0) + scale * m * dim(t)
            return out

        labels: list = list(sources)
        seen = set(sources)
        frontier = list(sources)
        complete = False
        layers = 0
        while frontier:
            new: set = set()
            for s in frontier:
                for t in step_row(s):
                    if t not in seen:
                        new.add(t)
            if not new:
                complete = True
                break
            if len(labels) + len(new) > cap:
                break
            frontier = sorted(new, key=ring.label_key)
            labels.extend(frontier)
            seen |= new
            layers += 1
        index = {l: i for i, l in enumerate(labels)}
        rows, cols, data = [], [], []
        leak = np.zeros(len(labels))
        for i, s in enumerate(labels):
            for t, w in sorted(step_row(s).items(), key=lambda kv: ring.label_key(kv[0])):
                j = index.get(t)
                if j is None:
                    leak[i] += w
                else:
                    rows.append(i)
                    cols.append(j)
                    data.append(w)
        matrix = sp.csr_matrix((data, (rows, cols)), shape=(len(labels), len(labels)))
        matrix.sum_duplicates()
        return cls(
            ring, mu, labels, index, matrix, matrix.T.tocsr(), leak, complete, layers
        )

    def start(self, source: Label, track: Iterable[Label], adjoint: bool = False) -> WalkState:
        """Zero-step state: from ``source`` (forward) or toward it (adjoint)."""
        v = np.zeros(len(self.labels))
        v[self.index[source]] = 1.0
        track_idx = tuple(self.index[t] for t in track)
        return WalkState(
            dist=v,
            total=v.copy(),
            increments=v[list(track_idx)].reshape(1, -1).copy(),
            track=track_idx,
            steps=0,
            leaked=0.0,
            adjoint=adjoint,
        )

    def advance(self, state: WalkState, n_steps: int) -> WalkState:
        """Run ``n_steps`` more summation steps; mutates and returns ``state``."""
        v = state.dist
        rows = [state.increments]
        op = self.matrix if state.adjoint else self.matrix_t
        track = list(state.track)
        for _ in range(n_steps):
            if not state.adjoint:
                state.leaked += float(v @ self.leak)
            v = op @ v
            state.total += v
            rows.append(v[track].reshape(1, -1))
        state.dist = v
        state.increments = np.concatenate(rows, axis=0)
        state.steps += n_steps
        return state


def _tail_estimate(increments: Sequence[float]) -> TailEstimate:
    """Geometric tail from the last quarter of the increment sequence.

    Increments are paired (period-2 walks have vanishing odd terms) and the
    per-pair decay ratio is fit.  Geometric decay keeps the per-step ratio
    bounded away from one; polynomial (recurrent-looking) decay pushes it to
    ``1 - O(1/horizon)``, so the suspicion threshold scales with the horizon.
    """
    n = len(increments)
    start = max(0, n - max(4, n // 4))
    window = list(increments[start:])
    if len(window) % 2:
        window = window[1:]
    blocks = [window[i] + window[i + 1] for i in range(0, len(window) - 1, 2)]
    blocks = [b for b in blocks if b > 0]
    if len(blocks) < 2 or blocks[-1] <= 0:
        return TailEstimate(0.0, 0.0, True)
    pair_ratio = (blocks[-1] / blocks[0]) ** (1.0 / (len(blocks) - 1))
    ratio = math.sqrt(pair_ratio)  # per single step
    threshold = 1.0 - 2.5 / max(10.0, float(n))
    if ratio >= threshold:
        return TailEstimate(math.inf, ratio, False)
    return TailEstimate(blocks[-1] * pair_ratio / (1.0 - pair_ratio), ratio, True)


@dataclass
class GreenTable:
    """Truncated Green kernel values from one source, with honesty metadata."""

    source: Label
    horizon: int
    values: dict
    tails: dict
    exact_space: bool
    leaked_mass: float
    suspected_nontransient: bool
    space_size: int

    def value(self, target) -> float:
        return self.values[target]


def green_classical(
    source: Label,
    mu: LabelMeasure,
    ring: FusionRing,
    horizon: int,
    targets: Iterable[Label],
    cap: int = DEFAULT_LABEL_CAP,
    horizon_cap: int = DEFAULT_HORIZON_CAP,
    space: WalkSpace | None = None,
) -> GreenTable:
    """Partial Green sums ``G_N(source, t) = sum_{n<=N} p^n(source, t)``.

    The label space is enumerated from the source (plus targets) and may be
    truncated at ``cap``; killed mass and a geometric tail estimate from the
    last quarter of the increments are reported alongside the values.
    """
    if horizon < 0:
        raise ContractError("horizon must be >= 0")
    if horizon > horizon_cap:
        raise ResourceError(f"horizon {horizon} exceeds the cost budget {horizon_cap}")
    targets = sorted(set(targets), key=ring.label_key)
    if space is None:
        space = WalkSpace.build(ring, mu, [source, *targets], cap=cap)
    state = space.advance(space.start(source, targets), horizon)
    values, tails = {}, {}
    suspicious = False
    for k, t in enumerate(targets):
        values[t] = float(state.total[space.index[t]])
        est = _tail_estimate(state.increments[:, k].tolist())
        tails[t] = est
        if not est.decaying and values[t] > 0:
            suspicious = True
    return GreenTable(
        source=source,
        horizon=horizon,
        values=values,
        tails=tails,
        exact_space=space.complete,
        leaked_mass=state.leaked,
        suspected_nontransient=suspicious,
        space_size=len(space.labels),
    )


def martin_classical(
    mu: LabelMeasure,
    ring: FusionRing,
    horizon: int,
    s: Label,
    t: Label,
    cap: int = DEFAULT_LABEL_CAP,
) -> float:
    """Truncated Martin kernel ``K(s, t) = G(s, t) / G(unit, t)`` at matched horizons."""
    space = WalkSpace.build(ring, mu, [ring.unit, s, t], cap=cap)
    state = space.advance(space.start(t, [ring.unit, s], adjoint=True), horizon)
    den = float(state.total[space.index[ring.unit]])
    if den <= DENOMINATOR_FLOOR:
        raise NotYetReachedError(
            f"G(unit, {t!r}) = {den} is below the floor at horizon {horizon}"
        )
    return float(state.total[space.index[s]]) / den


# ---------------------------------------------------------------------------
# invariant suite (shared by tests, the CLI, and the acceptance harness)
# ---------------------------------------------------------------------------


def random_measure(ring, labels, rng, probability=True) -> LabelMeasure:
    labels = list(labels)
    w = rng.random(len(labels)) + 0.05
    if probability:
        w = w / w.sum()
    return LabelMeasure(dict(zip(labels, w)))


def ring_invariant_report(
    ring: FusionRing,
    labels: Sequence[Label],
    rng: np.random.Generator,
    tol: float = MASS_TOL,
    trials: int = 5,
) -> list[tuple[str, bool, str]]:
    """Check the fusion-ring axioms and measure identities on a label sample.

    Returns ``(check name, passed, detail)`` rows; every row must pass for a
    healthy ring.  All checks are exact-arithmetic facts tested at ``tol``.
    """
    labels = list(labels)
    rows: list[tuple[str, bool, str]] = []

    def record(name, ok, detail=""):
        rows.append((name, bool(ok), detail))

    e = ring.unit
    record("unit_dimension", abs(ring.dim(e) - 1.0) <= tol, f"dim(e)={ring.dim(e)}")
    ok = True
    detail = ""
    for s in labels:
        fus = ring.fusion(e, s)
        fus2 = ring.fusion(s, e)
        if fus != {s: 1} or fus2 != {s: 1}:
            ok, detail = False, f"unit law fails at {s!r}"
            break
    record("unit_law", ok, detail)

    ok, detail, worst = True, "", 0.0
    for s in labels:
        for r in labels:
            total = sum(m * ring.dim(t) for t, m in ring.fusion(s, r).items())
            err = abs(total - ring.dim(s) * ring.dim(r))
            worst = max(worst, err)
            if err > 1e-10:
                ok, detail = False, f"dimension identity fails at ({s!r},{r!r}): {err}"
    record("dimension_identity", ok, detail or f"max err {worst:.2e}")

    ok, detail = True, ""
    for s in labels:
        if ring.dual(ring.dual(s)) != s or abs(ring.dim(ring.dual(s)) - ring.dim(s)) > 1e-10:
            ok, detail = False, f"dual involution/dimension fails at {s!r}"
    record("dual_involution", ok, detail)

    ok, detail = True, ""
    for s in labels:
        for r in labels:
            for t, m in ring.fusion(s, r).items():
                checks = (
                    ring.mult(ring.dual(r), ring.dual(s), ring.dual(t)),
                    ring.mult(ring.dual(s), t, r),
                    ring.mult(t, ring.dual(r), s),
                )
                if any(c != m for c in checks):
                    ok = False
                    detail = f"symmetry fails at ({s!r},{r!r},{t!r}): {m} vs {checks}"
    record("frobenius_symmetry", ok, detail)

    ok, worst = True, 0.0
    for _ in range(trials):
        nu = random_measure(ring, labels, rng)
        mu = random_measure(ring, labels, rng)
        conv = convolve(nu, mu, ring)
        worst = max(worst, abs(conv.mass - nu.mass * mu.mass))
        lam = random_measure(ring, labels, rng)
        left = convolve(convolve(lam, nu, ring), mu, ring)
        right = convolve(lam, convolve(nu, mu, ring), ring)
        keys = left.support() | right.support()
        worst = max(worst, max(abs(left(k) - right(k)) for k in keys))
        if not convolve(delta(e), mu, ring).close_to(mu, 0.0):
            ok = False
        if not convolve(mu, delta(e), ring).close_to(mu, 0.0):
            ok = False
        rev = dual_measure(conv, ring)
        expect = convolve(dual_measure(mu, ring), dual_measure(nu, ring), ring)
        worst = max(worst, max(abs(rev(k) - expect(k)) for k in rev.support() | expect.support()))
    record("mass_associativity_duality", ok and worst <= tol, f"max err {worst:.2e}")

    ok, worst = True, 0.0
    mu = random_measure(ring, labels, rng)
    for s in labels:
        row = transition(s, mu, ring)
        worst = max(worst, abs(row.mass - 1.0))
    record("row_stochastic", worst <= tol, f"max err {worst:.2e}")
    return rows
