"""Finitely generated groups with exact normal forms, ball enumeration, and
finite symmetry groups acting by automorphisms.

Two group families are supported:

* :class:`FreeProductGroup` -- free products of cyclic groups
  ``Z/m_1 * ... * Z/m_n`` (``m_i = 0`` encodes an infinite factor).  Elements
  are tuples of syllables ``(factor, exponent)`` in reduced normal form; the
  word problem is solved by syllable cancellation, so all arithmetic is exact.
* :class:`TableGroup` -- finite groups given by a multiplication table
  (verified Latin square with identity and inverses).

Word length uses the symmetric generator alphabet: a syllable with exponent
``k`` in an order-``m`` factor costs ``min(k, m - k)`` steps (``|k|`` for an
infinite factor).  Ball enumeration is ordered by ``(length, lexicographic
normal form)``; this ordering is fixed and every downstream kernel table and
cache key depends on it.
"""

from __future__ import annotations

import itertools
from typing import Iterable, Iterator, Sequence

from .errors import ConsistencyError, ContractError, ResourceError, ScenarioParseError

Syllable = tuple[int, int]
Element = tuple[Syllable, ...]

#: Default cap on materialized ball sizes.
DEFAULT_BALL_CAP = 2_000_000

IDENTITY: Element = ()


class FreeProductGroup:
    """Free product of cyclic groups with exact normal forms.

    Parameters
    ----------
    orders:
        One entry per free factor; each entry is ``0`` (infinite cyclic) or an
        integer ``>= 2``.
    generators:
        Optional generator names; defaults to ``a``, ``b``, ``c``, ... or
        ``x1``, ``x2``, ... past 26 factors.
    """

    def __init__(self, orders: Sequence[int], generators: Sequence[str] | None = None):
        orders = tuple(int(m) for m in orders)
        if not orders:
            raise ContractError("at least one free factor is required")
        for m in orders:
            if m != 0 and m < 2:
                raise ContractError(f"factor order must be 0 (infinite) or >= 2, got {m}")
        if generators is None:
            if len(orders) <= 26:
                generators = tuple(chr(ord("a") + i) for i in range(len(orders)))
            else:
                generators = tuple(f"x{i + 1}" for i in range(len(orders)))
        generators = tuple(generators)
        if len(generators) != len(orders):
            raise ContractError("one generator name per factor is required")
        if len(set(generators)) != len(generators):
            raise ContractError("generator names must be distinct")
        if "e" in generators:
            raise ContractError("'e' is reserved for the identity")
        self.orders = orders
        self.generators = generators
        self._gen_index = {g: i for i, g in enumerate(generators)}
        self.identity: Element = IDENTITY

    # -- basic structure ---------------------------------------------------

    def __repr__(self):
        parts = [f"Z" if m == 0 else f"Z/{m}" for m in self.orders]
        return f"FreeProductGroup({' * '.join(parts)})"

    def __eq__(self, other):
        return (
            isinstance(other, FreeProductGroup)
            and self.orders == other.orders
            and self.generators == other.generators
        )

    def __hash__(self):
        return hash((self.orders, self.generators))

    @property
    def is_finite(self) -> bool:
        return len(self.orders) == 1 and self.orders[0] != 0

    def generator(self, i: int) -> Element:
        return ((i, 1),)

    def _reduce_exponent(self, factor: int, exp: int) -> int:
        m = self.orders[factor]
        return exp if m == 0 else exp % m

    def normal_form(self, word: Iterable[tuple[int, int]]) -> Element:
        """Reduce an arbitrary syllable word to its normal form.

        Raises :class:`ScenarioParseError` on an unknown factor index or an
        explicit zero exponent in the input.
        """
        stack: list[list[int]] = []
        for factor, exp in word:
            factor = int(factor)
            exp = int(exp)
            if not 0 <= factor < len(self.orders):
                raise ScenarioParseError(f"unknown factor index {factor}")
            if exp == 0:
                raise ScenarioParseError("zero exponent in word")
            if stack and stack[-1][0] == factor:
                stack[-1][1] = self._reduce_exponent(factor, stack[-1][1] + exp)
                if stack[-1][1] == 0:
                    stack.pop()
            else:
                stack.append([factor, self._reduce_exponent(factor, exp)])
                if stack[-1][1] == 0:
                    stack.pop()
        return tuple((f, k) for f, k in stack)

    def multiply(self, x: Element, y: Element) -> Element:
        if not x:
            return y
        if not y:
            return x
        head = list(x)
        # cancel across the junction only; both sides are already reduced
        for factor, exp in y:
            if head and head[-1][0] == factor:
                k = self._reduce_exponent(factor, head[-1][1] + exp)
                head.pop()
                if k:
                    head.append((factor, k))
            else:
                head.append((factor, exp))
        return tuple(head)

    def inverse(self, x: Element) -> Element:
        return tuple((f, self._reduce_exponent(f, -k)) for f, k in reversed(x))

    def conjugate(self, s: Element, x: Element) -> Element:
        return self.multiply(self.multiply(s, x), self.inverse(s))

    # -- metric and ordering ----------------------------------------------

    def syllable_cost(self, factor: int, exp: int) -> int:
        m = self.orders[factor]
        if m == 0:
            return abs(exp)
        k = exp % m
        return min(k, m - k)

    def length(self, x: Element) -> int:
        return sum(self.syllable_cost(f, k) for f, k in x)

    def _syllable_key(self, factor: int, exp: int) -> tuple[int, int, int]:
        m = self.orders[factor]
        if m == 0:
            return (factor, abs(exp), 0 if exp > 0 else 1)
        k = exp % m
        return (factor, min(k, m - k), k)

    def sort_key(self, x: Element):
        """Total order key: (length, lexicographic reduced form).  Fixed forever."""
        return (self.length(x), tuple(self._syllable_key(f, k) for f, k in x))

    # -- enumeration --------------------------------------------------------

    def symmetric_alphabet(self) -> list[Element]:
        """Generators and their inverses, deduplicated (order-2 factors once)."""
        alphabet: list[Element] = []
        for i, m in enumerate(self.orders):
            alphabet.append(((i, 1),))
            if m != 2:
                alphabet.append(((i, self._reduce_exponent(i, -1)),))
        return alphabet

    def ball(self, radius: int, cap: int = DEFAULT_BALL_CAP) -> list[Element]:
        """All elements of word length <= radius, ordered by ``sort_key``."""
        if radius < 0:
            raise ContractError("radius must be >= 0")
        alphabet = self.symmetric_alphabet()
        seen: dict[Element, int] = {IDENTITY: 0}
        frontier = [IDENTITY]
        for r in range(1, radius + 1):
            new: list[Element] = []
            for x in frontier:
                for g in alphabet:
                    y = self.multiply(x, g)
                    if y not in seen:
                        seen[y] = r
                        new.append(y)
            if len(seen) > cap:
                raise ResourceError(
                    f"ball({radius}) exceeds the cap of {cap} elements at radius {r}"
                )
            frontier = new
            if not frontier:
                break
        out = sorted(seen, key=self.sort_key)
        return out

    def sphere(self, radius: int, cap: int = DEFAULT_BALL_CAP) -> list[Element]:
        if radius == 0:
            return [IDENTITY]
        ball = self.ball(radius, cap=cap)
        return [x for x in ball if self.length(x) == radius]

    # -- parsing and formatting ---------------------------------------------

    def format(self, x: Element) -> str:
        """Serialize a normal form, e.g. ``e``, ``ab``, ``x1^-2.x2``."""
        if not x:
            return "e"
        parts = []
        bare = True
        for f, k in x:
            name = self.generators[f]
            if k == 1:
                parts.append(name)
                bare = bare and len(name) == 1
            else:
                parts.append(f"{name}^{k}")
                bare = False
        if bare:
            return "".join(parts)
        return ".".join(parts)

    def parse(self, text: str) -> Element:
        """Parse an element string produced by :meth:`format` (and ``^1`` forms)."""
        text = text.strip()
        if text in ("", "e"):
            return IDENTITY
        if "." in text or "^" in text:
            word = []
            for tok in text.split("."):
                tok = tok.strip()
                if not tok:
                    raise ScenarioParseError("empty syllable", field=text)
                if "^" in tok:
                    name, _, exp_s = tok.partition("^")
                    try:
                        exp = int(exp_s)
                    except ValueError:
                        raise ScenarioParseError(f"bad exponent {exp_s!r}", field=text) from None
                else:
                    name, exp = tok, 1
                if name not in self._gen_index:
                    raise ScenarioParseError(f"unknown generator {name!r}", field=text)
                word.append((self._gen_index[name], exp))
            return self.normal_form(word)
        if text in self._gen_index:
            return ((self._gen_index[text], 1),)
        # single-letter concatenation like "abba"
        word = []
        for ch in text:
            if ch not in self._gen_index:
                raise ScenarioParseError(f"unknown generator {ch!r}", field=text)
            word.append((self._gen_index[ch], 1))
        return self.normal_form(word)


class TableGroup:
    """A finite group given by its multiplication table.

    ``table[i][j]`` is the index of ``names[i] * names[j]``.  The table is
    verified to be a Latin square with a two-sided identity and inverses.
    """

    def __init__(self, names: Sequence[str], table: Sequence[Sequence[int]]):
        self.names = tuple(names)
        n = len(self.names)
        if len(set(self.names)) != n:
            raise ContractError("element names must be distinct")
        self.table = tuple(tuple(int(v) for v in row) for row in table)
        if len(self.table) != n or any(len(row) != n for row in self.table):
            raise ContractError("multiplication table must be square")
        full = set(range(n))
        for row in self.table:
            if set(row) != full:
                raise ContractError("multiplication table is not a Latin square (row)")
        for j in range(n):
            if {row[j] for row in self.table} != full:
                raise ContractError("multiplication table is not a Latin square (column)")
        identity = None
        for i in range(n):
            if all(self.table[i][j] == j and self.table[j][i] == j for j in range(n)):
                identity = i
                break
        if identity is None:
            raise ContractError("multiplication table has no two-sided identity")
        self.identity = identity
        self._inverse = [0] * n
        for i in range(n):
            inv = [j for j in range(n) if self.table[i][j] == identity]
            if len(inv) != 1 or self.table[inv[0]][i] != identity:
                raise ContractError(f"element {self.names[i]!r} has no two-sided inverse")
            self._inverse[i] = inv[0]
        self._index = {name: i for i, name in enumerate(self.names)}

    def __len__(self):
        return len(self.names)

    def __repr__(self):
        return f"TableGroup({len(self.names)} elements)"

    def elements(self) -> range:
        return range(len(self.names))

    def multiply(self, i: int, j: int) -> int:
        return self.table[i][j]

    def inverse(self, i: int) -> int:
        return self._inverse[i]

    def index(self, name: str) -> int:
        if name not in self._index:
            raise ScenarioParseError(f"unknown group element {name!r}")
        return self._index[name]

    def conjugacy_classes(self) -> list[tuple[int, ...]]:
        """Conjugacy classes, each sorted, ordered by their minimum element."""
        seen = set()
        classes = []
        for i in self.elements():
            if i in seen:
                continue
            cls = {self.table[g][self.table[i][self._inverse[g]]] for g in self.elements()}
            seen |= cls
            classes.append(tuple(sorted(cls)))
        classes.sort(key=lambda c: c[0])
        return classes

    def power(self, i: int, k: int) -> int:
        out = self.identity
        g = i if k >= 0 else self._inverse[i]
        for _ in range(abs(k)):
            out = self.table[out][g]
        return out

    def element_order(self, i: int) -> int:
        k, g = 1, i
        while g != self.identity:
            g = self.table[g][i]
            k += 1
        return k


def symmetric_table(n: int) -> tuple[TableGroup, list[tuple[int, ...]]]:
    """The symmetric group S_n as a TableGroup plus the underlying permutations.

    Permutations are tuples ``p`` with ``p[i]`` the image of position ``i``.
    The identity is named ``id``; other elements are named by their one-line
    image over ``a b c ...`` (e.g. ``bac`` swaps the first two positions).
    """
    if n < 1:
        raise ContractError("n must be >= 1")
    perms = sorted(itertools.permutations(range(n)))
    letters = [chr(ord("a") + i) for i in range(n)]
    names = []
    for p in perms:
        if p == tuple(range(n)):
            names.append("id")
        else:
            names.append("".join(letters[p[i]] for i in range(n)))
    index = {p: i for i, p in enumerate(perms)}
    table = [
        [index[tuple(p[q[i]] for i in range(n))] for q in perms]
        for p in perms
    ]
    return TableGroup(names, table), perms


def cyclic_table(n: int) -> TableGroup:
    names = ["id"] + [f"g{i}" if i > 1 else "g" for i in range(1, n)]
    table = [[(i + j) % n for j in range(n)] for i in range(n)]
    return TableGroup(names, table)


class FiniteSymmetry:
    """A finite group S acting on a free product by signed generator permutations.

    Each automorphism maps generator ``i`` to ``generator(j)^sign`` with
    matching factor orders, so the action is isometric for the word metric and
    preserves normal forms syllable-by-syllable.

    Parameters
    ----------
    group:
        The acted-on :class:`FreeProductGroup`.
    table:
        The acting finite group.
    images:
        ``images[s][i] = (j, sign)``: element ``s`` of the table maps
        generator ``i`` to ``generator(j)**sign``.
    """

    def __init__(
        self,
        group: FreeProductGroup,
        table: TableGroup,
        images: Sequence[Sequence[tuple[int, int]]],
    ):
        self.group = group
        self.table = table
        self.images = tuple(tuple((int(j), int(sign)) for j, sign in row) for row in images)
        n_gen = len(group.orders)
        if len(self.images) != len(table):
            raise ContractError("one automorphism per symmetry element is required")
        for s, row in enumerate(self.images):
            if len(row) != n_gen:
                raise ContractError("each automorphism must list an image per generator")
            targets = set()
            for i, (j, sign) in enumerate(row):
                if not 0 <= j < n_gen:
                    raise ContractError(f"automorphism {s} maps generator {i} out of range")
                if sign not in (1, -1):
                    raise ContractError("automorphism signs must be +1 or -1")
                if group.orders[i] != group.orders[j]:
                    raise ContractError(
                        f"automorphism {s} does not preserve factor orders "
                        f"({group.orders[i]} vs {group.orders[j]})"
                    )
                targets.add(j)
            if len(targets) != n_gen:
                raise ContractError(f"automorphism {s} is not a bijection on generators")
        self._validate_action()

    def _validate_action(self):
        tbl = self.table
        ident = self.images[tbl.identity]
        if any(img != (i, 1) for i, img in enumerate(ident)):
            raise ContractError("identity of the symmetry group must act trivially")
        for s in tbl.elements():
            for t in tbl.elements():
                st = tbl.multiply(s, t)
                for i in range(len(self.group.orders)):
                    j, sign_t = self.images[t][i]
                    k, sign_s = self.images[s][j]
                    if (k, sign_s * sign_t) != self.images[st][i]:
                        raise ContractError(
                            "automorphism assignment is not a group homomorphism "
                            f"at pair ({tbl.names[s]}, {tbl.names[t]})"
                        )

    def __len__(self):
        return len(self.table)

    def apply(self, s: int, x: Element) -> Element:
        """Image of ``x`` under the automorphism attached to element ``s``."""
        row = self.images[s]
        out = []
        for f, k in x:
            j, sign = row[f]
            out.append((j, self.group._reduce_exponent(j, sign * k)))
        return tuple(out)

    def orbit(self, x: Element) -> tuple[Element, ...]:
        """The S-orbit of ``x``, sorted by the group's canonical order."""
        seen = {self.apply(s, x) for s in self.table.elements()}
        return tuple(sorted(seen, key=self.group.sort_key))

    def orbit_base(self, x: Element) -> Element:
        return min((self.apply(s, x) for s in self.table.elements()), key=self.group.sort_key)

    def stabilizer(self, x: Element) -> tuple[int, ...]:
        """Elements of S fixing ``x``; verified closed under the table."""
        stab = tuple(s for s in self.table.elements() if self.apply(s, x) == x)
        members = set(stab)
        for s in stab:
            for t in stab:
                if self.table.multiply(s, t) not in members:
                    raise ConsistencyError("stabilizer not closed under multiplication")
        return stab

    def names(self) -> tuple[str, ...]:
        return self.table.names


def trivial_symmetry(group: FreeProductGroup) -> FiniteSymmetry:
    """The trivial group acting trivially (useful for purely classical runs)."""
    table = TableGroup(["id"], [[0]])
    images = [[(i, 1) for i in range(len(group.orders))]]
    return FiniteSymmetry(group, table, images)


def symmetry_from_permutations(
    group: FreeProductGroup, perm_names: dict[str, Sequence[str]]
) -> FiniteSymmetry:
    """Build a symmetry from named generator permutations.

    ``perm_names`` maps an element name to the images of the group generators,
    given as generator names optionally prefixed with ``-`` for inversion
    (e.g. ``{"flip": ["b", "a"]}``).  The set must be closed under
    composition; the identity is added automatically under the name ``id``.
    """
    n = len(group.orders)

    def parse_image(tokens: Sequence[str]) -> tuple[tuple[int, int], ...]:
        if len(tokens) != n:
            raise ScenarioParseError("permutation must list an image per generator")
        out = []
        for tok in tokens:
            sign = 1
            if tok.startswith("-"):
                sign = -1
                tok = tok[1:]
            if tok not in group._gen_index:
                raise ScenarioParseError(f"unknown generator {tok!r} in permutation")
            out.append((group._gen_index[tok], sign))
        return tuple(out)

    autos = {"id": tuple((i, 1) for i in range(n))}
    for name, tokens in perm_names.items():
        if name == "id":
            raise ScenarioParseError("'id' is reserved for the identity")
        autos[name] = parse_image(tokens)
    by_image = {img: name for name, img in autos.items()}
    if len(by_image) != len(autos):
        raise ScenarioParseError("duplicate permutations in symmetry table")

    def compose(a, b):
        return tuple((a[j][0], a[j][1] * sign_b) for (j, sign_b) in b)

    for na, a in list(autos.items()):
        for nb, b in list(autos.items()):
            if compose(a, b) not in by_image:
                raise ScenarioParseError(
                    f"symmetry table is not closed: {na}*{nb} is missing"
                )

    names = sorted(autos, key=lambda s: (s != "id", s))
    images = [autos[s] for s in names]
    index = {img: i for i, img in enumerate(images)}
    table = [[index[compose(a, b)] for b in images] for a in images]
    return FiniteSymmetry(group, TableGroup(names, table), images)


def builtin_symmetric_action(
    n: int, order: int, cap: int = 64
) -> tuple[FreeProductGroup, FiniteSymmetry]:
    """``(Z/order)^{*n}`` (``order = 0`` for free factors) with S_n permuting factors."""
    if n < 2:
        raise ContractError("n must be >= 2")
    width = order - 1 if order else 2
    if n * width > cap:
        raise ResourceError(f"{n} factors of order {order} exceed the generator cap {cap}")
    group = FreeProductGroup([order] * n)
    table, perms = symmetric_table(n)
    images = [tuple((p[i], 1) for i in range(n)) for p in perms]
    return group, FiniteSymmetry(group, table, images)
