import numpy as np
import pytest

from crosswalk.crossed import (
    Block,
    BlockIndex,
    CrossedContext,
    CrossedIrrRing,
    InvariantState,
    antipode,
    convolution_power_state,
    convolve_states,
    counit,
    counit_state,
    dual_block,
    faithfulness_gap,
    invariant_expectation,
    left_action,
    markov_apply,
    mix_state,
    right_action,
    split_state,
    state_from_blocks,
    state_from_pair,
    state_generates,
)
from crosswalk.errors import (
    ContractError,
    DomainError,
    SplitUndefinedError,
    WindowExhaustedError,
)
from crosswalk.fusion import CharacterRing, ring_invariant_report
from crosswalk.groups import builtin_symmetric_action


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def dihedral():
    group, sym = builtin_symmetric_action(2, 2)
    ctx = CrossedContext(group, sym)
    flip = ctx.parse_sym("ba")
    phi = state_from_pair(
        ctx,
        {group.identity: 0.5, group.parse("a"): 0.25, group.parse("b"): 0.25},
        {group.identity: {flip: 0.5}},
    )
    return ctx, phi, flip


@pytest.fixture(scope="module")
def tree():
    group, sym = builtin_symmetric_action(3, 2)
    ctx = CrossedContext(group, sym)
    swap_bc = ctx.parse_sym("acb")
    phi = state_from_pair(
        ctx,
        {group.parse(w): 0.25 for w in ["e", "a", "b", "c"]},
        {
            group.identity: {s: 0.5 for s in range(1, ctx.n_sym)},
            group.parse("a"): {swap_bc: 0.5},
        },
    )
    return ctx, phi


def random_windowed_element(ctx, rng, window=6, radius=2, parts=4):
    ball = ctx.group.ball(radius)
    coeffs = {}
    for _ in range(parts):
        g = ball[rng.integers(len(ball))]
        s = int(rng.integers(ctx.n_sym))
        coeffs[(g, s)] = complex(rng.standard_normal(), rng.standard_normal())
    return ctx.element(coeffs, window)


# ---------------------------------------------------------------------------
# the Markov operator
# ---------------------------------------------------------------------------


class TestMarkovApply:
    def test_unital_on_window(self, dihedral):
        ctx, phi, _ = dihedral
        out = markov_apply(phi, ctx.one(5))
        assert out.window == 4
        assert out.close_to(ctx.one(4), 1e-14)

    def test_dihedral_point_mass(self, dihedral):
        ctx, phi, _ = dihedral
        g = ctx.group
        out = markov_apply(phi, ctx.point_mass(g.parse("a")))
        e_s = ctx.symmetry.table.identity
        expected = ctx.element(
            {
                (g.identity, e_s): 0.25,
                (g.parse("a"), e_s): 0.5,
                (g.parse("ba"), e_s): 0.25,
            }
        )
        assert out.close_to(expected, 1e-15)

    def test_dihedral_flip_component_scales(self, dihedral):
        ctx, phi, flip = dihedral
        x = ctx.point_mass(ctx.group.identity, flip)
        out = markov_apply(phi, x)
        assert out.close_to(0.25 * x, 1e-15)

    def test_window_exhaustion(self, dihedral):
        ctx, phi, _ = dihedral
        x = ctx.element({(ctx.group.identity, 0): 1.0}, window=0)
        with pytest.raises(WindowExhaustedError):
            markov_apply(phi, x)

    def test_positive_on_squares(self, tree, rng):
        ctx, phi = tree
        for _ in range(5):
            y = random_windowed_element(ctx, rng, window=8, radius=1)
            x = y.adjoint() * y
            out = markov_apply(phi, x)
            for base in {ctx.orbit_base(g) for (g, _s) in out.coeffs}:
                mat = ctx.orbit_matrix(out, base)
                assert float(np.linalg.eigvalsh(mat)[0]) > -1e-10

    def test_classical_restriction_matches_direct_convolution(self, tree, rng):
        # on lambda_e components the operator is the classical marginal walk
        ctx, phi = tree
        group = ctx.group
        marg = phi.marginal()
        values = {g: rng.standard_normal() for g in group.ball(2)}
        x = ctx.embed_function(values, window=6)
        out = markov_apply(phi, x)
        e_s = ctx.symmetry.table.identity
        for y in group.ball(5):
            direct = sum(
                w * values.get(group.multiply(g, y), 0.0) for g, w in marg.items()
            )
            assert out.coeffs.get((y, e_s), 0.0) == pytest.approx(direct, abs=1e-12)


class TestStateCalculus:
    def test_counit_is_neutral(self, dihedral):
        ctx, phi, _ = dihedral
        eps = counit_state(ctx)
        for conv in (convolve_states(phi, eps), convolve_states(eps, phi)):
            assert set(conv.weights) == set(phi.weights)
            for k, v in phi.weights.items():
                assert conv.weights[k] == pytest.approx(v, abs=1e-15)

    def test_marginal_is_multiplicative(self, dihedral):
        ctx, phi, _ = dihedral
        group = ctx.group
        conv = convolve_states(phi, phi)
        marg = phi.marginal()
        classical = {}
        for g1, w1 in marg.items():
            for g2, w2 in marg.items():
                key = group.multiply(g1, g2)
                classical[key] = classical.get(key, 0.0) + w1 * w2
        assert conv.marginal() == pytest.approx(classical, abs=1e-15)

    def test_unit_fiber_square(self, dihedral):
        ctx, phi, flip = dihedral
        conv = convolve_states(phi, phi)
        assert conv.weights[(ctx.group.identity, flip)] == pytest.approx(
            1.0 / 16.0, abs=1e-15
        )

    def test_composition_law(self, tree, rng):
        ctx, phi = tree
        combined = convolve_states(phi, phi)
        for _ in range(10):
            x = random_windowed_element(ctx, rng, window=8)
            twice = markov_apply(phi, markov_apply(phi, x))
            once = markov_apply(combined, x)
            assert twice.max_coeff_diff(once) <= 1e-12

    def test_power_matches_iteration(self, dihedral, rng):
        ctx, phi, _ = dihedral
        p3 = convolution_power_state(phi, 3)
        x = random_windowed_element(ctx, rng, window=9)
        lhs = markov_apply(p3, x)
        rhs = markov_apply(phi, markov_apply(phi, markov_apply(phi, x)))
        assert lhs.max_coeff_diff(rhs) <= 1e-12

    def test_tracial(self, tree, rng):
        ctx, phi = tree
        for _ in range(5):
            x = random_windowed_element(ctx, rng, window=8, radius=1)
            y = random_windowed_element(ctx, rng, window=8, radius=1)
            assert phi.evaluate(x * y) == pytest.approx(phi.evaluate(y * x), abs=1e-10)


class TestSplitMix:
    def test_dihedral_split(self, dihedral):
        ctx, phi, flip = dihedral
        sp = split_state(phi)
        assert sp.weight == pytest.approx(0.5, abs=1e-15)
        assert sp.section[flip] == pytest.approx(0.5, abs=1e-15)
        assert sp.complement is not None
        # exact reconstruction of the weight function
        recon = {}
        for k, v in sp.diagonal.weights.items():
            recon[k] = recon.get(k, 0.0) + sp.weight * v
        for k, v in sp.complement.weights.items():
            recon[k] = recon.get(k, 0.0) + (1 - sp.weight) * v
        assert set(recon) == set(phi.weights)
        for k in recon:
            assert recon[k] == pytest.approx(phi.weights[k], abs=1e-15)

    def test_split_convexity_of_operator(self, dihedral, rng):
        ctx, phi, _ = dihedral
        sp = split_state(phi)
        x = random_windowed_element(ctx, rng, window=7)
        full = markov_apply(phi, x)
        mixed = sp.weight * markov_apply(sp.diagonal, x) + (
            1 - sp.weight
        ) * markov_apply(sp.complement, x)
        assert full.max_coeff_diff(mixed, window=6) <= 1e-12

    def test_diagonal_part_scales_components(self, dihedral, rng):
        ctx, phi, flip = dihedral
        sp = split_state(phi)
        x = random_windowed_element(ctx, rng, window=5)
        out = markov_apply(sp.diagonal, x)
        for (g, s), v in x.coeffs.items():
            assert out.coeffs.get((g, s), 0.0) == pytest.approx(
                sp.section[s] * v, abs=1e-14
            )

    def test_counit_splits_entirely(self, dihedral):
        ctx, _, _ = dihedral
        sp = split_state(counit_state(ctx))
        assert sp.weight == 1.0 and sp.complement is None

    def test_split_requires_unit_mass(self, dihedral):
        ctx, _, _ = dihedral
        g = ctx.group
        lopsided = state_from_pair(ctx, {g.parse("a"): 0.5, g.parse("b"): 0.5})
        with pytest.raises(SplitUndefinedError):
            split_state(lopsided)
        # mixing brings mass back to the unit (a^2 = e)
        mixed = mix_state(lopsided, 2)
        assert split_state(mixed).weight > 0

    def test_mix_single_term_is_identity(self, dihedral):
        ctx, phi, _ = dihedral
        mixed = mix_state(phi, 1)
        assert set(mixed.weights) == set(phi.weights)
        for k, v in phi.weights.items():
            assert mixed.weights[k] == pytest.approx(v, abs=1e-15)

    def test_mix_marginal_is_classical_mixture(self, dihedral):
        ctx, phi, _ = dihedral
        group = ctx.group
        mixed = mix_state(phi, 3)
        powers = [phi.marginal()]
        for _ in range(2):
            prev = powers[-1]
            nxt = {}
            base = phi.marginal()
            for g1, w1 in prev.items():
                for g2, w2 in base.items():
                    key = group.multiply(g1, g2)
                    nxt[key] = nxt.get(key, 0.0) + w1 * w2
            powers.append(nxt)
        scale = sum(2.0 ** (-n) for n in (1, 2, 3))
        expected = {}
        for n, pw in enumerate(powers, start=1):
            for k, v in pw.items():
                expected[k] = expected.get(k, 0.0) + 2.0 ** (-n) * v / scale
        assert mixed.marginal() == pytest.approx(expected, abs=1e-14)


class TestFaithfulnessGap:
    def test_haar_has_full_gap(self, dihedral):
        ctx, _, _ = dihedral
        assert faithfulness_gap({ctx.symmetry.table.identity: 1.0}, ctx) == pytest.approx(1.0)

    def test_two_element_formula(self, dihedral):
        ctx, _, flip = dihedral
        e = ctx.symmetry.table.identity
        for c in (0.5, -0.3, 0.9):
            gap = faithfulness_gap({e: 1.0, flip: c}, ctx)
            assert gap == pytest.approx(1.0 - abs(c), abs=1e-12)

    def test_trivial_character_not_faithful(self, dihedral):
        ctx, _, flip = dihedral
        e = ctx.symmetry.table.identity
        assert faithfulness_gap({e: 1.0, flip: 1.0}, ctx) == pytest.approx(0.0, abs=1e-12)

    def test_non_positive_rejected(self, dihedral):
        ctx, _, flip = dihedral
        e = ctx.symmetry.table.identity
        with pytest.raises(DomainError):
            faithfulness_gap({e: 1.0, flip: 1.5}, ctx)

    def test_matches_block_weight_ratio(self, tree):
        # for central sections the least Gram eigenvalue equals the blockwise
        # ratio against the Haar trace over the unit-fiber algebra
        ctx, phi = tree
        section = split_state(phi).section
        gap = faithfulness_gap(section, ctx)
        e_blocks = ctx.orbit_blocks(ctx.group.identity)
        ratios = []
        for b in e_blocks:
            nu_mass = sum(
                (section.get(s, 0.0) * v).real
                for (g, s), v in b.idempotent.coeffs.items()
            )
            haar_mass = b.idempotent.coeffs[(ctx.group.identity, 0)].real
            ratios.append(nu_mass / haar_mass)
        assert gap == pytest.approx(min(ratios), abs=1e-10)


# ---------------------------------------------------------------------------
# structure maps
# ---------------------------------------------------------------------------


class TestStructureMaps:
    def test_expectation_drops_twisted_components(self, dihedral):
        ctx, _, flip = dihedral
        g = ctx.group
        x = ctx.point_mass(g.parse("a"), flip)
        assert invariant_expectation(x).coeffs == {}
        f = ctx.element({(g.parse("a"), 0): 2.0, (g.parse("ab"), 0): -1.0})
        assert invariant_expectation(f).close_to(f, 0.0)

    def test_expectation_idempotent_and_commutes(self, tree, rng):
        ctx, phi = tree
        x = random_windowed_element(ctx, rng, window=8)
        ex = invariant_expectation(x)
        assert invariant_expectation(ex).close_to(ex, 0.0)
        lhs = invariant_expectation(markov_apply(phi, x))
        rhs = markov_apply(phi, invariant_expectation(x))
        assert lhs.max_coeff_diff(rhs) <= 1e-12

    def test_expectation_bimodule(self, tree, rng):
        ctx, _ = tree
        g = ctx.group
        a = ctx.embed_function({g.parse("a"): 1.5, g.identity: 0.5}, window=8)
        b = ctx.embed_function({g.parse("b"): -2.0, g.parse("ab"): 1.0}, window=8)
        x = random_windowed_element(ctx, rng, window=8)
        lhs = a * invariant_expectation(x) * b
        rhs = invariant_expectation(a * x * b)
        assert lhs.max_coeff_diff(rhs) <= 1e-12

    def test_counit_unit_relations(self, tree, rng):
        ctx, _ = tree
        I0 = ctx.counit_unit()
        p = ctx.point_projection()
        assert (p * I0).close_to(I0, 1e-15)
        assert invariant_expectation(I0).close_to((1.0 / ctx.n_sym) * p, 0.0)
        x = random_windowed_element(ctx, rng, window=4)
        assert (x * I0).close_to(counit(x) * I0, 1e-12)

    def test_counit_values(self, dihedral):
        ctx, _, flip = dihedral
        g = ctx.group
        assert counit(ctx.point_mass(g.parse("a"), flip)) == 0
        assert counit(ctx.element({(g.identity, flip): 1.0})) == 1.0

    def test_component_decompositions(self, dihedral, rng):
        ctx, _, flip = dihedral
        x = random_windowed_element(ctx, rng, window=4)
        for decomposition in (left_action(x), right_action(x)):
            total = ctx.zero(x.window)
            for s, part in decomposition.items():
                assert part.components() <= {s}
                total = total + part
            assert total.close_to(x, 0.0)
        # fixed points of the tagging are exactly the untwisted elements
        f = invariant_expectation(x)
        assert set(right_action(f)) <= {ctx.symmetry.table.identity}

    def test_antipode(self, tree, rng):
        ctx, _ = tree
        g = ctx.group
        x = ctx.point_mass(g.parse("ab"))
        assert antipode(x).close_to(ctx.point_mass(g.parse("ba")), 0.0)
        y = random_windowed_element(ctx, rng, window=6)
        z = random_windowed_element(ctx, rng, window=6)
        assert antipode(antipode(y)).close_to(y, 0.0)
        assert antipode(y * z).max_coeff_diff(antipode(z) * antipode(y)) <= 1e-12

    def test_adjoint_involution_and_product_rule(self, tree, rng):
        ctx, _ = tree
        x = random_windowed_element(ctx, rng, window=6)
        y = random_windowed_element(ctx, rng, window=6)
        assert x.adjoint().adjoint().close_to(x, 0.0)
        assert (x * y).adjoint().max_coeff_diff(y.adjoint() * x.adjoint()) <= 1e-12


# ---------------------------------------------------------------------------
# blocks
# ---------------------------------------------------------------------------


class TestBlocks:
    def test_dihedral_unit_orbit(self, dihedral):
        ctx, _, flip = dihedral
        blocks = ctx.orbit_blocks(ctx.group.identity)
        assert [b.dim for b in blocks] == [1, 1]
        e = ctx.group.identity
        plus = ctx.element({(e, 0): 0.5, (e, flip): 0.5})
        minus = ctx.element({(e, 0): 0.5, (e, flip): -0.5})
        found = {tuple(round(v.real, 8) for _k, v in b.idempotent.items_sorted()) for b in blocks}
        assert found == {(0.5, 0.5), (0.5, -0.5)}
        assert any(b.idempotent.close_to(plus, 1e-10) for b in blocks)
        assert any(b.idempotent.close_to(minus, 1e-10) for b in blocks)

    def test_dihedral_pair_orbit_single_block(self, dihedral):
        ctx, _, _ = dihedral
        blocks = ctx.orbit_blocks(ctx.group.parse("a"))
        assert [b.dim for b in blocks] == [2]

    def test_tree_generator_orbit(self, tree):
        ctx, _ = tree
        blocks = ctx.orbit_blocks(ctx.group.parse("a"))
        assert [b.dim for b in blocks] == [3, 3]  # 18 = 9 + 9

    def test_block_count_is_class_count(self, tree):
        ctx, _ = tree
        assert len(ctx.orbit_blocks(ctx.group.identity)) == 3
        assert len(ctx.orbit_blocks(ctx.group.parse("ab"))) == 1

    def test_block_traces_are_tracial(self, tree, rng):
        ctx, _ = tree
        for b in ctx.orbit_blocks(ctx.group.parse("a")):
            state = b.trace_state(ctx)
            for _ in range(3):
                x = random_windowed_element(ctx, rng, window=8, radius=1)
                y = random_windowed_element(ctx, rng, window=8, radius=1)
                assert state.evaluate(x * y) == pytest.approx(
                    state.evaluate(y * x), abs=1e-10
                )
            assert state.evaluate(b.idempotent) == pytest.approx(1.0, abs=1e-10)

    def test_counit_block(self, tree):
        ctx, _ = tree
        b = ctx.counit_block()
        assert b.dim == 1
        assert b.idempotent.close_to(ctx.counit_unit(), 1e-10)

    def test_duals_fix_generator_orbit(self, tree):
        ctx, _ = tree
        for b in ctx.orbit_blocks(ctx.group.parse("a")):
            assert dual_block(ctx, b.index) == b.index

    def test_norm_independent_of_pair_ordering(self, tree, rng):
        ctx, _ = tree
        x = random_windowed_element(ctx, rng, window=4, radius=2, parts=6)
        base = ctx.orbit_base(ctx.group.parse("ab"))
        mat = ctx.orbit_matrix(x, base)
        perm = rng.permutation(mat.shape[0])
        assert np.linalg.norm(mat, 2) == pytest.approx(
            np.linalg.norm(mat[np.ix_(perm, perm)], 2), abs=1e-12
        )


class TestStateFromBlocks:
    def test_counit_block_gives_counit_state(self, tree):
        ctx, _ = tree
        phi = state_from_blocks(ctx, {ctx.counit_block().index: 1.0})
        eps = counit_state(ctx)
        assert set(phi.weights) == set(eps.weights)
        for k, v in eps.weights.items():
            assert phi.weights[k] == pytest.approx(v, abs=1e-10)

    def test_uniform_unit_orbit_blocks_give_haar(self, dihedral):
        ctx, _, flip = dihedral
        blocks = ctx.orbit_blocks(ctx.group.identity)
        phi = state_from_blocks(ctx, {b.index: 0.5 for b in blocks})
        assert phi.marginal() == pytest.approx({ctx.group.identity: 1.0}, abs=1e-12)
        assert abs(phi.weights.get((ctx.group.identity, flip), 0.0)) < 1e-12

    def test_block_masses_recovered(self, tree, rng):
        from crosswalk.crossed import state_block_support

        ctx, _ = tree
        e_blocks = ctx.orbit_blocks(ctx.group.identity)
        a_blocks = ctx.orbit_blocks(ctx.group.parse("a"))
        measure = {
            e_blocks[0].index: 0.1,
            e_blocks[2].index: 0.3,
            a_blocks[0].index: 0.25,
            a_blocks[1].index: 0.35,
        }
        phi = state_from_blocks(ctx, measure)
        support = state_block_support(phi, ctx)
        for bi, mass in measure.items():
            assert support[bi] == pytest.approx(mass, abs=1e-10)

    def test_generating_surrogate(self, tree):
        ctx, phi = tree
        probe = [b.index for b in ctx.orbit_blocks(ctx.group.identity)]
        probe += [b.index for b in ctx.orbit_blocks(ctx.group.parse("ab"))]
        first = state_generates(phi, ctx, probe, depth=4)
        assert all(n is not None for n in first.values())


class TestContractionBound:
    def test_diagonal_part_contracts_kernel(self, tree, rng):
        ctx, phi = tree
        sp = split_state(phi)
        gap = faithfulness_gap(sp.section, ctx)
        assert gap > 0
        for _ in range(10):
            x = random_windowed_element(ctx, rng, window=6)
            x = x - invariant_expectation(x)
            nx = x.norm()
            if nx < 1e-9:
                continue
            x = (1.0 / nx) * x
            out = markov_apply(sp.diagonal, x)
            assert out.norm() <= 1.0 - gap + 1e-9


# ---------------------------------------------------------------------------
# the materialized fusion ring of blocks
# ---------------------------------------------------------------------------


class TestCrossedIrrRing:
    def test_unit_orbit_matches_symmetry_characters(self, tree):
        # the unit-fiber blocks fuse like the character ring of the symmetry
        ctx, _ = tree
        ring = CrossedIrrRing(ctx, radius_cap=2)
        chars = CharacterRing(ctx.symmetry.table)
        e_blocks = [l for l in ring.labels() if l.base == ctx.group.identity]
        # match block <-> character by dimension and fusion structure
        by_dim_ring = sorted(e_blocks, key=lambda l: (ring.dim(l), l.index))
        by_dim_char = sorted(chars.labels(), key=lambda l: (chars.dim(l), l))
        assert [ring.dim(l) for l in by_dim_ring] == [
            chars.dim(l) for l in by_dim_char
        ]
        mapping = dict(zip(by_dim_ring, by_dim_char))
        # unit must map to unit
        assert mapping[ring.unit] == chars.unit
        for u in e_blocks:
            for v in e_blocks:
                got = {mapping[t]: m for t, m in ring.fusion(u, v).items()}
                assert got == dict(chars.fusion(mapping[u], mapping[v]))

    def test_invariant_suite_dihedral(self, dihedral, rng):
        ctx, _, _ = dihedral
        ring = CrossedIrrRing(ctx, radius_cap=3)
        labels = [l for l in ring.labels() if ctx.group.length(l.base) <= 1]
        rows = ring_invariant_report(ring, labels, rng)
        assert all(ok for _n, ok, _d in rows), rows

    def test_invariant_suite_tree(self, tree, rng):
        ctx, _ = tree
        ring = CrossedIrrRing(ctx, radius_cap=3)
        labels = [l for l in ring.labels() if ctx.group.length(l.base) <= 1]
        rows = ring_invariant_report(ring, labels, rng)
        assert all(ok for _n, ok, _d in rows), rows

    def test_generator_orbit_square_dimension_count(self, tree):
        ctx, _ = tree
        ring = CrossedIrrRing(ctx, radius_cap=2)
        a0 = ring.parse_label("a:0")
        out = ring.fusion(a0, a0)
        assert sum(m * ring.dim(t) for t, m in out.items()) == 9.0

    def test_label_round_trip(self, tree):
        ctx, _ = tree
        ring = CrossedIrrRing(ctx, radius_cap=2)
        for l in ring.labels():
            assert ring.parse_label(ring.format_label(l)) == l
