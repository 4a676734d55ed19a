"""Structural properties checked over exhaustive small censuses and
seeded random corpora. The acceptance suite reruns the expensive ones
at full scale; here each property gets a fast, failure-localising run.
"""

import random
from collections import defaultdict

from hypothesis import given, settings, strategies as st

from hmpst import (
    END,
    GenParams,
    Undefined,
    build_back,
    enumerate_small,
    gen_compatible,
    gen_global,
    localise,
    merge_proj,
    merge_proj_all,
    parse_type,
    print_type,
    project,
)
from hmpst.kernel import (
    Msg,
    Par,
    Rec,
    Recv,
    Send,
    Var,
    eparts,
    is_closed,
    is_global,
    is_guarded,
    parts,
)

ENVS = [
    frozenset(s)
    for s in (
        ("p",),
        ("q",),
        ("r",),
        ("p", "q"),
        ("r", "s"),
        ("p", "r"),
        ("p", "q", "r"),
        ("p", "q", "r", "s"),
    )
]


def subterms(h):
    yield h
    if isinstance(h, Rec):
        yield from subterms(h.body)
    elif isinstance(h, Par):
        yield from subterms(h.left)
        yield from subterms(h.right)
    elif isinstance(h, (Msg, Send, Recv)):
        for b in h.branches:
            yield from subterms(b.continuation)


def is_inert(h):
    # nothing to do: a possibly empty chain of binders over end
    while isinstance(h, Rec):
        h = h.body
    return h == END


def chain_to_var(h):
    while isinstance(h, Rec):
        h = h.body
    return isinstance(h, Var)


def parfree(h):
    return not any(isinstance(s, Par) for s in subterms(h))


def recfree(h):
    return not any(isinstance(s, Rec) for s in subterms(h))


def census_with_random(n_random=100):
    """Every bound-3 type plus seeded random globals, deduplicated."""
    seen = set(enumerate_small(3))
    for seed in range(n_random):
        seen.add(gen_global(GenParams(max_depth=5, seed=seed)))
    return seen


CORPUS = sorted(census_with_random(), key=print_type)


def each_defined_projection():
    for top in CORPUS:
        for h in set(subterms(top)):
            for env in ENVS:
                if eparts(h) & env:
                    continue
                try:
                    ph = project(h, env)
                except Undefined:
                    continue
                yield h, env, ph


class TestProjectionLemmas:
    def test_projection_preserves_closedness_both_ways(self):
        n = 0
        for h, env, ph in each_defined_projection():
            assert is_closed(ph) == is_closed(h), (print_type(h), sorted(env))
            n += 1
        assert n > 10000

    def test_projection_is_identity_on_covered_parfree_types(self):
        n = 0
        for h, env, ph in each_defined_projection():
            if parts(h) <= env and parfree(h):
                assert ph == h, (print_type(h), sorted(env))
                n += 1
        assert n > 1000

    def test_disjoint_closed_projection_is_inert(self):
        n = 0
        for h, env, ph in each_defined_projection():
            if not (parts(h) & env) and is_closed(h):
                assert is_inert(ph), (print_type(h), sorted(env), print_type(ph))
                n += 1
        assert n > 1000

    def test_disjoint_recursion_free_projection_is_end(self):
        n = 0
        for h, env, ph in each_defined_projection():
            if not (parts(h) & env) and is_closed(h) and recfree(h):
                assert ph == END, (print_type(h), sorted(env), print_type(ph))
                n += 1
        assert n > 300

    def test_disjoint_open_projection_is_binder_chain_to_variable(self):
        n = 0
        for h, env, ph in each_defined_projection():
            if not (parts(h) & env) and not is_closed(h):
                assert chain_to_var(ph), (print_type(h), sorted(env), print_type(ph))
                n += 1
        assert n > 500

    def test_projection_preserves_guardedness(self):
        n = 0
        for h, env, ph in each_defined_projection():
            if is_guarded(h):
                assert is_guarded(ph), (print_type(h), sorted(env))
                n += 1
        assert n > 10000


class TestLocaliserLemmas:
    def test_localisation_preserves_closedness_and_guardedness(self):
        n = 0
        for top in CORPUS:
            for h in set(subterms(top)):
                try:
                    lh = localise(h)
                except Undefined:
                    continue
                assert is_closed(lh) == is_closed(h), print_type(h)
                if is_guarded(h):
                    assert is_guarded(lh), print_type(h)
                assert not any(isinstance(s, Msg) for s in subterms(lh))
                n += 1
        assert n > 2000


class TestMergeDistribution:
    def _head_groups(self):
        def key(h):
            if isinstance(h, (Msg, Send, Recv)):
                return (type(h).__name__, h.src, h.dst)
            if isinstance(h, Rec):
                return ("rec", h.var)
            if isinstance(h, Par):
                return ("par",)
            if isinstance(h, Var):
                return ("var", h.name)
            return ("end",)

        groups = defaultdict(list)
        for h in enumerate_small(3):
            groups[key(h)].append(h)
        return groups

    def test_projection_distributes_over_merge(self):
        # both sides defined: projecting a merged type agrees with
        # merging the projections
        checked = 0
        for group in self._head_groups().values():
            for i, a in enumerate(group):
                for b in group[i:]:
                    try:
                        m = merge_proj(a, b)
                    except Undefined:
                        continue
                    for env in ENVS:
                        if (eparts(m) | eparts(a) | eparts(b)) & env:
                            continue
                        try:
                            pm = project(m, env)
                            pa = project(a, env)
                            pb = project(b, env)
                            got = merge_proj(pa, pb)
                        except Undefined:
                            continue
                        assert got == pm, (print_type(a), print_type(b), sorted(env))
                        checked += 1
        assert checked > 3000

    def test_merge_is_idempotent_and_commutative(self):
        group_items = [g for g in self._head_groups().values() if len(g) > 1]
        checked = 0
        for group in group_items:
            for i, a in enumerate(group[:40]):
                assert merge_proj(a, a) == a
                for b in group[i : i + 8]:
                    try:
                        ab = merge_proj(a, b)
                    except Undefined:
                        try:
                            merge_proj(b, a)
                        except Undefined:
                            continue
                        raise AssertionError("merge defined in one order only")
                    assert merge_proj(b, a) == ab
                    checked += 1
        assert checked > 100

    def test_fold_order_does_not_matter(self):
        # definedness may depend on the fold order; the value must not
        rng = random.Random(5)
        checked = 0
        for group in self._head_groups().values():
            mergeable = []
            for i, a in enumerate(group):
                for b in group[i + 1 :]:
                    try:
                        merge_proj(a, b)
                    except Undefined:
                        continue
                    mergeable.append((a, b))
                    if len(mergeable) >= 60:
                        break
                if len(mergeable) >= 60:
                    break
            for a, b in mergeable:
                probes = rng.sample(group, min(6, len(group)))
                for c in probes:
                    results = []
                    for perm in ((a, b, c), (c, a, b), (b, c, a)):
                        try:
                            results.append(merge_proj_all(perm))
                        except Undefined:
                            pass
                    if len(results) >= 2:
                        assert all(x == results[0] for x in results[1:])
                        checked += 1
        assert checked > 50


class TestComposition:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_build_back_round_trips_each_component(self, seed):
        spec = gen_compatible(GenParams(seed=seed))
        g = build_back(spec.compat, spec.components, verify=True)
        assert is_global(g)
        for c in spec.components:
            assert project(g, c.roles) == c.protocol

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_projection_composes_over_set_inclusion(self, seed):
        pools = (frozenset({"p", "q", "r"}), frozenset({"s", "t", "u"}))
        g = gen_global(GenParams(max_depth=6, role_pool=pools, seed=seed))
        roles = sorted(parts(g)) or ["p"]
        rng = random.Random(seed ^ 0x5EED)
        e1 = frozenset(rng.sample(roles, rng.randint(1, len(roles))))
        e2 = frozenset(rng.sample(sorted(e1), rng.randint(1, len(e1))))
        try:
            via = project(project(g, e1), e2)
        except Undefined:
            return
        assert via == project(g, e2)


class TestSurfaceAlgebra:
    def test_parse_print_identity_on_census(self):
        for h in CORPUS:
            assert parse_type(print_type(h)) == h

    @settings(max_examples=80, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_parse_print_identity_on_random_globals(self, seed):
        h = gen_global(GenParams(max_depth=6, seed=seed))
        text = print_type(h)
        assert parse_type(text) == h
        assert print_type(parse_type(text)) == text


class TestGeneratorCoverage:
    def test_every_constructor_appears(self):
        # a generator that silently stopped emitting some constructor
        # would turn the property suite vacuous
        kinds = set()
        for seed in range(1000):
            h = gen_global(GenParams(max_depth=4, seed=seed))
            for s in subterms(h):
                kinds.add(type(s).__name__)
            if kinds >= {"End", "Var", "Rec", "Par", "Msg"}:
                break
        assert kinds >= {"End", "Var", "Rec", "Par", "Msg"}

    def test_projection_emits_sends_and_receives(self):
        kinds = set()
        for seed in range(100):
            h = gen_global(GenParams(max_depth=5, seed=seed))
            for role in sorted(parts(h)):
                try:
                    view = project(h, frozenset({role}))
                except Undefined:
                    continue
                for s in subterms(view):
                    kinds.add(type(s).__name__)
            if {"Send", "Recv"} <= kinds:
                break
        assert {"Send", "Recv"} <= kinds
