"""Deterministic generators and enumerators for property testing.

gen_global draws random closed well-formed global protocols over
disjoint role pools. gen_compatible additionally derives one component
per pool that is compatible by construction, so composition properties
can be exercised in bulk without search. enumerate_small walks every
closed well-formed type up to a depth bound over a fixed tiny alphabet.

Everything is seeded and reproducible: equal GenParams give equal
output, with no dependence on global random state.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterator

from .compose import Component, CompositionSpec
from .kernel import (
    BOOL,
    Branch,
    END,
    HybridType,
    INT,
    Msg,
    NAT,
    Par,
    ProductSort,
    Rec,
    Recv,
    Send,
    Sort,
    SumSort,
    UNIT,
    Var,
    check_wellformed,
    is_closed,
    is_global,
    is_guarded,
)
from .projection import project

__all__ = ["GenParams", "gen_global", "gen_compatible", "enumerate_small"]

_VAR_NAMES = ("X", "Y", "Z", "W", "V", "U", "T", "S")


def _var_name(n: int) -> str:
    return _VAR_NAMES[n] if n < len(_VAR_NAMES) else f"X{n}"


@dataclass(frozen=True)
class GenParams:
    """Knobs for the random generators.

    role_pool lists pairwise disjoint role groups; gen_compatible makes
    one component per group. seed is any 64-bit integer.
    """

    max_depth: int = 5
    max_branches: int = 3
    role_pool: tuple[frozenset[str], ...] = (
        frozenset({"p", "q"}),
        frozenset({"r", "s"}),
    )
    label_pool: tuple[str, ...] = ("a", "b", "c", "d", "e")
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "role_pool", tuple(frozenset(g) for g in self.role_pool))
        object.__setattr__(self, "label_pool", tuple(self.label_pool))
        if self.max_depth < 1:
            raise ValueError("max_depth must be positive")
        if self.max_branches < 1:
            raise ValueError("max_branches must be positive")
        if not self.role_pool or any(not g for g in self.role_pool):
            raise ValueError("role_pool needs non-empty groups")
        seen: set[str] = set()
        for g in self.role_pool:
            if seen & g:
                raise ValueError("role pools must be pairwise disjoint")
            seen |= g
        if len(seen) < 2:
            raise ValueError("need at least two roles overall")
        if not self.label_pool:
            raise ValueError("label_pool must not be empty")


def _gen_sort(rng: random.Random) -> Sort:
    roll = rng.random()
    if roll < 0.55:
        return UNIT
    if roll < 0.75:
        return NAT
    if roll < 0.83:
        return INT
    if roll < 0.91:
        return BOOL
    a, b = rng.choice((NAT, INT, BOOL)), rng.choice((NAT, INT, BOOL))
    return ProductSort(a, b) if rng.random() < 0.5 else SumSort(a, b)


class _Gen:
    def __init__(self, params: GenParams, rng: random.Random, cross_only: bool):
        self.p = params
        self.rng = rng
        self.cross_only = cross_only

    def roles(self, pools: tuple[frozenset[str], ...]) -> tuple[str, str] | None:
        rng = self.rng
        if self.cross_only:
            if len(pools) < 2:
                return None
            ia, ib = rng.sample(range(len(pools)), 2)
            return rng.choice(sorted(pools[ia])), rng.choice(sorted(pools[ib]))
        flat = sorted(set().union(*pools))
        if len(flat) < 2:
            return None
        a, b = rng.sample(flat, 2)
        return a, b

    def type(self, budget: int, pools: tuple[frozenset[str], ...], env: dict[str, bool]) -> HybridType:
        rng = self.rng
        guarded_vars = [v for v, ok in env.items() if ok]
        if budget <= 1:
            if guarded_vars and rng.random() < 0.6:
                return Var(rng.choice(guarded_vars))
            return END
        roll = rng.random()
        if roll < 0.12 and guarded_vars:
            return Var(rng.choice(guarded_vars))
        if roll < 0.2:
            return END
        if roll < 0.36:
            name = next(n for i in range(64) if (n := _var_name(i)) not in env)
            body = self.type(budget - 1, pools, {**env, name: False})
            return Rec(name, body)
        if roll < 0.44 and len(pools) >= 2 and not env:
            order = list(range(len(pools)))
            rng.shuffle(order)
            cut = rng.randint(1, len(order) - 1)
            left = tuple(pools[i] for i in sorted(order[:cut]))
            right = tuple(pools[i] for i in sorted(order[cut:]))
            return Par(self.type(budget - 1, left, {}), self.type(budget - 1, right, {}))
        pair = self.roles(pools)
        if pair is None:
            return END
        src, dst = pair
        k = rng.randint(1, min(self.p.max_branches, len(self.p.label_pool)))
        labels = sorted(rng.sample(self.p.label_pool, k))
        inner = {v: True for v in env}
        branches = tuple(
            Branch(lbl, self.type(budget - 1, pools, dict(inner)), _gen_sort(rng))
            for lbl in labels
        )
        return Msg(src, dst, branches)


def gen_global(params: GenParams) -> HybridType:
    """One random closed, guarded, well-formed global type."""
    rng = random.Random(params.seed)
    gen = _Gen(params, rng, cross_only=False)
    for _ in range(100):
        h = gen.type(params.max_depth, params.role_pool, {})
        if is_closed(h) and is_guarded(h) and is_global(h) and not check_wellformed(h):
            return h
    raise RuntimeError("generator failed to produce a well-formed type")


def _insert_internal(
    h: HybridType, pool: frozenset[str], rng: random.Random, counter: list[int], budget: list[int]
) -> HybridType:
    """Sprinkle single internal messages (fresh labels) into a slice
    without touching its environment view."""
    if len(pool) >= 2 and budget[0] > 0 and rng.random() < 0.3:
        budget[0] -= 1
        src, dst = rng.sample(sorted(pool), 2)
        n = counter[0]
        counter[0] += 1
        wrapped = _insert_internal(h, pool, rng, counter, budget)
        if rng.random() < 0.25:
            # two observably identical alternatives exercise the
            # branching split paths downstream
            return Msg(
                src,
                dst,
                (Branch(f"ins{n}", wrapped), Branch(f"ins{n}b", wrapped)),
            )
        return Msg(src, dst, (Branch(f"ins{n}", wrapped),))
    if isinstance(h, Rec):
        return Rec(h.var, _insert_internal(h.body, pool, rng, counter, budget))
    if isinstance(h, (Msg, Send, Recv)):
        branches = tuple(
            Branch(b.label, _insert_internal(b.continuation, pool, rng, counter, budget), b.payload)
            for b in h.branches
        )
        return type(h)(h.src, h.dst, branches)
    return h


def gen_compatible(params: GenParams) -> CompositionSpec:
    """A compatibility type plus one compatible component per role pool.

    The compatibility type only ever messages across pools, so each
    pool's projection is free of internal interactions; the component
    is that projection with fresh internal messages spliced in. The
    result passes check_compat by construction.
    """
    rng = random.Random(params.seed)
    gen = _Gen(params, rng, cross_only=True)
    last: Exception | None = None
    for _ in range(400):
        compat = gen.type(params.max_depth, params.role_pool, {})
        if not (is_closed(compat) and is_guarded(compat) and not check_wellformed(compat)):
            continue
        try:
            slices = [project(compat, pool) for pool in params.role_pool]
        except Exception as ex:  # merge failures: draw again
            last = ex
            continue
        components = []
        for pool, s in zip(params.role_pool, slices):
            grown = _insert_internal(s, pool, rng, [0], [3])
            components.append(Component(grown, pool))
        return CompositionSpec(compat, tuple(components), "standard", frozenset())
    raise RuntimeError(f"generator failed to produce a compatible family: {last}")


# ---------------------------------------------------------------------------
# exhaustive enumeration
# ---------------------------------------------------------------------------

_ENUM_PAIRS: tuple[tuple[str, str], ...] = (("p", "q"), ("r", "s"))
_ENUM_LABELS = ("a", "b")


def _splits(pairs: tuple) -> list[tuple[tuple, tuple]]:
    out = []
    for mask in range(1 << len(pairs)):
        left = tuple(p for i, p in enumerate(pairs) if mask >> i & 1)
        right = tuple(p for i, p in enumerate(pairs) if not mask >> i & 1)
        out.append((left, right))
    return out


def _enum_list(bound: int, env: tuple[str, ...], pairs: tuple, memo: dict) -> list[HybridType]:
    # materialized, duplicate-free sublevel; only ever called below the
    # top bound so the lists stay small
    key = (bound, env, pairs)
    if key in memo:
        return memo[key]
    seen: set[HybridType] = set()
    out: list[HybridType] = []
    for h in _enum_stream(bound, env, pairs, memo):
        if h not in seen:
            seen.add(h)
            out.append(h)
    memo[key] = out
    return out


def _enum_stream(
    bound: int, env: tuple[str, ...], pairs: tuple, memo: dict
) -> Iterator[HybridType]:
    yield END
    yield from (Var(v) for v in env)
    if bound < 2:
        return
    var = _var_name(len(env))
    for b in _enum_stream(bound - 1, env + (var,), pairs, memo):
        yield Rec(var, b)
    par_seen: set[HybridType] = set()
    for left, right in _splits(pairs):
        for a in _enum_list(bound - 1, (), left, memo):
            for b in _enum_list(bound - 1, (), right, memo):
                h = Par(a, b)
                if h not in par_seen:
                    par_seen.add(h)
                    yield h
    conts = _enum_list(bound - 1, env, pairs, memo)
    la, lb = _ENUM_LABELS
    for src, dst in pairs:
        for cls in (Msg, Send, Recv):
            for c in conts:
                yield cls(src, dst, (Branch(la, c),))
            for c in conts:
                yield cls(src, dst, (Branch(lb, c),))
            for c1 in conts:
                for c2 in conts:
                    yield cls(src, dst, (Branch(la, c1), Branch(lb, c2)))


def enumerate_small(bound: int) -> Iterator[HybridType]:
    """Every closed well-formed type of depth at most bound, over roles
    p, q, r, s (interacting pairs p-q and r-s), labels a and b, unit
    payloads. Deterministic order, no duplicates. Bound 3 stays in the
    low thousands; bound 4 streams lazily but is combinatorially huge.
    """
    if bound < 1:
        return
    memo: dict = {}
    # different constructor families cannot collide, and interactions
    # over duplicate-free continuations are unique already, so only the
    # handful of non-interaction candidates needs the dedup set
    small_seen: set[HybridType] = set()
    for h in _enum_stream(bound, (), _ENUM_PAIRS, memo):
        if not isinstance(h, (Msg, Send, Recv)):
            if h in small_seen:
                continue
            small_seen.add(h)
        if is_closed(h) and not check_wellformed(h):
            yield h
