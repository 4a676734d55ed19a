"""Composition of protocol components against a compatibility type.

A Component pairs a slice with the set of roles it owns. A component
fits a compatibility type when projecting the compatibility type onto
the component's roles equals the component's localisation: the
environment cannot tell the component from the slice it replaces.

build_back_one weaves one component back into the compatibility type,
recreating the component's internal interactions inside the larger
protocol. Where the two sides branch at different points, the branch
that fires first splits the other side into per-branch pieces; the
unmerge_* functions perform those splits, inverting the projection
merge (unmerge_p, unmerge_pl) and the localiser merge (unmerge_l,
unmerge_lp). Composing every component in turn yields a protocol whose
projection onto each component's roles returns exactly that component,
and whose behaviour towards untouched roles is unchanged.

All operations here are partial and raise Undefined with a diagnostic.
When a component's internal step and an external step are both ready
at the same point, the internal step is emitted first.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .kernel import (
    Branch,
    Diagnostic,
    END,
    End,
    HybridType,
    Msg,
    Par,
    Rec,
    Recv,
    RoleSet,
    Send,
    Undefined,
    Var,
    _brief,
    eparts,
    equal,
    is_closed,
    parts,
)
from .localiser import localise, merge_loc_all
from .projection import merge_proj_all, project, project_role

__all__ = [
    "Component",
    "CompositionSpec",
    "CompositionResult",
    "check_compat",
    "unmerge_lp",
    "unmerge_l",
    "unmerge_pl",
    "unmerge_p",
    "build_back_one",
    "build_back",
    "compose_spec",
]


def _fail(rule: str, path: tuple[int, ...], message: str) -> Undefined:
    return Undefined(Diagnostic(rule, path, message))


@dataclass(frozen=True)
class Component:
    """A protocol slice together with the roles it owns.

    Every internal role of the slice must be owned, and the slice must
    not treat an owned role as part of the environment.
    """

    protocol: HybridType
    roles: RoleSet

    def __post_init__(self) -> None:
        object.__setattr__(self, "roles", frozenset(self.roles))
        stray = parts(self.protocol) - self.roles
        if stray:
            raise ValueError(f"internal roles outside the component: {', '.join(sorted(stray))}")
        clash = eparts(self.protocol) & self.roles
        if clash:
            raise ValueError(
                f"environment endpoints claimed as owned roles: {', '.join(sorted(clash))}"
            )


@dataclass(frozen=True)
class CompositionSpec:
    """A compatibility type plus the components to weave into it.

    In standard mode every role of the compatibility type belongs to
    some component. In optimised mode the compatibility type doubles as
    the implementation for the roles in compat_roles, which must be
    disjoint from every component.
    """

    compat: HybridType
    components: tuple[Component, ...] = ()
    mode: str = "standard"
    compat_roles: RoleSet = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "compat_roles", frozenset(self.compat_roles))
        if self.mode not in ("standard", "optimised"):
            raise ValueError(f"unknown mode {self.mode!r}")
        seen: set[str] = set()
        for c in self.components:
            overlap = seen & c.roles
            if overlap:
                raise ValueError(f"components share roles: {', '.join(sorted(overlap))}")
            seen |= c.roles
        if self.mode == "standard":
            if self.compat_roles:
                raise ValueError("compat-roles only makes sense in optimised mode")
            stray = parts(self.compat) - seen
            if stray:
                raise ValueError(
                    f"compatibility type uses roles of no component: {', '.join(sorted(stray))}"
                )
        else:
            if not self.compat_roles:
                raise ValueError("optimised mode needs a non-empty compat-roles set")
            overlap = self.compat_roles & seen
            if overlap:
                raise ValueError(
                    f"compat-roles overlap a component: {', '.join(sorted(overlap))}"
                )
            stray = parts(self.compat) - seen - self.compat_roles
            if stray:
                raise ValueError(
                    f"compatibility type uses unclaimed roles: {', '.join(sorted(stray))}"
                )


@dataclass(frozen=True)
class CompositionResult:
    """Outcome of compose_spec. global_type is None when some
    compatibility check failed; compat_report then lists the failures."""

    global_type: HybridType | None
    locals: Mapping[str, HybridType] = field(default_factory=dict)
    compat_report: tuple[Diagnostic, ...] = ()


def _first_diff(a: HybridType, b: HybridType, path: tuple[int, ...]) -> tuple[tuple[int, ...], str]:
    # locate the shallowest disagreement for a readable mismatch report
    if a == b:
        return path, "equal"
    if type(a) is not type(b):
        return path, f"{_brief(a)} vs {_brief(b)}"
    if isinstance(a, Rec) and a.var == b.var:
        return _first_diff(a.body, b.body, path + (0,))
    if isinstance(a, Par):
        if a.left != b.left:
            return _first_diff(a.left, b.left, path + (0,))
        return _first_diff(a.right, b.right, path + (1,))
    if isinstance(a, (Msg, Send, Recv)) and (a.src, a.dst) == (b.src, b.dst):
        la = [x.label for x in a.branches]
        lb = [x.label for x in b.branches]
        if la == lb:
            for i, (x, y) in enumerate(zip(a.branches, b.branches)):
                if x.payload != y.payload:
                    return path + (i,), f"payloads differ at label {x.label!r}"
                if x.continuation != y.continuation:
                    return _first_diff(x.continuation, y.continuation, path + (i,))
    return path, f"{_brief(a)} vs {_brief(b)}"


def check_compat(compat: HybridType, component: Component) -> list[Diagnostic]:
    """Does the component blend into the compatibility type?

    Projects the compatibility type onto the component's roles and
    compares with the component's localisation. Returns diagnostics,
    empty on success.
    """
    try:
        want = project(compat, component.roles)
    except Undefined as ex:
        d = ex.diagnostic
        return [Diagnostic("compat-project", d.path, d.message)]
    try:
        have = localise(component.protocol)
    except Undefined as ex:
        d = ex.diagnostic
        return [Diagnostic("compat-localise", d.path, d.message)]
    if equal(want, have):
        return []
    where, what = _first_diff(want, have, ())
    roles = ",".join(sorted(component.roles))
    return [
        Diagnostic(
            "compat-mismatch",
            where,
            f"projection onto {{{roles}}} disagrees with the component view: {what}",
        )
    ]


# ---------------------------------------------------------------------------
# unmerge: inverting the two merges
# ---------------------------------------------------------------------------


def _labels(h) -> tuple[str, ...]:
    return tuple(b.label for b in h.branches)


def _branch_map(h) -> dict[str, Branch]:
    return {b.label: b for b in h.branches}


def _check_same_payload(path: tuple[int, ...], rule: str, *bs: Branch) -> None:
    first = bs[0]
    for b in bs[1:]:
        if b.payload != first.payload:
            raise _fail(rule, path, f"payload mismatch at label {first.label!r}")


def _ul_bin(
    hd: HybridType, l1: HybridType, l2: HybridType, e: RoleSet, path: tuple[int, ...]
) -> tuple[HybridType, HybridType]:
    """Split hd into two pieces whose projections onto e are l1 and l2,
    given that the merged view of l1 and l2 is hd's projection onto e."""
    if isinstance(hd, (End, Var)):
        if l1 == hd and l2 == hd:
            return hd, hd
        raise _fail("unmerge-l", path, f"{_brief(hd)} cannot split into {_brief(l1)}/{_brief(l2)}")
    if isinstance(hd, Rec):
        if isinstance(l1, Rec) and isinstance(l2, Rec) and l1.var == hd.var == l2.var:
            a, b = _ul_bin(hd.body, l1.body, l2.body, e, path + (0,))
            return Rec(hd.var, a), Rec(hd.var, b)
        if isinstance(l1, End) and isinstance(l2, End):
            return hd, hd
        raise _fail("unmerge-l", path, f"rec {hd.var} cannot split into {_brief(l1)}/{_brief(l2)}")
    if isinstance(hd, Par):
        if not (parts(hd.right) & e):
            a, b = _ul_bin(hd.left, l1, l2, e, path + (0,))
            return Par(a, hd.right), Par(b, hd.right)
        if not (parts(hd.left) & e):
            a, b = _ul_bin(hd.right, l1, l2, e, path + (1,))
            return Par(hd.left, a), Par(hd.left, b)
        raise _fail("unmerge-l", path, "both parallel sides own split roles")
    if isinstance(hd, Send):
        if (
            isinstance(l1, Send)
            and isinstance(l2, Send)
            and (l1.src, l1.dst) == (hd.src, hd.dst) == (l2.src, l2.dst)
            and set(_labels(l1)) | set(_labels(l2)) == set(_labels(hd))
        ):
            return _ul_split(hd, l1, l2, e, path, Send)
        return _ul_matrix(hd, l1, l2, e, path)
    if isinstance(hd, Recv):
        if (
            isinstance(l1, Recv)
            and isinstance(l2, Recv)
            and (l1.src, l1.dst) == (hd.src, hd.dst) == (l2.src, l2.dst)
            and _labels(l1) == _labels(hd) == _labels(l2)
        ):
            return _ul_componentwise(hd, l1, l2, e, path, Recv)
        return _ul_matrix(hd, l1, l2, e, path)
    # hd is a Msg
    if (
        isinstance(l1, Send)
        and isinstance(l2, Send)
        and (l1.src, l1.dst) == (hd.src, hd.dst) == (l2.src, l2.dst)
        and set(_labels(l1)) | set(_labels(l2)) == set(_labels(hd))
    ):
        return _ul_split(hd, l1, l2, e, path, Msg)
    if (
        isinstance(l1, (Recv, Msg))
        and type(l1) is type(l2)
        and (l1.src, l1.dst) == (hd.src, hd.dst) == (l2.src, l2.dst)
        and _labels(l1) == _labels(hd) == _labels(l2)
    ):
        return _ul_componentwise(hd, l1, l2, e, path, Msg)
    return _ul_matrix(hd, l1, l2, e, path)


def _ul_split(hd, l1, l2, e, path, head) -> tuple[HybridType, HybridType]:
    # l1/l2 carry complementary label subsets; shared labels recurse,
    # exclusive ones copy hd's branch unchanged
    dh, d1, d2 = _branch_map(hd), _branch_map(l1), _branch_map(l2)
    out1: list[Branch] = []
    out2: list[Branch] = []
    for i, lbl in enumerate(_labels(hd)):
        hb = dh[lbl]
        in1, in2 = lbl in d1, lbl in d2
        if in1 and in2:
            _check_same_payload(path + (i,), "unmerge-l", hb, d1[lbl], d2[lbl])
            a, b = _ul_bin(
                hb.continuation, d1[lbl].continuation, d2[lbl].continuation, e, path + (i,)
            )
            out1.append(Branch(lbl, a, hb.payload))
            out2.append(Branch(lbl, b, hb.payload))
        elif in1:
            _check_same_payload(path + (i,), "unmerge-l", hb, d1[lbl])
            out1.append(hb)
        else:
            _check_same_payload(path + (i,), "unmerge-l", hb, d2[lbl])
            out2.append(hb)
    return head(hd.src, hd.dst, tuple(out1)), head(hd.src, hd.dst, tuple(out2))


def _ul_componentwise(hd, l1, l2, e, path, head) -> tuple[HybridType, HybridType]:
    out1: list[Branch] = []
    out2: list[Branch] = []
    for i, (hb, b1, b2) in enumerate(zip(hd.branches, l1.branches, l2.branches)):
        _check_same_payload(path + (i,), "unmerge-l", hb, b1, b2)
        a, b = _ul_bin(hb.continuation, b1.continuation, b2.continuation, e, path + (i,))
        out1.append(Branch(hb.label, a, hb.payload))
        out2.append(Branch(hb.label, b, hb.payload))
    return head(hd.src, hd.dst, tuple(out1)), head(hd.src, hd.dst, tuple(out2))


def _ul_matrix(hd, l1, l2, e, path) -> tuple[HybridType, HybridType]:
    # hd's head is invisible to e: unmerge each branch projection
    # against both localisations, then split the branches themselves
    ps = tuple(project(b.continuation, e) for b in hd.branches)
    rows = unmerge_lp(ps, (l1, l2))
    out1: list[Branch] = []
    out2: list[Branch] = []
    for i, (hb, row) in enumerate(zip(hd.branches, rows)):
        a, b = _ul_bin(hb.continuation, row[0], row[1], e, path + (i,))
        out1.append(Branch(hb.label, a, hb.payload))
        out2.append(Branch(hb.label, b, hb.payload))
    head = type(hd)
    return head(hd.src, hd.dst, tuple(out1)), head(hd.src, hd.dst, tuple(out2))


def unmerge_l(
    hdagger: HybridType, ls: Sequence[HybridType], e: Iterable[str]
) -> tuple[HybridType, ...]:
    """Split hdagger into one piece per element of ls, where the pieces
    of ls combine under the localiser merge to hdagger's projection
    onto e. Each returned piece projects onto e to its ls entry."""
    eset: RoleSet = frozenset(e)
    pieces = tuple(ls)
    if not pieces:
        raise _fail("unmerge-l", (), "nothing to unmerge")
    for p in pieces:
        if not parts(p) <= eset:
            raise _fail("unmerge-l", (), "split piece owns roles outside the split set")
    return _ul_nary(hdagger, pieces, eset)


def _ul_nary(hd: HybridType, pieces: tuple[HybridType, ...], e: RoleSet) -> tuple[HybridType, ...]:
    if len(pieces) == 1:
        return (hd,)
    if len(pieces) == 2:
        return _ul_bin(hd, pieces[0], pieces[1], e, ())
    rest = merge_loc_all(pieces[1:])
    first, remainder = _ul_bin(hd, pieces[0], rest, e, ())
    return (first,) + _ul_nary(remainder, pieces[1:], e)


def _up_bin(
    he: HybridType, p1: HybridType, p2: HybridType, path: tuple[int, ...]
) -> tuple[HybridType, HybridType]:
    """Split he into two pieces whose localisations are p1 and p2,
    given that p1 and p2 merge (projection merge) to he's localisation."""
    if isinstance(he, (End, Var)):
        if p1 == he and p2 == he:
            return he, he
        raise _fail("unmerge-p", path, f"{_brief(he)} cannot split into {_brief(p1)}/{_brief(p2)}")
    if isinstance(he, Rec):
        if isinstance(p1, Rec) and isinstance(p2, Rec) and p1.var == he.var == p2.var:
            a, b = _up_bin(he.body, p1.body, p2.body, path + (0,))
            return Rec(he.var, a), Rec(he.var, b)
        if isinstance(p1, End) and isinstance(p2, End):
            return he, he
        raise _fail("unmerge-p", path, f"rec {he.var} cannot split into {_brief(p1)}/{_brief(p2)}")
    if isinstance(he, Par):
        raise _fail("unmerge-p", path, "cannot split a parallel composition")
    if isinstance(he, Send):
        if (
            isinstance(p1, Send)
            and isinstance(p2, Send)
            and (p1.src, p1.dst) == (he.src, he.dst) == (p2.src, p2.dst)
            and _labels(p1) == _labels(he) == _labels(p2)
        ):
            out1, out2 = [], []
            for i, (eb, b1, b2) in enumerate(zip(he.branches, p1.branches, p2.branches)):
                _check_same_payload(path + (i,), "unmerge-p", eb, b1, b2)
                a, b = _up_bin(eb.continuation, b1.continuation, b2.continuation, path + (i,))
                out1.append(Branch(eb.label, a, eb.payload))
                out2.append(Branch(eb.label, b, eb.payload))
            return Send(he.src, he.dst, tuple(out1)), Send(he.src, he.dst, tuple(out2))
        raise _fail("unmerge-p", path, f"{_brief(he)} cannot split into {_brief(p1)}/{_brief(p2)}")
    if isinstance(he, Recv):
        if (
            isinstance(p1, Recv)
            and isinstance(p2, Recv)
            and (p1.src, p1.dst) == (he.src, he.dst) == (p2.src, p2.dst)
            and set(_labels(p1)) | set(_labels(p2)) == set(_labels(he))
        ):
            de, d1, d2 = _branch_map(he), _branch_map(p1), _branch_map(p2)
            out1, out2 = [], []
            for i, lbl in enumerate(_labels(he)):
                eb = de[lbl]
                in1, in2 = lbl in d1, lbl in d2
                if in1 and in2:
                    _check_same_payload(path + (i,), "unmerge-p", eb, d1[lbl], d2[lbl])
                    a, b = _up_bin(
                        eb.continuation, d1[lbl].continuation, d2[lbl].continuation, path + (i,)
                    )
                    out1.append(Branch(lbl, a, eb.payload))
                    out2.append(Branch(lbl, b, eb.payload))
                elif in1:
                    _check_same_payload(path + (i,), "unmerge-p", eb, d1[lbl])
                    out1.append(eb)
                else:
                    _check_same_payload(path + (i,), "unmerge-p", eb, d2[lbl])
                    out2.append(eb)
            return Recv(he.src, he.dst, tuple(out1)), Recv(he.src, he.dst, tuple(out2))
        raise _fail("unmerge-p", path, f"{_brief(he)} cannot split into {_brief(p1)}/{_brief(p2)}")
    # he is a Msg: split every branch against both pieces
    ls = tuple(localise(b.continuation) for b in he.branches)
    rows = unmerge_pl(ls, (p1, p2))
    out1, out2 = [], []
    for i, (eb, row) in enumerate(zip(he.branches, rows)):
        a, b = _up_bin(eb.continuation, row[0], row[1], path + (i,))
        out1.append(Branch(eb.label, a, eb.payload))
        out2.append(Branch(eb.label, b, eb.payload))
    return Msg(he.src, he.dst, tuple(out1)), Msg(he.src, he.dst, tuple(out2))


def unmerge_p(
    he: HybridType, ps: Sequence[HybridType], e: Iterable[str]
) -> tuple[HybridType, ...]:
    """Split he into one piece per element of ps, where the pieces of
    ps combine under the projection merge to he's localisation. Each
    returned piece localises to its ps entry."""
    eset: RoleSet = frozenset(e)
    pieces = tuple(ps)
    if not pieces:
        raise _fail("unmerge-p", (), "nothing to unmerge")
    if not parts(he) <= eset:
        raise _fail("unmerge-p", (), "type owns roles outside the split set")
    return _up_nary(he, pieces)


def _up_nary(he: HybridType, pieces: tuple[HybridType, ...]) -> tuple[HybridType, ...]:
    if len(pieces) == 1:
        return (he,)
    if len(pieces) == 2:
        return _up_bin(he, pieces[0], pieces[1], ())
    rest = merge_proj_all(pieces[1:])
    first, remainder = _up_bin(he, pieces[0], rest, ())
    return (first,) + _up_nary(remainder, pieces[1:])


_Quad = tuple[tuple[HybridType, HybridType], tuple[HybridType, HybridType]]


def _ulp_bin(p1, p2, l1, l2, path: tuple[int, ...]) -> _Quad:
    """2x2 refinement: entry (n, m) merges along rows (localiser merge)
    back to the p pieces and along columns (projection merge) back to
    the l pieces."""
    if p1 == p2 == l1 == l2 and isinstance(p1, (End, Var)):
        return (p1, p1), (p1, p1)
    if (
        isinstance(p1, Rec)
        and type(p1) is type(p2) is type(l1) is type(l2)
        and p1.var == p2.var == l1.var == l2.var
    ):
        q = _ulp_bin(p1.body, p2.body, l1.body, l2.body, path + (0,))
        w = p1.var
        return (
            (Rec(w, q[0][0]), Rec(w, q[0][1])),
            (Rec(w, q[1][0]), Rec(w, q[1][1])),
        )
    if (
        isinstance(p1, Send)
        and isinstance(p2, Send)
        and isinstance(l1, Send)
        and isinstance(l2, Send)
        and len({(x.src, x.dst) for x in (p1, p2, l1, l2)}) == 1
        and _labels(p1) == _labels(p2)
        and set(_labels(l1)) | set(_labels(l2)) == set(_labels(p1))
    ):
        # rows share the full label set, columns carry l1/l2's subsets
        dp1, dp2, dl1, dl2 = map(_branch_map, (p1, p2, l1, l2))
        cells: dict[str, _Quad] = {}
        for i, lbl in enumerate(_labels(p1)):
            a, b = dp1[lbl], dp2[lbl]
            if lbl in dl1 and lbl in dl2:
                c, d = dl1[lbl], dl2[lbl]
            elif lbl in dl1:
                c = d = dl1[lbl]
            else:
                c = d = dl2[lbl]
            _check_same_payload(path + (i,), "unmerge-lp", a, b, c, d)
            cells[lbl] = _ulp_bin(
                a.continuation, b.continuation, c.continuation, d.continuation, path + (i,)
            )
        payload = {b.label: b.payload for b in p1.branches}

        def _col(n: int, m: int, labels) -> HybridType:
            bs = tuple(Branch(x, cells[x][n][m], payload[x]) for x in labels)
            return Send(p1.src, p1.dst, bs)

        j, k = _labels(l1), _labels(l2)
        return ((_col(0, 0, j), _col(0, 1, k)), (_col(1, 0, j), _col(1, 1, k)))
    if (
        isinstance(p1, Recv)
        and isinstance(p2, Recv)
        and isinstance(l1, Recv)
        and isinstance(l2, Recv)
        and len({(x.src, x.dst) for x in (p1, p2, l1, l2)}) == 1
        and _labels(l1) == _labels(l2)
        and set(_labels(p1)) | set(_labels(p2)) == set(_labels(l1))
    ):
        # rows carry p1/p2's subsets, columns share the full label set
        dp1, dp2, dl1, dl2 = map(_branch_map, (p1, p2, l1, l2))
        cells = {}
        for i, lbl in enumerate(_labels(l1)):
            c, d = dl1[lbl], dl2[lbl]
            if lbl in dp1 and lbl in dp2:
                a, b = dp1[lbl], dp2[lbl]
            elif lbl in dp1:
                a = b = dp1[lbl]
            else:
                a = b = dp2[lbl]
            _check_same_payload(path + (i,), "unmerge-lp", a, b, c, d)
            cells[lbl] = _ulp_bin(
                a.continuation, b.continuation, c.continuation, d.continuation, path + (i,)
            )
        payload = {b.label: b.payload for b in l1.branches}

        def _row(n: int, m: int, labels) -> HybridType:
            bs = tuple(Branch(x, cells[x][n][m], payload[x]) for x in labels)
            return Recv(l1.src, l1.dst, bs)

        j, k = _labels(p1), _labels(p2)
        return ((_row(0, 0, j), _row(0, 1, j)), (_row(1, 0, k), _row(1, 1, k)))
    if (
        isinstance(p1, Msg)
        and type(p1) is type(p2) is type(l1) is type(l2)
        and len({(x.src, x.dst) for x in (p1, p2, l1, l2)}) == 1
        and _labels(p1) == _labels(p2) == _labels(l1) == _labels(l2)
    ):
        out = ([], []), ([], [])
        for i, (a, b, c, d) in enumerate(zip(p1.branches, p2.branches, l1.branches, l2.branches)):
            _check_same_payload(path + (i,), "unmerge-lp", a, b, c, d)
            q = _ulp_bin(a.continuation, b.continuation, c.continuation, d.continuation, path + (i,))
            for n in (0, 1):
                for m in (0, 1):
                    out[n][m].append(Branch(a.label, q[n][m], a.payload))
        mk = lambda bs: Msg(p1.src, p1.dst, tuple(bs))
        return (
            (mk(out[0][0]), mk(out[0][1])),
            (mk(out[1][0]), mk(out[1][1])),
        )
    raise _fail(
        "unmerge-lp",
        path,
        f"cannot refine {_brief(p1)}/{_brief(p2)} against {_brief(l1)}/{_brief(l2)}",
    )


def unmerge_lp(
    ps: Sequence[HybridType], ls: Sequence[HybridType]
) -> tuple[tuple[HybridType, ...], ...]:
    """Common refinement of two splits of one type: ps combine under
    the projection merge and ls under the localiser merge to the same
    type. Returns one row per ps entry with one column per ls entry;
    each row merges (localiser) back to its ps entry and each column
    merges (projection) back to its ls entry."""
    prow = tuple(ps)
    lcol = tuple(ls)
    if not prow:
        return ()
    if len(prow) == 1:
        return (lcol,)
    if not lcol:
        return tuple(() for _ in prow)
    if len(prow) == 2:
        if len(lcol) == 1:
            q = _ulp_bin(prow[0], prow[1], lcol[0], lcol[0], ())
            return ((q[0][0],), (q[1][0],))
        if len(lcol) == 2:
            q = _ulp_bin(prow[0], prow[1], lcol[0], lcol[1], ())
            return (q[0], q[1])
        q = _ulp_bin(prow[0], prow[1], lcol[0], merge_loc_all(lcol[1:]), ())
        r1, r2 = unmerge_lp((q[0][1], q[1][1]), lcol[1:])
        return ((q[0][0],) + r1, (q[1][0],) + r2)
    top = unmerge_lp((prow[0], merge_proj_all(prow[1:])), lcol)
    return (top[0],) + unmerge_lp(prow[1:], top[1])


def _upl_bin(l1, l2, p1, p2, path: tuple[int, ...]) -> _Quad:
    """Mirror refinement: entry (n, m) merges along rows (projection
    merge) back to the l pieces and along columns (localiser merge)
    back to the p pieces."""
    if l1 == l2 == p1 == p2 and isinstance(l1, (End, Var)):
        return (l1, l1), (l1, l1)
    if (
        isinstance(l1, Rec)
        and type(l1) is type(l2) is type(p1) is type(p2)
        and l1.var == l2.var == p1.var == p2.var
    ):
        q = _upl_bin(l1.body, l2.body, p1.body, p2.body, path + (0,))
        w = l1.var
        return (
            (Rec(w, q[0][0]), Rec(w, q[0][1])),
            (Rec(w, q[1][0]), Rec(w, q[1][1])),
        )
    if (
        isinstance(l1, Send)
        and isinstance(l2, Send)
        and isinstance(p1, Send)
        and isinstance(p2, Send)
        and len({(x.src, x.dst) for x in (l1, l2, p1, p2)}) == 1
        and _labels(p1) == _labels(p2)
        and set(_labels(l1)) | set(_labels(l2)) == set(_labels(p1))
    ):
        # rows carry l1/l2's subsets, columns share the full label set
        dl1, dl2, dp1, dp2 = map(_branch_map, (l1, l2, p1, p2))
        cells: dict[str, _Quad] = {}
        for i, lbl in enumerate(_labels(p1)):
            c, d = dp1[lbl], dp2[lbl]
            if lbl in dl1 and lbl in dl2:
                a, b = dl1[lbl], dl2[lbl]
            elif lbl in dl1:
                a = b = dl1[lbl]
            else:
                a = b = dl2[lbl]
            _check_same_payload(path + (i,), "unmerge-pl", a, b, c, d)
            cells[lbl] = _upl_bin(
                a.continuation, b.continuation, c.continuation, d.continuation, path + (i,)
            )
        payload = {b.label: b.payload for b in p1.branches}

        def _row(n: int, m: int, labels) -> HybridType:
            bs = tuple(Branch(x, cells[x][n][m], payload[x]) for x in labels)
            return Send(p1.src, p1.dst, bs)

        j, k = _labels(l1), _labels(l2)
        return ((_row(0, 0, j), _row(0, 1, j)), (_row(1, 0, k), _row(1, 1, k)))
    if (
        isinstance(l1, Recv)
        and isinstance(l2, Recv)
        and isinstance(p1, Recv)
        and isinstance(p2, Recv)
        and len({(x.src, x.dst) for x in (l1, l2, p1, p2)}) == 1
        and _labels(l1) == _labels(l2)
        and set(_labels(p1)) | set(_labels(p2)) == set(_labels(l1))
    ):
        # rows share the full label set, columns carry p1/p2's subsets
        dl1, dl2, dp1, dp2 = map(_branch_map, (l1, l2, p1, p2))
        cells = {}
        for i, lbl in enumerate(_labels(l1)):
            a, b = dl1[lbl], dl2[lbl]
            if lbl in dp1 and lbl in dp2:
                c, d = dp1[lbl], dp2[lbl]
            elif lbl in dp1:
                c = d = dp1[lbl]
            else:
                c = d = dp2[lbl]
            _check_same_payload(path + (i,), "unmerge-pl", a, b, c, d)
            cells[lbl] = _upl_bin(
                a.continuation, b.continuation, c.continuation, d.continuation, path + (i,)
            )
        payload = {b.label: b.payload for b in l1.branches}

        def _col(n: int, m: int, labels) -> HybridType:
            bs = tuple(Branch(x, cells[x][n][m], payload[x]) for x in labels)
            return Recv(l1.src, l1.dst, bs)

        j, k = _labels(p1), _labels(p2)
        return ((_col(0, 0, j), _col(0, 1, k)), (_col(1, 0, j), _col(1, 1, k)))
    if (
        isinstance(l1, Msg)
        and type(l1) is type(l2) is type(p1) is type(p2)
        and len({(x.src, x.dst) for x in (l1, l2, p1, p2)}) == 1
        and _labels(l1) == _labels(l2) == _labels(p1) == _labels(p2)
    ):
        out = ([], []), ([], [])
        for i, (a, b, c, d) in enumerate(zip(l1.branches, l2.branches, p1.branches, p2.branches)):
            _check_same_payload(path + (i,), "unmerge-pl", a, b, c, d)
            q = _upl_bin(a.continuation, b.continuation, c.continuation, d.continuation, path + (i,))
            for n in (0, 1):
                for m in (0, 1):
                    out[n][m].append(Branch(a.label, q[n][m], a.payload))
        mk = lambda bs: Msg(l1.src, l1.dst, tuple(bs))
        return (
            (mk(out[0][0]), mk(out[0][1])),
            (mk(out[1][0]), mk(out[1][1])),
        )
    raise _fail(
        "unmerge-pl",
        path,
        f"cannot refine {_brief(l1)}/{_brief(l2)} against {_brief(p1)}/{_brief(p2)}",
    )


def unmerge_pl(
    ls: Sequence[HybridType], ps: Sequence[HybridType]
) -> tuple[tuple[HybridType, ...], ...]:
    """Mirror of unmerge_lp: one row per ls entry, one column per ps
    entry; rows merge (projection) back to ls, columns merge
    (localiser) back to ps."""
    lrow = tuple(ls)
    pcol = tuple(ps)
    if not lrow:
        return ()
    if len(lrow) == 1:
        return (pcol,)
    if not pcol:
        return tuple(() for _ in lrow)
    if len(lrow) == 2:
        if len(pcol) == 1:
            q = _upl_bin(lrow[0], lrow[1], pcol[0], pcol[0], ())
            return ((q[0][0],), (q[1][0],))
        if len(pcol) == 2:
            q = _upl_bin(lrow[0], lrow[1], pcol[0], pcol[1], ())
            return (q[0], q[1])
        q = _upl_bin(lrow[0], lrow[1], pcol[0], merge_proj_all(pcol[1:]), ())
        r1, r2 = unmerge_pl((q[0][1], q[1][1]), pcol[1:])
        return ((q[0][0],) + r1, (q[1][0],) + r2)
    top = unmerge_pl((lrow[0], merge_loc_all(lrow[1:])), pcol)
    return (top[0],) + unmerge_pl(lrow[1:], top[1])


# ---------------------------------------------------------------------------
# build-back
# ---------------------------------------------------------------------------


def _verify_ul(hd, uls, ls, e, path) -> None:
    for j, (u, l) in enumerate(zip(uls, ls)):
        if not equal(project(u, e), l):
            raise _fail("verify-unmerge-l", path + (j,), "split piece does not project back")


def _verify_up(he, ups, ps, path) -> None:
    for i, (u, p) in enumerate(zip(ups, ps)):
        if not equal(localise(u), p):
            raise _fail("verify-unmerge-p", path + (i,), "split piece does not localise back")
    if not equal(merge_proj_all(list(ups)), he):
        raise _fail("verify-unmerge-p", path, "split pieces do not merge back")


def _bb_internal_first(hd, he: Msg, e, path, verify) -> HybridType:
    # the component's own message goes out first; split hd by the
    # environment views of the branch continuations
    ls = tuple(localise(b.continuation) for b in he.branches)
    uls = unmerge_l(hd, ls, e)
    if verify:
        _verify_ul(hd, uls, ls, e, path)
    branches = tuple(
        Branch(b.label, _bb1(u, b.continuation, e, path + (j,), verify), b.payload)
        for j, (u, b) in enumerate(zip(uls, he.branches))
    )
    return Msg(he.src, he.dst, branches)


def _bb_external_first(hd, he, e, path, verify) -> HybridType:
    # hd's head does not involve the component; emit it and split the
    # component by hd's branch projections
    ps = tuple(project(b.continuation, e) for b in hd.branches)
    ups = unmerge_p(he, ps, e)
    if verify:
        _verify_up(he, ups, ps, path)
    branches = tuple(
        Branch(b.label, _bb1(b.continuation, u, e, path + (i,), verify), b.payload)
        for i, (b, u) in enumerate(zip(hd.branches, ups))
    )
    return type(hd)(hd.src, hd.dst, branches)


def _bb1(
    hd: HybridType, he: HybridType, e: RoleSet, path: tuple[int, ...], verify: bool
) -> HybridType:
    if not parts(he) <= e:
        raise _fail("build-back", path, "component owns roles outside its role set")
    if isinstance(hd, (End, Var)):
        return he
    if isinstance(hd, Rec):
        if not (parts(hd.body) & e):
            if is_closed(hd) and is_closed(he):
                return Par(hd, he)
            if isinstance(he, Msg):
                branches = tuple(
                    Branch(b.label, _bb1(hd, b.continuation, e, path + (j,), verify), b.payload)
                    for j, b in enumerate(he.branches)
                )
                return Msg(he.src, he.dst, branches)
            # a loop scoped to other components can still be shared
            # when the projection kept it for its guarded body
            if isinstance(he, Rec) and he.var == hd.var:
                return Rec(hd.var, _bb1(hd.body, he.body, e, path + (0,), verify))
            raise _fail(
                "build-back",
                path,
                f"open leftovers: rec {hd.var} against {_brief(he)}",
            )
        if isinstance(he, Rec) and he.var == hd.var:
            return Rec(hd.var, _bb1(hd.body, he.body, e, path + (0,), verify))
        if isinstance(he, Msg):
            # internal message ahead of the shared recursion
            return _bb_internal_first(hd, he, e, path, verify)
        if isinstance(he, End):
            # the component's view of this whole loop collapsed, so the
            # loop involves its roles only in branches it cannot see
            try:
                if project(hd, e) == END:
                    return hd
            except Undefined:
                pass
        raise _fail("build-back", path, f"rec {hd.var} does not line up with {_brief(he)}")
    if isinstance(hd, Par):
        if not (parts(hd.right) & e):
            return Par(_bb1(hd.left, he, e, path + (0,), verify), hd.right)
        if not (parts(hd.left) & e):
            return Par(hd.left, _bb1(hd.right, he, e, path + (1,), verify))
        raise _fail("build-back", path, "component roles straddle a parallel composition")
    if isinstance(hd, (Send, Recv)):
        mine = hd.src if isinstance(hd, Send) else hd.dst
        want = Send if isinstance(hd, Send) else Recv
        if (
            isinstance(he, want)
            and (he.src, he.dst) == (hd.src, hd.dst)
            and _labels(he) == _labels(hd)
        ):
            out = []
            for i, (a, b) in enumerate(zip(hd.branches, he.branches)):
                _check_same_payload(path + (i,), "build-back", a, b)
                out.append(
                    Branch(a.label, _bb1(a.continuation, b.continuation, e, path + (i,), verify), a.payload)
                )
            return want(hd.src, hd.dst, tuple(out))
        if isinstance(he, Msg):
            return _bb_internal_first(hd, he, e, path, verify)
        if mine not in e:
            return _bb_external_first(hd, he, e, path, verify)
        raise _fail("build-back", path, f"{_brief(hd)} does not line up with {_brief(he)}")
    # hd is a Msg
    if (
        isinstance(he, (Send, Recv))
        and (he.src, he.dst) == (hd.src, hd.dst)
        and _labels(he) == _labels(hd)
    ):
        out = []
        for i, (a, b) in enumerate(zip(hd.branches, he.branches)):
            _check_same_payload(path + (i,), "build-back", a, b)
            out.append(
                Branch(a.label, _bb1(a.continuation, b.continuation, e, path + (i,), verify), a.payload)
            )
        return Msg(hd.src, hd.dst, tuple(out))
    if isinstance(he, Msg):
        return _bb_internal_first(hd, he, e, path, verify)
    if hd.src not in e and hd.dst not in e:
        return _bb_external_first(hd, he, e, path, verify)
    raise _fail("build-back", path, f"{_brief(hd)} does not line up with {_brief(he)}")


def build_back_one(
    gdagger: HybridType, c: Component, *, verify: bool = False
) -> HybridType:
    """Weave one component into the compatibility type. Total on
    compatible inputs arising here; raises Undefined otherwise."""
    return _bb1(gdagger, c.protocol, c.roles, (), verify)


def build_back(
    gdagger: HybridType, cs: Sequence[Component], *, verify: bool = False
) -> HybridType:
    """Left fold of build_back_one over the components. An empty
    sequence returns the compatibility type unchanged."""
    acc = gdagger
    for c in cs:
        acc = build_back_one(acc, c, verify=verify)
    return acc


def compose_spec(spec: CompositionSpec, *, verify: bool = False) -> CompositionResult:
    """Check compatibility of every component, weave them all into the
    compatibility type, and derive every endpoint view.

    On compatibility failure returns a result with global_type None and
    the failures in compat_report. Build-back failures and postcondition
    violations raise Undefined.
    """
    report: list[Diagnostic] = []
    for idx, c in enumerate(spec.components):
        roles = ",".join(sorted(c.roles))
        for d in check_compat(spec.compat, c):
            report.append(
                Diagnostic(d.rule, d.path, f"component {idx} {{{roles}}}: {d.message}")
            )
    if report:
        return CompositionResult(None, {}, tuple(report))
    g = build_back(spec.compat, spec.components, verify=verify)
    views: dict[str, HybridType] = {}
    for c in spec.components:
        for r in sorted(c.roles):
            views[r] = project_role(c.protocol, r)
    for r in sorted(spec.compat_roles):
        views[r] = project_role(spec.compat, r)
    for r, view in views.items():
        if not equal(project_role(g, r), view):
            raise _fail(
                "compose-postcondition",
                (),
                f"endpoint view of {r!r} diverges from the composed protocol",
            )
    return CompositionResult(g, views, ())
