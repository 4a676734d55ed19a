"""Generalized projection of hybrid types onto sets of roles.

project(h, e) restricts a type to the slice owned by the roles in e.
Interactions whose endpoints are all outside e disappear, and their
branch continuations must agree up to the branching merge implemented
here: identical prefixes merge pointwise, input branchings may union
their label sets. Projection is partial; failures raise Undefined
carrying the deepest offending pair.
"""

from __future__ import annotations

from typing import Iterable, Sequence

from .kernel import (
    Branch,
    Diagnostic,
    End,
    END,
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
    is_closed,
    is_guarded,
    parts,
)

__all__ = ["merge_proj", "merge_proj_all", "project", "project_role"]


def _fail(rule: str, path: tuple[int, ...], message: str) -> Undefined:
    return Undefined(Diagnostic(rule, path, message))


def merge_proj(a: HybridType, b: HybridType) -> HybridType:
    """Branching merge of two projections.

    Equal types merge to themselves. Rec (same variable) and Par merge
    componentwise. Msg and Send require identical label sets and merge
    branchwise; Recv unions the label sets, merging the shared labels
    and keeping the exclusive ones. Raises Undefined otherwise.
    """
    return _merge(a, b, ())


def _merge(a: HybridType, b: HybridType, path: tuple[int, ...]) -> HybridType:
    if a == b:
        return a
    if isinstance(a, Rec) and isinstance(b, Rec) and a.var == b.var:
        return Rec(a.var, _merge(a.body, b.body, path + (0,)))
    if isinstance(a, Par) and isinstance(b, Par):
        return Par(_merge(a.left, b.left, path + (0,)), _merge(a.right, b.right, path + (1,)))
    if (
        isinstance(a, (Msg, Send))
        and type(a) is type(b)
        and (a.src, a.dst) == (b.src, b.dst)
    ):
        return _merge_same_labels(a, b, path)
    if isinstance(a, Recv) and isinstance(b, Recv) and (a.src, a.dst) == (b.src, b.dst):
        return _merge_union(a, b, path)
    raise _fail("merge-proj", path, f"cannot merge {_brief(a)} with {_brief(b)}")


def _merge_same_labels(a, b, path: tuple[int, ...]) -> HybridType:
    da = {x.label: x for x in a.branches}
    db = {x.label: x for x in b.branches}
    if set(da) != set(db):
        raise _fail(
            "merge-proj",
            path,
            f"label sets differ between {_brief(a)} and {_brief(b)}",
        )
    out = []
    for i, lbl in enumerate(sorted(da)):
        x, y = da[lbl], db[lbl]
        if x.payload != y.payload:
            raise _fail("merge-proj", path + (i,), f"payload mismatch at label {lbl!r}")
        out.append(Branch(lbl, _merge(x.continuation, y.continuation, path + (i,)), x.payload))
    return type(a)(a.src, a.dst, tuple(out))


def _merge_union(a: Recv, b: Recv, path: tuple[int, ...]) -> HybridType:
    da = {x.label: x for x in a.branches}
    db = {x.label: x for x in b.branches}
    out = []
    for i, lbl in enumerate(sorted(set(da) | set(db))):
        if lbl in da and lbl in db:
            x, y = da[lbl], db[lbl]
            if x.payload != y.payload:
                raise _fail("merge-proj", path + (i,), f"payload mismatch at label {lbl!r}")
            out.append(
                Branch(lbl, _merge(x.continuation, y.continuation, path + (i,)), x.payload)
            )
        else:
            out.append(da.get(lbl) or db[lbl])
    return Recv(a.src, a.dst, tuple(out))


def merge_proj_all(items: Sequence[HybridType]) -> HybridType:
    if not items:
        raise ValueError("merge_proj_all needs at least one type")
    acc = items[0]
    for x in items[1:]:
        acc = _merge(acc, x, ())
    return acc


def project(h: HybridType, e: Iterable[str]) -> HybridType:
    """Project h onto the role set e.

    Requires e to avoid the environment endpoints of h. Msg keeps both,
    one, or no endpoints and becomes Msg, Send/Recv, or a merge of its
    branch projections accordingly; Send/Recv survive only via their
    internal endpoint. A recursion whose body does not project falls
    back to end when the whole rec subterm is closed. The result never
    contains a Par node: parallel compositions project to the side that
    owns the requested roles.
    """
    eset: RoleSet = frozenset(e)
    bad = eset & eparts(h)
    if bad:
        roles = ", ".join(sorted(bad))
        raise _fail("project-environment", (), f"roles are environment endpoints: {roles}")
    return _proj(h, eset, ())


def _proj(h: HybridType, e: RoleSet, path: tuple[int, ...]) -> HybridType:
    if isinstance(h, (End, Var)):
        return h
    if isinstance(h, Rec):
        # a failed or unguarded body projection collapses a closed
        # recursion to end; open recursions stay partial
        try:
            body = _proj(h.body, e, path + (0,))
        except Undefined:
            if is_closed(h):
                return END
            raise
        r = Rec(h.var, body)
        if is_guarded(r):
            return r
        if is_closed(h):
            return END
        raise _fail("project-rec", path, f"projection of rec {h.var} is unguarded on an open type")
    if isinstance(h, Par):
        if not (e & parts(h.right)):
            return _proj(h.left, e, path + (0,))
        if not (e & parts(h.left)):
            return _proj(h.right, e, path + (1,))
        raise _fail("project-par", path, "both parallel sides own projected roles")
    # interactions
    if isinstance(h, Msg):
        keep_src, keep_dst = h.src in e, h.dst in e
    elif isinstance(h, Send):
        keep_src, keep_dst = h.src in e, False
    else:
        keep_src, keep_dst = False, h.dst in e
    if keep_src or keep_dst:
        branches = tuple(
            Branch(b.label, _proj(b.continuation, e, path + (i,)), b.payload)
            for i, b in enumerate(h.branches)
        )
        if keep_src and keep_dst:
            return Msg(h.src, h.dst, branches)
        if keep_src:
            return Send(h.src, h.dst, branches)
        return Recv(h.src, h.dst, branches)
    pieces = [_proj(b.continuation, e, path + (i,)) for i, b in enumerate(h.branches)]
    try:
        return merge_proj_all(pieces)
    except Undefined as ex:
        raise _fail(
            "project-merge", path, f"branch projections do not merge: {ex.diagnostic.message}"
        ) from ex


def project_role(h: HybridType, role: str) -> HybridType:
    """Endpoint view: projection onto a single role."""
    return project(h, frozenset((role,)))
