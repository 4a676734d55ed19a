"""Localisation: the environment's view of a component slice.

localise(h) erases every Msg, keeping only the Send/Recv skeleton that
the rest of the system can observe. Where a Msg branches, the branch
localisations are combined with the localiser merge, which is dual to
the projection merge: output branchings may union their label sets,
inputs and internal interactions must match exactly.
"""

from __future__ import annotations

from typing import Sequence

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
    Send,
    Undefined,
    Var,
    _brief,
    is_closed,
    is_guarded,
)

__all__ = ["merge_loc", "merge_loc_all", "localise"]


def _fail(rule: str, path: tuple[int, ...], message: str) -> Undefined:
    return Undefined(Diagnostic(rule, path, message))


def merge_loc(a: HybridType, b: HybridType) -> HybridType:
    """Localiser merge: Send unions label sets, Msg and Recv need
    identical ones, Rec and Par merge componentwise."""
    return _merge(a, b, ())


def _merge(a: HybridType, b: HybridType, path: tuple[int, ...]) -> HybridType:
    if a == b:
        return a
    if isinstance(a, Rec) and isinstance(b, Rec) and a.var == b.var:
        return Rec(a.var, _merge(a.body, b.body, path + (0,)))
    if isinstance(a, Par) and isinstance(b, Par):
        return Par(_merge(a.left, b.left, path + (0,)), _merge(a.right, b.right, path + (1,)))
    if isinstance(a, Send) and isinstance(b, Send) and (a.src, a.dst) == (b.src, b.dst):
        da = {x.label: x for x in a.branches}
        db = {x.label: x for x in b.branches}
        out = []
        for i, lbl in enumerate(sorted(set(da) | set(db))):
            if lbl in da and lbl in db:
                x, y = da[lbl], db[lbl]
                if x.payload != y.payload:
                    raise _fail("merge-loc", path + (i,), f"payload mismatch at label {lbl!r}")
                out.append(
                    Branch(lbl, _merge(x.continuation, y.continuation, path + (i,)), x.payload)
                )
            else:
                out.append(da.get(lbl) or db[lbl])
        return Send(a.src, a.dst, tuple(out))
    if (
        isinstance(a, (Msg, Recv))
        and type(a) is type(b)
        and (a.src, a.dst) == (b.src, b.dst)
    ):
        da = {x.label: x for x in a.branches}
        db = {x.label: x for x in b.branches}
        if set(da) != set(db):
            raise _fail(
                "merge-loc", path, f"label sets differ between {_brief(a)} and {_brief(b)}"
            )
        out = []
        for i, lbl in enumerate(sorted(da)):
            x, y = da[lbl], db[lbl]
            if x.payload != y.payload:
                raise _fail("merge-loc", path + (i,), f"payload mismatch at label {lbl!r}")
            out.append(
                Branch(lbl, _merge(x.continuation, y.continuation, path + (i,)), x.payload)
            )
        return type(a)(a.src, a.dst, tuple(out))
    raise _fail("merge-loc", path, f"cannot merge {_brief(a)} with {_brief(b)}")


def merge_loc_all(items: Sequence[HybridType]) -> HybridType:
    if not items:
        raise ValueError("merge_loc_all needs at least one type")
    acc = items[0]
    for x in items[1:]:
        acc = _merge(acc, x, ())
    return acc


def localise(h: HybridType) -> HybridType:
    """Erase internal interactions, keeping the externally visible
    Send/Recv behaviour. Total on everything except Msg branchings
    whose branches remain observably different; a recursion whose body
    does not localise falls back to end when the rec subterm is closed.
    The result never contains a Msg node."""
    return _loc(h, ())


def _loc(h: HybridType, path: tuple[int, ...]) -> HybridType:
    if isinstance(h, (End, Var)):
        return h
    if isinstance(h, Rec):
        try:
            body = _loc(h.body, path + (0,))
        except Undefined:
            if is_closed(h):
                return END
            raise
        r = Rec(h.var, body)
        if is_guarded(r):
            return r
        if is_closed(h):
            return END
        raise _fail("localise-rec", path, f"localisation of rec {h.var} is unguarded on an open type")
    if isinstance(h, Par):
        return Par(_loc(h.left, path + (0,)), _loc(h.right, path + (1,)))
    if isinstance(h, (Send, Recv)):
        branches = tuple(
            Branch(b.label, _loc(b.continuation, path + (i,)), b.payload)
            for i, b in enumerate(h.branches)
        )
        return type(h)(h.src, h.dst, branches)
    # Msg disappears; its branches must agree for the environment
    pieces = [_loc(b.continuation, path + (i,)) for i, b in enumerate(h.branches)]
    try:
        return merge_loc_all(pieces)
    except Undefined as ex:
        raise _fail(
            "localise-merge", path, f"branch localisations do not merge: {ex.diagnostic.message}"
        ) from ex
