"""Syntax and structural checks for hybrid protocol types.

A hybrid type describes one slice of a multiparty protocol. A Msg
interaction keeps both endpoints inside the slice. Send keeps only the
sender internal and leaves the receiver to the environment; Recv is the
mirror image. End, recursion and parallel composition are the usual
glue. A type with no Send/Recv is a global protocol; a type whose
internal roles collapse to at most one and which carries no Msg is a
local (endpoint) protocol. Everything in between is a component slice.

Branches are kept label-sorted at construction, so two types are equal
exactly when their canonical forms coincide and ``equal`` is plain
structural equality. Constructors enforce the hard syntactic
invariants (distinct labels, no self-messaging, non-empty branch sets)
by raising ValueError; ``check_wellformed`` reports the contextual
rules (guardedness, role discipline, parallel scoping) as diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import TypeAlias, Union

__all__ = [
    "BaseSort",
    "SumSort",
    "ProductSort",
    "Sort",
    "UNIT",
    "NAT",
    "INT",
    "BOOL",
    "Role",
    "Label",
    "RoleSet",
    "End",
    "Var",
    "Rec",
    "Par",
    "Branch",
    "Msg",
    "Send",
    "Recv",
    "HybridType",
    "END",
    "Diagnostic",
    "Undefined",
    "parts",
    "eparts",
    "free_vars",
    "is_closed",
    "is_guarded",
    "is_global",
    "is_local",
    "depth",
    "equal",
    "check_wellformed",
]

Role: TypeAlias = str
Label: TypeAlias = str
RoleSet: TypeAlias = frozenset[str]

_BASE_SORTS = ("unit", "nat", "int", "bool")


@dataclass(frozen=True)
class BaseSort:
    """One of the builtin payload sorts: unit, nat, int, bool."""

    name: str

    def __post_init__(self) -> None:
        if self.name not in _BASE_SORTS:
            raise ValueError(f"unknown base sort {self.name!r}")


@dataclass(frozen=True)
class SumSort:
    left: Sort
    right: Sort


@dataclass(frozen=True)
class ProductSort:
    left: Sort
    right: Sort


Sort: TypeAlias = Union[BaseSort, SumSort, ProductSort]

UNIT = BaseSort("unit")
NAT = BaseSort("nat")
INT = BaseSort("int")
BOOL = BaseSort("bool")


@dataclass(frozen=True)
class End:
    """Terminated protocol."""

    def __hash__(self) -> int:
        return hash("End")


@dataclass(frozen=True)
class Var:
    """Recursion variable reference."""

    name: str

    def __post_init__(self) -> None:
        if not self.name or not (self.name[0].isupper()):
            raise ValueError(f"recursion variable must start uppercase: {self.name!r}")
        object.__setattr__(self, "_hash", hash(("Var", self.name)))

    def __hash__(self) -> int:
        return self._hash  # type: ignore[attr-defined]


@dataclass(frozen=True)
class Rec:
    """Recursive protocol rec var. body."""

    var: str
    body: HybridType

    def __post_init__(self) -> None:
        if not self.var or not self.var[0].isupper():
            raise ValueError(f"recursion variable must start uppercase: {self.var!r}")
        object.__setattr__(self, "_hash", hash(("Rec", self.var, self.body)))

    def __hash__(self) -> int:
        return self._hash  # type: ignore[attr-defined]


@dataclass(frozen=True)
class Par:
    """Parallel composition of two independent protocol fragments."""

    left: HybridType
    right: HybridType

    def __post_init__(self) -> None:
        object.__setattr__(self, "_hash", hash(("Par", self.left, self.right)))

    def __hash__(self) -> int:
        return self._hash  # type: ignore[attr-defined]


@dataclass(frozen=True)
class Branch:
    """One labelled alternative: label(payload). continuation."""

    label: str
    continuation: HybridType
    payload: Sort = UNIT

    def __post_init__(self) -> None:
        if not self.label or not self.label[0].islower():
            raise ValueError(f"label must start lowercase: {self.label!r}")
        object.__setattr__(
            self, "_hash", hash(("Branch", self.label, self.continuation, self.payload))
        )

    def __hash__(self) -> int:
        return self._hash  # type: ignore[attr-defined]


def _checked_branches(
    kind: str, src: str, dst: str, branches: tuple[Branch, ...]
) -> tuple[Branch, ...]:
    # shared constructor invariants for the three interaction nodes
    if not src or not src[0].islower():
        raise ValueError(f"role must start lowercase: {src!r}")
    if not dst or not dst[0].islower():
        raise ValueError(f"role must start lowercase: {dst!r}")
    if src == dst:
        raise ValueError(f"{kind} from {src!r} to itself")
    if not branches:
        raise ValueError(f"{kind} needs at least one branch")
    labels = [b.label for b in branches]
    if len(set(labels)) != len(labels):
        dup = sorted(l for l in labels if labels.count(l) > 1)[0]
        raise ValueError(f"duplicate label {dup!r} in {kind}")
    return tuple(sorted(branches, key=lambda b: b.label))


@dataclass(frozen=True)
class Msg:
    """Interaction with both endpoints internal to the slice."""

    src: Role
    dst: Role
    branches: tuple[Branch, ...]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "branches", _checked_branches("Msg", self.src, self.dst, self.branches)
        )
        object.__setattr__(self, "_hash", hash(("Msg", self.src, self.dst, self.branches)))

    def __hash__(self) -> int:
        return self._hash  # type: ignore[attr-defined]


@dataclass(frozen=True)
class Send:
    """Output interaction: the sender is internal, the receiver is not."""

    src: Role
    dst: Role
    branches: tuple[Branch, ...]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "branches", _checked_branches("Send", self.src, self.dst, self.branches)
        )
        object.__setattr__(self, "_hash", hash(("Send", self.src, self.dst, self.branches)))

    def __hash__(self) -> int:
        return self._hash  # type: ignore[attr-defined]


@dataclass(frozen=True)
class Recv:
    """Input interaction: the receiver is internal, the sender is not."""

    src: Role
    dst: Role
    branches: tuple[Branch, ...]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "branches", _checked_branches("Recv", self.src, self.dst, self.branches)
        )
        object.__setattr__(self, "_hash", hash(("Recv", self.src, self.dst, self.branches)))

    def __hash__(self) -> int:
        return self._hash  # type: ignore[attr-defined]


HybridType: TypeAlias = Union[End, Var, Rec, Par, Msg, Send, Recv]

END = End()


@dataclass(frozen=True)
class Diagnostic:
    """A single check failure, addressed by a path of child indices.

    The path walks the tree from the root: for Rec the body is child 0,
    for Par the sides are 0 and 1, for interactions child i is the
    continuation of the i-th branch in canonical (label-sorted) order.
    """

    rule: str
    path: tuple[int, ...]
    message: str

    def __str__(self) -> str:
        where = "/".join(str(i) for i in self.path) if self.path else "root"
        return f"{self.rule} at {where}: {self.message}"


class Undefined(Exception):
    """Raised where a partial operation has no result; carries the reason."""

    def __init__(self, diagnostic: Diagnostic):
        super().__init__(str(diagnostic))
        self.diagnostic = diagnostic


@lru_cache(maxsize=None)
def parts(h: HybridType) -> RoleSet:
    """Internal roles of a slice.

    Msg contributes both endpoints, Send only the sender, Recv only the
    receiver; unions are taken across all continuations.
    """
    if isinstance(h, (End, Var)):
        return frozenset()
    if isinstance(h, Rec):
        return parts(h.body)
    if isinstance(h, Par):
        return parts(h.left) | parts(h.right)
    acc: set[str] = set()
    if isinstance(h, Msg):
        acc.update((h.src, h.dst))
    elif isinstance(h, Send):
        acc.add(h.src)
    else:
        acc.add(h.dst)
    for b in h.branches:
        acc.update(parts(b.continuation))
    return frozenset(acc)


@lru_cache(maxsize=None)
def eparts(h: HybridType) -> RoleSet:
    """Environment endpoints of a slice: the roles the slice talks to
    but does not contain. Send contributes its receiver, Recv its
    sender, Msg nothing."""
    if isinstance(h, (End, Var)):
        return frozenset()
    if isinstance(h, Rec):
        return eparts(h.body)
    if isinstance(h, Par):
        return eparts(h.left) | eparts(h.right)
    acc: set[str] = set()
    if isinstance(h, Send):
        acc.add(h.dst)
    elif isinstance(h, Recv):
        acc.add(h.src)
    for b in h.branches:
        acc.update(eparts(b.continuation))
    return frozenset(acc)


@lru_cache(maxsize=None)
def free_vars(h: HybridType) -> frozenset[str]:
    if isinstance(h, End):
        return frozenset()
    if isinstance(h, Var):
        return frozenset((h.name,))
    if isinstance(h, Rec):
        return free_vars(h.body) - {h.var}
    if isinstance(h, Par):
        return free_vars(h.left) | free_vars(h.right)
    out: frozenset[str] = frozenset()
    for b in h.branches:
        out |= free_vars(b.continuation)
    return out


def is_closed(h: HybridType) -> bool:
    return not free_vars(h)


def _pure_rec(var: str, h: HybridType) -> bool:
    # h is the bare variable, possibly under a chain of other binders
    while isinstance(h, Rec):
        h = h.body
    return isinstance(h, Var) and h.name == var


def is_guarded(h: HybridType) -> bool:
    """True when no recursion unfolds to itself without an interaction
    in between. rec X. rec Y. X is rejected; rec X. p->q:l. X is fine,
    and so is a rec whose body is some other variable."""
    if isinstance(h, (End, Var)):
        return True
    if isinstance(h, Rec):
        return not _pure_rec(h.var, h.body) and is_guarded(h.body)
    if isinstance(h, Par):
        return is_guarded(h.left) and is_guarded(h.right)
    return all(is_guarded(b.continuation) for b in h.branches)


def is_global(h: HybridType) -> bool:
    """No Send or Recv anywhere: the type is a self-contained protocol."""
    if isinstance(h, (End, Var)):
        return True
    if isinstance(h, Rec):
        return is_global(h.body)
    if isinstance(h, Par):
        return is_global(h.left) and is_global(h.right)
    if isinstance(h, (Send, Recv)):
        return False
    return all(is_global(b.continuation) for b in h.branches)


def _has_msg(h: HybridType) -> bool:
    if isinstance(h, (End, Var)):
        return False
    if isinstance(h, Rec):
        return _has_msg(h.body)
    if isinstance(h, Par):
        return _has_msg(h.left) or _has_msg(h.right)
    if isinstance(h, Msg):
        return True
    return any(_has_msg(b.continuation) for b in h.branches)


def is_local(h: HybridType) -> bool:
    """At most one internal role and no Msg: an endpoint protocol."""
    return len(parts(h)) <= 1 and not _has_msg(h)


@lru_cache(maxsize=None)
def depth(h: HybridType) -> int:
    if isinstance(h, (End, Var)):
        return 1
    if isinstance(h, Rec):
        return 1 + depth(h.body)
    if isinstance(h, Par):
        return 1 + max(depth(h.left), depth(h.right))
    return 1 + max(depth(b.continuation) for b in h.branches)


def equal(a: HybridType, b: HybridType) -> bool:
    """Structural equality on canonical forms. Recursion variables
    compare by name; branches are already label-sorted."""
    return a == b


def _brief(h: HybridType) -> str:
    # one-glance summary for diagnostics, not a printer
    if isinstance(h, End):
        return "end"
    if isinstance(h, Var):
        return h.name
    if isinstance(h, Rec):
        return f"rec {h.var}"
    if isinstance(h, Par):
        return "(.|.)"
    op = {"Msg": "->", "Send": "!", "Recv": "?"}[type(h).__name__]
    labels = ",".join(b.label for b in h.branches)
    return f"{h.src}{op}{h.dst}{{{labels}}}"


def check_wellformed(h: HybridType) -> list[Diagnostic]:
    """All well-formedness violations, deterministically ordered.

    Checks: guarded recursion, no rebinding of a recursion variable in
    scope, internal and environment roles globally disjoint, and every
    parallel composition closed with role-disjoint sides. Constructor
    invariants (distinct labels, src != dst) cannot be violated on a
    value of this AST and are not re-checked.
    """
    out: list[Diagnostic] = []
    overlap = parts(h) & eparts(h)
    if overlap:
        roles = ", ".join(sorted(overlap))
        out.append(
            Diagnostic(
                "role-overlap",
                (),
                f"roles both internal and environment-facing: {roles}",
            )
        )
    _walk_wf(h, (), frozenset(), out)
    return out


def _walk_wf(
    h: HybridType, path: tuple[int, ...], bound: frozenset[str], out: list[Diagnostic]
) -> None:
    if isinstance(h, (End, Var)):
        return
    if isinstance(h, Rec):
        if h.var in bound:
            out.append(
                Diagnostic("rec-shadowing", path, f"rebinds {h.var} already in scope")
            )
        if _pure_rec(h.var, h.body):
            out.append(
                Diagnostic(
                    "unguarded-recursion",
                    path,
                    f"rec {h.var} reaches itself with no interaction",
                )
            )
        _walk_wf(h.body, path + (0,), bound | {h.var}, out)
        return
    if isinstance(h, Par):
        for i, side in enumerate((h.left, h.right)):
            fv = free_vars(side)
            if fv:
                names = ", ".join(sorted(fv))
                out.append(
                    Diagnostic(
                        "par-open", path + (i,), f"parallel side has free variables: {names}"
                    )
                )
        shared = (parts(h.left) | eparts(h.left)) & (parts(h.right) | eparts(h.right))
        if shared:
            roles = ", ".join(sorted(shared))
            out.append(Diagnostic("par-overlap", path, f"sides share roles: {roles}"))
        _walk_wf(h.left, path + (0,), bound, out)
        _walk_wf(h.right, path + (1,), bound, out)
        return
    for i, b in enumerate(h.branches):
        _walk_wf(b.continuation, path + (i,), bound, out)
