"""Hybrid multiparty session types: checking, projection, localisation
and protocol composition.

The kernel module defines the type syntax and well-formedness rules.
projection and localiser give the two views used throughout: what a set
of roles sees, and what a mixed type looks like with carried
interactions erased. compose checks component compatibility and builds
composed global protocols back from their pieces. surface holds the
textual format, testkit the generators for property testing, cli the
command line front end.
"""

from .compose import (
    Component,
    CompositionResult,
    CompositionSpec,
    build_back,
    build_back_one,
    check_compat,
    compose_spec,
    unmerge_l,
    unmerge_lp,
    unmerge_p,
    unmerge_pl,
)
from .kernel import (
    BOOL,
    BaseSort,
    Branch,
    Diagnostic,
    END,
    End,
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
    Undefined,
    Var,
    check_wellformed,
    depth,
    eparts,
    equal,
    free_vars,
    is_closed,
    is_global,
    is_guarded,
    is_local,
    parts,
)
from .localiser import localise, merge_loc, merge_loc_all
from .projection import merge_proj, merge_proj_all, project, project_role
from .surface import (
    ParseError,
    SourceSpan,
    load_manifest,
    parse_manifest,
    parse_type,
    print_type,
)
from .testkit import GenParams, enumerate_small, gen_compatible, gen_global

__version__ = "0.1.0"

__all__ = [
    "BOOL",
    "BaseSort",
    "Branch",
    "Component",
    "CompositionResult",
    "CompositionSpec",
    "Diagnostic",
    "END",
    "End",
    "GenParams",
    "HybridType",
    "INT",
    "Msg",
    "NAT",
    "Par",
    "ParseError",
    "ProductSort",
    "Rec",
    "Recv",
    "Send",
    "Sort",
    "SourceSpan",
    "SumSort",
    "UNIT",
    "Undefined",
    "Var",
    "build_back",
    "build_back_one",
    "check_compat",
    "check_wellformed",
    "compose_spec",
    "depth",
    "enumerate_small",
    "eparts",
    "equal",
    "free_vars",
    "gen_compatible",
    "gen_global",
    "is_closed",
    "is_global",
    "is_guarded",
    "is_local",
    "load_manifest",
    "localise",
    "merge_loc",
    "merge_loc_all",
    "merge_proj",
    "merge_proj_all",
    "parse_manifest",
    "parse_type",
    "parts",
    "print_type",
    "project",
    "project_role",
    "unmerge_l",
    "unmerge_lp",
    "unmerge_p",
    "unmerge_pl",
]
