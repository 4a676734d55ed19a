"""Command line front end.

Exit codes: 0 success, 1 a check failed (well-formedness, projection,
compatibility, composition), 2 usage or syntax errors. Results go to
stdout, diagnostics to stderr, so output files stay clean under
redirection.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .compose import check_compat, compose_spec
from .kernel import Undefined, check_wellformed
from .localiser import localise
from .projection import project
from .surface import ParseError, load_manifest, parse_type, print_type


def _read_type(path: str):
    text = Path(path).read_text(encoding="utf-8")
    return parse_type(text)


def _check_wf(h, source: str) -> None:
    diags = check_wellformed(h)
    if diags:
        for d in diags:
            print(f"{source}: {d}", file=sys.stderr)
        raise SystemExit(1)


def _cmd_check(args) -> int:
    h = _read_type(args.file)
    _check_wf(h, args.file)
    print("ok")
    return 0


def _cmd_project(args) -> int:
    h = _read_type(args.file)
    _check_wf(h, args.file)
    roles = frozenset(r for r in args.roles.split(",") if r)
    if not roles:
        print("error: --roles needs at least one role", file=sys.stderr)
        return 2
    print(print_type(project(h, roles)))
    return 0


def _cmd_localise(args) -> int:
    h = _read_type(args.file)
    _check_wf(h, args.file)
    print(print_type(localise(h)))
    return 0


def _cmd_compat(args) -> int:
    spec = load_manifest(args.manifest)
    failed = False
    for idx, comp in enumerate(spec.components):
        for d in check_compat(spec.compat, comp):
            roles = ",".join(sorted(comp.roles))
            print(f"component {idx} ({roles}): {d}", file=sys.stderr)
            failed = True
    if failed:
        return 1
    print("ok")
    return 0


def _cmd_compose(args) -> int:
    spec = load_manifest(args.manifest)
    result = compose_spec(spec, verify=args.verify)
    if result.global_type is None:
        for d in result.compat_report:
            print(str(d), file=sys.stderr)
        return 1
    text = print_type(result.global_type) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_locals(args) -> int:
    spec = load_manifest(args.manifest)
    result = compose_spec(spec)
    if result.global_type is None:
        for d in result.compat_report:
            print(str(d), file=sys.stderr)
        return 1
    roles = sorted(result.locals)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for role in roles:
            path = out / f"{role}.hmpst"
            path.write_text(print_type(result.locals[role]) + "\n", encoding="utf-8")
    else:
        blocks = [
            f"# role: {role}\n{print_type(result.locals[role])}\n" for role in roles
        ]
        sys.stdout.write("\n".join(blocks))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hmpst",
        description="Check, project, localise and compose hybrid protocol types.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="verify a type file is well formed")
    p.add_argument("file")
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("project", help="project a type onto a set of roles")
    p.add_argument("file")
    p.add_argument("--roles", required=True, help="comma separated role names")
    p.set_defaults(func=_cmd_project)

    p = sub.add_parser("localise", help="erase carried interactions from a type")
    p.add_argument("file")
    p.set_defaults(func=_cmd_localise)

    p = sub.add_parser("compat", help="check every manifest component for compatibility")
    p.add_argument("manifest")
    p.set_defaults(func=_cmd_compat)

    p = sub.add_parser("compose", help="build the composed global protocol")
    p.add_argument("manifest")
    p.add_argument("--out", help="write the result here instead of stdout")
    p.add_argument(
        "--verify",
        action="store_true",
        help="recheck every internal unmerge step while composing",
    )
    p.set_defaults(func=_cmd_compose)

    p = sub.add_parser("locals", help="emit the per-role local types of a composition")
    p.add_argument("manifest")
    p.add_argument("--out-dir", help="write one <role>.hmpst file per role here")
    p.set_defaults(func=_cmd_locals)

    return parser


def run(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Undefined as exc:
        print(str(exc.diagnostic), file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
