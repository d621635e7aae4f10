"""Strict two-phase locking injection with NO_WAIT semantics.

Locks are taken per record. Within an exposed function (one transaction
scope) the injector tracks which records are already held, in which mode,
on every path; it emits an acquire before the first access, an upgrade when
a shared lock must become exclusive, and one ``ReleaseAll`` in front of
every ``Return``.

Functions of composed types run inside the caller's transaction. Their
``self`` record is locked at the call site (shared for a const callee,
exclusive otherwise, nothing for a nascent target), so their bodies only
lock the other records they reach and never release.
"""

from __future__ import annotations

from dataclasses import replace

from .analysis import RWSetTable, analyze
from .errors import AlreadyInjected, DCDSError
from .ir import (
    AcquireExclusive, AcquireShared, ArrayRead, ArrayUpdate,
    Conditional, DataStructureSpec, Delete, ElementTarget, EmbeddedTarget,
    EntryTarget, FunctionDecl, LockStmt, MapContains, MapErase, MapInsert,
    MapRead, MapUpdate, MethodCall, Read, ReleaseAll, Return, SelfTarget,
    Update, Upgrade, VarTarget, assigned_var, call_target_spec, map_body,
    target_vars, transform_tree,
)

S, X = 1, 2
SELF = SelfTarget()


def _needs(spec: DataStructureSpec, fn: FunctionDecl, st, path, rw: RWSetTable, specs) -> list:
    """(target, mode) pairs the statement needs held before it runs."""
    if isinstance(st, (Read, Update)):
        return [(SELF, S if isinstance(st, Read) else X)]
    if isinstance(st, ArrayRead):
        a = spec.attribute(st.attr)
        if a.composed:
            return []  # element address only: base pointer + index, no data access
        return [(ElementTarget(st.attr, st.index), S)]
    if isinstance(st, ArrayUpdate):
        return [(ElementTarget(st.attr, st.index), X)]
    if isinstance(st, MapRead):
        return [(EntryTarget(st.attr, st.key), S)]
    if isinstance(st, MapUpdate):
        return [(EntryTarget(st.attr, st.key), X)]
    if isinstance(st, MapContains):
        return [(SELF, S)]
    if isinstance(st, (MapInsert, MapErase)):
        # structural change: owner exclusive; an existing entry record too
        return [(SELF, X), (EntryTarget(st.attr, st.key), X)]
    if isinstance(st, Delete):
        if rw.is_nascent(spec.name, fn.name, path):
            return []
        return [(VarTarget(st.var), X)]
    if isinstance(st, MethodCall):
        if not st.embedded and rw.is_nascent(spec.name, fn.name, path):
            return []
        callee = call_target_spec(spec, fn, st)
        mode = S if rw.is_const(callee, st.function) else X
        target = EmbeddedTarget(st.target) if st.embedded else VarTarget(st.target)
        return [(target, mode)]
    return []


def _clobbered(st, fn: FunctionDecl, specs, spec) -> set:
    """Variables a statement overwrites (including callee out-params)."""
    out = set()
    v = assigned_var(st)
    if v:
        out.add(v)
    if isinstance(st, MethodCall):
        callee = specs[call_target_spec(spec, fn, st)].functions[st.function]
        out |= {a for p, a in zip(callee.params, st.args) if p.by_ptr}
    return out


def _inject_body(spec, fn, rw, specs, scope: bool):
    def invalidate(held, names):
        if not names:
            return held
        return {t: m for t, m in held.items() if not (target_vars(t) & names)}

    def visit(body, held, prefix):
        out = []
        for i, st in enumerate(body):
            path = prefix + (i,)
            if isinstance(st, Conditional):
                then, h1 = visit(st.then, dict(held), path + (0,))
                orelse, h2 = visit(st.orelse, dict(held), path + (1,))
                out.append(replace(st, then=tuple(then), orelse=tuple(orelse)))
                if h1 is None and h2 is None:
                    return out, None
                if h1 is None:
                    held = h2
                elif h2 is None:
                    held = h1
                else:
                    held = {t: min(m, h2[t]) for t, m in h1.items() if t in h2}
                continue
            for target, mode in _needs(spec, fn, st, path, rw, specs):
                have = held.get(target, 0)
                if have >= mode:
                    continue
                if have == S:
                    out.append(Upgrade(target))
                elif mode == S:
                    out.append(AcquireShared(target))
                else:
                    out.append(AcquireExclusive(target))
                held[target] = mode
            if isinstance(st, Return):
                if scope:
                    out.append(ReleaseAll())
                out.append(st)
                return out, None
            out.append(st)
            held = invalidate(held, _clobbered(st, fn, specs, spec))
            if isinstance(st, Delete):
                held = invalidate(held, {st.var})
        return out, held

    if scope:
        start = {}
    else:
        start = {SELF: S if rw.is_const(spec.name, fn.name) else X}
    body, _ = visit(fn.body, start, ())
    return tuple(body)


def inject_cc(spec: DataStructureSpec, rw: RWSetTable | None = None) -> DataStructureSpec:
    """Return the concurrent version of an (optimized) serial spec."""
    if spec.cc_injected:
        raise AlreadyInjected(f"{spec.name} already carries lock statements")
    rw = rw or analyze(spec)
    specs = spec.all_specs()
    for s in specs.values():
        for f in s.functions.values():
            for st in _iter_calls(f.body):
                if call_target_spec(s, f, st) == spec.name and st.function in spec.exposed:
                    raise DCDSError(f"{s.name}.{f.name} calls exposed function {spec.name}.{st.function}")

    def inject(s):
        fns = {}
        for n, f in s.functions.items():
            scope = s.name == spec.name and n in spec.exposed
            fns[n] = replace(f, body=_inject_body(s, f, rw, specs, scope))
        return replace(s, functions=fns, cc_injected=True)

    return transform_tree(spec, inject)


def _iter_calls(body):
    for st in body:
        if isinstance(st, MethodCall):
            yield st
        elif isinstance(st, Conditional):
            yield from _iter_calls(st.then)
            yield from _iter_calls(st.orelse)


def strip_cc(spec: DataStructureSpec) -> DataStructureSpec:
    """Erase every lock statement; inverse of :func:`inject_cc`."""
    def strip(s):
        fns = {n: replace(f, body=map_body(f.body, lambda st: [] if isinstance(st, LockStmt) else [st]))
               for n, f in s.functions.items()}
        return replace(s, functions=fns, cc_injected=False)
    return transform_tree(spec, strip)


# ============================================================
# STATIC PROTOCOL CHECKS
#
# These enumerate paths explicitly rather than reusing the injector's
# merge-based dataflow, so they check it independently.
# ============================================================


def paths(body: tuple, prefix: tuple = ()):
    """Every execution path as a list of ``(path, stmt)``; branches expand."""
    def go(items, i, acc):
        if i == len(items):
            yield acc, False
            return
        p, st = items[i]
        if isinstance(st, Conditional):
            then = [(p + (0, j), s) for j, s in enumerate(st.then)]
            orelse = [(p + (1, j), s) for j, s in enumerate(st.orelse)]
            for branch in (then, orelse):
                for sub, ended in go(branch, 0, acc + [(p, st)]):
                    if ended:
                        yield sub, True
                    else:
                        yield from go(items, i + 1, sub)
            return
        acc = acc + [(p, st)]
        if isinstance(st, Return):
            yield acc, True
            return
        yield from go(items, i + 1, acc)

    items = [(prefix + (i,), s) for i, s in enumerate(body)]
    for acc, _ in go(items, 0, []):
        yield acc


def check_two_phase(spec: DataStructureSpec) -> list[str]:
    """No acquire or upgrade after a release on any path."""
    errors = []
    for s in spec.all_specs().values():
        for f in s.functions.values():
            scope = s.name == spec.name and f.name in spec.exposed
            for path in paths(f.body):
                released = False
                for p, st in path:
                    if isinstance(st, ReleaseAll):
                        if not scope:
                            errors.append(f"{s.name}.{f.name}: release inside a composed function")
                        released = True
                    elif isinstance(st, (AcquireShared, AcquireExclusive, Upgrade)) and released:
                        errors.append(f"{s.name}.{f.name}@{p}: lock after release")
    return errors


def check_strictness(spec: DataStructureSpec) -> list[str]:
    """Exactly one ReleaseAll per path of an exposed function, right before Return."""
    errors = []
    for name in spec.exposed:
        f = spec.functions[name]
        for path in paths(f.body):
            stmts = [st for _, st in path if not isinstance(st, Conditional)]
            n = sum(isinstance(st, ReleaseAll) for st in stmts)
            if n != 1 or len(stmts) < 2 or not isinstance(stmts[-2], ReleaseAll):
                errors.append(f"{spec.name}.{name}: path with {n} releases not adjacent to Return")
    return errors


def check_coverage(spec: DataStructureSpec, rw: RWSetTable | None = None) -> list[str]:
    """Every data access is preceded, on its path, by a lock of enough strength."""
    if rw is None:
        rw = analyze(strip_cc(spec))
    specs = spec.all_specs()
    errors = []
    for s in specs.values():
        for f in s.functions.values():
            scope = s.name == spec.name and f.name in spec.exposed
            for path in paths(f.body):
                held = {} if scope else {SELF: S if rw.is_const(s.name, f.name) else X}
                for p, st in path:
                    if isinstance(st, AcquireShared):
                        held[st.target] = max(held.get(st.target, 0), S)
                    elif isinstance(st, (AcquireExclusive, Upgrade)):
                        held[st.target] = X
                    elif isinstance(st, ReleaseAll):
                        held = {}
                    elif not isinstance(st, Conditional):
                        serial_path = _serial_path(f.body, p)
                        for target, mode in _needs(s, f, st, serial_path, rw, specs):
                            if held.get(target, 0) < mode:
                                errors.append(f"{s.name}.{f.name}@{p}: {type(st).__name__} needs {target}")
                        names = _clobbered(st, f, specs, s)
                        if isinstance(st, Delete):
                            names = names | {st.var}
                        held = {t: m for t, m in held.items() if not (target_vars(t) & names)}
    return errors


def _serial_path(body: tuple, path: tuple) -> tuple:
    """Map a statement path in an injected body to the same statement's path
    once lock statements are erased (nascency is keyed by serial paths)."""
    out = []
    items = body
    i = 0
    while i < len(path):
        idx = path[i]
        out.append(sum(1 for st in items[:idx] if not isinstance(st, LockStmt)))
        st = items[idx]
        if i + 1 < len(path):
            items = st.then if path[i + 1] == 0 else st.orelse
            out.append(path[i + 1])
            i += 2
        else:
            i += 1
    return tuple(out)


def check_all(spec: DataStructureSpec) -> list[str]:
    return check_two_phase(spec) + check_strictness(spec) + check_coverage(spec)
