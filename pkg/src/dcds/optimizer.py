"""Logical optimizer: four semantics-preserving shrinking passes.

1. prune functions of composed types that no entry point can reach;
2. drop attributes no surviving function reads or writes;
3. fold read-only primitive attributes into constants;
4. drop write-only attributes together with the statements writing them.

:func:`optimize` reruns the sequence until a full round changes nothing,
recomputing read/write sets before every pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .analysis import RWSetTable, analyze, with_const_flags
from .errors import SpecTypeError
from .ir import (
    ATTR_WRITES, Assign, Conditional, Constant, Create, DataStructureSpec,
    Delete, FunctionDecl, MethodCall, Nop, PrimitiveAttr, Read,
    call_target_spec, map_body, transform_tree, walk,
)


@dataclass
class PassReport:
    name: str
    removed_functions: list = field(default_factory=list)
    removed_attributes: list = field(default_factory=list)
    folded_attributes: list = field(default_factory=list)
    iterations: int = 1

    @property
    def changed(self) -> bool:
        return bool(self.removed_functions or self.removed_attributes or self.folded_attributes)

    def __str__(self):
        fns = ", ".join(self.removed_functions)
        attrs = ", ".join(self.removed_attributes + [n for n, _ in self.folded_attributes])
        return f"pass={self.name} removed_fns=[{fns}] removed_attrs=[{attrs}]"


def _require_serial(spec):
    if spec.cc_injected:
        raise SpecTypeError("the optimizer works on serial specs only")


def _finish(spec: DataStructureSpec) -> DataStructureSpec:
    return with_const_flags(spec)


# -- pass 1 ------------------------------------------------------------------


def _reachable(spec: DataStructureSpec) -> set:
    specs = spec.all_specs()
    # every top-level function is an entry point or reachable from one
    work = [(spec.name, f) for f in spec.functions]
    seen = set(work)
    while work:
        sname, fname = work.pop()
        s = specs[sname]
        f = s.functions[fname]
        for _, st in walk(f.body):
            if isinstance(st, MethodCall):
                key = (call_target_spec(s, f, st), st.function)
                if key not in seen:
                    seen.add(key)
                    work.append(key)
    return seen


def prune_unused_functions(spec: DataStructureSpec, rw: RWSetTable | None = None, report=None):
    """Delete functions of composed types unreachable from the top level."""
    _require_serial(spec)
    keep = _reachable(spec)
    removed = []

    def prune(s):
        if s.name == spec.name:
            return s
        fns = {}
        for n, f in s.functions.items():
            if (s.name, n) in keep:
                fns[n] = f
            else:
                removed.append(f"{s.name}.{n}")
        if len(fns) == len(s.functions):
            return s
        return replace(s, functions=fns, exposed=s.exposed & frozenset(fns))

    out = transform_tree(spec, prune)
    if report is not None:
        report.removed_functions.extend(sorted(set(removed)))
    return _finish(out) if removed else out


# -- pass 2 ------------------------------------------------------------------


def _used(rw: RWSetTable) -> tuple[set, set]:
    reads, writes = set(), set()
    for k in rw.reads:
        reads |= rw.reads[k]
        writes |= rw.writes[k]
    return reads, writes


def remove_unused_attributes(spec: DataStructureSpec, rw: RWSetTable | None = None, report=None):
    """Delete attributes that no function reads or writes."""
    _require_serial(spec)
    rw = rw or analyze(spec)
    reads, writes = _used(rw)
    removed = []

    def strip(s):
        keep = tuple(a for a in s.attributes if f"{s.name}.{a.name}" in reads | writes)
        if len(keep) == len(s.attributes):
            return s
        removed.extend(f"{s.name}.{a.name}" for a in s.attributes if a not in keep)
        return replace(s, attributes=keep)

    out = transform_tree(spec, strip)
    if report is not None:
        report.removed_attributes.extend(sorted(set(removed)))
    return out


# -- pass 3 ------------------------------------------------------------------


def fold_readonly_attributes(spec: DataStructureSpec, rw: RWSetTable | None = None, report=None):
    """Replace reads of never-written primitive attributes by their default."""
    _require_serial(spec)
    rw = rw or analyze(spec)
    reads, writes = _used(rw)
    folded = []

    def fold(s):
        consts = {a.name: a for a in s.attributes
                  if isinstance(a, PrimitiveAttr)
                  and f"{s.name}.{a.name}" in reads and f"{s.name}.{a.name}" not in writes}
        if not consts:
            return s

        def rewrite(st):
            if isinstance(st, Read) and st.attr in consts:
                a = consts[st.attr]
                return [Assign(st.dst, Constant(a.default, a.type))]
            return [st]

        fns = {n: replace(f, body=map_body(f.body, rewrite)) for n, f in s.functions.items()}
        folded.extend((f"{s.name}.{n}", a.default) for n, a in consts.items())
        return replace(s, functions=fns, attributes=tuple(a for a in s.attributes if a.name not in consts))

    out = transform_tree(spec, fold)
    if report is not None:
        report.folded_attributes.extend(sorted(set(folded)))
    return _finish(out) if folded else out


# -- pass 4 ------------------------------------------------------------------


def _is_noop(f: FunctionDecl) -> bool:
    """Void, no out-params and no statement with an effect."""
    if f.return_type.tag != "void" or any(p.by_ptr for p in f.params):
        return False
    for _, st in walk(f.body):
        if isinstance(st, ATTR_WRITES + (MethodCall, Create, Delete)):
            return False
    return True


def _repair_branches(body: tuple) -> tuple:
    def fix(st):
        if isinstance(st, Conditional) and not st.then:
            return [replace(st, then=(Nop(),))]
        return [st]
    return map_body(body, fix)


def remove_writeonly_attributes(spec: DataStructureSpec, rw: RWSetTable | None = None, report=None):
    """Delete attributes that are written but never read, with their writes.

    Calls whose callee became a no-op through this removal are dropped as
    part of the same write; a then-branch emptied by it gets a Nop.
    """
    _require_serial(spec)
    rw = rw or analyze(spec)
    reads, writes = _used(rw)
    wo = writes - reads
    if not wo:
        return spec
    removed = sorted(wo)
    changed_fns = set()

    def strip(s):
        names = {a.name for a in s.attributes if f"{s.name}.{a.name}" in wo}
        if not names:
            return s
        fns = {}
        for n, f in s.functions.items():
            body = map_body(f.body, lambda st: [] if isinstance(st, ATTR_WRITES) and st.attr in names else [st])
            if body != f.body:
                changed_fns.add((s.name, n))
                f = replace(f, body=body)
            fns[n] = f
        return replace(s, functions=fns, attributes=tuple(a for a in s.attributes if a.name not in names))

    out = transform_tree(spec, strip)

    # drop calls to functions that this pass turned into no-ops, to a fixed point
    while True:
        specs = out.all_specs()
        noops = {k for k in changed_fns if _is_noop(specs[k[0]].functions[k[1]])}
        if not noops:
            break
        newly = set()

        def drop_calls(s):
            fns = {}
            for n, f in s.functions.items():
                def keep(st, s=s, f=f):
                    if isinstance(st, MethodCall) and (call_target_spec(s, f, st), st.function) in noops \
                            and st.result is None:
                        return []
                    return [st]
                body = map_body(f.body, keep)
                if body != f.body:
                    newly.add((s.name, n))
                    f = replace(f, body=body)
                fns[n] = f
            return replace(s, functions=fns)

        out = transform_tree(out, drop_calls)
        if not newly:
            break
        changed_fns = newly

    out = transform_tree(out, lambda s: replace(
        s, functions={n: replace(f, body=_repair_branches(f.body)) for n, f in s.functions.items()}))
    if report is not None:
        report.removed_attributes.extend(removed)
    return _finish(out)


# -- driver ------------------------------------------------------------------

PASSES = (
    ("prune_unused_functions", prune_unused_functions),
    ("remove_unused_attributes", remove_unused_attributes),
    ("fold_readonly_attributes", fold_readonly_attributes),
    ("remove_writeonly_attributes", remove_writeonly_attributes),
)


def optimize(spec: DataStructureSpec, max_rounds: int = 100) -> tuple[DataStructureSpec, list]:
    """Run the passes in order, round after round, until nothing changes."""
    _require_serial(spec)
    reports = []
    for round_no in range(1, max_rounds + 1):
        before = spec
        for name, fn in PASSES:
            rep = PassReport(name, iterations=round_no)
            spec = fn(spec, analyze(spec), report=rep)
            reports.append(rep)
        if spec == before:
            break
    return spec, reports
