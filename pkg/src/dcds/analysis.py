"""Static analysis: transitive read/write sets, const deduction, nascency.

Attribute names are qualified by the spec that declares them
(``Node.next``), never by instance, because the analysis runs before any
instance exists.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .errors import UnknownSymbol
from .ir import (
    ArrayRead, ArrayUpdate, Assign, Conditional, Create,
    DataStructureSpec, Delete, FunctionDecl, MapContains, MapErase, MapInsert,
    MapRead, MapUpdate, MethodCall, Read, Return, Update, expr_vars,
    transform_tree,
)

FnKey = tuple  # (spec name, function name)


@dataclass
class RWSetTable:
    reads: dict = field(default_factory=dict)
    writes: dict = field(default_factory=dict)
    # Create/Delete reachable from the function (transitively)
    effects: dict = field(default_factory=dict)
    const: dict = field(default_factory=dict)
    # (spec, fn, path) -> bool, for MethodCall and Delete sites
    nascent: dict = field(default_factory=dict)

    def read_set(self, spec: str, fn: str) -> frozenset:
        return self.reads[(spec, fn)]

    def write_set(self, spec: str, fn: str) -> frozenset:
        return self.writes[(spec, fn)]

    def is_const(self, spec: str, fn: str) -> bool:
        return self.const[(spec, fn)]

    def is_nascent(self, spec: str, fn: str, path: tuple) -> bool:
        return self.nascent.get((spec, fn, path), False)

    def dump(self, spec: str | None = None) -> str:
        lines = []
        for key in self.reads:
            if spec is not None and key[0] != spec:
                continue
            s, f = key
            r = ", ".join(sorted(self.reads[key]))
            w = ", ".join(sorted(self.writes[key]))
            const = str(self.const.get(key, False)).lower()
            name = f if spec is not None else f"{s}.{f}"
            lines.append(f"fn {name} const={const} R={{{r}}} W={{{w}}}")
        return "\n".join(lines)


def _local_sets(spec: DataStructureSpec, fn: FunctionDecl, specs: dict):
    reads, writes, calls = set(), set(), []
    effects = False
    types = fn.var_types()

    def visit(body):
        nonlocal effects
        for s in body:
            if isinstance(s, (Read, ArrayRead, MapRead, MapContains)):
                reads.add(f"{spec.name}.{s.attr}")
            elif isinstance(s, (Update, ArrayUpdate, MapUpdate, MapInsert, MapErase)):
                writes.add(f"{spec.name}.{s.attr}")
            elif isinstance(s, (Create, Delete)):
                effects = True
            elif isinstance(s, Conditional):
                visit(s.then)
                visit(s.orelse)
            elif isinstance(s, MethodCall):
                if s.embedded:
                    a = spec.attribute(s.target)
                    if a is None:
                        raise UnknownSymbol(f"{spec.name}.{fn.name}: no attribute {s.target!r}")
                    # using the embedded instance is a use of the attribute
                    reads.add(f"{spec.name}.{s.target}")
                    target = a.spec
                else:
                    t = types.get(s.target)
                    if t is None or not t.is_ptr:
                        raise UnknownSymbol(f"{spec.name}.{fn.name}: no pointer variable {s.target!r}")
                    target = t.of
                callee = specs.get(target)
                if callee is None or s.function not in callee.functions:
                    raise UnknownSymbol(f"{spec.name}.{fn.name}: call to unknown {target}.{s.function}")
                calls.append((target, s.function))

    visit(fn.body)
    return reads, writes, effects, calls


def compute_rw_sets(spec: DataStructureSpec) -> RWSetTable:
    """Transitive read/write sets for every function in the tree.

    Iterates to a fixed point over the call graph, so recursion through
    pointer-linked records terminates (the attribute universe is finite).
    """
    specs = spec.all_specs()
    local = {}
    for s in specs.values():
        for f in s.functions.values():
            local[(s.name, f.name)] = _local_sets(s, f, specs)

    reads = {k: set(v[0]) for k, v in local.items()}
    writes = {k: set(v[1]) for k, v in local.items()}
    effects = {k: v[2] for k, v in local.items()}
    changed = True
    while changed:
        changed = False
        for k, (_, _, _, calls) in local.items():
            for callee in calls:
                if not reads[callee] <= reads[k]:
                    reads[k] |= reads[callee]
                    changed = True
                if not writes[callee] <= writes[k]:
                    writes[k] |= writes[callee]
                    changed = True
                if effects[callee] and not effects[k]:
                    effects[k] = True
                    changed = True
    return RWSetTable(
        reads={k: frozenset(v) for k, v in reads.items()},
        writes={k: frozenset(v) for k, v in writes.items()},
        effects=effects,
    )


def deduce_const(spec: DataStructureSpec, rw: RWSetTable) -> RWSetTable:
    """A function is const iff it transitively writes nothing and never
    creates or deletes a record."""
    const = {k: not rw.writes[k] and not rw.effects[k] for k in rw.reads}
    return replace(rw, const=const)


def compute_nascent(fn: FunctionDecl) -> dict:
    """Per-site nascency for MethodCall and Delete statements of one body.

    A variable is nascent at a site when, on every path reaching it, the
    variable was last assigned by a Create and has not since been stored
    anywhere: attribute writes, call arguments, assignments into other
    variables and returns all publish it. Returns ``{path: bool}``.
    """
    out: dict = {}
    by_ptr = {p.name for p in fn.params if p.by_ptr}

    def flow(body, state, prefix):
        # state: frozenset of nascent names, or None when unreachable
        for i, s in enumerate(body):
            if state is None:
                return None
            path = prefix + (i,)
            if isinstance(s, MethodCall):
                out[path] = (not s.embedded) and s.target in state
                state = state - set(s.args)
                if s.result:
                    state = state - {s.result}
            elif isinstance(s, Delete):
                out[path] = s.var in state
                state = state - {s.var}
            elif isinstance(s, Create):
                state = state | {s.dst}
                if s.dst in by_ptr:
                    state = state - {s.dst}
            elif isinstance(s, (Update, ArrayUpdate, MapUpdate, MapInsert)):
                state = state - {s.src}
            elif isinstance(s, Assign):
                # aliasing a nascent ref publishes it; the alias is not nascent
                state = state - set(expr_vars(s.expr)) - {s.dst}
            elif isinstance(s, (Read, ArrayRead, MapRead, MapContains)):
                state = state - {s.dst}
            elif isinstance(s, Return):
                return None
            elif isinstance(s, Conditional):
                a = flow(s.then, state, path + (0,))
                b = flow(s.orelse, state, path + (1,))
                if a is None:
                    state = b
                elif b is None:
                    state = a
                else:
                    state = a & b
        return state

    flow(fn.body, frozenset(), ())
    return out


def analyze(spec: DataStructureSpec) -> RWSetTable:
    """Read/write sets, const flags and nascency for the whole tree."""
    rw = deduce_const(spec, compute_rw_sets(spec))
    nascent = {}
    for s in spec.all_specs().values():
        for f in s.functions.values():
            for path, flag in compute_nascent(f).items():
                nascent[(s.name, f.name, path)] = flag
    rw.nascent = nascent
    return rw


def with_const_flags(spec: DataStructureSpec, rw: RWSetTable | None = None) -> DataStructureSpec:
    """Copy of ``spec`` whose FunctionDecl.is_const fields match ``rw``."""
    if rw is None:
        rw = deduce_const(spec, compute_rw_sets(spec))

    def fix(s):
        fns = {n: (f if f.is_const == rw.const[(s.name, n)] else replace(f, is_const=rw.const[(s.name, n)]))
               for n, f in s.functions.items()}
        return replace(s, functions=fns)

    return transform_tree(spec, fix)
