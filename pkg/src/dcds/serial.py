"""Reference serial interpreter.

A deliberately plain tree walker over Python objects: records are
:class:`Record` instances, pointers are object references, maps are dicts.
It shares nothing with the transactional executor except the IR, ignores
lock statements, and is the oracle the optimizer and executor are checked
against. With ``touches`` set it logs every attribute access.
"""

from __future__ import annotations

from .errors import IndexOutOfBounds, MissingKey, NullDereference, UnknownMethod
from .ir import (
    Add, ArrayAttr, ArrayRead, ArrayUpdate, Assign, Conditional, Constant,
    Create, DataStructureSpec, Delete, EmbeddedAttr, Eq, IsNull, LockStmt,
    MapAttr, MapContains, MapErase, MapInsert, MapRead, MapUpdate, MethodCall,
    Nop, PointerAttr, PrimitiveAttr, Read, Return, Sub, Update, Var, wrap_int,
)
from .values import Out, check_args


class Record:
    __slots__ = ("spec", "fields", "__weakref__")

    def __init__(self, spec: str, fields: dict):
        self.spec = spec
        self.fields = fields

    def __repr__(self):
        return f"<{self.spec} {self.fields}>"


class _Return(Exception):
    def __init__(self, value):
        self.value = value


class SerialInstance:
    def __init__(self, spec: DataStructureSpec, touches: list | None = None):
        self.spec = spec
        self.specs = spec.all_specs()
        self.touches = touches
        self.root = self._construct(spec.name)

    def _construct(self, name: str) -> Record:
        spec = self.specs[name]
        fields = {}
        for a in spec.attributes:
            if isinstance(a, PrimitiveAttr):
                fields[a.name] = a.default
            elif isinstance(a, PointerAttr):
                fields[a.name] = None
            elif isinstance(a, EmbeddedAttr):
                fields[a.name] = self._construct(a.spec)
            elif isinstance(a, ArrayAttr):
                if a.composed:
                    fields[a.name] = [self._construct(a.element) for _ in range(a.length)]
                else:
                    fields[a.name] = [a.element.default()] * a.length
            elif isinstance(a, MapAttr):
                fields[a.name] = {}
        return Record(name, fields)

    def invoke(self, name: str, *args):
        if name not in self.spec.exposed:
            raise UnknownMethod(f"{self.spec.name} exposes no {name!r}")
        fn = self.spec.functions[name]
        values = check_args(fn, args)
        ret, env = self._call(self.spec, fn, self.root, values)
        for p, a in zip(fn.params, args):
            if p.by_ptr:
                a.value = env[p.name]
        return ret

    # -- interpretation ----------------------------------------------------------

    def _call(self, spec, fn, rec, values):
        env = {t.name: t.type.default() for t in fn.temps}
        env.update((p.name, v) for p, v in zip(fn.params, values))
        try:
            self._block(spec, fn, rec, env, fn.body)
        except _Return as r:
            return r.value, env
        raise AssertionError(f"{spec.name}.{fn.name} fell off the end")

    def _touch(self, spec, attr, kind):
        if self.touches is not None:
            self.touches.append((f"{spec.name}.{attr}", kind))

    def _block(self, spec, fn, rec, env, body):
        for st in body:
            self._stmt(spec, fn, rec, env, st)

    def _eval(self, e, env, bits=None):
        if isinstance(e, Constant):
            return e.value
        if isinstance(e, Var):
            return env[e.name]
        if isinstance(e, (Add, Sub)):
            a, b = self._eval(e.left, env), self._eval(e.right, env)
            r = a + b if isinstance(e, Add) else a - b
            if isinstance(r, int):
                r = wrap_int(r, bits or 64)
            return r
        if isinstance(e, Eq):
            return self._eval(e.left, env) == self._eval(e.right, env)
        if isinstance(e, IsNull):
            return self._eval(e.operand, env) is None
        raise TypeError(e)

    def _stmt(self, spec, fn, rec, env, st):
        f = rec.fields
        if f is None:
            raise NullDereference("access to a deleted record")
        if isinstance(st, Read):
            self._touch(spec, st.attr, "R")
            env[st.dst] = f[st.attr]
        elif isinstance(st, Update):
            self._touch(spec, st.attr, "W")
            f[st.attr] = env[st.src]
        elif isinstance(st, ArrayRead):
            self._touch(spec, st.attr, "R")
            arr = f[st.attr]
            i = self._eval(st.index, env)
            if not 0 <= i < len(arr):
                raise IndexOutOfBounds(f"{st.attr}[{i}]")
            env[st.dst] = arr[i]
        elif isinstance(st, ArrayUpdate):
            self._touch(spec, st.attr, "W")
            arr = f[st.attr]
            i = self._eval(st.index, env)
            if not 0 <= i < len(arr):
                raise IndexOutOfBounds(f"{st.attr}[{i}]")
            arr[i] = env[st.src]
        elif isinstance(st, MapRead):
            self._touch(spec, st.attr, "R")
            k = self._eval(st.key, env)
            if k not in f[st.attr]:
                raise MissingKey(k)
            env[st.dst] = f[st.attr][k]
        elif isinstance(st, MapContains):
            self._touch(spec, st.attr, "R")
            env[st.dst] = self._eval(st.key, env) in f[st.attr]
        elif isinstance(st, MapUpdate):
            self._touch(spec, st.attr, "W")
            k = self._eval(st.key, env)
            if k not in f[st.attr]:
                raise MissingKey(k)
            f[st.attr][k] = env[st.src]
        elif isinstance(st, MapInsert):
            self._touch(spec, st.attr, "W")
            f[st.attr][self._eval(st.key, env)] = env[st.src]
        elif isinstance(st, MapErase):
            self._touch(spec, st.attr, "W")
            f[st.attr].pop(self._eval(st.key, env), None)
        elif isinstance(st, Assign):
            t = fn.var_types()[st.dst]
            env[st.dst] = self._eval(st.expr, env, t.bits if t.is_int else None)
        elif isinstance(st, Conditional):
            self._block(spec, fn, rec, env, st.then if self._eval(st.cond, env) else st.orelse)
        elif isinstance(st, Create):
            env[st.dst] = self._construct(st.spec)
        elif isinstance(st, Delete):
            target = env[st.var]
            if target is None or target.fields is None:
                raise NullDereference(f"delete of {st.var}")
            target.fields = None
        elif isinstance(st, MethodCall):
            if st.embedded:
                self._touch(spec, st.target, "R")
                target = f[st.target]
            else:
                target = env[st.target]
            if target is None or target.fields is None:
                raise NullDereference(f"call {st.function} on {st.target}")
            callee_spec = self.specs[target.spec]
            callee = callee_spec.functions[st.function]
            ret, cenv = self._call(callee_spec, callee, target, [env[a] for a in st.args])
            for p, a in zip(callee.params, st.args):
                if p.by_ptr:
                    env[a] = cenv[p.name]
            if st.result is not None:
                env[st.result] = ret
        elif isinstance(st, Return):
            raise _Return(env[st.var] if st.var else None)
        elif isinstance(st, (Nop, LockStmt)):
            pass
        else:
            raise TypeError(st)

    # -- observation -----------------------------------------------------------

    def live_records(self) -> int:
        """Records reachable from the root (pointers followed)."""
        seen, stack = set(), [self.root]
        while stack:
            r = stack.pop()
            if id(r) in seen or r.fields is None:
                continue
            seen.add(id(r))
            for v in r.fields.values():
                if isinstance(v, Record):
                    stack.append(v)
                elif isinstance(v, list):
                    stack.extend(x for x in v if isinstance(x, Record))
                elif isinstance(v, dict):
                    stack.extend(x for x in v.values() if isinstance(x, Record))
        return len(seen)


__all__ = ["Out", "Record", "SerialInstance"]
