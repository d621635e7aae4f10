from dataclasses import replace

import pytest

from catalog_traces import TRACES
from dcds import build_doubly_linked_list, build_fifo_mycds, inject_cc, optimize, strip_cc
from dcds.catalog import get_entry
from dcds.cc_injector import check_all, check_coverage, check_strictness, check_two_phase, paths
from dcds.errors import AlreadyInjected
from dcds.ir import (
    AcquireExclusive, AcquireShared, Assign, Create, Delete, MethodCall, Read,
    ReleaseAll, Return, SelfTarget, Update, Upgrade, VarTarget, walk,
)

NAMES = ["dll", "fifo", "lru", "ycsb"]


def _serial(name):
    entry = get_entry(name)
    spec = entry.build(**TRACES[name].params)
    return optimize(spec)[0] if entry.optimize else spec


def _with_body(spec, fn, body):
    f = replace(spec.functions[fn], body=tuple(body))
    return replace(spec, functions={**spec.functions, fn: f})


# -- hand-derived bodies ------------------------------------------------------------


def test_empty_body():
    cspec = inject_cc(build_doubly_linked_list())
    body = cspec.functions["empty"].body
    assert [type(s) for s in body] == [AcquireShared, Read, Assign, ReleaseAll, Return]
    assert body[0].target == SelfTarget()


def test_fifo_pop_front_locks():
    cspec = inject_cc(optimize(build_fifo_mycds())[0])
    pop = cspec.composed["LL"].functions["pop_front"]
    stmts = [st for _, st in walk(pop.body)]
    # composed callee: its self lock is taken by the caller, and it never releases
    assert not any(isinstance(s, ReleaseAll) for s in stmts)
    locks = [(type(s).__name__, str(s.target)) for s in stmts if isinstance(s, (AcquireShared, AcquireExclusive, Upgrade))]
    # h read through get_next/get_value (const: shared), then deleted (upgrade)
    assert locks == [("AcquireShared", "h"), ("Upgrade", "h")]
    i_delete = next(i for i, s in enumerate(stmts) if isinstance(s, Delete))
    assert isinstance(stmts[i_delete - 1], Upgrade)
    outer = cspec.functions["pop"].body
    assert [type(s) for s in outer] == [AcquireExclusive, MethodCall, ReleaseAll, Return]


def test_dll_pop_front_releases_on_both_returns():
    cspec = inject_cc(build_doubly_linked_list())
    body = cspec.functions["pop_front"].body
    returns = [st for _, st in walk(body) if isinstance(st, Return)]
    assert len(returns) == 2
    all_paths = list(paths(body))
    assert len(all_paths) >= 2
    for path in all_paths:
        seq = [st for _, st in path]
        assert isinstance(seq[-1], Return) and isinstance(seq[-2], ReleaseAll)


def test_push_back_new_node_not_locked():
    cspec = inject_cc(build_doubly_linked_list())
    body = cspec.functions["push_back"].body
    stmts = [st for _, st in walk(body)]
    assert isinstance(stmts[0], Create)
    locked = {s.target for s in stmts if isinstance(s, (AcquireShared, AcquireExclusive, Upgrade))}
    assert VarTarget("n") not in locked
    assert VarTarget("t") in locked and SelfTarget() in locked


def test_reinjection_rejected():
    cspec = inject_cc(build_doubly_linked_list())
    with pytest.raises(AlreadyInjected):
        inject_cc(cspec)


# -- erasure ----------------------------------------------------------------------------


@pytest.mark.parametrize("name", NAMES)
def test_strip_inverts_inject(name):
    spec = _serial(name)
    cspec = inject_cc(spec)
    assert cspec.cc_injected
    assert strip_cc(cspec) == spec
    assert strip_cc(spec) == spec
    assert inject_cc(strip_cc(cspec)) == cspec


# -- static protocol checks -------------------------------------------------------------


@pytest.mark.parametrize("name", NAMES)
def test_catalog_specs_pass_static_checks(name):
    assert check_all(inject_cc(_serial(name))) == []


def test_checkers_catch_missing_lock():
    cspec = inject_cc(build_doubly_linked_list())
    body = [s for s in cspec.functions["empty"].body if not isinstance(s, AcquireShared)]
    assert check_coverage(_with_body(cspec, "empty", body))


def test_checkers_catch_shared_where_exclusive_needed():
    cspec = inject_cc(build_doubly_linked_list())
    body = [s for s in cspec.functions["push_back"].body if not isinstance(s, Upgrade)]
    assert check_coverage(_with_body(cspec, "push_back", body))


def test_checkers_catch_lock_after_release():
    cspec = inject_cc(build_doubly_linked_list())
    body = list(cspec.functions["empty"].body)
    body.insert(-1, AcquireShared(SelfTarget()))
    assert check_two_phase(_with_body(cspec, "empty", body))


def test_checkers_catch_missing_or_early_release():
    cspec = inject_cc(build_doubly_linked_list())
    body = [s for s in cspec.functions["empty"].body if not isinstance(s, ReleaseAll)]
    assert check_strictness(_with_body(cspec, "empty", body))
    body = list(cspec.functions["empty"].body)
    body.insert(1, ReleaseAll())
    spec = _with_body(cspec, "empty", body)
    assert check_strictness(spec)


def test_update_target_written_under_exclusive():
    """Every Update on every path has self held exclusive before it."""
    cspec = inject_cc(build_doubly_linked_list())
    for fn in cspec.exposed:
        for path in paths(cspec.functions[fn].body):
            held = None
            for _, st in path:
                if isinstance(st, AcquireShared) and st.target == SelfTarget():
                    held = held or "S"
                elif isinstance(st, (AcquireExclusive, Upgrade)) and st.target == SelfTarget():
                    held = "X"
                elif isinstance(st, Update):
                    assert held == "X", fn
