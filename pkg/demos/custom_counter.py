"""Declare a new structure with the builder and use it from several threads.

A bank of two counters with a transfer method: the serial code has no
locking at all, yet concurrent transfers never lose or create units.
"""

import threading

from dcds import Out, inject_cc, instantiate, new_builder, optimize
from dcds.ir import BOOL, I64, Constant, Param, add, sub

b = new_builder("Pair")
b.attribute("left", I64, 1000)
b.attribute("right", I64, 1000)
b.attribute("audit_trail", I64)  # written, never read: the optimizer drops it

t = b.function("move", params=[Param("amount", I64)])
t.temp("l", I64)
t.temp("r", I64)
t.read("left", "l")
t.read("right", "r")
t.assign("l", sub("l", "amount"))
t.assign("r", add("r", "amount"))
t.update("left", "l")
t.update("right", "r")
t.update("audit_trail", "amount")
t.ret()

s = b.function("total", BOOL, [Param("sum", I64, by_ptr=True)])
s.temp("l", I64)
s.temp("r", I64)
s.temp("ok", BOOL)
s.read("left", "l")
s.read("right", "r")
s.assign("sum", add("l", "r"))
s.assign("ok", Constant(True, BOOL))
s.ret("ok")

spec, _ = optimize(b.build({"move", "total"}))
print("attributes kept:", [a.name for a in spec.attributes])
pair = instantiate(inject_cc(spec), namespace="demo-pair")


def worker(sign):
    for i in range(2000):
        pair.move(sign * (i % 7))


threads = [threading.Thread(target=worker, args=(s,)) for s in (1, -1, 1, -1)]
for th in threads:
    th.start()
for th in threads:
    th.join()

total = Out()
pair.total(total)
print(f"total after 8000 concurrent moves: {total.value} "
      f"({pair.commits} commits, {pair.aborts} retried conflicts)")
assert total.value == 2000
