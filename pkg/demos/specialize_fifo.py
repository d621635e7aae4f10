"""Walk a FIFO queue through the pipeline: serial spec, optimizer, locks, run.

The queue wraps a general doubly linked list. Only push_back and pop_front
are reachable, nothing ever reads ``prev``, so the optimizer turns the
list into a singly linked one before locks are injected.
"""

from dcds import Out, build_fifo_mycds, dump_spec, inject_cc, instantiate, optimize


def node_attributes(spec):
    return [a.name for a in spec.all_specs()["Node"].attributes]


serial = build_fifo_mycds()
print("Node before:", node_attributes(serial))

optimized, reports = optimize(serial)
print("Node after: ", node_attributes(optimized))
for r in reports:
    if r.changed:
        print("  ", r)

concurrent = inject_cc(optimized)
print("\nLocked entry points:")
text = dump_spec(concurrent)
print(text[text.index("spec MyCDS"):])

q = instantiate(concurrent, namespace="demo-fifo")
for v in (10, 20, 30):
    q.push(v)
out = Out()
drained = []
while q.pop(out):
    drained.append(out.value)
print("\ndrained", drained, f"({q.commits} commits, {q.aborts} aborts)")
