"""Trace the enclave startup cost across allocation sizes.

The cost is linear in the allocation until it no longer fits the usable
protected region, then paging kicks in: a fixed extra penalty plus a much
steeper slope.  The jump at the boundary is the whole story of why admitting
an over-declared enclave hurts everyone on the node.
"""

from epcsched import EpcModel, startup_delay

MIB = 1024 * 1024

model = EpcModel()
boundary = model.usable_bytes / MIB

print(f"usable protected region: {boundary:.1f} MiB")
print(f"{'alloc MiB':>10}  {'delay ms':>9}")
for mib in (0, 10, 25, 50, 75, 90, boundary, boundary + 0.001, 100, 150, 256):
    delay = startup_delay(mib * MIB, model)
    marker = "  <- paging begins" if mib > boundary and mib < 94 else ""
    print(f"{mib:>10.3f}  {delay:>9.2f}{marker}")

below = startup_delay(model.usable_bytes, model)
above = startup_delay(model.usable_bytes + 1, model)
print(f"\ncrossing the boundary by one byte adds {above - below:.2f} ms")
