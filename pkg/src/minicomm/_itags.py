"""Internal tag sub-spaces (low 16 bits, used with the internal tag bit set).

Barrier rounds occupy 0..23, which bounds group sizes at 2**24 ranks.
"""

BARRIER_BASE = 0  # + round index
BCAST = 24
GATHER = 25
REDUCE = 26
ALLTOALL = 27
COUNTS = 28
SPARSE = 29
GRID_H1_HEADER = 30
GRID_H1_DATA = 31
GRID_H2_HEADER = 32
GRID_H2_DATA = 33
REDUCE_PARTIAL = 34
REDUCE_ROOT = 35
