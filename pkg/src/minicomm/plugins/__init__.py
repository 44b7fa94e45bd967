from .sparse import sparse_alltoall
from .grid import GridTopology, build_grid, grid_alltoallv, intermediate_of
from .reproducible import Distribution, canonical_tree_reduce, reproducible_reduce
