"""Block-structured grid, guard-cell fill and the Poisson solver."""
from composeflow.grid.blocks import (
    AXES,
    BC_TYPES,
    CENTERINGS,
    FACES,
    BlockGrid,
    DomainSpec,
    FieldRegistry,
    FieldSpec,
    GridError,
    TileView,
    face_axis,
    fill_guard_cells,
    init_grid,
    tile_iterator,
)
from composeflow.grid.poisson import (
    NonConvergence,
    PoissonProblem,
    PoissonResult,
    harmonic_faces,
    solve_poisson,
)

__all__ = [
    "AXES", "BC_TYPES", "CENTERINGS", "FACES", "BlockGrid", "DomainSpec", "FieldRegistry",
    "FieldSpec", "GridError", "TileView", "face_axis", "fill_guard_cells", "init_grid",
    "tile_iterator", "NonConvergence", "PoissonProblem", "PoissonResult", "harmonic_faces",
    "solve_poisson",
]
