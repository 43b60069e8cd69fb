"""Discrete anisotropic total variations built from submodular stencil potentials."""

__version__ = "0.1.0"

from .anisotropy import AnisotropyDensity, PolyhedralSet, frank_diagram, phi, polyhedral_perimeter
from .convergence import (
    ConvergenceExperiment,
    ConvergenceRow,
    rasterize_halfspace,
    rasterize_polygon,
    run_function_tv_experiment,
    run_halfspace_experiment,
    run_polygon_experiment,
)
from .denoise import (
    AnisotropicTVDenoiser,
    DenoiseProblem,
    DenoiseResult,
    energy,
    level_set_consistency_check,
    solve_first_order,
    solve_oracle,
)
from .lattice import (
    GridDomain,
    GridFunction,
    GridSet,
    coarea_check,
    eval_Jh,
    eval_Jh_set,
    gather,
    interior_nodes,
    submodularity_of_Jh_check,
    total_variation_bounds_check,
)
from .stencil import (
    Stencil,
    StencilPotential,
    binary_euclidean_potential,
    check_coercivity,
    check_submodular,
    diagonal_pairs_potential,
    extension_properties_check,
    load_potential,
    lovasz_extend,
    nearest_neighbor_potential,
    parse_potential,
)
