"""Numerical laboratory for degree-2 Blaschke dynamics and a
Weil-Petersson style metric on their parameter disk."""

__version__ = "0.1.0"

from ._kernels import backend_name
from .blaschke_core import (
    BlaschkeParam,
    apply_map,
    as_param,
    boundary_derivative_modulus,
    boundary_fixed_point,
    critical_point,
    evaluate,
    inverse_images,
    koenigs,
    koenigs_batch,
    koenigs_series,
    orbit,
)
from .hyperbolic_geometry import (
    HoroballCoord,
    MobiusDisk,
    horocycle_point,
    hyperbolic_distance_disk,
    model_metric_rho_alpha,
    random_disk_automorphism,
    sl2_reduce,
    teichmuller_density,
)
from .circle_dynamics import (
    AnnularRectangle,
    Cycle,
    entropy,
    find_simple_cycle,
    green_residual,
    index_identity_residual,
    ks_uniform_angle,
    laminated_area_estimate,
    preimage_tree,
    renewal_count,
    rotation_word,
)
from .gardens import (
    GardenFrame,
    circle_intersection_measure,
    flower_diagnostics,
    garden_membership,
    measure_plateau,
)
from .beltrami_wp import (
    BeltramiField,
    beltrami_eval,
    constant_field,
    custom_field,
    decay_fit,
    geometric_radius_schedule,
    half_optimal_field,
    horocycle_radius_schedule,
    linear_combination,
    optimal_field,
    pullback_field,
    reflect_coefficient,
    v3_exterior,
    v3_exterior_direct,
    v3_radial_halfplane_oracle,
    v3_report,
    wp_circle_average,
    wp_norm,
)
from .vector_fields import (
    DrivingMeasure,
    VectorFieldModel,
    flow,
    iterate_vs_flow,
    kappa_closed,
    kappa_eval,
    kappa_measure,
    koenigs_vf,
    limit_model,
    partition_convergence_check,
    vf_limit_residual,
)
from .render import RasterImage, render_garden, render_vector_field, write_ppm

__all__ = [
    "backend_name",
    "__version__",
    "BlaschkeParam",
    "apply_map",
    "as_param",
    "boundary_derivative_modulus",
    "boundary_fixed_point",
    "critical_point",
    "evaluate",
    "inverse_images",
    "koenigs",
    "koenigs_batch",
    "koenigs_series",
    "orbit",
    "HoroballCoord",
    "MobiusDisk",
    "horocycle_point",
    "hyperbolic_distance_disk",
    "model_metric_rho_alpha",
    "random_disk_automorphism",
    "sl2_reduce",
    "teichmuller_density",
    "AnnularRectangle",
    "Cycle",
    "entropy",
    "find_simple_cycle",
    "green_residual",
    "index_identity_residual",
    "ks_uniform_angle",
    "laminated_area_estimate",
    "preimage_tree",
    "renewal_count",
    "rotation_word",
    "GardenFrame",
    "circle_intersection_measure",
    "flower_diagnostics",
    "garden_membership",
    "measure_plateau",
    "BeltramiField",
    "beltrami_eval",
    "constant_field",
    "custom_field",
    "decay_fit",
    "geometric_radius_schedule",
    "half_optimal_field",
    "horocycle_radius_schedule",
    "linear_combination",
    "optimal_field",
    "pullback_field",
    "reflect_coefficient",
    "v3_exterior",
    "v3_exterior_direct",
    "v3_radial_halfplane_oracle",
    "v3_report",
    "wp_circle_average",
    "wp_norm",
    "DrivingMeasure",
    "VectorFieldModel",
    "flow",
    "iterate_vs_flow",
    "kappa_closed",
    "kappa_eval",
    "kappa_measure",
    "koenigs_vf",
    "limit_model",
    "partition_convergence_check",
    "vf_limit_residual",
    "RasterImage",
    "render_garden",
    "render_vector_field",
    "write_ppm",
]
