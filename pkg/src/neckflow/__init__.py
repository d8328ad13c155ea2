"""Mean curvature flow with surgery for rotationally symmetric hypersurfaces,
neck detection, and normal neck construction on graphs over the cylinder."""

from .algebra import (CylinderIsometry, MaximalNeckResult, classify_gluing, extend_maximal,
                      extend_maximal_profile, fit_isometry, lift_path, merge_necks)
from .detection import (NeckCertificate, NeckParams, default_params, detect_neck_points,
                        is_curvature_neck, is_eps_cylindrical, is_eps_k_parallel,
                        is_hypersurface_neck, is_shrinking_curvature_neck)
from .errors import InputError, NeckflowError
from .flow import (FlowConfig, SurgeryConfig, adaptive_dt, perform_surgery, run_pipeline,
                   run_until_event, split_components, step, terminal_classify)
from .graph import CylinderGraph, conformal_deviation, extract_graph, graph_cross_section
from .history import FlowHistory, FlowState, SurgeryRecord
from .normal import (NormalityCertificate, NormalNeck, align_rotations, build_normal_neck,
                     certify_normal, cmc_foliate, harmonic_reparametrize, sphere_volume_constant,
                     volume_coordinate)
from .profile import RadialProfile
from .sphere_mesh import SphereMesh, icosphere

__all__ = [
    "CylinderIsometry", "MaximalNeckResult", "classify_gluing", "extend_maximal",
    "extend_maximal_profile", "fit_isometry", "lift_path", "merge_necks", "NeckCertificate",
    "NeckParams", "default_params", "detect_neck_points", "is_curvature_neck",
    "is_eps_cylindrical", "is_eps_k_parallel", "is_hypersurface_neck",
    "is_shrinking_curvature_neck", "InputError", "NeckflowError", "FlowConfig", "SurgeryConfig",
    "adaptive_dt", "perform_surgery", "run_pipeline", "run_until_event", "split_components",
    "step", "terminal_classify", "CylinderGraph", "conformal_deviation", "extract_graph",
    "graph_cross_section", "FlowHistory", "FlowState", "SurgeryRecord", "NormalityCertificate",
    "NormalNeck", "align_rotations", "build_normal_neck", "certify_normal", "cmc_foliate",
    "harmonic_reparametrize", "sphere_volume_constant", "volume_coordinate", "RadialProfile",
    "SphereMesh", "icosphere",
]

__version__ = "0.1.0"
