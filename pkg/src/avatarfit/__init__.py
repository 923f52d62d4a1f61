"""avatarfit: body-model posing, lite-model transfer, mesh registration,
multi-view keypoint triangulation, and dataset-evaluation metrics."""

from .mesh import (
    TriMesh,
    VertexGraph,
    SurfaceSamples,
    build_vertex_graph,
    geodesic_distances,
    hop_neighborhood,
    sample_surface,
    nearest_point_on_surface,
    SurfaceIndex,
)
from .bodymodel import (
    ParametricModel,
    BodyParams,
    PosedResult,
    rodrigues,
    shaped_template,
    pose_feature,
    regress_joints,
    lbs_forward,
    lbs_inverse,
)

__version__ = "0.1.0"
__all__ = [
    "TriMesh", "VertexGraph", "SurfaceSamples", "build_vertex_graph",
    "geodesic_distances", "hop_neighborhood", "sample_surface",
    "nearest_point_on_surface", "SurfaceIndex",
    "ParametricModel", "BodyParams", "PosedResult", "rodrigues",
    "shaped_template", "pose_feature", "regress_joints", "lbs_forward", "lbs_inverse",
]
