"""Panoramic-image semantic labelling of photogrammetric point clouds.

Frames are split into 18 rectilinear faces, segmented externally, merged back
by class priority voting, projected onto the cloud within a radius of each
camera, clustered into asset instances, registered into the model frame and
evaluated against surveyed ground truth.
"""
from .evaluation import compute_metrics, match_instances
from .fusion import ClassTable, merge_faces_cpv, suppress_regions
from .geometry import FaceSpec, equirect_to_face, face_specs, face_to_equirect_lookup, rotation_for_face
from .instances import AssetInstance, dbscan, extract_instances
from .projection import (
    CameraPose,
    accumulate_frame_votes,
    finalize_weighted_majority,
    points_in_radius,
    project_point_spherical,
)
from .registration import SimilarityTransform, SurfaceMesh, apply_transform, estimate_similarity, sample_surface

__version__ = "0.1.0"
