"""Grasp-point detection for unfolding garments from single depth images.

The pipeline recognizes garment key parts (neck, waist) by classifying
viewpoint feature histograms of regions delimited with active contours
seeded at orientation-entropy peaks, then picks a grasp-point pair from
the ridges a multiscale tubular-enhancement filter finds on the depth
image.
"""

from .annotations import AnnotationError, AnnotationRecord, load_annotations, \
    save_annotations
from .contours import Contour, Mask, SnakeParams, contour_to_mask, dilate_mask, \
    evolve_snake, extreme_points, mask_center, snake_energy
from .descriptors import Classification, DegenerateRegionError, GarmentLabel, \
    KnnEntry, KnnModel, VFHDescriptor, chi_square_distance, compute_vfh, \
    knn_classify, load_model, save_model, train_model
from .evaluation import ConfusionMatrix, DetectionRecord, EvalReport, Rect, \
    evaluate, iou, match_points, render_report
from .geometry import CameraIntrinsics, DepthImage, NormalMap, PointCloud, \
    SphericalNormal, cloud_to_depth, default_intrinsics, depth_to_cloud, \
    estimate_normals, spherical_angles, to_spherical, voxel_downsample
from .pcd import PcdParseError, parse_pcd, write_pcd
from .pgm import load_depth_pgm, load_mask_pgm, save_depth_pgm, save_mask_pgm
from .pipeline import GraspResult, KeyPartDetection, NoCandidatesError, \
    NoKeyPartError, PipelineConfig, PipelineError, detect_grasp_points, \
    point_to_line_distance, recognize_garment_part, select_points_neck, \
    select_points_waist
from .synthetic import SyntheticSceneSpec, generate_scene
from .wrinkles import EntropyMap, HessianEigen, PeakList, VesselnessMap, \
    VesselnessParams, entropy_filter, find_local_maxima, hessian_at_scale, \
    multiscale_vesselness, orientation_histogram, roughness_index, \
    shannon_entropy, vesselness_at_scale

__version__ = "0.1.0"
