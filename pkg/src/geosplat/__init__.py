"""geosplat: ground + satellite Gaussian splatting toolkit.

A CPU toolkit for cross-view splatting work: perspective and orthographic
differentiable splat rendering in a GPS-anchored world frame, Web Mercator
tile fetching and mosaic assembly, height-map-to-splat conversion, scene
scale normalization, the full supervision loss set, COLMAP-based view
selection, and an interactive geoalignment service.
"""

__version__ = "0.1.0"

from .attention import AttnMetaParams, MhaParams, attn_meta, mha
from .backward import GradientSet, check_gradients, render_backward
from .cameras import OrthoCamera, PerspectiveCamera, RenderOutput
from .colmap import SparseScene, parse_sparse, write_sparse
from .fitting import FitConfig, FitResult, FitTarget, LearningRates, fit_scene
from .fusion import (HeightMap, SceneScale, SplatDefaults, compute_scene_scale,
                     heightmap_to_gaussians, normalize_scene,
                     render_bev_combined, render_combined_exact,
                     render_combined_two_pass)
from .gaussians import Gaussian3D, GaussianSet, eval_sh, sh_from_color
from .geodesy import (GeoPose, LocalFrame, R_REF, camera_pose, geo_to_local,
                      latlon_to_mercator, local_to_geo, mercator_to_latlon)
from .geometry import Pose
from .losses import LossWeights, SkyMask, total_loss
from .metrics import MetricReport, psnr, ssim
from .rendering import (DEFAULT_CONFIG, EXACT_CONFIG, RenderConfig,
                        project_orthographic, project_perspective, render)
from .sat_tiles import (ProviderConfig, SatMosaic, TileCache, TileId,
                        fetch_mosaic, resample_to_extent, rotate_to_heading,
                        select_zoom, tile_index)
from .sim2 import Sim2Alignment, apply_sim2, export_alignment
from .view_selection import ViewSplit, pair_iou, perturb_geopose, select_splits

__all__ = [
    "__version__",
    # geometry / geodesy
    "Pose", "GeoPose", "LocalFrame", "R_REF", "camera_pose", "geo_to_local",
    "local_to_geo", "latlon_to_mercator", "mercator_to_latlon",
    # splats and rendering
    "Gaussian3D", "GaussianSet", "eval_sh", "sh_from_color",
    "PerspectiveCamera", "OrthoCamera", "RenderOutput",
    "RenderConfig", "DEFAULT_CONFIG", "EXACT_CONFIG",
    "project_perspective", "project_orthographic", "render",
    # gradients and fitting
    "GradientSet", "render_backward", "check_gradients",
    "FitConfig", "FitTarget", "FitResult", "LearningRates", "fit_scene",
    # cross-view fusion
    "HeightMap", "SceneScale", "SplatDefaults", "heightmap_to_gaussians",
    "compute_scene_scale", "normalize_scene", "render_combined_exact",
    "render_combined_two_pass", "render_bev_combined",
    # losses and metrics
    "LossWeights", "SkyMask", "total_loss", "MetricReport", "psnr", "ssim",
    # attention reference
    "MhaParams", "AttnMetaParams", "mha", "attn_meta",
    # scenes and view selection
    "SparseScene", "parse_sparse", "write_sparse",
    "ViewSplit", "pair_iou", "select_splits", "perturb_geopose",
    # satellite tiles
    "TileId", "ProviderConfig", "SatMosaic", "TileCache", "tile_index",
    "select_zoom", "fetch_mosaic", "rotate_to_heading", "resample_to_extent",
    # alignment
    "Sim2Alignment", "apply_sim2", "export_alignment",
]
