from .container import MalformedGridError, decode_grid, encode_grid, export_grid_ply, load_grid, save_grid
from .grid import UNOCCUPIED, GridSpec, GridSpecMismatchError, VoxelGrid, check_same_spec, voxelize
from .nn import nearest_voxel, nn_label_transfer
from .observed import observed_mask
from .pipeline import (
    DensifiedScene,
    GTConfig,
    StageError,
    baseline_predict,
    build_dense_gt,
    densify_aggregate,
    densify_cloud,
    gt_from_densified,
)
