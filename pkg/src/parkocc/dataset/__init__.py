"""nuScenes-style dataset writing, reading and validation."""

from ..tags import UnknownTagError, map_semantic_tag, map_tags
from .collect import CollectConfig, CollectError, CollectResult, collect_run, frame_timestamp, is_keyframe, scene_name
from .db import RelationalDB
from .reader import DatasetReader, KeyframeRecord
from .io import TruncatedFileError, read_lidarseg, read_point_bin, write_lidarseg, write_point_bin
from .sensors import CameraSpec, RadarSpec, SensorSuite
from .tokens import generate_token, is_token
from .validate import Finding, ValidationReport, tree_digest, validate_dataset
