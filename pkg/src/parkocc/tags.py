"""Simulator semantic tags (0-30) and their nuScenes counterparts."""

from __future__ import annotations

import numpy as np

# source tag -> (nuScenes tag, source name, nuScenes category)
_TABLE: dict[int, tuple[int, str, str]] = {
    0: (0, "unlabeled", "noise"),
    1: (24, "road", "flat.driveable_surface"),
    2: (26, "sidewalk", "flat.sidewalk"),
    3: (28, "building", "static.mamade"),
    4: (28, "wall", "static.mamade"),
    5: (28, "fence", "static.mamade"),
    6: (28, "pole", "static.mamade"),
    7: (28, "traffic light", "static.mamade"),
    8: (28, "traffic sign", "static.mamade"),
    9: (30, "vegetation", "static.vegetation"),
    10: (27, "terrain", "flat.terrain"),
    11: (0, "sky", "noise"),
    12: (2, "pedestrain", "human.pedestrain.adult"),
    13: (14, "rider", "vehicle.bicycle"),
    14: (17, "car", "vehicle.car"),
    15: (23, "truck", "vehicle.truck"),
    16: (16, "bus", "vehicle.bus.rigid"),
    # Tags 16 and 15 on the nuScenes side carry the same category name in the source table.
    17: (15, "train", "vehicle.bus.rigid"),
    18: (21, "motocycle", "vehicle.motocycle"),
    19: (14, "bicycle", "vehicle.bicycle"),
    20: (29, "static", "static.other"),
    21: (9, "dynamic", "movable_object.barrier"),
    22: (29, "other", "static.other"),
    23: (29, "water", "static.other"),
    24: (24, "road line", "flat.driveable_surface"),
    25: (24, "ground", "flat.driveable_surface"),
    26: (29, "brigde", "static.other"),
    27: (29, "rail", "static.other"),
    28: (29, "guard rail", "static.other"),
    29: (24, "parking lane", "flat.driveable_surface"),
    30: (24, "parking area", "flat.driveable_surface"),
}

NUSCENES_TAGS: frozenset[int] = frozenset(v[0] for v in _TABLE.values())

# Lookup array; index with source tags to vectorise the mapping.
SOURCE_TO_NUSCENES = np.array([_TABLE[k][0] for k in range(31)], dtype=np.uint8)


class UnknownTagError(ValueError):
    pass


def map_semantic_tag(source_tag: int) -> tuple[int, str]:
    """nuScenes tag and category name for a source tag in 0..30."""
    try:
        nus, _, name = _TABLE[int(source_tag)]
    except (KeyError, ValueError, TypeError):
        raise UnknownTagError(f"source tag {source_tag!r} outside 0..30") from None
    return nus, name


def map_tags(source_tags: np.ndarray) -> np.ndarray:
    tags = np.asarray(source_tags)
    if tags.size and (tags.min() < 0 or tags.max() > 30):
        bad = tags[(tags < 0) | (tags > 30)][0]
        raise UnknownTagError(f"source tag {int(bad)} outside 0..30")
    return SOURCE_TO_NUSCENES[tags.astype(np.int64)]


def category_name(nuscenes_tag: int) -> str:
    for nus, _, name in _TABLE.values():
        if nus == nuscenes_tag:
            return name
    raise UnknownTagError(f"nuScenes tag {nuscenes_tag} is not produced by the mapping")


def source_name(source_tag: int) -> str:
    return _TABLE[int(source_tag)][1]


def categories() -> list[tuple[int, str]]:
    """Distinct (nuScenes tag, category name) pairs, sorted by tag."""
    return sorted({(nus, name) for nus, _, name in _TABLE.values()})
