"""ASCII PLY writers for point sets and triangle meshes."""

from __future__ import annotations

from pathlib import Path

import numpy as np

# Fixed colours per nuScenes tag; anything else is grey.
CLASS_COLORS = {
    0: (0, 0, 0),
    2: (255, 30, 30),
    9: (255, 120, 50),
    14: (255, 192, 203),
    15: (255, 255, 0),
    16: (0, 150, 245),
    17: (0, 255, 255),
    21: (200, 180, 0),
    23: (255, 127, 80),
    24: (255, 0, 255),
    26: (75, 0, 75),
    27: (150, 240, 80),
    28: (230, 230, 250),
    29: (0, 175, 0),
    30: (0, 255, 127),
}


def colors_for(labels: np.ndarray) -> np.ndarray:
    lut = np.full((256, 3), 128, np.uint8)
    for tag, rgb in CLASS_COLORS.items():
        lut[tag] = rgb
    return lut[np.asarray(labels, np.int64)]


def write_ply_points(path, points: np.ndarray, colors: np.ndarray | None = None) -> Path:
    path = Path(path)
    pts = np.asarray(points, np.float64).reshape(-1, 3)
    header = ["ply", "format ascii 1.0", f"element vertex {len(pts)}",
              "property float x", "property float y", "property float z"]
    if colors is not None:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    header.append("end_header")
    with path.open("w") as fh:
        fh.write("\n".join(header) + "\n")
        if colors is None:
            np.savetxt(fh, pts, fmt="%.6f")
        else:
            cols = np.asarray(colors, np.int64).reshape(-1, 3)
            for p, c in zip(pts, cols):
                fh.write(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f} {c[0]} {c[1]} {c[2]}\n")
    return path


def write_ply_mesh(path, vertices: np.ndarray, triangles: np.ndarray) -> Path:
    path = Path(path)
    v = np.asarray(vertices, np.float64).reshape(-1, 3)
    f = np.asarray(triangles, np.int64).reshape(-1, 3)
    with path.open("w") as fh:
        fh.write(
            "ply\nformat ascii 1.0\n"
            f"element vertex {len(v)}\nproperty float x\nproperty float y\nproperty float z\n"
            f"element face {len(f)}\nproperty list uchar int vertex_indices\nend_header\n"
        )
        np.savetxt(fh, v, fmt="%.6f")
        for tri in f:
            fh.write(f"3 {tri[0]} {tri[1]} {tri[2]}\n")
    return path


def read_ply_vertex_count(path) -> int:
    with Path(path).open() as fh:
        for line in fh:
            if line.startswith("element vertex"):
                return int(line.split()[-1])
            if line.startswith("end_header"):
                break
    raise ValueError(f"{path}: no vertex element")
