"""COLMAP sparse reconstruction I/O (text format, binary read support).

Parses cameras/images/points3D into a fully linked in-memory scene with
camera-to-world poses. COLMAP stores world-to-camera rotations as wxyz
quaternions; poses here are converted to the toolkit's camera-to-world
convention on access.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Pose, matrix_to_quat, quat_to_matrix

INVALID_POINT3D = -1

# model name -> parameter count, for the formats we can interpret
CAMERA_MODEL_PARAMS = {
    "SIMPLE_PINHOLE": 3, "PINHOLE": 4, "SIMPLE_RADIAL": 4, "RADIAL": 5,
    "OPENCV": 8, "OPENCV_FISHEYE": 8, "FULL_OPENCV": 12, "FOV": 5,
    "SIMPLE_RADIAL_FISHEYE": 4, "RADIAL_FISHEYE": 5, "THIN_PRISM_FISHEYE": 12,
}
_MODEL_IDS = {0: "SIMPLE_PINHOLE", 1: "PINHOLE", 2: "SIMPLE_RADIAL", 3: "RADIAL",
              4: "OPENCV", 5: "OPENCV_FISHEYE", 6: "FULL_OPENCV", 7: "FOV",
              8: "SIMPLE_RADIAL_FISHEYE", 9: "RADIAL_FISHEYE", 10: "THIN_PRISM_FISHEYE"}


class ColmapError(ValueError):
    pass


class ColmapParseError(ColmapError):
    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


@dataclass
class Camera:
    id: int
    model: str
    width: int
    height: int
    params: np.ndarray

    def intrinsics(self) -> tuple[float, float, float, float]:
        """(fx, fy, cx, cy); only pinhole-style models are supported."""
        p = self.params
        if self.model == "PINHOLE":
            return float(p[0]), float(p[1]), float(p[2]), float(p[3])
        if self.model == "SIMPLE_PINHOLE" or self.model == "SIMPLE_RADIAL":
            return float(p[0]), float(p[0]), float(p[1]), float(p[2])
        raise ColmapError(f"cannot extract pinhole intrinsics from model {self.model}")


@dataclass
class ImageRecord:
    id: int
    qvec: np.ndarray  # world-to-camera rotation, wxyz
    tvec: np.ndarray  # world-to-camera translation
    camera_id: int
    name: str
    xys: np.ndarray          # (M, 2) observed pixel locations
    point3d_ids: np.ndarray  # (M,), -1 for untracked observations

    def pose(self) -> Pose:
        """Camera-to-world pose."""
        r = quat_to_matrix(self.qvec)
        return Pose(r.T, -r.T @ self.tvec)

    def camera_center(self) -> np.ndarray:
        return self.pose().translation


@dataclass
class Point3D:
    id: int
    xyz: np.ndarray
    rgb: np.ndarray
    error: float
    image_ids: np.ndarray
    point2d_idxs: np.ndarray

    @property
    def track_length(self) -> int:
        return len(self.image_ids)


@dataclass
class SparseScene:
    cameras: dict = field(default_factory=dict)
    images: dict = field(default_factory=dict)
    points3d: dict = field(default_factory=dict)

    def validate(self) -> None:
        for img in self.images.values():
            if img.camera_id not in self.cameras:
                raise ColmapError(f"image {img.id} references missing camera {img.camera_id}")
            for pid in img.point3d_ids:
                if pid != INVALID_POINT3D and pid not in self.points3d:
                    raise ColmapError(f"image {img.id} references missing point3D {pid}")
        for pt in self.points3d.values():
            for iid in pt.image_ids:
                if iid not in self.images:
                    raise ColmapError(f"point3D {pt.id} track references missing image {iid}")

    def image_ids_by_name(self) -> list:
        """Image ids ordered by name: the capture-sequence order used for
        view selection ('first image' = lexicographically smallest name)."""
        return [img.id for img in sorted(self.images.values(), key=lambda im: im.name)]

    def visible_point_ids(self, image_id: int, min_track_length: int = 2) -> set:
        img = self.images[image_id]
        out = set()
        for pid in img.point3d_ids:
            if pid == INVALID_POINT3D:
                continue
            pt = self.points3d.get(int(pid))
            if pt is not None and pt.track_length >= min_track_length:
                out.add(int(pid))
        return out

    def points_array(self) -> np.ndarray:
        if not self.points3d:
            return np.zeros((0, 3))
        return np.stack([p.xyz for p in sorted(self.points3d.values(), key=lambda p: p.id)])


def _data_lines(path):
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            yield line_no, line


def _parse_cameras_text(path) -> dict:
    cameras = {}
    for line_no, line in _data_lines(path):
        parts = line.split()
        if len(parts) < 5:
            raise ColmapParseError(path, line_no, "camera line needs id, model, width, height, params")
        try:
            cam_id, width, height = int(parts[0]), int(parts[2]), int(parts[3])
            params = np.array([float(x) for x in parts[4:]])
        except ValueError as exc:
            raise ColmapParseError(path, line_no, f"bad camera field: {exc}") from None
        model = parts[1]
        expected = CAMERA_MODEL_PARAMS.get(model)
        if expected is not None and len(params) != expected:
            raise ColmapParseError(path, line_no,
                                   f"model {model} expects {expected} params, got {len(params)}")
        cameras[cam_id] = Camera(cam_id, model, width, height, params)
    return cameras


def _parse_images_text(path) -> dict:
    images = {}
    header = None
    header_line = 0
    # blank lines are meaningful here: an image with zero observations has
    # an empty second line, so only comments are filtered up front
    with open(path) as fh:
        lines = [(no, ln.strip()) for no, ln in enumerate(fh, start=1)
                 if not ln.lstrip().startswith("#")]
    for line_no, line in lines:
        if header is None:
            if not line:
                continue
            parts = line.split()
            if len(parts) < 10:
                raise ColmapParseError(path, line_no, "image header needs 10 fields")
            try:
                header = (int(parts[0]),
                          np.array([float(x) for x in parts[1:5]]),
                          np.array([float(x) for x in parts[5:8]]),
                          int(parts[8]), " ".join(parts[9:]))
            except ValueError as exc:
                raise ColmapParseError(path, line_no, f"bad image field: {exc}") from None
            header_line = line_no
        else:
            parts = line.split()
            if len(parts) % 3 != 0:
                raise ColmapParseError(path, line_no, "observations must be (x, y, point3D_id) triples")
            try:
                vals = [float(x) for x in parts]
            except ValueError as exc:
                raise ColmapParseError(path, line_no, f"bad observation: {exc}") from None
            xys = np.array(vals).reshape(-1, 3)[:, :2] if parts else np.zeros((0, 2))
            pids = (np.array([int(p) for p in parts[2::3]], dtype=np.int64)
                    if parts else np.zeros(0, dtype=np.int64))
            img_id, qvec, tvec, cam_id, name = header
            images[img_id] = ImageRecord(img_id, qvec, tvec, cam_id, name, xys, pids)
            header = None
    if header is not None:
        raise ColmapParseError(path, header_line, "image header without observation line")
    return images


def _parse_points_text(path) -> dict:
    points = {}
    for line_no, line in _data_lines(path):
        parts = line.split()
        if len(parts) < 8 or (len(parts) - 8) % 2 != 0:
            raise ColmapParseError(path, line_no,
                                   "point3D line needs id, xyz, rgb, error, (image_id, point2D_idx) pairs")
        try:
            pid = int(parts[0])
            xyz = np.array([float(x) for x in parts[1:4]])
            rgb = np.array([int(x) for x in parts[4:7]])
            error = float(parts[7])
            track = np.array([int(x) for x in parts[8:]], dtype=np.int64).reshape(-1, 2)
        except ValueError as exc:
            raise ColmapParseError(path, line_no, f"bad point3D field: {exc}") from None
        points[pid] = Point3D(pid, xyz, rgb, error, track[:, 0], track[:, 1])
    return points


def _read_bytes(fh, fmt):
    size = struct.calcsize(fmt)
    return struct.unpack(fmt, fh.read(size))


def _parse_cameras_binary(path) -> dict:
    cameras = {}
    with open(path, "rb") as fh:
        (n,) = _read_bytes(fh, "<Q")
        for _ in range(n):
            cam_id, model_id, width, height = _read_bytes(fh, "<iiQQ")
            model = _MODEL_IDS.get(model_id)
            if model is None:
                raise ColmapError(f"{path}: unknown camera model id {model_id}")
            params = np.array(_read_bytes(fh, f"<{CAMERA_MODEL_PARAMS[model]}d"))
            cameras[cam_id] = Camera(cam_id, model, width, height, params)
    return cameras


def _parse_images_binary(path) -> dict:
    images = {}
    with open(path, "rb") as fh:
        (n,) = _read_bytes(fh, "<Q")
        for _ in range(n):
            vals = _read_bytes(fh, "<idddddddi")
            img_id, cam_id = vals[0], vals[8]
            qvec, tvec = np.array(vals[1:5]), np.array(vals[5:8])
            name = b""
            while (ch := fh.read(1)) != b"\x00":
                name += ch
            (m,) = _read_bytes(fh, "<Q")
            obs = np.array(_read_bytes(fh, "<" + "ddq" * m)).reshape(-1, 3) if m else np.zeros((0, 3))
            images[img_id] = ImageRecord(img_id, qvec, tvec, cam_id, name.decode(),
                                         obs[:, :2], obs[:, 2].astype(np.int64))
    return images


def _parse_points_binary(path) -> dict:
    points = {}
    with open(path, "rb") as fh:
        (n,) = _read_bytes(fh, "<Q")
        for _ in range(n):
            vals = _read_bytes(fh, "<Qddd BBB d".replace(" ", ""))
            pid = int(vals[0])
            xyz, rgb, error = np.array(vals[1:4]), np.array(vals[4:7]), vals[7]
            (m,) = _read_bytes(fh, "<Q")
            track = np.array(_read_bytes(fh, "<" + "ii" * m), dtype=np.int64).reshape(-1, 2) \
                if m else np.zeros((0, 2), dtype=np.int64)
            points[pid] = Point3D(pid, xyz, rgb, error, track[:, 0], track[:, 1])
    return points


def parse_sparse(path) -> SparseScene:
    """Load a COLMAP sparse model directory (text preferred over binary)."""
    path = Path(path)
    if (path / "cameras.txt").exists():
        scene = SparseScene(_parse_cameras_text(path / "cameras.txt"),
                            _parse_images_text(path / "images.txt"),
                            _parse_points_text(path / "points3D.txt"))
    elif (path / "cameras.bin").exists():
        scene = SparseScene(_parse_cameras_binary(path / "cameras.bin"),
                            _parse_images_binary(path / "images.bin"),
                            _parse_points_binary(path / "points3D.bin"))
    else:
        raise ColmapError(f"{path}: no cameras.txt or cameras.bin found")
    scene.validate()
    return scene


def write_sparse(scene: SparseScene, path) -> None:
    """Write the scene in COLMAP text format (full float precision)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    g = "{:.17g}".format
    with open(path / "cameras.txt", "w") as fh:
        fh.write("# Camera list with one line of data per camera:\n"
                 "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n")
        for cam in sorted(scene.cameras.values(), key=lambda c: c.id):
            params = " ".join(g(p) for p in cam.params)
            fh.write(f"{cam.id} {cam.model} {cam.width} {cam.height} {params}\n")
    with open(path / "images.txt", "w") as fh:
        fh.write("# Image list with two lines of data per image:\n"
                 "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n"
                 "#   POINTS2D[] as (X, Y, POINT3D_ID)\n")
        for img in sorted(scene.images.values(), key=lambda im: im.id):
            q = " ".join(g(v) for v in img.qvec)
            t = " ".join(g(v) for v in img.tvec)
            fh.write(f"{img.id} {q} {t} {img.camera_id} {img.name}\n")
            obs = " ".join(f"{g(x)} {g(y)} {int(pid)}"
                           for (x, y), pid in zip(img.xys, img.point3d_ids))
            fh.write(obs + "\n")
    with open(path / "points3D.txt", "w") as fh:
        fh.write("# 3D point list with one line of data per point:\n"
                 "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n")
        for pt in sorted(scene.points3d.values(), key=lambda p: p.id):
            xyz = " ".join(g(v) for v in pt.xyz)
            rgb = " ".join(str(int(v)) for v in pt.rgb)
            track = " ".join(f"{int(i)} {int(j)}" for i, j in zip(pt.image_ids, pt.point2d_idxs))
            fh.write(f"{pt.id} {xyz} {rgb} {g(pt.error)} {track}\n".rstrip() + "\n")


def camera_to_perspective(scene: SparseScene, image_id: int):
    """PerspectiveCamera for a scene image (pinhole models only)."""
    from .cameras import PerspectiveCamera
    img = scene.images[image_id]
    cam = scene.cameras[img.camera_id]
    fx, fy, cx, cy = cam.intrinsics()
    return PerspectiveCamera(fx=fx, fy=fy, cx=cx, cy=cy,
                             width=cam.width, height=cam.height, pose=img.pose())


def pose_to_colmap(pose: Pose) -> tuple[np.ndarray, np.ndarray]:
    """Camera-to-world Pose -> COLMAP world-to-camera (qvec, tvec)."""
    r = pose.rotation.T
    return matrix_to_quat(r), -r @ pose.translation
