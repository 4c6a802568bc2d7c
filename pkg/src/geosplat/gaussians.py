"""3D Gaussian splat data model, SH color evaluation, and PLY serialization.

A splat is (mean, per-axis log scale, unit quaternion, opacity logit, SH
colors). Color uses order-1 real spherical harmonics: 4 coefficients per
channel, stored as an (N, 3, 4) array whose [:, :, 0] slice is the
view-independent (DC) term.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .geometry import quat_normalize, quat_to_matrix

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199

# de-facto splat PLY vertex layout (little-endian float32)
_PLY_FIELDS = (
    ["x", "y", "z"]
    + [f"f_dc_{i}" for i in range(3)]
    + [f"f_rest_{i}" for i in range(9)]
    + ["opacity"]
    + [f"scale_{i}" for i in range(3)]
    + [f"rot_{i}" for i in range(4)]
)


def eval_sh(sh: np.ndarray, view_dir: np.ndarray) -> np.ndarray:
    """Order-1 SH color for unit view directions.

    sh has shape (..., 3, 4); view_dir (..., 3). The raw SH value gets the
    conventional +0.5 shift and is clamped at zero from below.
    """
    sh = np.asarray(sh, dtype=np.float64)
    d = np.asarray(view_dir, dtype=np.float64)
    basis = np.stack([
        np.full(d.shape[:-1], SH_C0),
        -SH_C1 * d[..., 1],
        SH_C1 * d[..., 2],
        -SH_C1 * d[..., 0],
    ], axis=-1)
    raw = np.einsum("...ck,...k->...c", sh, basis)
    return np.maximum(raw + 0.5, 0.0)


def sh_from_color(rgb: np.ndarray) -> np.ndarray:
    """DC-only SH coefficients whose eval_sh equals `rgb` from any direction.

    Inverts the +0.5 shift; valid for rgb in [0, 1] where the clamp is
    inactive.
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    sh = np.zeros(rgb.shape[:-1] + (3, 4))
    sh[..., :, 0] = (rgb - 0.5) / SH_C0
    return sh


def opacity_to_logit(opacity):
    o = np.asarray(opacity, dtype=np.float64)
    return np.log(o / (1.0 - o))


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


@dataclass
class Gaussian3D:
    """Single splat, mostly a convenience for constructing small scenes."""

    mean: np.ndarray
    log_scale: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0, 0, 0]))
    opacity_logit: float = 0.0
    sh: np.ndarray = field(default_factory=lambda: np.zeros((3, 4)))


@dataclass
class GaussianSet:
    """Struct-of-arrays splat collection.

    means (N,3), log_scales (N,3), rotations (N,4) unit quaternions wxyz,
    opacity_logits (N,), sh (N,3,4).
    """

    means: np.ndarray
    log_scales: np.ndarray
    rotations: np.ndarray
    opacity_logits: np.ndarray
    sh: np.ndarray

    def __post_init__(self):
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.log_scales = np.atleast_2d(np.asarray(self.log_scales, dtype=np.float64))
        self.rotations = np.atleast_2d(np.asarray(self.rotations, dtype=np.float64))
        self.opacity_logits = np.atleast_1d(np.asarray(self.opacity_logits, dtype=np.float64))
        self.sh = np.asarray(self.sh, dtype=np.float64).reshape(-1, 3, 4)
        n = len(self.means)
        if not (len(self.log_scales) == len(self.rotations)
                == len(self.opacity_logits) == len(self.sh) == n):
            raise ValueError("GaussianSet arrays have mismatched lengths")

    def __len__(self) -> int:
        return len(self.means)

    @staticmethod
    def empty() -> "GaussianSet":
        return GaussianSet(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 4)),
                           np.zeros(0), np.zeros((0, 3, 4)))

    @staticmethod
    def from_gaussians(gaussians) -> "GaussianSet":
        if not gaussians:
            return GaussianSet.empty()
        return GaussianSet(
            np.stack([g.mean for g in gaussians]),
            np.stack([g.log_scale for g in gaussians]),
            np.stack([g.rotation for g in gaussians]),
            np.array([g.opacity_logit for g in gaussians]),
            np.stack([g.sh for g in gaussians]),
        )

    def gaussian(self, i: int) -> Gaussian3D:
        return Gaussian3D(self.means[i].copy(), self.log_scales[i].copy(),
                          self.rotations[i].copy(), float(self.opacity_logits[i]),
                          self.sh[i].copy())

    def copy(self) -> "GaussianSet":
        return GaussianSet(self.means.copy(), self.log_scales.copy(),
                           self.rotations.copy(), self.opacity_logits.copy(),
                           self.sh.copy())

    def subset(self, idx) -> "GaussianSet":
        return GaussianSet(self.means[idx], self.log_scales[idx],
                           self.rotations[idx], self.opacity_logits[idx], self.sh[idx])

    @staticmethod
    def concatenate(*sets: "GaussianSet") -> "GaussianSet":
        sets = [s for s in sets if len(s) > 0]
        if not sets:
            return GaussianSet.empty()
        return GaussianSet(
            np.concatenate([s.means for s in sets]),
            np.concatenate([s.log_scales for s in sets]),
            np.concatenate([s.rotations for s in sets]),
            np.concatenate([s.opacity_logits for s in sets]),
            np.concatenate([s.sh for s in sets]),
        )

    def scales(self) -> np.ndarray:
        return np.exp(self.log_scales)

    def opacities(self) -> np.ndarray:
        return sigmoid(self.opacity_logits)

    def rotation_matrices(self) -> np.ndarray:
        return quat_to_matrix(quat_normalize(self.rotations))

    def covariances(self) -> np.ndarray:
        """World-frame covariances R diag(s^2) R^T, shape (N, 3, 3)."""
        rot = self.rotation_matrices()
        s2 = np.exp(2.0 * self.log_scales)
        return np.einsum("nij,nj,nkj->nik", rot, s2, rot)

    def colors(self, view_dirs: np.ndarray) -> np.ndarray:
        return eval_sh(self.sh, view_dirs)

    def validate(self) -> None:
        if not np.all(np.isfinite(self.means)):
            raise ValueError("non-finite means")
        if not np.all(np.isfinite(np.exp(self.log_scales))):
            raise ValueError("non-finite scales")
        norms = np.linalg.norm(self.rotations, axis=1)
        if len(self) and not np.allclose(norms, 1.0, atol=1e-6):
            raise ValueError("quaternions not unit norm")

    # -- PLY serialization -------------------------------------------------

    def save_ply(self, path) -> None:
        n = len(self)
        header = (
            "ply\nformat binary_little_endian 1.0\n"
            f"element vertex {n}\n"
            + "".join(f"property float {f}\n" for f in _PLY_FIELDS)
            + "end_header\n"
        )
        rec = np.empty((n, len(_PLY_FIELDS)), dtype="<f4")
        rec[:, 0:3] = self.means
        rec[:, 3:6] = self.sh[:, :, 0]
        # f_rest is channel-major: the 3 degree-1 coeffs for R, then G, then B
        rec[:, 6:15] = self.sh[:, :, 1:4].reshape(n, 9)
        rec[:, 15] = self.opacity_logits
        rec[:, 16:19] = self.log_scales
        rec[:, 19:23] = self.rotations
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(rec.tobytes())

    @staticmethod
    def load_ply(path) -> "GaussianSet":
        with open(path, "rb") as fh:
            data = fh.read()
        end = data.find(b"end_header\n")
        if end < 0:
            raise ValueError(f"{path}: not a PLY file (no end_header)")
        header = data[:end].decode("ascii").splitlines()
        if not header or header[0].strip() != "ply":
            raise ValueError(f"{path}: missing ply magic")
        n = None
        fields = []
        for line in header:
            parts = line.split()
            if parts[:2] == ["element", "vertex"]:
                n = int(parts[2])
            elif parts and parts[0] == "property":
                if parts[1] != "float":
                    raise ValueError(f"{path}: unsupported property type {parts[1]}")
                fields.append(parts[2])
        if n is None:
            raise ValueError(f"{path}: no vertex element")
        body = np.frombuffer(data[end + len(b"end_header\n"):],
                             dtype="<f4", count=n * len(fields)).reshape(n, len(fields))
        col = {name: i for i, name in enumerate(fields)}
        missing = [f for f in _PLY_FIELDS if f not in col]
        if missing:
            raise ValueError(f"{path}: missing splat fields {missing}")
        sh = np.zeros((n, 3, 4))
        sh[:, :, 0] = body[:, [col[f"f_dc_{i}"] for i in range(3)]]
        sh[:, :, 1:4] = body[:, [col[f"f_rest_{i}"] for i in range(9)]].reshape(n, 3, 3)
        return GaussianSet(
            body[:, [col["x"], col["y"], col["z"]]],
            body[:, [col[f"scale_{i}"] for i in range(3)]],
            quat_normalize(body[:, [col[f"rot_{i}"] for i in range(4)]]),
            body[:, col["opacity"]],
            sh,
        )
