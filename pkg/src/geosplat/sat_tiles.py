"""Tiled-web-map client: slippy tile math, a write-once disk cache, and
north-up mosaic assembly at a requested ground resolution.

Providers are configured (URL template + optional API-key env var), never
hard-coded: imagery licensing forbids redistribution, so every user fetches
against their own account. Mosaics are assembled in Mercator pixel space;
the meters-per-pixel variation across a few-hundred-meter window is
negligible below |lat| ~ 70 degrees.
"""

from __future__ import annotations

import io
import json
import math
import os
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .geodesy import EARTH_RADIUS_M, GeoPose, latlon_to_mercator

TILE_SIZE = 256
# equatorial ground resolution of zoom 0, meters per pixel
ZOOM0_RESOLUTION = 2 * math.pi * EARTH_RADIUS_M / TILE_SIZE


class TileId(NamedTuple):
    zoom: int
    x: int
    y: int


class FetchError(RuntimeError):
    def __init__(self, tile: TileId, message: str):
        super().__init__(f"tile {tile.zoom}/{tile.x}/{tile.y}: {message}")
        self.tile = tile


class DecodeError(RuntimeError):
    pass


@dataclass(frozen=True)
class ProviderConfig:
    """Tile source: url_template contains {z}/{x}/{y} (and optionally
    {api_key}, filled from the api_key_env environment variable)."""

    name: str
    url_template: str
    max_zoom: int = 19
    api_key_env: str | None = None
    extension: str = "png"

    def __post_init__(self):
        for ph in ("{z}", "{x}", "{y}"):
            if ph not in self.url_template:
                raise ValueError(f"url_template missing {ph} placeholder")

    def tile_url(self, tile: TileId) -> str:
        url = self.url_template.format(z=tile.zoom, x=tile.x, y=tile.y,
                                       api_key="{api_key}")
        if "{api_key}" in url:
            if not self.api_key_env:
                raise ValueError(f"provider {self.name} needs api_key_env for {{api_key}}")
            key = os.environ.get(self.api_key_env)
            if not key:
                raise ValueError(f"environment variable {self.api_key_env} is not set")
            url = url.replace("{api_key}", key)
        return url

    @staticmethod
    def from_file(path, name: str | None = None) -> "ProviderConfig":
        """Load from TOML or JSON. A file may hold one provider (top-level
        keys) or several ([providers.<name>] tables); pass `name` to pick."""
        path = Path(path)
        if path.suffix == ".json":
            data = json.loads(path.read_text())
        else:
            try:
                import tomllib
            except ModuleNotFoundError:
                import tomli as tomllib
            data = tomllib.loads(path.read_text())
        if "providers" in data:
            table = data["providers"]
            if name is None:
                if len(table) != 1:
                    raise ValueError(f"{path} defines {sorted(table)}; pass a provider name")
                name = next(iter(table))
            if name not in table:
                raise ValueError(f"{path} has no provider {name!r} (found {sorted(table)})")
            entry = dict(table[name])
            entry.setdefault("name", name)
        else:
            entry = dict(data)
            entry.setdefault("name", name or path.stem)
        return ProviderConfig(**entry)


@dataclass
class SatMosaic:
    """Square north-up (unless rotated) satellite image.

    pixels: (H, W, 3) float32 in [0, 1]; center: GeoPose of the mosaic
    center; resolution: pixels per meter of ground distance.
    """

    pixels: np.ndarray
    center: GeoPose
    resolution: float

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float32)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError("mosaic pixels must be (H, W, 3)")
        if self.pixels.shape[0] != self.pixels.shape[1]:
            raise ValueError("mosaic must be square")
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")

    @property
    def size(self) -> int:
        return self.pixels.shape[0]

    @property
    def extent_m(self) -> float:
        return self.size / self.resolution

    def save(self, path) -> None:
        from PIL import Image
        Image.fromarray((np.clip(self.pixels, 0, 1) * 255).round().astype(np.uint8)).save(path)
        sidecar = {"resolution_ppm": self.resolution, "extent_m": self.extent_m,
                   "center": {"lat": self.center.latitude, "lon": self.center.longitude,
                              "heading": self.center.heading}}
        with open(str(path) + ".json", "w") as fh:
            json.dump(sidecar, fh, indent=2)

    @staticmethod
    def load(path) -> "SatMosaic":
        from PIL import Image
        pixels = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32) / 255.0
        with open(str(path) + ".json") as fh:
            sidecar = json.load(fh)
        c = sidecar["center"]
        return SatMosaic(pixels, GeoPose(c["lat"], c["lon"], c.get("heading", 0.0)),
                         sidecar["resolution_ppm"])


# ---------------------------------------------------------------------------
# slippy tile math


def tile_index(pose: GeoPose, zoom: int) -> TileId:
    """Standard slippy-map tile containing the pose."""
    if zoom < 0:
        raise ValueError("zoom must be >= 0")
    latlon_to_mercator(pose)  # validates the Mercator band
    n = 1 << zoom
    x = math.floor((pose.longitude + 180.0) / 360.0 * n)
    lat = math.radians(pose.latitude)
    y = math.floor((1.0 - math.asinh(math.tan(lat)) / math.pi) / 2.0 * n)
    return TileId(zoom, min(max(x, 0), n - 1), min(max(y, 0), n - 1))


def tile_bounds(tile: TileId) -> tuple[float, float, float, float]:
    """(lon_west, lat_south, lon_east, lat_north) of the tile."""
    n = 1 << tile.zoom

    def lat_of(y):
        return math.degrees(math.atan(math.sinh(math.pi * (1 - 2 * y / n))))

    lon_w = tile.x / n * 360.0 - 180.0
    lon_e = (tile.x + 1) / n * 360.0 - 180.0
    return lon_w, lat_of(tile.y + 1), lon_e, lat_of(tile.y)


def ground_resolution(lat_deg: float, zoom: int) -> float:
    """Native tile ground resolution at a latitude, meters per pixel."""
    return ZOOM0_RESOLUTION * math.cos(math.radians(lat_deg)) / (1 << zoom)


def select_zoom(lat_deg: float, target_resolution: float, max_zoom: int | None = None) -> int:
    """Smallest zoom whose native resolution meets target_resolution px/m."""
    if target_resolution <= 0:
        raise ValueError("target_resolution must be positive")
    z = 0
    while ground_resolution(lat_deg, z) > 1.0 / target_resolution:
        z += 1
        if max_zoom is not None and z >= max_zoom:
            return max_zoom
    return z


def global_pixel(pose: GeoPose, zoom: int) -> tuple[float, float]:
    """Continuous global Mercator pixel coordinates at a zoom level."""
    n = TILE_SIZE * (1 << zoom)
    px = (pose.longitude + 180.0) / 360.0 * n
    lat = math.radians(pose.latitude)
    py = (1.0 - math.asinh(math.tan(lat)) / math.pi) / 2.0 * n
    return px, py


# ---------------------------------------------------------------------------
# disk cache and fetching


class TileCache:
    """Write-once tile cache: <root>/<provider>/<z>/<x>/<y>.<ext>.

    Writes go to a temp file in the target directory followed by an atomic
    rename, so concurrent writers of the same tile produce one valid entry.
    """

    def __init__(self, root):
        self.root = Path(root)

    def path(self, provider: ProviderConfig, tile: TileId) -> Path:
        return (self.root / provider.name / str(tile.zoom) / str(tile.x)
                / f"{tile.y}.{provider.extension}")

    def get(self, provider: ProviderConfig, tile: TileId) -> bytes | None:
        p = self.path(provider, tile)
        return p.read_bytes() if p.exists() else None

    def put(self, provider: ProviderConfig, tile: TileId, data: bytes) -> None:
        p = self.path(provider, tile)
        if p.exists():
            return
        p.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=p.parent, suffix=".part")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, p)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def fetch_tile(provider: ProviderConfig, tile: TileId, cache: TileCache | None = None,
               session=None, retries: int = 3, backoff_s: float = 0.25) -> bytes:
    """Tile bytes, from cache when present; retried HTTP otherwise."""
    if cache is not None:
        data = cache.get(provider, tile)
        if data is not None:
            return data
    if session is None:
        import requests
        session = requests
    url = provider.tile_url(tile)
    last = None
    for attempt in range(retries):
        try:
            resp = session.get(url, timeout=30)
            if resp.status_code == 200:
                if cache is not None:
                    cache.put(provider, tile, resp.content)
                return resp.content
            last = f"HTTP {resp.status_code}"
        except Exception as exc:  # noqa: BLE001 - network errors vary by backend
            last = str(exc)
        if attempt + 1 < retries:
            time.sleep(backoff_s * 2**attempt)
    raise FetchError(tile, f"failed after {retries} attempts: {last}")


def decode_tile(data: bytes) -> np.ndarray:
    from PIL import Image
    try:
        img = Image.open(io.BytesIO(data)).convert("RGB")
    except Exception as exc:
        raise DecodeError(f"cannot decode tile image: {exc}") from exc
    return np.asarray(img, dtype=np.float32) / 255.0


def bilinear_sample(image: np.ndarray, x: np.ndarray, y: np.ndarray,
                    fill: float = 0.0) -> np.ndarray:
    """Sample image (H, W, C) at continuous (x, y); outside -> fill."""
    h, w = image.shape[:2]
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]

    def grab(xi, yi):
        inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        out = np.full(xi.shape + (image.shape[2],), fill, dtype=np.float64)
        out[inside] = image[yi[inside], xi[inside]]
        return out

    top = grab(x0, y0) * (1 - fx) + grab(x0 + 1, y0) * fx
    bot = grab(x0, y0 + 1) * (1 - fx) + grab(x0 + 1, y0 + 1) * fx
    return top * (1 - fy) + bot * fy


def fetch_mosaic(center: GeoPose, resolution: float, size_px: int,
                 provider: ProviderConfig, cache_dir=None, session=None,
                 max_in_flight: int = 8, retries: int = 3,
                 backoff_s: float = 0.25) -> SatMosaic:
    """North-up mosaic of size_px x size_px at `resolution` px/m, centered
    on `center` in Mercator pixel space.

    Tiles are fetched concurrently (bounded by max_in_flight), cached under
    cache_dir, and never re-fetched once cached. Output pixel
    (size/2, size/2) lands exactly on the center's Mercator position.
    """
    cache = TileCache(cache_dir) if cache_dir is not None else None
    zoom = select_zoom(center.latitude, resolution, provider.max_zoom)
    cpx, cpy = global_pixel(center, zoom)
    native = ground_resolution(center.latitude, zoom)
    step = 1.0 / (resolution * native)  # source px per output px

    idx = np.arange(size_px, dtype=np.float64) - size_px / 2.0
    src_x = cpx + idx * step
    src_y = cpy + idx * step

    n = 1 << zoom
    tx0 = max(int(math.floor(src_x.min() / TILE_SIZE)), 0)
    tx1 = min(int(math.floor(src_x.max() / TILE_SIZE)), n - 1)
    ty0 = max(int(math.floor(src_y.min() / TILE_SIZE)), 0)
    ty1 = min(int(math.floor(src_y.max() / TILE_SIZE)), n - 1)
    tiles = [TileId(zoom, tx, ty)
             for ty in range(ty0, ty1 + 1) for tx in range(tx0, tx1 + 1)]

    buffer = np.zeros(((ty1 - ty0 + 1) * TILE_SIZE, (tx1 - tx0 + 1) * TILE_SIZE, 3),
                      dtype=np.float32)

    def fetch_one(tile: TileId):
        return tile, decode_tile(fetch_tile(provider, tile, cache, session,
                                            retries, backoff_s))

    with ThreadPoolExecutor(max_workers=max(1, max_in_flight)) as pool:
        for tile, img in pool.map(fetch_one, tiles):
            r0 = (tile.y - ty0) * TILE_SIZE
            c0 = (tile.x - tx0) * TILE_SIZE
            buffer[r0:r0 + TILE_SIZE, c0:c0 + TILE_SIZE] = img

    gx, gy = np.meshgrid(src_x - tx0 * TILE_SIZE, src_y - ty0 * TILE_SIZE, indexing="xy")
    pixels = bilinear_sample(buffer, gx, gy).astype(np.float32)
    return SatMosaic(pixels, center, resolution)


def rotate_to_heading(mosaic: SatMosaic, heading: float) -> SatMosaic:
    """Rotate a north-up mosaic so that a camera with the given heading
    looks toward decreasing row ("up"). Bilinear; out-of-source black."""
    size = mosaic.size
    c = (size / 2.0, size / 2.0)
    h = math.radians(heading)
    cos_h, sin_h = math.cos(h), math.sin(h)
    j, i = np.meshgrid(np.arange(size, dtype=np.float64),
                       np.arange(size, dtype=np.float64), indexing="xy")
    du = j - c[0]
    dv = i - c[1]
    src_x = c[0] + cos_h * du - sin_h * dv
    src_y = c[1] + sin_h * du + cos_h * dv
    pixels = bilinear_sample(mosaic.pixels, src_x, src_y).astype(np.float32)
    center = replace(mosaic.center, heading=(mosaic.center.heading + heading) % 360.0)
    return SatMosaic(pixels, center, mosaic.resolution)


def resample_to_extent(mosaic: SatMosaic, extent_m: float) -> SatMosaic:
    """Same pixel count covering a different ground extent (bilinear)."""
    if extent_m <= 0:
        raise ValueError("extent must be positive")
    size = mosaic.size
    c = (size / 2.0, size / 2.0)
    factor = extent_m / mosaic.extent_m
    j, i = np.meshgrid(np.arange(size, dtype=np.float64),
                       np.arange(size, dtype=np.float64), indexing="xy")
    src_x = c[0] + (j - c[0]) * factor
    src_y = c[1] + (i - c[1]) * factor
    pixels = bilinear_sample(mosaic.pixels, src_x, src_y).astype(np.float32)
    return SatMosaic(pixels, mosaic.center, size / extent_m)
