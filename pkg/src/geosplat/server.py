"""HTTP service backing the interactive geoalignment tool.

Serves the sparse scene, the satellite mosaic, ground photos, and the
current planar alignment; the only mutating endpoint is POST /alignment,
which persists atomically to alignment.json. Handlers run threaded; the
alignment state is guarded by a single lock. All endpoints are
CORS-enabled so the browser UI can run from any origin.

Endpoints (JSON unless noted):
  GET  /scene            {points: [[x,y,z],...], images: [{name, pose}]}
  GET  /satellite        PNG bytes + X-Center-*/X-Resolution-Ppm headers
  GET  /ground/<name>    image bytes from the scene's images directory
  GET  /alignment        current Sim2Alignment
  POST /alignment        replace + persist the alignment
  GET  /project?space=sat|ground:<name>   projected 2D points
Everything else falls through to static files from the UI bundle dir.
"""

from __future__ import annotations

import io
import json
import mimetypes
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, unquote, urlparse

import numpy as np

from .colmap import SparseScene, camera_to_perspective
from .sat_tiles import SatMosaic
from .sim2 import Sim2Alignment, apply_sim2, export_alignment, load_alignment, save_alignment

MAX_UI_POINTS = 20_000
SUBSAMPLE_SEED = 0


class AlignmentService:
    """Server state: immutable scene + mosaic, mutable persisted alignment."""

    def __init__(self, scene: SparseScene, mosaic: SatMosaic,
                 alignment_path="alignment.json", images_dir=None, ui_dir=None,
                 max_points: int = MAX_UI_POINTS):
        self.scene = scene
        self.mosaic = mosaic
        self.alignment_path = Path(alignment_path)
        self.images_dir = Path(images_dir) if images_dir else None
        self.ui_dir = Path(ui_dir) if ui_dir else None
        self._lock = threading.Lock()
        self._alignment = (load_alignment(self.alignment_path)
                           if self.alignment_path.exists() else Sim2Alignment())

        pts = scene.points_array()
        if len(pts) > max_points:
            rng = np.random.default_rng(SUBSAMPLE_SEED)
            idx = np.sort(rng.choice(len(pts), size=max_points, replace=False))
            pts = pts[idx]
        self.points = pts

        # cache the PNG encoding of the mosaic once
        from PIL import Image
        buf = io.BytesIO()
        arr = (np.clip(mosaic.pixels, 0, 1) * 255).round().astype(np.uint8)
        Image.fromarray(arr).save(buf, format="PNG")
        self.mosaic_png = buf.getvalue()

    @property
    def alignment(self) -> Sim2Alignment:
        with self._lock:
            return self._alignment

    def set_alignment(self, data: dict) -> Sim2Alignment:
        alignment = Sim2Alignment.from_dict(data)
        with self._lock:
            self._alignment = alignment
            save_alignment(alignment, self.alignment_path)
        return alignment

    def scene_payload(self) -> dict:
        images = [{"name": img.name, "pose": img.pose().as_matrix().tolist()}
                  for img in sorted(self.scene.images.values(), key=lambda im: im.name)]
        return {"points": self.points.tolist(), "images": images}

    def project_satellite(self) -> dict:
        px = apply_sim2(self.alignment, self.points, self.mosaic)
        return {"space": "sat", "points": px.tolist()}

    def project_ground(self, name: str) -> dict:
        match = [img for img in self.scene.images.values() if img.name == name]
        if not match:
            raise KeyError(name)
        camera = camera_to_perspective(self.scene, match[0].id)
        cam_space = (self.points - camera.pose.translation) @ camera.pose.rotation
        in_front = cam_space[:, 2] > 0.01
        px = camera.project(self.points[in_front]) if np.any(in_front) else np.zeros((0, 2))
        return {"space": f"ground:{name}", "points": px.tolist()}

    def export_payload(self) -> dict:
        ref_name = sorted(img.name for img in self.scene.images.values())[0]
        ref = next(img for img in self.scene.images.values() if img.name == ref_name)
        pose, scale = export_alignment(self.alignment, self.mosaic, ref.camera_center())
        return {"lat": pose.latitude, "lon": pose.longitude,
                "heading": pose.heading, "scale": scale, "reference": ref_name}


def _make_handler(service: AlignmentService):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):  # keep test output quiet
            pass

        def _cors(self):
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")

        def _send(self, code, body: bytes, content_type: str, extra=None):
            self.send_response(code)
            self._cors()
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            for key, value in (extra or {}).items():
                self.send_header(key, value)
            self.end_headers()
            self.wfile.write(body)

        def _send_json(self, payload, code=200):
            self._send(code, json.dumps(payload).encode(), "application/json")

        def do_OPTIONS(self):
            self._send(204, b"", "text/plain")

        def do_GET(self):
            url = urlparse(self.path)
            path = unquote(url.path)
            try:
                if path == "/scene":
                    self._send_json(service.scene_payload())
                elif path == "/satellite":
                    m = service.mosaic
                    self._send(200, service.mosaic_png, "image/png", extra={
                        "X-Center-Lat": repr(m.center.latitude),
                        "X-Center-Lon": repr(m.center.longitude),
                        "X-Center-Heading": repr(m.center.heading),
                        "X-Resolution-Ppm": repr(m.resolution),
                        "X-Extent-M": repr(m.extent_m),
                    })
                elif path == "/alignment":
                    self._send_json(service.alignment.to_dict())
                elif path == "/export":
                    self._send_json(service.export_payload())
                elif path == "/project":
                    space = parse_qs(url.query).get("space", ["sat"])[0]
                    if space == "sat":
                        self._send_json(service.project_satellite())
                    elif space.startswith("ground:"):
                        self._send_json(service.project_ground(space[len("ground:"):]))
                    else:
                        self._send_json({"error": f"unknown space {space!r}"}, 400)
                elif path.startswith("/ground/"):
                    self._serve_ground(path[len("/ground/"):])
                else:
                    self._serve_static(path)
            except KeyError as exc:
                self._send_json({"error": f"not found: {exc}"}, 404)
            except Exception as exc:  # noqa: BLE001 - report, don't kill the thread
                self._send_json({"error": str(exc)}, 500)

        def do_POST(self):
            url = urlparse(self.path)
            if url.path != "/alignment":
                self._send_json({"error": "POST only supported on /alignment"}, 405)
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
                data = json.loads(self.rfile.read(length) or b"{}")
                alignment = service.set_alignment(data)
                self._send_json(alignment.to_dict())
            except (ValueError, TypeError) as exc:
                self._send_json({"error": str(exc)}, 400)

        def _serve_ground(self, name: str):
            if service.images_dir is None:
                self._send_json({"error": "no images directory configured"}, 404)
                return
            target = (service.images_dir / name).resolve()
            if not str(target).startswith(str(service.images_dir.resolve())) \
                    or not target.is_file():
                self._send_json({"error": f"no ground image {name!r}"}, 404)
                return
            ctype = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
            self._send(200, target.read_bytes(), ctype)

        def _serve_static(self, path: str):
            if service.ui_dir is None:
                self._send_json({"error": "no UI bundle configured"}, 404)
                return
            rel = path.lstrip("/") or "index.html"
            target = (service.ui_dir / rel).resolve()
            if not str(target).startswith(str(service.ui_dir.resolve())) or not target.is_file():
                self._send_json({"error": f"not found: {path}"}, 404)
                return
            ctype = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
            self._send(200, target.read_bytes(), ctype)

    return Handler


def create_server(service: AlignmentService, port: int = 0,
                  host: str = "127.0.0.1") -> ThreadingHTTPServer:
    """Bound (not yet serving) HTTP server; port 0 picks a free port."""
    try:
        return ThreadingHTTPServer((host, port), _make_handler(service))
    except OSError as exc:
        raise OSError(f"cannot bind {host}:{port}: {exc}") from exc


def serve_align(scene_dir, mosaic_path, port: int = 8040, images_dir=None,
                alignment_path=None, ui_dir=None, host: str = "127.0.0.1") -> None:
    """Load the scene + mosaic and serve until interrupted."""
    from .colmap import parse_sparse
    scene = parse_sparse(scene_dir)
    mosaic = SatMosaic.load(mosaic_path)
    if alignment_path is None:
        alignment_path = Path(scene_dir) / "alignment.json"
    service = AlignmentService(scene, mosaic, alignment_path, images_dir, ui_dir)
    server = create_server(service, port, host)
    print(f"serving alignment tool on http://{host}:{server.server_address[1]} "
          f"({len(service.points)} points, {len(scene.images)} images)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
