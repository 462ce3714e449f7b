"""HTTP inference API.

Endpoints: POST /v1/edit (multipart image + optional mask PNG and
scribble JSON, returns PNG), GET /v1/health, GET /v1/models. Models
load once at startup and are treated as immutable; a bounded
semaphore caps in-flight inferences.
"""

import io
import json
import threading
import time
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import torch
from fastapi import FastAPI, File, Form, Response, UploadFile
from fastapi.responses import JSONResponse
from PIL import Image

from . import editor
from .datapipe import ScribbleMap, to_grayscale

DEFAULT_PORT = 8787
DEFAULT_MAX_SIDE = 2048
DEFAULT_WORKERS = 4


@dataclass
class ScribbleStroke:
    """Wire form of one color hint: a filled circle."""

    x: int
    y: int
    radius: int
    rgb: List[int]

    def validate(self, width: int, height: int, index: int) -> None:
        if not (0 <= self.x < width and 0 <= self.y < height):
            raise ValueError(f"stroke {index} at ({self.x}, {self.y}) is outside the image")
        if self.radius < 1:
            raise ValueError(f"stroke {index} radius must be >= 1, got {self.radius}")
        if len(self.rgb) != 3 or not all(0 <= v <= 255 for v in self.rgb):
            raise ValueError(f"stroke {index} rgb must be three 8-bit values, got {self.rgb}")


def rasterize_strokes(strokes: List[ScribbleStroke], height: int, width: int) -> ScribbleMap:
    """Filled circles -> hint + indicator maps."""
    hint = torch.zeros(3, height, width)
    indicator = torch.zeros(1, height, width)
    yy, xx = np.mgrid[0:height, 0:width]
    for s in strokes:
        disk = torch.from_numpy(((xx - s.x) ** 2 + (yy - s.y) ** 2 <= s.radius**2))
        color = torch.tensor([v / 255.0 for v in s.rgb])
        hint[:, disk] = color[:, None]
        indicator[:, disk] = 1.0
    return ScribbleMap(hint=hint, indicator=indicator)


class ModelBundle:
    """Holds the frozen inpainting and colorization networks plus
    checkpoint identity exposed by /v1/models."""

    def __init__(self, c: torch.nn.Module, r: torch.nn.Module, arch_hash: str = "", config: Optional[dict] = None):
        self.c = c.eval()
        self.r = r.eval()
        self.arch_hash = arch_hash
        self.config = config or {}

    @classmethod
    def from_checkpoints(cls, checkpoint_c, checkpoint_r) -> "ModelBundle":
        from . import trainer
        from .models import ColorNet, InpaintNet

        state_c = trainer.load_checkpoint(checkpoint_c)
        state_r = trainer.load_checkpoint(checkpoint_r)
        cfg = trainer.TrainConfig(**state_c["config"])
        c = InpaintNet(width=cfg.unet_width)
        r = ColorNet(width=trainer.TrainConfig(**state_r["config"]).unet_width)
        trainer.restore_networks(state_c["tensors"], {"C": c})
        trainer.restore_networks(state_r["tensors"], {"R": r})
        return cls(c, r, arch_hash=state_c["arch_hash"], config=state_c["config"])


def _png_to_tensor(data: bytes, mode: str) -> torch.Tensor:
    img = Image.open(io.BytesIO(data)).convert(mode)
    arr = np.asarray(img, dtype=np.float32) / 255.0
    if arr.ndim == 2:
        arr = arr[None]
    else:
        arr = arr.transpose(2, 0, 1)
    return torch.from_numpy(arr.copy())


def _tensor_to_png(t: torch.Tensor) -> bytes:
    arr = (t.clamp(0, 1).numpy() * 255.0).round().astype(np.uint8).transpose(1, 2, 0)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def create_app(bundle: Optional[ModelBundle] = None, max_side: int = DEFAULT_MAX_SIDE, workers: int = DEFAULT_WORKERS) -> FastAPI:
    app = FastAPI(title="lpedit inference service")
    app.state.bundle = bundle
    app.state.max_side = max_side
    app.state.gate = threading.Semaphore(workers)

    @app.get("/v1/health")
    def health():
        if app.state.bundle is None:
            return JSONResponse({"status": "loading"}, status_code=503)
        return {"status": "ok", "checkpoint_ids": [app.state.bundle.arch_hash]}

    @app.get("/v1/models")
    def models_info():
        if app.state.bundle is None:
            return JSONResponse({"status": "loading"}, status_code=503)
        return {"arch_hash": app.state.bundle.arch_hash, "config": app.state.bundle.config}

    @app.post("/v1/edit")
    def edit_endpoint(
        image: UploadFile = File(...),
        mask: Optional[UploadFile] = File(None),
        scribbles: Optional[str] = Form(None),
    ):
        if app.state.bundle is None:
            return JSONResponse({"error": "models not loaded"}, status_code=503)
        try:
            img = _png_to_tensor(image.file.read(), "RGB")
        except Exception:
            return JSONResponse({"error": "malformed image"}, status_code=400)
        _, h, w = img.shape
        if max(h, w) > app.state.max_side:
            return JSONResponse(
                {"error": f"image side {max(h, w)} exceeds limit {app.state.max_side}"},
                status_code=413,
            )
        gray = to_grayscale(img)
        if mask is not None:
            try:
                mask_t = (_png_to_tensor(mask.file.read(), "L") >= 0.5).float()
            except Exception:
                return JSONResponse({"error": "malformed mask"}, status_code=400)
            if mask_t.shape[-2:] != (h, w):
                return JSONResponse({"error": "mask size differs from image"}, status_code=400)
        else:
            mask_t = torch.ones(1, h, w)
        strokes: List[ScribbleStroke] = []
        if scribbles:
            try:
                raw = json.loads(scribbles)
                strokes = [ScribbleStroke(**item) for item in raw]
            except (json.JSONDecodeError, TypeError):
                return JSONResponse({"error": "malformed scribble JSON"}, status_code=400)
        for i, stroke in enumerate(strokes):
            try:
                stroke.validate(w, h, i)
            except ValueError as exc:
                return JSONResponse({"error": str(exc), "index": i}, status_code=422)
        hints = rasterize_strokes(strokes, h, w)
        request = editor.EditRequest(gray=gray, mask=mask_t, scribbles=hints)
        start = time.monotonic()
        with app.state.gate:
            result = editor.edit(request, app.state.bundle.c, app.state.bundle.r)
        elapsed_ms = (time.monotonic() - start) * 1000.0
        return Response(
            content=_tensor_to_png(result),
            media_type="image/png",
            headers={"X-Edit-Ms": f"{elapsed_ms:.1f}"},
        )

    return app


def serve(checkpoint_c, checkpoint_r, port: int = DEFAULT_PORT, max_side: int = DEFAULT_MAX_SIDE, workers: int = DEFAULT_WORKERS) -> None:
    import uvicorn

    bundle = ModelBundle.from_checkpoints(checkpoint_c, checkpoint_r)
    app = create_app(bundle, max_side=max_side, workers=workers)
    uvicorn.run(app, host="0.0.0.0", port=port)
