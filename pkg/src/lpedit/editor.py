"""Inference pipeline and quantitative evaluation.

``edit`` runs a degraded grayscale image with its mask and scribbles
through the inpainting and colorization networks, padding to the
stride the U-Nets need and cropping back. ``evaluate`` implements the
validation protocol: grayscale, 256x256, additive noise, a pseudo
mask, scribbles drawn from the ground truth, then mean PSNR/SSIM.
"""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F

from . import datapipe
from .datapipe import ScribbleMap

logger = logging.getLogger(__name__)

STRIDE = 16

# Full-scale reference from the source system; not reproducible at desk
# scale, recorded in evaluation reports for context.
REFERENCE_PSNR = 28.02
REFERENCE_SSIM = 0.9408


@dataclass
class EditRequest:
    gray: torch.Tensor  # 1xHxW
    mask: torch.Tensor  # 1xHxW binary
    scribbles: ScribbleMap

    def __post_init__(self):
        shapes = {
            "gray": tuple(self.gray.shape[-2:]),
            "mask": tuple(self.mask.shape[-2:]),
            "hint": tuple(self.scribbles.hint.shape[-2:]),
            "indicator": tuple(self.scribbles.indicator.shape[-2:]),
        }
        if len(set(shapes.values())) != 1:
            raise ValueError(f"request fields disagree on spatial size: {shapes}")


def _pad_reflect(t: torch.Tensor, stride: int = STRIDE) -> torch.Tensor:
    h, w = t.shape[-2:]
    ph = (stride - h % stride) % stride
    pw = (stride - w % stride) % stride
    if ph == 0 and pw == 0:
        return t
    return F.pad(t.unsqueeze(0), (0, pw, 0, ph), mode="reflect").squeeze(0)


def edit(request: EditRequest, c: torch.nn.Module, r: torch.nn.Module) -> torch.Tensor:
    """Inpaint then colorize: R(C(gray * mask, mask), scribbles)."""
    h, w = request.gray.shape[-2:]
    gray = _pad_reflect(request.gray * request.mask)
    mask = _pad_reflect(request.mask)
    hint = _pad_reflect(request.scribbles.hint)
    ind = _pad_reflect(request.scribbles.indicator)
    with torch.no_grad():
        y = c(gray.unsqueeze(0), mask.unsqueeze(0))
        z = r(y, hint.unsqueeze(0), ind.unsqueeze(0))
    return z.squeeze(0)[..., :h, :w].clamp(0.0, 1.0)


def psnr(a: torch.Tensor, b: torch.Tensor) -> float:
    """Peak signal-to-noise ratio with peak 1.0; inf for identical inputs."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    mse = float(((a.double() - b.double()) ** 2).mean())
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def ssim(a: torch.Tensor, b: torch.Tensor) -> float:
    """Single-scale SSIM: Gaussian window 11/1.5, K1=0.01, K2=0.03,
    dynamic range 1; per channel, then averaged."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    c1, c2 = 0.01**2, 0.03**2
    window = torch.from_numpy(_gaussian_window()).double()[None, None]
    x = a.double().reshape(-1, 1, *a.shape[-2:])
    y = b.double().reshape(-1, 1, *b.shape[-2:])
    mu_x = F.conv2d(x, window)
    mu_y = F.conv2d(y, window)
    var_x = F.conv2d(x * x, window) - mu_x**2
    var_y = F.conv2d(y * y, window) - mu_y**2
    cov = F.conv2d(x * y, window) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    return float((num / den).mean())


def resize_center_crop(image: torch.Tensor, size: int) -> torch.Tensor:
    """Shortest side to ``size`` (bilinear), then center crop."""
    h, w = image.shape[-2:]
    scale = size / min(h, w)
    nh, nw = max(size, round(h * scale)), max(size, round(w * scale))
    resized = F.interpolate(image.unsqueeze(0), size=(nh, nw), mode="bilinear", align_corners=False).squeeze(0)
    top, left = (nh - size) // 2, (nw - size) // 2
    return resized[..., top : top + size, left : left + size]


def _pseudo_mask(size: int, rng: torch.Generator, templates=()) -> torch.Tensor:
    if templates:
        return datapipe.crop_mask_template(templates, size, rng)
    # fallback crack: a few random thin rectangles
    mask = torch.ones(1, size, size)
    for _ in range(3):
        top = int(torch.randint(0, size - 2, (1,), generator=rng))
        left = int(torch.randint(0, size // 2, (1,), generator=rng))
        length = int(torch.randint(size // 4, size // 2, (1,), generator=rng))
        mask[:, top : top + 2, left : left + length] = 0.0
    return mask


def evaluate(
    dataset_dir,
    c: torch.nn.Module,
    r: torch.nn.Module,
    size: int = 256,
    sigma: float = 0.05,
    scribbles: int = 30,
    stroke_size: int = 5,
    seed: int = 0,
    mask_templates=(),
    report_path: Optional[Path] = None,
    max_images: Optional[int] = None,
) -> dict:
    """Degrade each validation image per the protocol, edit it, and
    accumulate mean PSNR/SSIM into a JSON-ready report."""
    paths = sorted(
        p for p in Path(dataset_dir).iterdir() if p.suffix.lower() in datapipe.IMAGE_SUFFIXES
    )
    if max_images is not None:
        paths = paths[:max_images]
    if not paths:
        raise ValueError(f"no images found in {dataset_dir}")
    rng = torch.Generator().manual_seed(seed)
    per_image = []
    for path in paths:
        z = resize_center_crop(datapipe.load_image(path), size)
        x = datapipe.to_grayscale(z)
        degraded = datapipe.add_gaussian_noise(x, sigma, rng)
        mask = _pseudo_mask(size, rng, mask_templates)
        hints = datapipe.sample_scribbles(z, scribbles, stroke_size, rng)
        z_hat = edit(EditRequest(gray=degraded, mask=mask, scribbles=hints), c, r)
        p, s = psnr(z_hat, z), ssim(z_hat, z)
        per_image.append({"id": path.name, "psnr": "inf" if math.isinf(p) else p, "ssim": s})
    finite = [e["psnr"] for e in per_image if e["psnr"] != "inf"]
    mean_psnr = float(np.mean(finite)) if finite else "inf"
    mean_ssim = float(np.mean([e["ssim"] for e in per_image]))
    report = {
        "config": {
            "size": size,
            "sigma": sigma,
            "scribbles": scribbles,
            "stroke_size": stroke_size,
            "seed": seed,
            "full_scale_reference": {"psnr": REFERENCE_PSNR, "ssim": REFERENCE_SSIM},
        },
        "per_image": per_image,
        "mean_psnr": mean_psnr,
        "mean_ssim": mean_ssim,
    }
    if report_path is not None:
        Path(report_path).write_text(json.dumps(report, indent=2))
    logger.info("evaluated %d images: PSNR %s, SSIM %.4f", len(per_image), mean_psnr, mean_ssim)
    return report


def format_report(report: dict) -> str:
    """Text table shaped like the quantitative-comparison summary row."""
    lines = [
        f"{'Method':<24}{'PSNR':>10}{'SSIM':>10}",
        f"{'Full-scale reference':<24}{REFERENCE_PSNR:>10.2f}{REFERENCE_SSIM:>10.4f}",
    ]
    mp = report["mean_psnr"]
    mp_str = "inf" if mp == "inf" else f"{mp:.2f}"
    lines.append(f"{'This run':<24}{mp_str:>10}{report['mean_ssim']:>10.4f}")
    return "\n".join(lines)
