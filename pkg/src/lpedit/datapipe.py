"""Dataset ingestion and degradation synthesis.

Loads unpaired clean/noisy folders, crops patches, synthesizes masks
from crack templates, adds noise through the frozen noise generator
plus optional Gaussian noise, and samples color scribble hints from
the ground truth. Everything is deterministic given a seeded
generator; prefetch workers derive independent generators from
(global_seed, worker_id, epoch).
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import torch
from PIL import Image

logger = logging.getLogger(__name__)

LUMA_WEIGHTS = (0.299, 0.587, 0.114)  # BT.601
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}


@dataclass
class ScribbleMap:
    """Color hints: ``hint`` is 3xHxW in [0,1], zero off-stroke;
    ``indicator`` is 1xHxW and binary."""

    hint: torch.Tensor
    indicator: torch.Tensor


@dataclass
class SamplePair:
    """One synthesized training sample; field names follow the pipeline:
    clean color -> grayscale -> degraded -> masked, plus guidance."""

    clean_color: torch.Tensor
    clean_gray: torch.Tensor
    degraded: torch.Tensor
    masked: torch.Tensor
    mask: torch.Tensor
    scribbles: ScribbleMap


@dataclass
class SampleConfig:
    crop: int = 256
    noise_sigma: float = 0.05
    max_scribbles: int = 30
    stroke_size: int = 5
    mask_templates: List[torch.Tensor] = field(default_factory=list)


def to_grayscale(rgb: torch.Tensor) -> torch.Tensor:
    """BT.601 luma; 3-channel in, 1-channel out."""
    if rgb.shape[0] != 3:
        raise ValueError(f"expected 3 channels, got {rgb.shape[0]}")
    w = torch.tensor(LUMA_WEIGHTS, dtype=rgb.dtype, device=rgb.device)
    return torch.einsum("c,chw->hw", w, rgb).unsqueeze(0)


def random_crop(image: torch.Tensor, size: int, rng: torch.Generator) -> torch.Tensor:
    """Uniform random size x size patch; no resizing, so low-level
    statistics are untouched."""
    h, w = image.shape[-2], image.shape[-1]
    if h < size or w < size:
        raise ValueError(f"image {h}x{w} smaller than crop size {size}")
    top = int(torch.randint(0, h - size + 1, (1,), generator=rng))
    left = int(torch.randint(0, w - size + 1, (1,), generator=rng))
    return image[..., top : top + size, left : left + size]


def apply_mask(degraded: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Elementwise product; mask pixels at 0 mark cracks."""
    if degraded.shape[-2:] != mask.shape[-2:]:
        raise ValueError(
            f"image {tuple(degraded.shape)} and mask {tuple(mask.shape)} sizes differ"
        )
    return degraded * mask


def add_gaussian_noise(x: torch.Tensor, sigma: float, rng: torch.Generator) -> torch.Tensor:
    """I.i.d. additive Gaussian noise, clamped back to [0,1]."""
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if sigma == 0:
        return x
    noise = torch.empty_like(x).normal_(0.0, sigma, generator=rng)
    return (x + noise).clamp(0.0, 1.0)


def sample_scribbles(
    color_gt: torch.Tensor, count: int, stroke_size: int, rng: torch.Generator
) -> ScribbleMap:
    """Drop ``count`` filled squares at uniform locations, each carrying
    the ground-truth color at its center. Strokes may overlap."""
    if count < 0:
        raise ValueError(f"scribble count must be nonnegative, got {count}")
    _, h, w = color_gt.shape
    hint = torch.zeros_like(color_gt)
    indicator = torch.zeros(1, h, w, dtype=color_gt.dtype, device=color_gt.device)
    for _ in range(count):
        top = int(torch.randint(0, h - stroke_size + 1, (1,), generator=rng))
        left = int(torch.randint(0, w - stroke_size + 1, (1,), generator=rng))
        cy, cx = top + stroke_size // 2, left + stroke_size // 2
        color = color_gt[:, cy, cx]
        hint[:, top : top + stroke_size, left : left + stroke_size] = color[:, None, None]
        indicator[:, top : top + stroke_size, left : left + stroke_size] = 1.0
    return ScribbleMap(hint=hint, indicator=indicator)


def crop_mask_template(
    templates: Sequence[torch.Tensor], size: int, rng: torch.Generator
) -> torch.Tensor:
    """Pick one template uniformly, crop it, and binarize at 0.5."""
    if len(templates) == 0:
        raise ValueError("mask template list is empty")
    idx = int(torch.randint(0, len(templates), (1,), generator=rng))
    patch = random_crop(templates[idx], size, rng)
    return (patch >= 0.5).to(patch.dtype)


def make_training_sample(
    clean_rgb: torch.Tensor,
    negan_g: Optional[torch.nn.Module],
    config: SampleConfig,
    rng: torch.Generator,
) -> SamplePair:
    """Full synthesis chain for one editing-stage sample."""
    z = random_crop(clean_rgb, config.crop, rng)
    x = to_grayscale(z)
    if negan_g is not None:
        with torch.no_grad():
            degraded = negan_g(x.unsqueeze(0)).squeeze(0).clamp(0.0, 1.0)
    else:
        degraded = x
    degraded = add_gaussian_noise(degraded, config.noise_sigma, rng)
    if config.mask_templates:
        mask = crop_mask_template(config.mask_templates, config.crop, rng)
    else:
        mask = torch.ones(1, config.crop, config.crop, dtype=x.dtype)
    masked = apply_mask(degraded, mask)
    count = int(torch.randint(0, config.max_scribbles + 1, (1,), generator=rng))
    scribbles = sample_scribbles(z, count, config.stroke_size, rng)
    return SamplePair(
        clean_color=z,
        clean_gray=x,
        degraded=degraded,
        masked=masked,
        mask=mask,
        scribbles=scribbles,
    )


def worker_generator(global_seed: int, worker_id: int = 0, epoch: int = 0) -> torch.Generator:
    """Independent stream per (seed, worker, epoch)."""
    gen = torch.Generator()
    gen.manual_seed(hash((global_seed, worker_id, epoch)) & 0x7FFFFFFFFFFFFFFF)
    return gen


def load_image(path: Path, grayscale: bool = False) -> torch.Tensor:
    """8-bit file -> CxHxW float tensor in [0,1]."""
    img = Image.open(path)
    img = img.convert("L" if grayscale else "RGB")
    arr = np.asarray(img, dtype=np.float32) / 255.0
    if arr.ndim == 2:
        arr = arr[None, :, :]
    else:
        arr = arr.transpose(2, 0, 1)
    return torch.from_numpy(arr.copy())


def load_folder(folder: Path, min_side: int, grayscale: bool = False) -> List[torch.Tensor]:
    """Load every supported image, skipping ones smaller than the crop."""
    folder = Path(folder)
    if not folder.is_dir():
        raise FileNotFoundError(f"dataset folder not found: {folder}")
    images = []
    for path in sorted(folder.iterdir()):
        if path.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        img = load_image(path, grayscale=grayscale)
        if img.shape[-1] < min_side or img.shape[-2] < min_side:
            logger.warning("skipping %s: %dx%d smaller than %d", path.name, img.shape[-2], img.shape[-1], min_side)
            continue
        images.append(img)
    return images


def load_mask_templates(folder: Path, min_side: int) -> List[torch.Tensor]:
    return load_folder(folder, min_side, grayscale=True)
