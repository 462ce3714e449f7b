"""Single-level orthonormal 2-D Haar transform.

Splits an image into one low-pass subband (LL) and a stack of three
high-pass subbands (LH, HL, HH), each at half the source resolution.
All functions are pure and differentiable, so they can sit inside loss
graphs. Works on (..., H, W) tensors; leading dimensions (channels,
batch) are carried through unchanged.
"""

from dataclasses import dataclass

import torch

_SQRT2_INV = 2 ** -0.5
# 1-D orthonormal Haar pair: low-pass average, high-pass difference.
_H0 = (_SQRT2_INV, _SQRT2_INV)
_H1 = (_SQRT2_INV, -_SQRT2_INV)


@dataclass
class FreqSplit:
    """One-level Haar decomposition: ``low`` is LL with shape
    (..., H/2, W/2); ``high`` stacks (LH, HL, HH) along a new axis
    before the spatial ones, shape (..., 3, H/2, W/2)."""

    low: torch.Tensor
    high: torch.Tensor


def _check_even(image: torch.Tensor) -> None:
    if image.dim() < 2:
        raise ValueError(f"expected at least 2 spatial dims, got shape {tuple(image.shape)}")
    h, w = image.shape[-2], image.shape[-1]
    if h % 2 != 0:
        raise ValueError(f"height must be even for a one-level transform, got {h}")
    if w % 2 != 0:
        raise ValueError(f"width must be even for a one-level transform, got {w}")


def _kernels(dtype: torch.dtype, device: torch.device) -> torch.Tensor:
    h0 = torch.tensor(_H0, dtype=dtype, device=device)
    h1 = torch.tensor(_H1, dtype=dtype, device=device)
    # Kernel = outer(vertical filter, horizontal filter); order LL, LH, HL, HH.
    banks = [torch.outer(h0, h0), torch.outer(h0, h1), torch.outer(h1, h0), torch.outer(h1, h1)]
    return torch.stack(banks).unsqueeze(1)  # (4, 1, 2, 2)


def dwt2(image: torch.Tensor) -> FreqSplit:
    """Forward transform. Requires even H and W."""
    _check_even(image)
    lead = image.shape[:-2]
    h, w = image.shape[-2:]
    flat = image.reshape(-1, 1, h, w)
    coeffs = torch.nn.functional.conv2d(flat, _kernels(image.dtype, image.device), stride=2)
    coeffs = coeffs.reshape(*lead, 4, h // 2, w // 2)
    return FreqSplit(low=coeffs[..., 0, :, :], high=coeffs[..., 1:, :, :])


def idwt2(split: FreqSplit) -> torch.Tensor:
    """Inverse transform; exact inverse of :func:`dwt2` up to float error."""
    low, high = split.low, split.high
    if high.shape[-3] != 3:
        raise ValueError(f"high stack must hold 3 subbands, got shape {tuple(high.shape)}")
    if low.shape[-2:] != high.shape[-2:] or low.shape[:-2] != high.shape[:-3]:
        raise ValueError(
            f"subband shapes disagree: low {tuple(low.shape)} vs high {tuple(high.shape)}"
        )
    lead = low.shape[:-2]
    hh, hw = low.shape[-2:]
    coeffs = torch.cat([low.unsqueeze(-3), high], dim=-3).reshape(-1, 4, hh, hw)
    # Orthonormal bank: the transpose convolution with the same kernels inverts.
    image = torch.nn.functional.conv_transpose2d(coeffs, _kernels(low.dtype, low.device), stride=2)
    return image.reshape(*lead, 2 * hh, 2 * hw)


def low_part(image: torch.Tensor) -> torch.Tensor:
    """LL subband of the one-level transform."""
    return dwt2(image).low


def high_part(image: torch.Tensor) -> torch.Tensor:
    """Stacked (LH, HL, HH) subbands of the one-level transform."""
    return dwt2(image).high
