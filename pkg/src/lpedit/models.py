"""Network families for both training stages.

Noise-prior side: a full-resolution residual generator (two instances,
one per translation direction) and a spectral-normalized patch
discriminator that judges only high-frequency wavelet subbands.

Editing side: a gated-convolution U-Net for joint denoising and
inpainting, a plain U-Net for scribble-guided colorization, and a
VGG16-shaped critic with a single-channel output map.
"""

from typing import Dict, List, Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

LEAKY_SLOPE = 0.2


def gated_conv(
    x: torch.Tensor,
    weight_f: torch.Tensor,
    bias_f: Optional[torch.Tensor],
    weight_g: torch.Tensor,
    bias_g: Optional[torch.Tensor],
    stride: int = 1,
    padding: int = 0,
) -> torch.Tensor:
    """Feature branch modulated elementwise by a learned sigmoid gate."""
    if weight_f.shape[0] != weight_g.shape[0]:
        raise ValueError(
            f"feature/gate output widths differ: {weight_f.shape[0]} vs {weight_g.shape[0]}"
        )
    feat = F.conv2d(x, weight_f, bias_f, stride=stride, padding=padding)
    gate = F.conv2d(x, weight_g, bias_g, stride=stride, padding=padding)
    return F.leaky_relu(feat, LEAKY_SLOPE) * torch.sigmoid(gate)


def spectral_normalize(
    weight: torch.Tensor, state: Dict[str, torch.Tensor], iterations: int = 1
) -> torch.Tensor:
    """Divide a matrix-view weight by its power-iteration top singular value.

    ``state`` holds the running left/right singular-vector estimates under
    keys ``u`` and ``v``; both are refreshed in place for the next step.
    """
    if weight.dim() != 2:
        raise ValueError(f"expected a matrix view, got shape {tuple(weight.shape)}")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    eps = 1e-12
    u = state["u"]
    with torch.no_grad():
        for _ in range(iterations):
            v = F.normalize(weight.t() @ u, dim=0, eps=eps)
            u = F.normalize(weight @ v, dim=0, eps=eps)
        state["u"], state["v"] = u, v
    sigma = torch.clamp(u @ weight @ v, min=eps)
    return weight / sigma


class SpectralConv2d(nn.Module):
    """Convolution whose kernel is spectral-normalized every forward pass."""

    def __init__(self, in_ch, out_ch, kernel_size, stride=1, padding=0):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, kernel_size, stride=stride, padding=padding)
        self.register_buffer("u", F.normalize(torch.randn(out_ch), dim=0))
        self.register_buffer("v", F.normalize(torch.randn(self.conv.weight[0].numel()), dim=0))

    def forward(self, x):
        w = self.conv.weight
        mat = w.flatten(1)
        if self.training:  # refresh the power-iteration state only while training
            state = {"u": self.u.to(w.dtype), "v": self.v.to(w.dtype)}
            w_sn = spectral_normalize(mat, state, iterations=1).reshape(w.shape)
            self.u.copy_(state["u"].detach().to(self.u.dtype))
            self.v.copy_(state["v"].detach().to(self.v.dtype))
        else:
            u, v = self.u.to(w.dtype), self.v.to(w.dtype)
            sigma = torch.clamp(u @ mat @ v, min=1e-12)
            w_sn = (mat / sigma).reshape(w.shape)
        return F.conv2d(x, w_sn, self.conv.bias, stride=self.conv.stride, padding=self.conv.padding)


class GatedConv2d(nn.Module):
    """Module form of :func:`gated_conv` with its own parameter pair."""

    def __init__(self, in_ch, out_ch, kernel_size, stride=1, padding=0):
        super().__init__()
        self.feature = nn.Conv2d(in_ch, out_ch, kernel_size, stride=stride, padding=padding)
        self.gate = nn.Conv2d(in_ch, out_ch, kernel_size, stride=stride, padding=padding)

    def forward(self, x):
        return gated_conv(
            x,
            self.feature.weight,
            self.feature.bias,
            self.gate.weight,
            self.gate.bias,
            stride=self.feature.stride[0],
            padding=self.feature.padding[0],
        )


class ResidualBlock(nn.Module):
    """Two 3x3 convolutions with a local skip; no normalization so the
    block cannot disturb low-level intensity statistics."""

    def __init__(self, channels):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1, padding_mode="reflect")
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1, padding_mode="reflect")

    def forward(self, x):
        h = F.leaky_relu(self.conv1(x), LEAKY_SLOPE)
        return x + self.conv2(h)


class NoiseGenerator(nn.Module):
    """Full-resolution residual generator: 8 residual blocks and a global
    input-to-output skip, no resampling anywhere. The output projection
    starts at zero, so a fresh instance is the identity map."""

    def __init__(self, channels: int = 1, width: int = 64, blocks: int = 8):
        super().__init__()
        self.head = nn.Conv2d(channels, width, 3, padding=1, padding_mode="reflect")
        self.blocks = nn.Sequential(*[ResidualBlock(width) for _ in range(blocks)])
        self.tail = nn.Conv2d(width, channels, 3, padding=1, padding_mode="reflect")
        self.tail.is_output_projection = True
        nn.init.zeros_(self.tail.weight)
        nn.init.zeros_(self.tail.bias)

    def forward(self, x):
        h = F.leaky_relu(self.head(x), LEAKY_SLOPE)
        return x + self.tail(self.blocks(h))


class PatchDiscriminator(nn.Module):
    """Patch critic over the stacked high-frequency subbands: a 256x256
    image yields 128x128 subbands and a 16x16 score grid. Every layer is
    spectral normalized; output is linear for least-squares training."""

    def __init__(self, in_channels: int = 3, width: int = 64):
        super().__init__()
        w = width
        self.layers = nn.ModuleList(
            [
                SpectralConv2d(in_channels, w, 4, stride=2, padding=1),
                SpectralConv2d(w, 2 * w, 4, stride=2, padding=1),
                SpectralConv2d(2 * w, 4 * w, 4, stride=2, padding=1),
                SpectralConv2d(4 * w, 4 * w, 3, stride=1, padding=1),
            ]
        )
        self.out = SpectralConv2d(4 * w, 1, 3, stride=1, padding=1)

    def forward(self, x):
        for layer in self.layers:
            x = F.leaky_relu(layer(x), LEAKY_SLOPE)
        return self.out(x)


class _UNetBlock(nn.Module):
    def __init__(self, in_ch, out_ch, gated, stride=1):
        super().__init__()
        conv_cls = GatedConv2d if gated else nn.Conv2d
        self.conv = conv_cls(in_ch, out_ch, 3, stride=stride, padding=1)
        self.norm = nn.InstanceNorm2d(out_ch, affine=True)
        self.gated = gated

    def forward(self, x):
        h = self.conv(x)
        if not self.gated:  # gated conv already carries its activation
            h = F.leaky_relu(h, LEAKY_SLOPE)
        return self.norm(h)


class UNet(nn.Module):
    """Four-level encoder-decoder with skip connections and a sigmoid
    output head. Spatial size must be divisible by 16."""

    def __init__(self, in_channels, out_channels, width=64, gated=False):
        super().__init__()
        widths = [width, 2 * width, 4 * width, 8 * width]
        self.stem = _UNetBlock(in_channels, width, gated)
        self.down = nn.ModuleList()
        prev = width
        for w in widths:
            self.down.append(
                nn.ModuleList([_UNetBlock(prev, w, gated, stride=2), _UNetBlock(w, w, gated)])
            )
            prev = w
        self.up = nn.ModuleList()
        for w in reversed(widths):
            skip_ch = w // 2 if w != width else width
            self.up.append(nn.ModuleList([_UNetBlock(w + skip_ch, skip_ch, gated)]))
        self.head = nn.Conv2d(width, out_channels, 3, padding=1)

    def forward(self, x):
        h, w = x.shape[-2], x.shape[-1]
        if h % 16 != 0 or w % 16 != 0:
            raise ValueError(f"input spatial size must be divisible by 16, got {h}x{w}")
        feats = [self.stem(x)]
        for down, refine in self.down:
            feats.append(refine(down(feats[-1])))
        y = feats[-1]
        for (block,), skip in zip(self.up, reversed(feats[:-1])):
            y = F.interpolate(y, scale_factor=2, mode="nearest")
            y = block(torch.cat([y, skip], dim=1))
        return torch.sigmoid(self.head(y))


class InpaintNet(UNet):
    """Joint denoise + inpaint network: masked grayscale image plus the
    binary mask in, complete grayscale image out."""

    def __init__(self, width: int = 64):
        super().__init__(in_channels=2, out_channels=1, width=width, gated=True)

    def forward(self, masked: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        if masked.shape[-2:] != mask.shape[-2:]:
            raise ValueError(
                f"masked image {tuple(masked.shape)} and mask {tuple(mask.shape)} sizes differ"
            )
        return super().forward(torch.cat([masked, mask], dim=1))


class ColorNet(UNet):
    """Colorization network: grayscale image, 3-channel scribble hint and
    1-channel hint indicator in, RGB image out."""

    def __init__(self, width: int = 64):
        super().__init__(in_channels=5, out_channels=3, width=width, gated=False)

    def forward(self, gray: torch.Tensor, hint: torch.Tensor, indicator: torch.Tensor):
        if not (gray.shape[-2:] == hint.shape[-2:] == indicator.shape[-2:]):
            raise ValueError("gray/hint/indicator spatial sizes differ")
        return super().forward(torch.cat([gray, hint, indicator], dim=1))


# VGG-16 convolution plan: channel width per conv, 'M' = 2x2 max pool.
VGG16_PLAN = [64, 64, "M", 128, 128, "M", 256, 256, 256, "M", 512, 512, 512, "M", 512, 512, 512]


class EditCritic(nn.Module):
    """Critic shaped like the convolution part of VGG-16, instance
    normalized, with a single-channel linear output map."""

    def __init__(self, in_channels: int = 3, width_scale: float = 1.0):
        super().__init__()
        layers: List[nn.Module] = []
        prev = in_channels
        for item in VGG16_PLAN:
            if item == "M":
                layers.append(nn.MaxPool2d(2))
                continue
            w = max(4, int(item * width_scale))
            layers.append(nn.Conv2d(prev, w, 3, padding=1))
            layers.append(nn.InstanceNorm2d(w, affine=True))
            layers.append(nn.LeakyReLU(LEAKY_SLOPE))
            prev = w
        layers.append(nn.Conv2d(prev, 1, 3, padding=1))
        self.body = nn.Sequential(*layers)

    def forward(self, x):
        return self.body(x)
