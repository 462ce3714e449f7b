"""Loss terms for both training stages.

Noise-prior stage: low-frequency preservation, high-frequency
least-squares adversarial matching, and cycle consistency. Editing
stage: L1 reconstruction, frozen-backbone perceptual distance, and
least-squares adversarial terms. Discriminator- and generator-facing
adversarial variants are separate functions so each can be routed to
its own optimizer.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from . import wavelet
from .models import LEAKY_SLOPE, VGG16_PLAN


@dataclass
class NeganWeights:
    lambda_low: float = 10.0
    lambda_cycle: float = 10.0

    def __post_init__(self):
        if self.lambda_low < 0 or self.lambda_cycle < 0:
            raise ValueError("noise-prior loss weights must be nonnegative")


@dataclass
class IeganWeights:
    lambda_percep: float = 10.0
    lambda_gan: float = 0.1

    def __post_init__(self):
        if self.lambda_percep < 0 or self.lambda_gan < 0:
            raise ValueError("editing loss weights must be nonnegative")


def l1(t1: torch.Tensor, t2: torch.Tensor) -> torch.Tensor:
    """Mean absolute error."""
    return (t1 - t2).abs().mean()


def l_low(g: nn.Module, f: nn.Module, x: torch.Tensor) -> torch.Tensor:
    """Low-frequency preservation: both the forward translation and its
    round trip must keep the LL subband of the clean input."""
    x_low = wavelet.low_part(x)
    gx = g(x)
    return l1(wavelet.low_part(gx), x_low) + l1(wavelet.low_part(f(gx)), x_low)


def l_high_disc(d: nn.Module, fake_high: torch.Tensor, real_high: torch.Tensor) -> torch.Tensor:
    """Discriminator side of the high-frequency LSGAN term: fake scored
    toward 0, real toward 1."""
    return d(fake_high).pow(2).mean() + (d(real_high) - 1).pow(2).mean()


def l_high_gen(d: nn.Module, fake_high: torch.Tensor) -> torch.Tensor:
    """Generator side: fake scored toward 1."""
    return (d(fake_high) - 1).pow(2).mean()


def l_cycle(g: nn.Module, f: nn.Module, x: torch.Tensor, n: torch.Tensor) -> torch.Tensor:
    """Round trips through both translation directions recover the input."""
    return l1(f(g(x)), x) + l1(g(f(n)), n)


def l_negan_total(
    weights: NeganWeights,
    low: torch.Tensor,
    cycle: torch.Tensor,
    adv_forward: torch.Tensor,
    adv_backward: torch.Tensor,
) -> torch.Tensor:
    """Weighted sum of the four noise-prior terms."""
    return (
        weights.lambda_low * low
        + weights.lambda_cycle * cycle
        + adv_forward
        + adv_backward
    )


class PerceptualExtractor(nn.Module):
    """Frozen VGG16-shaped feature stack up to the conv4_3 level.

    Weights come from a state-dict file when provided; otherwise a
    fixed-seed random initialization is used, which keeps the distance
    well defined without classifier-pretrained weights.
    """

    def __init__(self, weights_path: str | None = None, seed: int = 0, width_scale: float = 1.0):
        super().__init__()
        layers = []
        prev = 3
        for item in VGG16_PLAN[:13]:  # up to and including conv4_3
            if item == "M":
                layers.append(nn.MaxPool2d(2))
                continue
            w = max(4, int(item * width_scale))
            layers.append(nn.Conv2d(prev, w, 3, padding=1))
            layers.append(nn.LeakyReLU(LEAKY_SLOPE))
            prev = w
        self.body = nn.Sequential(*layers)
        if weights_path is not None:
            self.load_state_dict(torch.load(weights_path, weights_only=True))
        else:
            gen = torch.Generator().manual_seed(seed)
            for m in self.body:
                if isinstance(m, nn.Conv2d):
                    nn.init.xavier_uniform_(m.weight, generator=gen)
                    nn.init.zeros_(m.bias)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x):
        if x.shape[1] != 3:
            raise ValueError(f"perceptual features need 3 channels, got {x.shape[1]}")
        return self.body(x)


def l_perceptual(extractor: nn.Module, t1: torch.Tensor, t2: torch.Tensor) -> torch.Tensor:
    """Mean absolute distance between frozen feature maps."""
    return l1(extractor(t1), extractor(t2))


def lsgan_g(d: nn.Module, fake: torch.Tensor) -> torch.Tensor:
    return 0.5 * (d(fake) - 1).pow(2).mean()


def lsgan_d(d: nn.Module, real: torch.Tensor, fake: torch.Tensor) -> torch.Tensor:
    return 0.5 * (d(real) - 1).pow(2).mean() + 0.5 * d(fake).pow(2).mean()


def l_iegan_total(
    weights: IeganWeights,
    l1c: torch.Tensor,
    l1r: torch.Tensor,
    lperc: torch.Tensor,
    lgr: torch.Tensor,
) -> torch.Tensor:
    """Total editing objective: the inpainting branch carries only its L1
    term; the colorization branch adds perceptual and adversarial terms."""
    return l1c + l1r + weights.lambda_percep * lperc + weights.lambda_gan * lgr


def replicate_gray(x: torch.Tensor) -> torch.Tensor:
    """Repeat a 1-channel image to 3 channels for the perceptual backbone."""
    if x.shape[1] == 1:
        return x.repeat(1, 3, 1, 1)
    return x
