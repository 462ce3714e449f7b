"""Two-stage training: noise-prior learning first, then the editing
networks, with checkpointing and ablation toggles.

Checkpoints use a self-contained binary container (magic ``LPED``):
format version, config JSON, epoch, RNG state, then length-prefixed
named tensor records. See docs/checkpoint.md.
"""

import hashlib
import json
import logging
import struct
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn

from . import datapipe, objectives, wavelet
from .models import ColorNet, EditCritic, InpaintNet, NoiseGenerator, PatchDiscriminator

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"LPED"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    stage1_lr: float = 1e-4
    stage2_lr: float = 5e-5
    stage1_epochs: int = 20
    stage2_epochs: int = 20
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    batch_size: int = 32
    crop: int = 256
    seed: int = 0
    # ablation toggles
    use_dwt_losses: bool = True
    use_perceptual: bool = True
    use_gan: bool = True
    joint_training: bool = True
    max_scribbles: int = 30
    # loss weights
    lambda_low: float = 10.0
    lambda_cycle: float = 10.0
    lambda_percep: float = 10.0
    lambda_gan: float = 0.1
    noise_sigma: float = 0.05
    stroke_size: int = 5
    # architecture widths (full-scale defaults)
    negan_width: int = 64
    negan_blocks: int = 8
    disc_width: int = 64
    unet_width: int = 64
    critic_scale: float = 1.0
    percep_scale: float = 1.0
    # step caps for desk-scale runs; None = full epochs
    max_steps: Optional[int] = None

    def __post_init__(self):
        if self.stage1_lr < 0 or self.stage2_lr < 0:
            raise ValueError("learning rates must be nonnegative")
        if self.stage1_epochs < 0 or self.stage2_epochs < 0:
            raise ValueError("epoch counts must be nonnegative")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        """Reduced profile that trains in minutes on a CPU."""
        base = dict(
            crop=64,
            batch_size=8,
            negan_width=8,
            disc_width=16,
            unet_width=16,
            critic_scale=0.125,
            percep_scale=0.125,
        )
        base.update(overrides)
        return cls(**base)


# --------------------------------------------------------------------------
# checkpoint container


def _arch_hash(tensors: Dict[str, torch.Tensor]) -> str:
    digest = hashlib.sha256()
    for name in sorted(tensors):
        t = tensors[name]
        digest.update(f"{name}|{t.dtype}|{tuple(t.shape)};".encode())
    return digest.hexdigest()


def _write_bytes(f, payload: bytes) -> None:
    f.write(struct.pack("<Q", len(payload)))
    f.write(payload)


def _read_bytes(f) -> bytes:
    (n,) = struct.unpack("<Q", f.read(8))
    return f.read(n)


def save_checkpoint(state: dict, path) -> None:
    """Serialize config, epoch, RNG state, and every named tensor."""
    tensors: Dict[str, torch.Tensor] = state["tensors"]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        _write_bytes(f, _arch_hash(tensors).encode())
        _write_bytes(f, json.dumps(state.get("config", {})).encode())
        f.write(struct.pack("<Q", state.get("epoch", 0)))
        _write_bytes(f, state.get("rng_state", b""))
        f.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            t = tensors[name].detach().cpu().contiguous()
            _write_bytes(f, name.encode())
            _write_bytes(f, str(t.dtype).removeprefix("torch.").encode())
            f.write(struct.pack("<I", t.dim()))
            for d in t.shape:
                f.write(struct.pack("<Q", d))
            arr = t.numpy()
            _write_bytes(f, arr.astype(arr.dtype.newbyteorder("<")).tobytes())


def load_checkpoint(path, expect_arch_hash: Optional[str] = None) -> dict:
    """Inverse of :func:`save_checkpoint`; bit-exact round trip."""
    path = Path(path)
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a checkpoint file: bad magic {magic!r}")
        (version,) = struct.unpack("<I", f.read(4))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}")
        arch_hash = _read_bytes(f).decode()
        config = json.loads(_read_bytes(f).decode())
        (epoch,) = struct.unpack("<Q", f.read(8))
        rng_state = _read_bytes(f)
        (count,) = struct.unpack("<I", f.read(4))
        tensors: Dict[str, torch.Tensor] = {}
        for _ in range(count):
            name = _read_bytes(f).decode()
            dtype = getattr(torch, _read_bytes(f).decode())
            (ndim,) = struct.unpack("<I", f.read(4))
            shape = [struct.unpack("<Q", f.read(8))[0] for _ in range(ndim)]
            raw = _read_bytes(f)
            np_dtype = np.dtype(str(dtype).removeprefix("torch.")).newbyteorder("<")
            arr = np.frombuffer(raw, dtype=np_dtype).reshape(shape)
            tensors[name] = torch.from_numpy(arr.copy()).to(dtype)
    if _arch_hash(tensors) != arch_hash:
        raise ValueError("checkpoint tensor table does not match its recorded architecture hash")
    if expect_arch_hash is not None and arch_hash != expect_arch_hash:
        raise ValueError(
            f"architecture hash mismatch: checkpoint {arch_hash[:12]} vs expected {expect_arch_hash[:12]}"
        )
    return {
        "format_version": version,
        "arch_hash": arch_hash,
        "config": config,
        "epoch": epoch,
        "rng_state": rng_state,
        "tensors": tensors,
    }


def _gather_state(networks: Dict[str, nn.Module], optims: Dict[str, torch.optim.Optimizer]) -> Dict[str, torch.Tensor]:
    tensors: Dict[str, torch.Tensor] = {}
    for net_name, net in networks.items():
        for pname, p in net.state_dict().items():
            tensors[f"{net_name}/{pname}"] = p
    for net_name, opt in optims.items():
        params = [p for group in opt.param_groups for p in group["params"]]
        names = [n for n, _ in networks[net_name].named_parameters()]
        for pname, p in zip(names, params):
            st = opt.state.get(p, {})
            for key in ("exp_avg", "exp_avg_sq"):
                if key in st:
                    tensors[f"optim/{net_name}/{pname}/{key}"] = st[key]
            if "step" in st:
                step = st["step"]
                tensors[f"optim/{net_name}/{pname}/step"] = (
                    step if isinstance(step, torch.Tensor) else torch.tensor(float(step))
                )
    return tensors


def restore_networks(tensors: Dict[str, torch.Tensor], networks: Dict[str, nn.Module]) -> None:
    """Load per-network parameter records back into module instances."""
    for net_name, net in networks.items():
        prefix = f"{net_name}/"
        sd = {k.removeprefix(prefix): v for k, v in tensors.items() if k.startswith(prefix) and not k.startswith("optim/")}
        net.load_state_dict(sd)


# --------------------------------------------------------------------------
# initialization


def init_params(network: nn.Module, generator: Optional[torch.Generator] = None) -> nn.Module:
    """Xavier-uniform weights, zero biases; output projections marked on
    the module stay at zero so the residual generators start as identity."""
    for m in network.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            if getattr(m, "is_output_projection", False):
                nn.init.zeros_(m.weight)
            else:
                nn.init.xavier_uniform_(m.weight, generator=generator)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.InstanceNorm2d) and m.affine:
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)
    return network


def _adam(net: nn.Module, lr: float, cfg: TrainConfig) -> torch.optim.Optimizer:
    return torch.optim.Adam(net.parameters(), lr=lr, betas=(cfg.adam_beta1, cfg.adam_beta2))


def _batch(images: Sequence[torch.Tensor], cfg: TrainConfig, rng: torch.Generator) -> torch.Tensor:
    idx = torch.randint(0, len(images), (cfg.batch_size,), generator=rng)
    return torch.stack([datapipe.random_crop(images[i], cfg.crop, rng) for i in idx])


def _high_stack(x: torch.Tensor) -> torch.Tensor:
    """(B,C,H,W) -> (B,3C,H/2,W/2) stacked high-frequency subbands."""
    return wavelet.high_part(x).flatten(1, 2)


@dataclass
class TrainResult:
    networks: Dict[str, nn.Module]
    history: List[Dict[str, float]]
    checkpoint: dict


def _finish(cfg: TrainConfig, networks, optims, history, rng: torch.Generator, epoch: int) -> TrainResult:
    state = {
        "config": asdict(cfg),
        "epoch": epoch,
        "rng_state": bytes(rng.get_state().numpy().tobytes()),
        "tensors": _gather_state(networks, optims),
    }
    return TrainResult(networks=networks, history=history, checkpoint=state)


# --------------------------------------------------------------------------
# stage 1: noise prior


def build_negan_networks(cfg: TrainConfig) -> Dict[str, nn.Module]:
    torch.manual_seed(cfg.seed)
    disc_in = 3 if cfg.use_dwt_losses else 1
    nets = {
        "G": NoiseGenerator(width=cfg.negan_width, blocks=cfg.negan_blocks),
        "F": NoiseGenerator(width=cfg.negan_width, blocks=cfg.negan_blocks),
        "D_N": PatchDiscriminator(in_channels=disc_in, width=cfg.disc_width),
        "D_X": PatchDiscriminator(in_channels=disc_in, width=cfg.disc_width),
    }
    gen = torch.Generator().manual_seed(cfg.seed)
    for net in nets.values():
        init_params(net, gen)
    return nets


def train_negan(cfg: TrainConfig, clean: Sequence[torch.Tensor], noisy: Sequence[torch.Tensor]) -> TrainResult:
    """Unpaired translation training. Without the frequency-split losses
    the objective reduces to a plain cycle-consistent GAN on full images."""
    if len(clean) == 0 or len(noisy) == 0:
        raise ValueError("both the clean and the noisy domain need at least one image")
    nets = build_negan_networks(cfg)
    g, f, d_n, d_x = nets["G"], nets["F"], nets["D_N"], nets["D_X"]
    optims = {name: _adam(net, cfg.stage1_lr, cfg) for name, net in nets.items()}
    rng = torch.Generator().manual_seed(cfg.seed)
    weights = objectives.NeganWeights(cfg.lambda_low, cfg.lambda_cycle)
    split = _high_stack if cfg.use_dwt_losses else (lambda t: t)

    history: List[Dict[str, float]] = []
    steps_per_epoch = max(1, (len(clean) + cfg.batch_size - 1) // cfg.batch_size)
    step = 0
    epoch = 0
    for epoch in range(cfg.stage1_epochs):
        for _ in range(steps_per_epoch):
            x = _batch(clean, cfg, rng)
            n = _batch(noisy, cfg, rng)

            with torch.no_grad():
                fake_n_d = g(x)
                fake_x_d = f(n)
            d_loss = objectives.l_high_disc(d_n, split(fake_n_d), split(n)) + objectives.l_high_disc(
                d_x, split(fake_x_d), split(x)
            )
            optims["D_N"].zero_grad(set_to_none=True)
            optims["D_X"].zero_grad(set_to_none=True)
            d_loss.backward()
            optims["D_N"].step()
            optims["D_X"].step()

            fake_n = g(x)
            rec_x = f(fake_n)
            fake_x = f(n)
            rec_n = g(fake_x)
            cycle = objectives.l1(rec_x, x) + objectives.l1(rec_n, n)
            adv = objectives.l_high_gen(d_n, split(fake_n)) + objectives.l_high_gen(d_x, split(fake_x))
            if cfg.use_dwt_losses:
                x_low = wavelet.low_part(x)
                low = objectives.l1(wavelet.low_part(fake_n), x_low) + objectives.l1(
                    wavelet.low_part(rec_x), x_low
                )
            else:
                low = torch.zeros(())
            g_loss = objectives.l_negan_total(weights, low, cycle, adv, torch.zeros(()))
            optims["G"].zero_grad(set_to_none=True)
            optims["F"].zero_grad(set_to_none=True)
            g_loss.backward()
            optims["G"].step()
            optims["F"].step()

            history.append(
                {
                    "step": step,
                    "l_low": float(low.detach()),
                    "l_cycle": float(cycle.detach()),
                    "l_adv_gen": float(adv.detach()),
                    "l_disc": float(d_loss.detach()),
                    "l_total": float(g_loss.detach()),
                }
            )
            step += 1
            if cfg.max_steps is not None and step >= cfg.max_steps:
                return _finish(cfg, nets, optims, history, rng, epoch)
        logger.info("noise-prior epoch %d: %s", epoch, history[-1])
    return _finish(cfg, nets, optims, history, rng, epoch)


# --------------------------------------------------------------------------
# stage 2: editing networks


def build_iegan_networks(cfg: TrainConfig) -> Dict[str, nn.Module]:
    torch.manual_seed(cfg.seed + 1)
    nets = {
        "C": InpaintNet(width=cfg.unet_width),
        "R": ColorNet(width=cfg.unet_width),
        "D_R": EditCritic(in_channels=3, width_scale=cfg.critic_scale),
    }
    gen = torch.Generator().manual_seed(cfg.seed + 1)
    for net in nets.values():
        init_params(net, gen)
    return nets


def _iegan_batch(
    clean: Sequence[torch.Tensor],
    frozen_g: Optional[nn.Module],
    cfg: TrainConfig,
    sample_cfg: datapipe.SampleConfig,
    rng: torch.Generator,
) -> List[datapipe.SamplePair]:
    idx = torch.randint(0, len(clean), (cfg.batch_size,), generator=rng)
    return [datapipe.make_training_sample(clean[i], frozen_g, sample_cfg, rng) for i in idx]


def train_iegan(
    cfg: TrainConfig,
    clean: Sequence[torch.Tensor],
    frozen_g: Optional[nn.Module],
    mask_templates: Sequence[torch.Tensor] = (),
    perceptual: Optional[nn.Module] = None,
) -> TrainResult:
    """Stage 1 trains the inpainting and colorization networks
    independently (the colorizer is teacher-forced on ground-truth
    grayscale); stage 2 optimizes them jointly with the colorizer
    consuming the inpainter's output."""
    if len(clean) == 0:
        raise ValueError("the clean dataset is empty")
    if frozen_g is None:
        logger.warning("no frozen noise generator given; degrading with Gaussian noise only")
    nets = build_iegan_networks(cfg)
    c, r, d_r = nets["C"], nets["R"], nets["D_R"]
    if perceptual is None:
        perceptual = objectives.PerceptualExtractor(seed=cfg.seed, width_scale=cfg.percep_scale)
    weights = objectives.IeganWeights(cfg.lambda_percep, cfg.lambda_gan)
    sample_cfg = datapipe.SampleConfig(
        crop=cfg.crop,
        noise_sigma=cfg.noise_sigma,
        max_scribbles=cfg.max_scribbles,
        stroke_size=cfg.stroke_size,
        mask_templates=list(mask_templates),
    )
    rng = torch.Generator().manual_seed(cfg.seed + 2)
    history: List[Dict[str, float]] = []
    steps_per_epoch = max(1, (len(clean) + cfg.batch_size - 1) // cfg.batch_size)
    step = 0

    last_optims: Dict[str, torch.optim.Optimizer] = {}

    def run_stage(joint: bool, lr: float, epochs: int, step: int) -> int:
        optims = {"C": _adam(c, lr, cfg), "R": _adam(r, lr, cfg), "D_R": _adam(d_r, lr, cfg)}
        last_optims.clear()
        last_optims.update(optims)
        for epoch in range(epochs):
            for _ in range(steps_per_epoch):
                pairs = _iegan_batch(clean, frozen_g, cfg, sample_cfg, rng)
                z = torch.stack([p.clean_color for p in pairs])
                x = torch.stack([p.clean_gray for p in pairs])
                masked = torch.stack([p.masked for p in pairs])
                mask = torch.stack([p.mask for p in pairs])
                hint = torch.stack([p.scribbles.hint for p in pairs])
                ind = torch.stack([p.scribbles.indicator for p in pairs])

                y_hat = c(masked, mask)
                l1c = objectives.l1(y_hat, x)
                y_for_r = y_hat if joint else x  # teacher forcing before joint stage
                z_hat = r(y_for_r, hint, ind)
                l1r = objectives.l1(z_hat, z)
                lperc = (
                    objectives.l_perceptual(perceptual, z_hat, z)
                    if cfg.use_perceptual
                    else torch.zeros(())
                )
                if cfg.use_gan:
                    d_loss = objectives.lsgan_d(d_r, z, z_hat.detach())
                    optims["D_R"].zero_grad(set_to_none=True)
                    d_loss.backward()
                    optims["D_R"].step()
                    lgr = objectives.lsgan_g(d_r, z_hat)
                else:
                    d_loss = torch.zeros(())
                    lgr = torch.zeros(())
                total = objectives.l_iegan_total(weights, l1c, l1r, lperc, lgr)
                optims["C"].zero_grad(set_to_none=True)
                optims["R"].zero_grad(set_to_none=True)
                total.backward()
                optims["C"].step()
                optims["R"].step()

                history.append(
                    {
                        "step": step,
                        "stage": 2 if joint else 1,
                        "l_1c": float(l1c.detach()),
                        "l_1r": float(l1r.detach()),
                        "l_percep": float(lperc.detach()),
                        "l_gan_gen": float(lgr.detach()),
                        "l_disc": float(d_loss.detach()),
                        "l_total": float(total.detach()),
                    }
                )
                step += 1
                if cfg.max_steps is not None and step >= cfg.max_steps:
                    return step
            logger.info("editing stage %d epoch %d: %s", 2 if joint else 1, epoch, history[-1])
        return step

    budget = cfg.max_steps
    step = run_stage(joint=False, lr=cfg.stage1_lr, epochs=cfg.stage1_epochs, step=0)
    if cfg.joint_training and (budget is None or step < budget):
        step = run_stage(joint=True, lr=cfg.stage2_lr, epochs=cfg.stage2_epochs, step=step)
    return _finish(cfg, nets, last_optims, history, rng, step)
