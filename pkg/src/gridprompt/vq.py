"""Vector-quantized autoencoder: the discrete visual vocabulary.

The encoder downsamples by stride-2 convs to one latent per patch; latents
snap to their nearest codebook entry (straight-through gradients); the
decoder mirrors the encoder with nearest-upsample + replicate-padded convs
so a constant token grid decodes to an exactly constant image.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import torch
import torch.nn as nn

from .errors import GeometryError
from .imageops import Image, check_image


@dataclass(frozen=True)
class VqConfig:
    vocab_size: int = 256
    embed_dim: int = 64
    patch_size: int = 8
    channels: tuple[int, ...] = (16, 32, 128)  # one entry per stride-2 stage
    decoder_channels: int = 128
    decoder_depth: int = 2  # 3x3 conv blocks at latent resolution

    def __post_init__(self):
        stages = len(self.channels)
        if 2 ** stages != self.patch_size:
            raise GeometryError(
                f"patch {self.patch_size} needs {int(np.log2(self.patch_size))} "
                f"stride-2 stages, got {stages} channel entries")
        if self.vocab_size < 2:
            raise ValueError("codebook needs at least 2 entries")


class VqModel(nn.Module):
    """Strided-conv encoder; decoder mixes token context at latent resolution
    and synthesizes each patch with a learned linear dictionary (PixelShuffle).

    Replicate padding keeps the decoder shift-invariant at the borders, so a
    constant token grid decodes to identical patch blocks everywhere.
    """

    def __init__(self, config: VqConfig | None = None):
        super().__init__()
        self.config = config or VqConfig()
        c = self.config
        enc = []
        prev = 3
        for ch in c.channels:
            enc += [nn.Conv2d(prev, ch, 4, stride=2, padding=1), nn.GELU()]
            prev = ch
        enc.append(nn.Conv2d(prev, c.embed_dim, 1))
        self.encoder = nn.Sequential(*enc)

        self.codebook = nn.Embedding(c.vocab_size, c.embed_dim)
        self.codebook.weight.data.uniform_(-1.0 / c.vocab_size, 1.0 / c.vocab_size)

        d = c.decoder_channels
        dec = [nn.Conv2d(c.embed_dim, d, 1), nn.GELU()]
        for _ in range(c.decoder_depth):
            dec += [nn.Conv2d(d, d, 3, padding=1, padding_mode="replicate"), nn.GELU()]
        dec += [nn.Conv2d(d, 3 * c.patch_size**2, 1), nn.PixelShuffle(c.patch_size)]
        self.decoder = nn.Sequential(*dec)

    def encode_latents(self, x: torch.Tensor) -> torch.Tensor:
        """(B, 3, H, W) -> (B, gh, gw, D) channel-last latent grid."""
        return self.encoder(x).permute(0, 2, 3, 1)

    def decode_latents(self, z: torch.Tensor) -> torch.Tensor:
        """(B, gh, gw, D) -> (B, 3, H, W), unclamped."""
        return self.decoder(z.permute(0, 3, 1, 2))


def quantize(latents: torch.Tensor, codebook: torch.Tensor | nn.Embedding
             ) -> tuple[torch.Tensor, torch.Tensor]:
    """Nearest codebook entry per latent under squared Euclidean distance.

    Returns (indices, quantized latents); indices have the latent grid shape.
    Ties break to the lowest index; gradients pass straight through the
    quantization to the latents.
    """
    weight = codebook.weight if isinstance(codebook, nn.Embedding) else codebook
    if latents.shape[-1] != weight.shape[1]:
        raise GeometryError(
            f"latent dim {latents.shape[-1]} != codebook dim {weight.shape[1]}")
    flat = latents.reshape(-1, latents.shape[-1])
    dist = (flat.pow(2).sum(1, keepdim=True)
            - 2.0 * flat @ weight.t()
            + weight.pow(2).sum(1))
    idx = dist.argmin(dim=1)
    picked = weight[idx].reshape(latents.shape)
    # forward value is exactly the entry; gradient copies through to latents
    quantized = picked.detach() + (latents - latents.detach())
    return idx.reshape(latents.shape[:-1]), quantized


class VqLossTerms(NamedTuple):
    total: torch.Tensor
    reconstruction: torch.Tensor
    codebook_term: torch.Tensor
    commitment_term: torch.Tensor


def vq_loss_terms(model: VqModel, x: torch.Tensor, beta: float = 0.25) -> VqLossTerms:
    """Plain VQ objective on an image batch (B, 3, H, W)."""
    if beta <= 0:
        raise ValueError(f"commitment weight must be positive, got {beta}")
    z = model.encode_latents(x)
    idx, zq = quantize(z, model.codebook)
    recon = model.decode_latents(zq)
    entries = model.codebook.weight[idx.reshape(-1)].reshape(z.shape)
    rec = (recon - x).pow(2).mean()
    cb = (z.detach() - entries).pow(2).mean()
    commit = beta * (z - entries.detach()).pow(2).mean()
    return VqLossTerms(rec + cb + commit, rec, cb, commit)


def vq_loss(x: Image, model: VqModel, beta: float = 0.25) -> tuple[float, float, float, float]:
    """Loss terms for one image, as floats: (total, rec, codebook, commitment)."""
    check_image(x)
    t = _image_to_tensor(x, model)
    with torch.no_grad():
        terms = vq_loss_terms(model, t, beta)
    return tuple(float(v) for v in terms)  # type: ignore[return-value]


def _image_to_tensor(image: Image, model: VqModel) -> torch.Tensor:
    p = model.config.patch_size
    if image.shape[0] % p != 0 or image.shape[1] % p != 0:
        raise GeometryError(f"image {image.shape[:2]} not divisible by patch {p}")
    dtype = next(model.parameters()).dtype
    return torch.from_numpy(np.ascontiguousarray(image)).permute(2, 0, 1)[None].to(dtype)


def encode_image(model: VqModel, image: Image) -> np.ndarray:
    """Image -> (H/p, W/p) grid of codebook indices."""
    check_image(image)
    t = _image_to_tensor(image, model)
    with torch.no_grad():
        z = model.encode_latents(t)
        idx, _ = quantize(z, model.codebook)
    return idx[0].numpy().astype(np.int64)


def decode_tokens(model: VqModel, tokens: np.ndarray) -> Image:
    """Token grid -> image of shape (rows*p, cols*p), clamped to [0, 1]."""
    tokens = np.asarray(tokens)
    if tokens.ndim != 2 or tokens.shape[0] == 0 or tokens.shape[1] == 0:
        raise GeometryError(f"token grid must be non-empty 2-D, got {tokens.shape}")
    if tokens.min() < 0 or tokens.max() >= model.config.vocab_size:
        raise IndexError(
            f"token indices must lie in [0, {model.config.vocab_size}), "
            f"got range [{tokens.min()}, {tokens.max()}]")
    dtype = next(model.parameters()).dtype
    with torch.no_grad():
        z = model.codebook(torch.from_numpy(tokens.astype(np.int64)))[None].to(dtype)
        img = model.decode_latents(z)[0]
    return img.permute(1, 2, 0).clamp(0.0, 1.0).float().numpy()
