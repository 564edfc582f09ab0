"""Masked autoencoder over patch tokens with a codebook-logit head.

The encoder sees only visible patches (plus positions); the decoder fills
masked slots with a learned mask token and emits, per position, either
logits over the frozen codebook or regressed pixels (baseline head).
Positional encodings are fixed 2-D sinusoids over grid coordinates
normalized to a reference grid, so one model handles any canvas whose cell
edges stay patch-aligned.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigurationError, GeometryError
from .imageops import Image, check_image
from .vq import VqModel, decode_tokens, encode_image


@dataclass(frozen=True)
class MaeConfig:
    patch_size: int = 8
    embed_dim: int = 192
    depth: int = 6
    num_heads: int = 6
    decoder_embed_dim: int = 128
    decoder_depth: int = 4
    decoder_num_heads: int = 4
    mlp_ratio: float = 4.0
    vocab_size: int = 256
    head: str = "token_logits"  # or "pixel_regression"
    pos_base_grid: int = 16     # grid coordinates are rescaled onto this span

    def __post_init__(self):
        if self.head not in ("token_logits", "pixel_regression"):
            raise ConfigurationError(f"unknown head {self.head!r}")


def sincos_1d(embed_dim: int, positions: np.ndarray) -> np.ndarray:
    """Standard sin/cos embedding of scalar positions, (N, embed_dim)."""
    assert embed_dim % 2 == 0
    omega = np.arange(embed_dim // 2, dtype=np.float64) / (embed_dim / 2.0)
    omega = 1.0 / 10000**omega
    out = np.outer(positions.reshape(-1), omega)
    return np.concatenate([np.sin(out), np.cos(out)], axis=1)


def sincos_2d(embed_dim: int, grid_hw: tuple[int, int], base_grid: int) -> np.ndarray:
    """2-D sinusoidal embedding for a (gh, gw) patch grid, (gh*gw, embed_dim).

    Row/col indices are scaled by base_grid/g so differently sized grids share
    one coordinate frame (a 16x16 grid reproduces the usual integer coords).
    """
    assert embed_dim % 2 == 0
    gh, gw = grid_hw
    rows = np.arange(gh, dtype=np.float64) * (base_grid / gh)
    cols = np.arange(gw, dtype=np.float64) * (base_grid / gw)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    emb_r = sincos_1d(embed_dim // 2, rr)
    emb_c = sincos_1d(embed_dim // 2, cc)
    return np.concatenate([emb_r, emb_c], axis=1)


class Attention(nn.Module):
    def __init__(self, dim: int, num_heads: int):
        super().__init__()
        if dim % num_heads != 0:
            raise ConfigurationError(f"dim {dim} not divisible by {num_heads} heads")
        self.num_heads = num_heads
        self.scale = (dim // num_heads) ** -0.5
        self.qkv = nn.Linear(dim, dim * 3, bias=True)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor, need_weights: bool = False):
        B, N, C = x.shape
        qkv = self.qkv(x).reshape(B, N, 3, self.num_heads, C // self.num_heads)
        q, k, v = qkv.permute(2, 0, 3, 1, 4).unbind(0)
        attn = (q @ k.transpose(-2, -1)) * self.scale
        attn = attn.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(B, N, C)
        return self.proj(out), (attn if need_weights else None)


class Block(nn.Module):
    def __init__(self, dim: int, num_heads: int, mlp_ratio: float):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = Attention(dim, num_heads)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def forward(self, x: torch.Tensor, need_weights: bool = False):
        y, attn = self.attn(self.norm1(x), need_weights)
        x = x + y
        x = x + self.mlp(self.norm2(x))
        return x, attn


class MaeModel(nn.Module):
    def __init__(self, config: MaeConfig | None = None):
        super().__init__()
        self.config = config or MaeConfig()
        c = self.config
        in_dim = 3 * c.patch_size**2
        self.patch_embed = nn.Linear(in_dim, c.embed_dim)
        self.blocks = nn.ModuleList(
            [Block(c.embed_dim, c.num_heads, c.mlp_ratio) for _ in range(c.depth)])
        self.norm = nn.LayerNorm(c.embed_dim)

        self.decoder_embed = nn.Linear(c.embed_dim, c.decoder_embed_dim)
        self.mask_token = nn.Parameter(torch.zeros(1, 1, c.decoder_embed_dim))
        self.decoder_blocks = nn.ModuleList(
            [Block(c.decoder_embed_dim, c.decoder_num_heads, c.mlp_ratio)
             for _ in range(c.decoder_depth)])
        self.decoder_norm = nn.LayerNorm(c.decoder_embed_dim)
        out_dim = c.vocab_size if c.head == "token_logits" else in_dim
        self.head = nn.Linear(c.decoder_embed_dim, out_dim)

        self._pos_cache: dict = {}
        self._init_weights()

    def _init_weights(self):
        for m in self.modules():
            if isinstance(m, nn.Linear):
                nn.init.xavier_uniform_(m.weight)
                if m.bias is not None:
                    nn.init.zeros_(m.bias)
        nn.init.normal_(self.mask_token, std=0.02)

    def pos_embed(self, grid_hw: tuple[int, int], dim: int) -> torch.Tensor:
        key = (grid_hw, dim)
        if key not in self._pos_cache:
            pe = sincos_2d(dim, grid_hw, self.config.pos_base_grid)
            self._pos_cache[key] = torch.from_numpy(pe).float()
        dtype = next(self.parameters()).dtype
        return self._pos_cache[key].to(dtype)

    def forward(self, pixels: torch.Tensor, mask: torch.Tensor,
                need_weights: bool = False):
        """pixels (B, 3, H, W), mask (B, gh, gw) bool -> logits (B, L, out_dim).

        Only visible patches enter the encoder, so pixels under masked
        patches cannot influence any output. Returns (logits, decoder
        attention maps or None).
        """
        B, _, H, W = pixels.shape
        p = self.config.patch_size
        if H % p != 0 or W % p != 0:
            raise GeometryError(f"image {H}x{W} not divisible by patch {p}")
        gh, gw = H // p, W // p
        if mask.shape != (B, gh, gw):
            raise GeometryError(f"mask shape {tuple(mask.shape)} != {(B, gh, gw)}")
        mask_flat = mask.reshape(B, gh * gw).bool()
        n_vis = int((~mask_flat[0]).sum())
        if n_vis == 0:
            raise ValueError("at least one patch must stay visible")
        if not (((~mask_flat).sum(dim=1)) == n_vis).all():
            raise GeometryError("all samples in a batch must share the visible count")

        patches = patchify_t(pixels, p)                      # (B, L, 3p^2)
        x = self.patch_embed(patches)
        x = x + self.pos_embed((gh, gw), self.config.embed_dim)[None]
        # row-major order of visible patches, per sample
        ids_vis = torch.argsort(mask_flat.long(), dim=1, stable=True)[:, :n_vis]
        x = torch.gather(x, 1, ids_vis[:, :, None].expand(-1, -1, x.shape[2]))
        for blk in self.blocks:
            x, _ = blk(x)
        x = self.norm(x)

        y = self.decoder_embed(x)
        L = gh * gw
        full = self.mask_token.expand(B, L, y.shape[2]).clone()
        full.scatter_(1, ids_vis[:, :, None].expand(-1, -1, y.shape[2]), y)
        full = full + self.pos_embed((gh, gw), self.config.decoder_embed_dim)[None]
        attns = [] if need_weights else None
        for blk in self.decoder_blocks:
            full, attn = blk(full, need_weights)
            if need_weights:
                attns.append(attn)
        full = self.decoder_norm(full)
        return self.head(full), attns


def patchify_t(pixels: torch.Tensor, patch: int) -> torch.Tensor:
    """(B, 3, H, W) -> (B, L, 3*patch^2), row-major patches."""
    B, C, H, W = pixels.shape
    gh, gw = H // patch, W // patch
    x = pixels.reshape(B, C, gh, patch, gw, patch)
    x = x.permute(0, 2, 4, 3, 5, 1)  # B, gh, gw, p, p, C
    return x.reshape(B, gh * gw, patch * patch * C)


def unpatchify_t(patches: torch.Tensor, grid_hw: tuple[int, int], patch: int) -> torch.Tensor:
    B, L, D = patches.shape
    gh, gw = grid_hw
    C = D // (patch * patch)
    x = patches.reshape(B, gh, gw, patch, patch, C)
    x = x.permute(0, 5, 1, 3, 2, 4)
    return x.reshape(B, C, gh * patch, gw * patch)


def patchify(image: Image, patch_size: int) -> np.ndarray:
    """Image -> (L, 3*patch^2) row-major patch vectors."""
    check_image(image)
    h, w = image.shape[:2]
    if h % patch_size != 0 or w % patch_size != 0:
        raise GeometryError(f"image {h}x{w} not divisible by patch {patch_size}")
    t = torch.from_numpy(np.ascontiguousarray(image)).permute(2, 0, 1)[None]
    return patchify_t(t, patch_size)[0].numpy()


def unpatchify(patches: np.ndarray, grid_hw: tuple[int, int], patch_size: int) -> Image:
    t = torch.from_numpy(np.ascontiguousarray(patches))[None]
    img = unpatchify_t(t, grid_hw, patch_size)[0]
    return img.permute(1, 2, 0).numpy()


def random_mask(grid_hw: tuple[int, int], ratio: float, seed) -> np.ndarray:
    """Exactly round(ratio*N) masked patches via a seeded uniform shuffle."""
    if not 0.0 < ratio < 1.0:
        raise ConfigurationError(f"mask ratio must be in (0, 1), got {ratio}")
    gh, gw = grid_hw
    n = gh * gw
    k = int(round(ratio * n))
    rng = np.random.default_rng(seed)
    mask = np.zeros(n, dtype=bool)
    mask[rng.permutation(n)[:k]] = True
    return mask.reshape(gh, gw)


def block_mask_for_cell(cell_map, grid_hw: tuple[int, int]) -> np.ndarray:
    """Patch mask covering exactly the answer cell of a composed prompt."""
    gh, gw = grid_hw
    top, left, h, w = cell_map.answer_rect
    p = cell_map.patch_size
    mask = np.zeros((gh, gw), dtype=bool)
    mask[top // p:(top + h) // p, left // p:(left + w) // p] = True
    return mask


def predict_tokens(logits: torch.Tensor | np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Argmax token per masked position; visible positions are -1.

    Ties resolve to the lowest index.
    """
    arr = logits.detach().numpy() if isinstance(logits, torch.Tensor) else np.asarray(logits)
    if not np.isfinite(arr).all():
        raise ValueError("logits contain non-finite values")
    mask = np.asarray(mask, dtype=bool)
    gh, gw = mask.shape
    if arr.shape[0] != gh * gw:
        raise GeometryError(f"{arr.shape[0]} logit rows for {gh * gw} patches")
    out = np.full((gh, gw), -1, dtype=np.int64)
    picks = np.argmax(arr, axis=1).reshape(gh, gw)
    out[mask] = picks[mask]
    return out


def softmax_probs(logits: torch.Tensor) -> torch.Tensor:
    return F.softmax(logits, dim=-1)


def masked_ce_loss(logits: torch.Tensor, target: torch.Tensor | np.ndarray,
                   mask: torch.Tensor | np.ndarray) -> torch.Tensor:
    """Mean cross entropy of the target token over masked positions only.

    logits (B, L, V) or (L, V); target and mask follow the same batching.
    """
    if logits.dim() == 2:
        logits = logits[None]
    tgt = torch.as_tensor(np.asarray(target), dtype=torch.long).reshape(logits.shape[0], -1)
    msk = torch.as_tensor(np.asarray(mask), dtype=torch.bool).reshape(logits.shape[0], -1)
    if int(msk.sum()) == 0:
        raise ValueError("mask selects no positions")
    sel = logits.reshape(-1, logits.shape[-1])[msk.reshape(-1)]
    sel_t = tgt.reshape(-1)[msk.reshape(-1)]
    if int(sel_t.min()) < 0 or int(sel_t.max()) >= logits.shape[-1]:
        raise IndexError("target token out of vocabulary range")
    return F.cross_entropy(sel, sel_t)


def pixel_mae_loss(pred_patches: torch.Tensor, pixels: torch.Tensor,
                   mask: torch.Tensor | np.ndarray, patch_size: int) -> torch.Tensor:
    """Mean squared error over masked-position pixels (baseline head)."""
    if pred_patches.dim() == 2:
        pred_patches = pred_patches[None]
    if pixels.dim() == 3:
        pixels = pixels[None]
    msk = torch.as_tensor(np.asarray(mask), dtype=torch.bool).reshape(pred_patches.shape[0], -1)
    if int(msk.sum()) == 0:
        raise ValueError("mask selects no positions")
    target = patchify_t(pixels, patch_size)
    diff = (pred_patches - target)[msk]
    return diff.pow(2).mean()


def _to_batch(image: Image, mask: np.ndarray, model: MaeModel
              ) -> tuple[torch.Tensor, torch.Tensor]:
    check_image(image)
    dtype = next(model.parameters()).dtype
    px = torch.from_numpy(np.ascontiguousarray(image)).permute(2, 0, 1)[None].to(dtype)
    mk = torch.from_numpy(np.asarray(mask, dtype=bool))[None]
    return px, mk


def forward_logits(model: MaeModel, image: Image, mask: np.ndarray) -> torch.Tensor:
    """Single-image forward pass; returns (L, out_dim) logits."""
    px, mk = _to_batch(image, mask, model)
    with torch.no_grad():
        logits, _ = model(px, mk)
    return logits[0]


def inpaint(mae: MaeModel, vq: VqModel, image: Image, mask: np.ndarray) -> Image:
    """Fill masked patches: predicted tokens decode to pixels, spliced into the input.

    Visible-region pixels of the output are byte-equal to the input.
    """
    if mae.config.patch_size != vq.config.patch_size:
        raise GeometryError(
            f"model patch sizes differ: mae {mae.config.patch_size} vs vq "
            f"{vq.config.patch_size}")
    if mae.config.head == "token_logits" and mae.config.vocab_size != vq.config.vocab_size:
        raise GeometryError(
            f"vocab sizes differ: mae {mae.config.vocab_size} vs vq "
            f"{vq.config.vocab_size}")
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("mask is empty; nothing to inpaint")
    p = mae.config.patch_size

    if mae.config.head == "pixel_regression":
        logits = forward_logits(mae, image, mask)
        full = unpatchify(logits.numpy().astype(np.float32), mask.shape, p)
        decoded = np.clip(full, 0.0, 1.0)
    else:
        tokens = encode_image(vq, image)
        if tokens.shape != mask.shape:
            raise GeometryError(f"token grid {tokens.shape} != mask {mask.shape}")
        logits = forward_logits(mae, image, mask)
        pred = predict_tokens(logits, mask)
        composite = np.where(mask, pred, tokens)
        decoded = decode_tokens(vq, composite)

    pix_mask = np.kron(mask, np.ones((p, p), dtype=bool))
    return np.where(pix_mask[:, :, None], decoded.astype(np.float32),
                    image.astype(np.float32))


def attention_maps(model: MaeModel, image: Image, mask: np.ndarray,
                   query_patch: tuple[int, int]) -> np.ndarray:
    """Decoder attention from one masked patch, averaged over heads and layers.

    Returns a (gh, gw) map normalized to sum 1.
    """
    mask = np.asarray(mask, dtype=bool)
    r, c = query_patch
    if not (0 <= r < mask.shape[0] and 0 <= c < mask.shape[1]):
        raise ValueError(f"query patch {query_patch} outside grid {mask.shape}")
    if not mask[r, c]:
        raise ValueError(f"query patch {query_patch} is not masked")
    px, mk = _to_batch(image, mask, model)
    with torch.no_grad():
        _, attns = model(px, mk, need_weights=True)
    qpos = r * mask.shape[1] + c
    rows = torch.stack([a[0, :, qpos, :] for a in attns])  # (layers, heads, L)
    avg = rows.mean(dim=(0, 1))
    avg = avg / avg.sum()
    return avg.float().numpy().reshape(mask.shape)
