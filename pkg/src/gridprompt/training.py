"""Optimization loops: VQ pretraining, MAE training, schedules, ablations."""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import checkpoint as ckpt
from .errors import ConfigurationError
from .figures import DatasetManifest, render_training_figure
from .imageops import read_png
from .mae import MaeConfig, MaeModel, masked_ce_loss, random_mask
from .vq import VqConfig, VqModel, quantize, vq_loss_terms

STAGE_DEFAULTS = {
    # epochs and 256-batch-reference base lr per stage
    "vq": {"epochs": 20, "base_lr": 4e-3},
    "mae": {"epochs": 100, "base_lr": 3e-3},
}


@dataclass
class TrainConfig:
    stage: str = "mae"                 # "vq" | "mae"
    manifest: str = ""
    epochs: int | None = None          # None -> stage default
    batch_size: int = 64
    base_lr: float | None = None       # reference lr at batch 256; None -> stage default
    warmup_epochs: float | None = None  # None -> 5% of epochs
    mask_ratio: float = 0.75
    seed: int = 0
    checkpoint: str = "checkpoints/model.ckpt"
    weight_decay: float = 0.05
    grad_clip: float = 1.0
    beta: float = 0.25                 # VQ commitment weight
    ce_all_positions: bool = False     # MAE: loss on all positions, not just masked
    block_mask_prob: float = 0.0       # MAE: chance of masking the figure's answer cell
    # model dims (VQ)
    vocab_size: int = 256
    codebook_dim: int = 64
    patch_size: int = 8
    vq_channels: tuple[int, ...] = (16, 32, 128)
    vq_decoder_channels: int = 128
    vq_decoder_depth: int = 2
    # model dims (MAE)
    embed_dim: int = 192
    depth: int = 6
    num_heads: int = 6
    decoder_embed_dim: int = 128
    decoder_depth: int = 4
    decoder_num_heads: int = 4

    def __post_init__(self):
        if self.stage not in STAGE_DEFAULTS:
            raise ConfigurationError(f"unknown stage {self.stage!r}")
        if self.epochs is None:
            self.epochs = STAGE_DEFAULTS[self.stage]["epochs"]
        if self.base_lr is None:
            self.base_lr = STAGE_DEFAULTS[self.stage]["base_lr"]
        if self.warmup_epochs is None:
            self.warmup_epochs = 0.05 * self.epochs
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if not 0.0 < self.mask_ratio < 1.0:
            raise ConfigurationError(f"mask ratio {self.mask_ratio} outside (0, 1)")
        if self.base_lr <= 0:
            raise ConfigurationError("base lr must be positive")

    @property
    def effective_lr(self) -> float:
        return self.base_lr * self.batch_size / 256.0

    def vq_config(self) -> VqConfig:
        return VqConfig(vocab_size=self.vocab_size, embed_dim=self.codebook_dim,
                        patch_size=self.patch_size, channels=tuple(self.vq_channels),
                        decoder_channels=self.vq_decoder_channels,
                        decoder_depth=self.vq_decoder_depth)

    def mae_config(self, head: str = "token_logits") -> MaeConfig:
        return MaeConfig(patch_size=self.patch_size, embed_dim=self.embed_dim,
                         depth=self.depth, num_heads=self.num_heads,
                         decoder_embed_dim=self.decoder_embed_dim,
                         decoder_depth=self.decoder_depth,
                         decoder_num_heads=self.decoder_num_heads,
                         vocab_size=self.vocab_size, head=head)

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["vq_channels"] = list(self.vq_channels)
        return d


_BOOL_FIELDS = {"ce_all_positions"}


def parse_config_file(path, **overrides) -> TrainConfig:
    """Plain-text `key = value` config; explicit overrides win."""
    values: dict = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"bad config line {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        values[key] = val
    values.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_strings(values)


def config_from_strings(values: dict) -> TrainConfig:
    kwargs: dict = {}
    fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    for key, val in values.items():
        if key not in fields:
            raise ConfigurationError(f"unknown config key {key!r}")
        if not isinstance(val, str):
            kwargs[key] = val
            continue
        if key in ("stage", "manifest", "checkpoint"):
            kwargs[key] = val
        elif key in _BOOL_FIELDS:
            kwargs[key] = val.lower() in ("1", "true", "yes")
        elif key == "vq_channels":
            kwargs[key] = tuple(int(x) for x in val.split(","))
        elif key in ("epochs", "batch_size", "seed", "vocab_size", "codebook_dim",
                     "patch_size", "embed_dim", "depth", "num_heads",
                     "decoder_embed_dim", "decoder_depth", "decoder_num_heads",
                     "vq_decoder_channels", "vq_decoder_depth"):
            kwargs[key] = int(val)
        else:
            kwargs[key] = float(val)
    return TrainConfig(**kwargs)


def lr_at(step: int, config: TrainConfig, steps_per_epoch: int) -> float:
    """Linear warmup to the effective lr, then cosine decay to zero."""
    total = config.epochs * steps_per_epoch
    warmup = int(round(config.warmup_epochs * steps_per_epoch))
    base = config.effective_lr
    if warmup > 0 and step <= warmup:
        return base * step / warmup
    if total <= warmup:
        return base
    t = (step - warmup) / (total - warmup)
    return base * 0.5 * (1.0 + math.cos(math.pi * min(t, 1.0)))


@dataclass
class LoadedSplit:
    images: list            # uint8 (H, W, 3) arrays
    seeds: list              # per-image generation seeds (for mask replay)
    kinds: list


def load_split(manifest: DatasetManifest, split: str) -> LoadedSplit:
    images, seeds, kinds = [], [], []
    for rec in manifest.records:
        if rec.split != split:
            continue
        img = read_png(manifest.root / rec.path)
        images.append((img * 255.0).round().astype(np.uint8))
        seeds.append(rec.seed)
        kinds.append(rec.kind)
    return LoadedSplit(images, seeds, kinds)


def batched_indices(images: list, batch_size: int, rng: np.random.Generator | None
                    ) -> list[np.ndarray]:
    """Shape-homogeneous batches; order shuffled when an rng is given."""
    order = np.arange(len(images))
    if rng is not None:
        order = rng.permutation(len(images))
    buckets: dict = {}
    for i in order:
        buckets.setdefault(images[i].shape, []).append(i)
    batches = []
    for _, idxs in sorted(buckets.items()):
        for off in range(0, len(idxs), batch_size):
            batches.append(np.array(idxs[off:off + batch_size]))
    if rng is not None:
        batches = [batches[i] for i in rng.permutation(len(batches))]
    return batches


def _to_tensor(images: list, idxs: np.ndarray) -> torch.Tensor:
    stack = np.stack([images[i] for i in idxs]).astype(np.float32) / 255.0
    return torch.from_numpy(stack).permute(0, 3, 1, 2)


def _param_groups(model: torch.nn.Module, weight_decay: float):
    decay, no_decay = [], []
    for name, p in model.named_parameters():
        if not p.requires_grad:
            continue
        if p.ndim <= 1 or name.endswith("mask_token") or "codebook" in name:
            no_decay.append(p)
        else:
            decay.append(p)
    return [{"params": decay, "weight_decay": weight_decay},
            {"params": no_decay, "weight_decay": 0.0}]


@dataclass
class TrainResult:
    checkpoint: str
    history: dict = field(repr=False)
    model: torch.nn.Module = field(repr=False)


class _Log:
    def __init__(self, path: Path):
        self.path = path
        path.parent.mkdir(parents=True, exist_ok=True)
        self.entries: list = []
        self._fh = open(path, "w", encoding="utf-8")

    def add(self, **entry):
        self.entries.append(entry)
        self._fh.write(json.dumps(entry) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()


def _check_finite(loss: torch.Tensor, stage: str, epoch: int, step: int):
    if not torch.isfinite(loss):
        raise RuntimeError(
            f"{stage} training diverged: non-finite loss at epoch {epoch}, step {step}")


def _maybe_resume(config: TrainConfig, load_fn):
    path = Path(config.checkpoint)
    if not path.exists():
        return None
    stored = ckpt.checkpoint_config(path)
    if stored.get("train_config") == config.as_dict():
        return load_fn(path)
    return None


def train_vq(config: TrainConfig, resume: bool = False) -> TrainResult:
    """Train the VQ autoencoder; logs per-epoch train loss and val MSE."""
    if config.stage != "vq":
        raise ConfigurationError(f"config stage is {config.stage!r}, expected 'vq'")
    if resume:
        model = _maybe_resume(config, ckpt.load_vq_model)
        if model is not None:
            history = _load_history(config.checkpoint)
            return TrainResult(str(config.checkpoint), history, model)

    manifest = DatasetManifest.load(Path(config.manifest))
    train, val = load_split(manifest, "train"), load_split(manifest, "val")
    torch.manual_seed(config.seed)
    model = VqModel(config.vq_config())
    _init_codebook_from_data(model, train, config)
    opt = torch.optim.AdamW(_param_groups(model, config.weight_decay),
                            lr=config.effective_lr, betas=(0.9, 0.95))
    steps_per_epoch = max(1, len(batched_indices(train.images, config.batch_size, None)))
    log = _Log(_log_path(config.checkpoint))
    reservoir = _Reservoir(capacity=8192)

    step = 0
    for epoch in range(1, config.epochs + 1):
        rng = np.random.default_rng([config.seed, 3, epoch])
        usage = np.zeros(config.vocab_size, dtype=np.int64)
        model.train()
        epoch_loss, n_batches = 0.0, 0
        for idxs in batched_indices(train.images, config.batch_size, rng):
            lr = lr_at(step, config, steps_per_epoch)
            for g in opt.param_groups:
                g["lr"] = lr
            x = _to_tensor(train.images, idxs)
            z = model.encode_latents(x)
            idx, _ = quantize(z, model.codebook)
            usage += np.bincount(idx.reshape(-1).numpy(), minlength=config.vocab_size)
            reservoir.offer(z.detach().reshape(-1, z.shape[-1]).numpy(), rng)
            terms = vq_loss_terms(model, x, config.beta)
            _check_finite(terms.total, "vq", epoch, step)
            opt.zero_grad()
            terms.total.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
            opt.step()
            epoch_loss += terms.total.detach().item()
            n_batches += 1
            step += 1
        _reinit_dead_codes(model, usage, reservoir, rng)
        log.add(epoch=epoch, split="train", loss=epoch_loss / max(1, n_batches),
                lr=lr_at(step, config, steps_per_epoch))
        log.add(epoch=epoch, split="val", loss=_val_mse(model, val, config.batch_size),
                lr=lr_at(step, config, steps_per_epoch))
    log.close()

    cfg = dataclasses.asdict(model.config)
    cfg["channels"] = list(cfg["channels"])
    cfg.update(kind="vq", train_config=config.as_dict())
    ckpt.save_checkpoint(config.checkpoint, {k: v.detach().numpy()
                                             for k, v in model.state_dict().items()}, cfg)
    model.eval()
    return TrainResult(str(config.checkpoint), _entries_to_history(log.entries), model)


def _init_codebook_from_data(model: VqModel, train: LoadedSplit, config: TrainConfig):
    """Seed codebook entries with real encoder latents so every entry starts live."""
    rng = np.random.default_rng([config.seed, 5])
    take = min(len(train.images), config.batch_size)
    idxs = rng.choice(len(train.images), size=take, replace=False)
    idxs = [i for i in idxs if train.images[i].shape == train.images[idxs[0]].shape]
    with torch.no_grad():
        z = model.encode_latents(_to_tensor(train.images, np.asarray(idxs)))
        flat = z.reshape(-1, z.shape[-1]).numpy()
        pick = rng.choice(len(flat), size=config.vocab_size, replace=len(flat) < config.vocab_size)
        noise = 0.01 * rng.standard_normal((config.vocab_size, flat.shape[1]))
        model.codebook.weight.copy_(torch.from_numpy((flat[pick] + noise).astype(np.float32)))


class _Reservoir:
    """Uniform sample of encoder latents, for re-seeding dead codebook entries."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.rows: list = []
        self.seen = 0

    def offer(self, rows: np.ndarray, rng: np.random.Generator):
        take = min(len(rows), 256)  # cap per batch to keep this cheap
        pick = rng.choice(len(rows), size=take, replace=False)
        for r in rows[pick]:
            self.seen += 1
            if len(self.rows) < self.capacity:
                self.rows.append(r)
            else:
                j = int(rng.integers(self.seen))
                if j < self.capacity:
                    self.rows[j] = r

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        pick = rng.integers(len(self.rows), size=count)
        return np.stack([self.rows[i] for i in pick])


def _reinit_dead_codes(model: VqModel, usage: np.ndarray, reservoir: _Reservoir,
                       rng: np.random.Generator):
    dead = np.flatnonzero(usage == 0)
    if len(dead) == 0 or not reservoir.rows:
        return
    fresh = reservoir.sample(len(dead), rng)
    with torch.no_grad():
        model.codebook.weight[torch.from_numpy(dead)] = torch.from_numpy(
            fresh.astype(np.float32))


def _val_mse(model: VqModel, val: LoadedSplit, batch_size: int) -> float:
    model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for idxs in batched_indices(val.images, batch_size, None):
            x = _to_tensor(val.images, idxs)
            z = model.encode_latents(x)
            _, zq = quantize(z, model.codebook)
            recon = model.decode_latents(zq).clamp(0.0, 1.0)
            total += float((recon - x).pow(2).sum())
            count += x.numel()
    return total / max(1, count)


def _precompute_tokens(vq: VqModel, images: list, batch_size: int) -> list:
    tokens: list = [None] * len(images)
    with torch.no_grad():
        for idxs in batched_indices(images, batch_size, None):
            x = _to_tensor(images, idxs)
            z = vq.encode_latents(x)
            idx, _ = quantize(z, vq.codebook)
            for row, i in enumerate(idxs):
                tokens[i] = idx[row].numpy().astype(np.int64)
    return tokens


def _grid_masks(split: LoadedSplit, patch: int, distractor_fraction: float) -> list:
    """Answer-cell masks replayed from figure seeds (block-mask experiments only)."""
    masks: list = [None] * len(split.images)
    for i, (seed, kind) in enumerate(zip(split.seeds, split.kinds)):
        if kind == "single":
            continue
        canvas = split.images[i].shape[0]
        fig = render_training_figure(seed, canvas, patch,
                                     distractor_fraction=distractor_fraction)
        if fig.prompt is not None:
            masks[i] = fig.prompt.mask
    return masks


def train_mae(config: TrainConfig, vq_checkpoint, resume: bool = False) -> TrainResult:
    """Train the masked-token predictor against a frozen VQ codebook."""
    if config.stage != "mae":
        raise ConfigurationError(f"config stage is {config.stage!r}, expected 'mae'")
    if resume:
        model = _maybe_resume(config, ckpt.load_mae_model)
        if model is not None:
            history = _load_history(config.checkpoint)
            return TrainResult(str(config.checkpoint), history, model)

    vq = ckpt.load_vq_model(vq_checkpoint)
    if vq.config.patch_size != config.patch_size:
        raise ConfigurationError(
            f"vq patch {vq.config.patch_size} != config patch {config.patch_size}")
    if vq.config.vocab_size != config.vocab_size:
        raise ConfigurationError(
            f"vq vocab {vq.config.vocab_size} != config vocab {config.vocab_size}")
    vq.eval()
    for p in vq.parameters():
        p.requires_grad_(False)

    manifest = DatasetManifest.load(Path(config.manifest))
    train, val = load_split(manifest, "train"), load_split(manifest, "val")
    train_tokens = _precompute_tokens(vq, train.images, config.batch_size)
    val_tokens = _precompute_tokens(vq, val.images, config.batch_size)
    block_masks = (_grid_masks(train, config.patch_size, 0.16)
                   if config.block_mask_prob > 0 else None)

    torch.manual_seed(config.seed)
    model = MaeModel(config.mae_config())
    opt = torch.optim.AdamW(_param_groups(model, config.weight_decay),
                            lr=config.effective_lr, betas=(0.9, 0.95))
    steps_per_epoch = max(1, len(batched_indices(train.images, config.batch_size, None)))
    log = _Log(_log_path(config.checkpoint))

    # fixed val masks so the metric is comparable across epochs
    val_masks = [random_mask((t.shape[0], t.shape[1]), config.mask_ratio,
                             [config.seed, 4, i]) for i, t in enumerate(val_tokens)]

    step = 0
    for epoch in range(1, config.epochs + 1):
        rng = np.random.default_rng([config.seed, 3, epoch])
        model.train()
        epoch_loss, n_batches = 0.0, 0
        for idxs in batched_indices(train.images, config.batch_size, rng):
            lr = lr_at(step, config, steps_per_epoch)
            for g in opt.param_groups:
                g["lr"] = lr
            x = _to_tensor(train.images, idxs)
            grid = train_tokens[idxs[0]].shape
            masks = np.stack([_train_mask(grid, config, rng, block_masks, i)
                              for i in idxs])
            targets = np.stack([train_tokens[i] for i in idxs])
            logits, _ = model(x, torch.from_numpy(masks))
            loss_mask = np.ones_like(masks) if config.ce_all_positions else masks
            loss = masked_ce_loss(logits, targets, loss_mask)
            _check_finite(loss, "mae", epoch, step)
            opt.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
            opt.step()
            epoch_loss += loss.detach().item()
            n_batches += 1
            step += 1
        log.add(epoch=epoch, split="train", loss=epoch_loss / max(1, n_batches),
                lr=lr_at(step, config, steps_per_epoch))
        log.add(epoch=epoch, split="val",
                loss=_val_ce(model, val, val_tokens, val_masks, config.batch_size),
                lr=lr_at(step, config, steps_per_epoch))
    log.close()

    cfg = dataclasses.asdict(model.config)
    cfg.update(kind="mae", train_config=config.as_dict())
    ckpt.save_checkpoint(config.checkpoint, {k: v.detach().numpy()
                                             for k, v in model.state_dict().items()}, cfg)
    model.eval()
    return TrainResult(str(config.checkpoint), _entries_to_history(log.entries), model)


def _train_mask(grid, config: TrainConfig, rng, block_masks, image_idx) -> np.ndarray:
    if (block_masks is not None and block_masks[image_idx] is not None
            and rng.random() < config.block_mask_prob):
        return block_masks[image_idx]
    return random_mask(grid, config.mask_ratio, rng)


def _val_ce(model: MaeModel, val: LoadedSplit, tokens: list, masks: list,
            batch_size: int) -> float:
    model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for idxs in batched_indices(val.images, batch_size, None):
            x = _to_tensor(val.images, idxs)
            m = np.stack([masks[i] for i in idxs])
            t = np.stack([tokens[i] for i in idxs])
            logits, _ = model(x, torch.from_numpy(m))
            n = int(m.sum())
            total += float(masked_ce_loss(logits, t, m)) * n
            count += n
    return total / max(1, count)


def _log_path(checkpoint) -> Path:
    return Path(str(checkpoint) + ".log.jsonl")


def _load_history(checkpoint) -> dict:
    path = _log_path(checkpoint)
    if not path.exists():
        return {"train": [], "val": []}
    entries = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
    return _entries_to_history(entries)


def _entries_to_history(entries: list) -> dict:
    hist: dict = {"train": [], "val": []}
    for e in entries:
        hist[e["split"]].append(e)
    return hist


def ablation_grid_vs_plain(config_grid: TrainConfig, config_plain: TrainConfig,
                           vq_checkpoint, eval_fn, resume: bool = True) -> dict:
    """Train grid-figure and distractor-only MAEs, evaluate both with eval_fn.

    eval_fn(model) -> dict of task -> EvalReport; both models share the frozen
    VQ codebook so only the training data differs.
    """
    res_grid = train_mae(config_grid, vq_checkpoint, resume=resume)
    res_plain = train_mae(config_plain, vq_checkpoint, resume=resume)
    return {
        "grid": {"checkpoint": res_grid.checkpoint, "reports": eval_fn(res_grid.model)},
        "plain": {"checkpoint": res_plain.checkpoint, "reports": eval_fn(res_plain.model)},
    }
