"""Procedural grid-figure dataset and labeled synthetic task instances.

Shapes live in unit-square coordinates so every element can be re-rendered
exactly at any pixel resolution (no resampling of labels). Training figures
are fully filled prompt grids plus a fraction of non-grid single images;
evaluation instances are drawn from a reserved seed stream disjoint from
training seeds.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .composer import (GridLayout, LabelStyle, TaskExample, VisualPrompt,
                       compose_prompt, feasible_example_counts, grid_shape,
                       mask_boundary, paste_answer, render_label)
from .errors import ConfigurationError, GeometryError
from .imageops import Image, write_png
from .metrics import Box

CELL_SIDE = 64  # canonical render resolution for stored instance images

COLORS = {
    "black": (0.0, 0.0, 0.0),
    "white": (1.0, 1.0, 1.0),
    "green": (0.0, 1.0, 0.0),
    "blue": (0.0, 0.0, 1.0),
    "red": (1.0, 0.0, 0.0),
    "purple": (0.5, 0.0, 0.5),
    "yellow": (1.0, 1.0, 0.0),
}

SHAPE_COLOR_POOL = ("green", "blue", "red", "white", "purple", "yellow")
COLOR_AWARE_POOL = ("green", "blue", "white")  # colors scoreable by the color-aware metric

RADIUS_RANGE = (0.12, 0.30)   # fraction of the cell side
BORDER_MARGIN = 2.0 / CELL_SIDE  # centers stay radius + 2px (canonical) from borders
SIZE_FACTOR = 0.5             # size-change halves the radius
LUMA = (0.299, 0.587, 0.114)


class TaskKind(str, Enum):
    color_change = "color_change"
    shape_change = "shape_change"
    size_change = "size_change"
    color_and_shape = "color_and_shape"
    color_and_size = "color_and_size"
    shape_and_size = "shape_and_size"
    foreground_seg = "foreground_seg"
    single_object_detection = "single_object_detection"
    colorization = "colorization"
    edge_map = "edge_map"


COMBO_PARTS = {
    TaskKind.color_and_shape: (TaskKind.color_change, TaskKind.shape_change),
    TaskKind.color_and_size: (TaskKind.color_change, TaskKind.size_change),
    TaskKind.shape_and_size: (TaskKind.shape_change, TaskKind.size_change),
}

# fixed ordinals keep eval seed streams stable if enum order ever changes
KIND_ORDINAL = {k: i for i, k in enumerate(TaskKind)}


@dataclass(frozen=True)
class Shape:
    kind: str        # "disc" | "rect"
    cy: float
    cx: float
    ry: float
    rx: float
    color: str

    def as_dict(self) -> dict:
        return {"kind": self.kind, "cy": self.cy, "cx": self.cx,
                "ry": self.ry, "rx": self.rx, "color": self.color}


def shape_mask(shape: Shape, size: tuple[int, int]) -> np.ndarray:
    """Rasterize the shape's support at pixel centers of a (H, W) grid."""
    h, w = size
    ys = (np.arange(h, dtype=np.float64) + 0.5) / h
    xs = (np.arange(w, dtype=np.float64) + 0.5) / w
    dy = (ys[:, None] - shape.cy) / shape.ry
    dx = (xs[None, :] - shape.cx) / shape.rx
    if shape.kind == "disc":
        return dy * dy + dx * dx <= 1.0
    if shape.kind == "rect":
        return (np.abs(dy) <= 1.0) & (np.abs(dx) <= 1.0)
    raise ConfigurationError(f"unknown shape kind {shape.kind!r}")


def render_scene(shapes, size: tuple[int, int]) -> Image:
    """Shapes painted in order over a black background."""
    img = np.zeros((*size, 3), dtype=np.float32)
    for s in shapes:
        img[shape_mask(s, size)] = COLORS[s.color]
    return img


def grayscale(img: Image) -> Image:
    y = img[:, :, 0] * LUMA[0] + img[:, :, 1] * LUMA[1] + img[:, :, 2] * LUMA[2]
    return np.repeat(y[:, :, None], 3, axis=2).astype(np.float32)


def _sample_shape(rng: np.random.Generator, color: str, kind: str | None = None) -> Shape:
    if kind is None:
        kind = "disc" if rng.random() < 0.5 else "rect"
    ry = float(rng.uniform(*RADIUS_RANGE))
    rx = ry if kind == "disc" else float(rng.uniform(*RADIUS_RANGE))
    cy = float(rng.uniform(ry + BORDER_MARGIN, 1.0 - ry - BORDER_MARGIN))
    cx = float(rng.uniform(rx + BORDER_MARGIN, 1.0 - rx - BORDER_MARGIN))
    return Shape(kind, cy, cx, ry, rx, color)


def _transform(kind: TaskKind, shape: Shape) -> Shape:
    """Output-scene shape for the change-prediction tasks."""
    out = shape
    if kind in (TaskKind.color_change, TaskKind.color_and_shape, TaskKind.color_and_size):
        out = Shape(out.kind, out.cy, out.cx, out.ry, out.rx, "blue")
    if kind in (TaskKind.shape_change, TaskKind.color_and_shape, TaskKind.shape_and_size):
        out = Shape("rect", out.cy, out.cx, out.ry, out.rx, out.color)
    if kind in (TaskKind.size_change, TaskKind.color_and_size, TaskKind.shape_and_size):
        out = Shape(out.kind, out.cy, out.cx, out.ry * SIZE_FACTOR, out.rx * SIZE_FACTOR,
                    out.color)
    return out


@dataclass
class TaskInstance:
    kind: TaskKind
    examples: list  # list[TaskExample] at the canonical cell resolution
    query: Image
    ground_truth: object  # Image, bool mask, or Box depending on kind
    meta: dict = field(repr=False)


def _pair_shapes(kind: TaskKind, rng: np.random.Generator) -> tuple[Shape, Shape | None]:
    """(input scene shape, output scene shape or None for label tasks)."""
    if kind in (TaskKind.color_change, TaskKind.color_and_shape, TaskKind.color_and_size):
        src = _sample_shape(rng, "green", "disc")
    elif kind in (TaskKind.shape_change, TaskKind.size_change, TaskKind.shape_and_size):
        color = str(rng.choice(COLOR_AWARE_POOL))
        src = _sample_shape(rng, color, "disc")
    else:
        color = str(rng.choice(SHAPE_COLOR_POOL))
        src = _sample_shape(rng, color)
    if kind in COMBO_PARTS or kind in (TaskKind.color_change, TaskKind.shape_change,
                                       TaskKind.size_change):
        return src, _transform(kind, src)
    return src, None


def _render_pair(kind: TaskKind, in_shape: Shape, out_shape: Shape | None,
                 style: LabelStyle, size: tuple[int, int]) -> tuple[Image, Image]:
    """Input and output cell images for one example pair."""
    if out_shape is not None:
        return render_scene([in_shape], size), render_scene([out_shape], size)
    mask = shape_mask(in_shape, size)
    if kind == TaskKind.foreground_seg:
        return render_scene([in_shape], size), render_label(mask, style)
    if kind == TaskKind.single_object_detection:
        box = mask_bbox(mask)
        return render_scene([in_shape], size), render_label(box, style, size=size)
    if kind == TaskKind.colorization:
        color = render_scene([in_shape], size)
        return grayscale(color), color
    if kind == TaskKind.edge_map:
        edges = mask_boundary(mask)
        return render_scene([in_shape], size), render_label(edges, LabelStyle("black_white"))
    raise ConfigurationError(f"unhandled task kind {kind}")


def mask_bbox(mask: np.ndarray) -> Box:
    ys, xs = np.nonzero(mask)
    if len(ys) == 0:
        raise GeometryError("empty mask has no bounding box")
    top, left = int(ys.min()), int(xs.min())
    return Box(top, left, int(ys.max()) - top + 1, int(xs.max()) - left + 1)


def _ground_truth(kind: TaskKind, q_in: Shape, q_out: Shape | None,
                  size: tuple[int, int]):
    if q_out is not None:
        return shape_mask(q_out, size)  # region of the transformed shape
    mask = shape_mask(q_in, size)
    if kind == TaskKind.foreground_seg:
        return mask
    if kind == TaskKind.single_object_detection:
        return mask_bbox(mask)
    if kind == TaskKind.colorization:
        return render_scene([q_in], size)
    if kind == TaskKind.edge_map:
        return mask_boundary(mask)
    raise ConfigurationError(f"unhandled task kind {kind}")


def sample_task(kind: TaskKind, n_examples: int, rng_seed,
                style: LabelStyle | None = None) -> TaskInstance:
    """Draw one labeled instance: n example pairs + query + ground truth.

    Detection instances never exceed 50% object coverage (enforced and
    asserted; the sampling ranges already guarantee it).
    """
    kind = TaskKind(kind)
    if n_examples < 1:
        raise ConfigurationError("need at least one example")
    rng = np.random.default_rng(rng_seed)
    if style is None:
        style = LabelStyle("black_white", "filled")
    size = (CELL_SIDE, CELL_SIDE)

    # query first: instances with different example counts share the query
    q_in, q_out = _pair_shapes(kind, rng)
    pair_shapes = [_pair_shapes(kind, rng) for _ in range(n_examples)]
    for src, _ in [(q_in, q_out)] + pair_shapes:
        if kind == TaskKind.single_object_detection:
            area = float(shape_mask(src, size).mean())
            if area > 0.5:
                raise ConfigurationError(f"object covers {area:.0%} > 50% of the image")

    examples = [TaskExample(*_render_pair(kind, s_in, s_out, style, size))
                for (s_in, s_out) in pair_shapes]
    query = render_scene([q_in], size) if kind != TaskKind.colorization \
        else grayscale(render_scene([q_in], size))
    gt = _ground_truth(kind, q_in, q_out, size)

    target_color = COLORS[q_out.color] if q_out is not None else None
    meta = {
        "kind": kind.value,
        "style": {"palette": style.palette, "rendering": style.rendering,
                  "fg_color": style.fg_color, "bg_color": style.bg_color},
        "query": {"in": q_in.as_dict(), "out": q_out.as_dict() if q_out else None},
        "examples": [{"in": s.as_dict(), "out": o.as_dict() if o else None}
                     for (s, o) in pair_shapes],
        "target_color": target_color,
    }
    return TaskInstance(kind=kind, examples=examples, query=query, ground_truth=gt,
                        meta=meta)


def _pairs_from_meta(meta: dict) -> tuple[tuple, list]:
    query = (Shape(**meta["query"]["in"]),
             Shape(**meta["query"]["out"]) if meta["query"]["out"] else None)
    examples = [(Shape(**p["in"]), Shape(**p["out"]) if p["out"] else None)
                for p in meta["examples"]]
    return query, examples


def materialize(inst: TaskInstance, size: tuple[int, int]) -> TaskInstance:
    """Re-render an instance's images and ground truth at a new resolution."""
    style = LabelStyle(**inst.meta["style"])
    (q_in, q_out), pairs = _pairs_from_meta(inst.meta)
    examples = [TaskExample(*_render_pair(inst.kind, s_in, s_out, style, size))
                for (s_in, s_out) in pairs]
    query = render_scene([q_in], size) if inst.kind != TaskKind.colorization \
        else grayscale(render_scene([q_in], size))
    gt = _ground_truth(inst.kind, q_in, q_out, size)
    return TaskInstance(kind=inst.kind, examples=examples, query=query,
                        ground_truth=gt, meta=inst.meta)


def eval_seed(root_seed: int, kind: TaskKind, index: int) -> list[int]:
    """Reserved evaluation seed stream, disjoint from training figure seeds."""
    return [int(root_seed), 1, KIND_ORDINAL[TaskKind(kind)], int(index)]


def train_seed(root_seed: int, index: int) -> list[int]:
    return [int(root_seed), 0, int(index)]


@dataclass(frozen=True)
class FigureSample:
    image: Image
    is_grid: bool
    kind: str
    n_examples: int
    canvas_size: int
    prompt: VisualPrompt | None  # grid figures only; mask marks the (filled) answer cell


_TRAIN_N_CANDIDATES = (1, 2, 3, 4)
_STYLE_PALETTES = ("black_white", "black_white", "purple_yellow", "green_red")
_STYLE_RENDERINGS = ("filled", "filled", "filled", "edges_only", "textured")


def render_training_figure(rng_seed, canvas_size: int, patch_size: int,
                           distractor_fraction: float = 0.16) -> FigureSample:
    """One training figure: a fully filled prompt grid, or a single-image distractor."""
    if not 0.0 <= distractor_fraction <= 1.0:
        raise ConfigurationError(f"distractor fraction {distractor_fraction} outside [0, 1]")
    rng = np.random.default_rng(rng_seed)
    if rng.random() < distractor_fraction:
        n_shapes = int(rng.integers(1, 4))
        shapes = [_sample_shape(rng, str(rng.choice(SHAPE_COLOR_POOL)))
                  for _ in range(n_shapes)]
        img = render_scene(shapes, (canvas_size, canvas_size))
        return FigureSample(img, False, "single", 0, canvas_size, None)

    kind = TaskKind(str(rng.choice([k.value for k in TaskKind])))
    feasible = feasible_example_counts(canvas_size, patch_size, _TRAIN_N_CANDIDATES)
    if not feasible:
        raise GeometryError(f"no feasible grid at canvas {canvas_size}, patch {patch_size}")
    n = int(rng.choice(feasible))
    orientation = "horizontal" if rng.random() < 0.5 else "vertical"
    order = tuple(int(i) for i in rng.permutation(n))
    layout = GridLayout(orientation, order)
    style = LabelStyle(str(rng.choice(_STYLE_PALETTES)), str(rng.choice(_STYLE_RENDERINGS)))

    inst = sample_task(kind, n, rng, style=style)
    rows, cols = grid_shape(n, orientation)
    ch, cw = canvas_size // rows, canvas_size // cols
    inst = materialize(inst, (ch, cw))
    prompt = compose_prompt(inst.examples, inst.query, layout, canvas_size, patch_size)
    answer = _answer_image(inst, (ch, cw))
    filled = paste_answer(prompt.canvas, prompt.cell_map, answer)
    prompt = VisualPrompt(canvas=filled, mask=prompt.mask, cell_map=prompt.cell_map)
    return FigureSample(filled, True, kind.value, n, canvas_size, prompt)


def _answer_image(inst: TaskInstance, size: tuple[int, int]) -> Image:
    """The true completion of the answer cell, rendered at cell resolution."""
    style = LabelStyle(**inst.meta["style"])
    (q_in, q_out), _ = _pairs_from_meta(inst.meta)
    if q_out is not None:
        return render_scene([q_out], size)
    mask = shape_mask(q_in, size)
    if inst.kind == TaskKind.foreground_seg:
        return render_label(mask, style)
    if inst.kind == TaskKind.single_object_detection:
        return render_label(mask_bbox(mask), style, size=size)
    if inst.kind == TaskKind.colorization:
        return render_scene([q_in], size)
    if inst.kind == TaskKind.edge_map:
        return render_label(mask_boundary(mask), LabelStyle("black_white"))
    raise ConfigurationError(f"unhandled task kind {inst.kind}")


@dataclass
class ManifestRecord:
    id: int
    split: str
    path: str
    kind: str
    seed: list

    def to_json(self) -> str:
        return json.dumps({"id": self.id, "split": self.split, "path": self.path,
                           "kind": self.kind, "seed": self.seed})


@dataclass
class DatasetManifest:
    root: Path
    records: list

    def paths(self, split: str | None = None):
        return [self.root / r.path for r in self.records
                if split is None or r.split == split]

    def save(self, path: Path) -> None:
        lines = [r.to_json() for r in self.records]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        records = []
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            d = json.loads(line)
            records.append(ManifestRecord(d["id"], d["split"], d["path"], d["kind"],
                                          d["seed"]))
        return cls(root=path.parent, records=records)


DEFAULT_CANVAS_MIX = ((128, 0.8), (160, 0.2))


def build_dataset(count: int, out_dir, rng_seed: int,
                  distractor_fraction: float = 0.16,
                  canvas_mix=DEFAULT_CANVAS_MIX,
                  patch_size: int = 8) -> DatasetManifest:
    """Write `count` figures as PNGs plus a JSONL manifest with a 90/10 split."""
    if count < 10:
        raise ConfigurationError(f"need at least 10 figures for a 90/10 split, got {count}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    sizes = np.array([c for c, _ in canvas_mix])
    probs = np.array([p for _, p in canvas_mix], dtype=np.float64)
    probs = probs / probs.sum()

    n_val = count // 10
    order = np.random.default_rng([int(rng_seed), 2]).permutation(count)
    val_ids = set(int(i) for i in order[:n_val])

    records = []
    for i in range(count):
        seed = train_seed(rng_seed, i)
        canvas = int(np.random.default_rng(seed + [7]).choice(sizes, p=probs))
        fig = render_training_figure(seed, canvas, patch_size,
                                     distractor_fraction=distractor_fraction)
        name = f"fig_{i:05d}.png"
        write_png(out / name, fig.image)
        split = "val" if i in val_ids else "train"
        records.append(ManifestRecord(i, split, name, fig.kind, seed))
    manifest = DatasetManifest(root=out, records=records)
    manifest.save(out / "manifest.jsonl")
    return manifest
