"""Grid visual-prompt composition and answer extraction.

A prompt is a single square canvas tiled by equal cells. Horizontal
orientation puts one example pair [input | output] per row with the query
in the last row and a masked answer cell at its right; vertical orientation
is the transpose (one pair per column, query column last, hole at its
bottom). Every cell edge lands on a patch boundary so the answer hole maps
exactly onto a block of patches.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, EmptyExampleError, GeometryError
from .imageops import Image, check_image, resize_bilinear

HOLE_FILL = 0.5  # neutral mid-gray; masked pixels are never read by the model

PALETTES: dict[str, tuple[tuple[float, float, float], tuple[float, float, float]]] = {
    # name -> (foreground RGB, background RGB)
    "black_white": ((1.0, 1.0, 1.0), (0.0, 0.0, 0.0)),
    "purple_yellow": ((0.5, 0.0, 0.5), (1.0, 1.0, 0.0)),
    "green_red": ((0.0, 1.0, 0.0), (1.0, 0.0, 0.0)),
}

RENDERINGS = ("filled", "edges_only", "textured")
TEXTURE_PERIOD = 4  # px per checker square for the textured rendering


@dataclass(frozen=True)
class TaskExample:
    """One input-output pair (x_i, y_i)."""

    input: Image
    output: Image


@dataclass(frozen=True)
class GridLayout:
    """Placement scheme: orientation plus the order example pairs appear in.

    `row_order[i]` is the example index shown in grid slot i; the query slot
    is always last. For vertical orientation the "rows" are columns.
    """

    orientation: str = "horizontal"
    row_order: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.orientation not in ("horizontal", "vertical"):
            raise ConfigurationError(f"unknown orientation {self.orientation!r}")

    def order_for(self, n_examples: int) -> tuple[int, ...]:
        if self.row_order is None:
            return tuple(range(n_examples))
        if sorted(self.row_order) != list(range(n_examples)):
            raise ConfigurationError(
                f"row_order {self.row_order} is not a permutation of 0..{n_examples - 1}")
        return self.row_order


def layout_from_name(name: str, n_examples: int) -> GridLayout:
    """Named layouts used by ensembling sweeps: horizontal, vertical, vertical-rowswap."""
    if name == "horizontal":
        return GridLayout("horizontal")
    if name == "vertical":
        return GridLayout("vertical")
    if name == "vertical-rowswap":
        return GridLayout("vertical", tuple(reversed(range(n_examples))))
    if name == "horizontal-rowswap":
        return GridLayout("horizontal", tuple(reversed(range(n_examples))))
    raise ConfigurationError(f"unknown layout name {name!r}")


@dataclass(frozen=True)
class CellMap:
    """Pixel rectangle of every grid cell, plus which one is the answer.

    cells[(row, col)] = (top, left, height, width) in canvas pixels.
    """

    cells: dict = field(repr=False)
    answer_cell: tuple[int, int]
    canvas_size: int
    patch_size: int

    @property
    def answer_rect(self) -> tuple[int, int, int, int]:
        return self.cells[self.answer_cell]


@dataclass(frozen=True)
class VisualPrompt:
    canvas: Image
    mask: np.ndarray  # bool (rows, cols) over the patch lattice; True = hole
    cell_map: CellMap


@dataclass(frozen=True)
class LabelStyle:
    """How a raw label is drawn into a prompt cell."""

    palette: str = "black_white"
    rendering: str = "filled"
    fg_color: tuple[float, float, float] | None = None
    bg_color: tuple[float, float, float] | None = None

    def __post_init__(self):
        if self.rendering not in RENDERINGS:
            raise ConfigurationError(f"unknown rendering {self.rendering!r}")
        if self.palette != "custom" and self.palette not in PALETTES:
            raise ConfigurationError(f"unknown palette {self.palette!r}")
        if self.palette == "custom" and (self.fg_color is None or self.bg_color is None):
            raise ConfigurationError("custom palette needs fg_color and bg_color")
        if self.colors()[0] == self.colors()[1]:
            raise ConfigurationError("fg and bg colors must differ")

    def colors(self) -> tuple[tuple[float, float, float], tuple[float, float, float]]:
        if self.palette == "custom":
            return tuple(self.fg_color), tuple(self.bg_color)  # type: ignore[arg-type]
        return PALETTES[self.palette]


def grid_shape(n_examples: int, orientation: str) -> tuple[int, int]:
    """(rows, cols) of the cell grid for n examples plus the query."""
    if orientation == "horizontal":
        return n_examples + 1, 2
    return 2, n_examples + 1


def _check_geometry(canvas_size: int, patch_size: int, rows: int, cols: int) -> tuple[int, int]:
    if canvas_size % patch_size != 0:
        raise GeometryError(f"canvas {canvas_size} not divisible by patch {patch_size}")
    if canvas_size % rows != 0 or (canvas_size // rows) % patch_size != 0:
        raise GeometryError(
            f"cell height {canvas_size}/{rows} is not a patch multiple of {patch_size}")
    if canvas_size % cols != 0 or (canvas_size // cols) % patch_size != 0:
        raise GeometryError(
            f"cell width {canvas_size}/{cols} is not a patch multiple of {patch_size}")
    return canvas_size // rows, canvas_size // cols


def feasible_example_counts(canvas_size: int, patch_size: int, candidates=range(1, 9)) -> list[int]:
    """Example counts n whose (n+1)x2 grid tiles the canvas on patch boundaries."""
    good = []
    for n in candidates:
        try:
            _check_geometry(canvas_size, patch_size, n + 1, 2)
        except GeometryError:
            continue
        good.append(n)
    return good


def build_cell_map(n_examples: int, layout: GridLayout, canvas_size: int,
                   patch_size: int) -> CellMap:
    rows, cols = grid_shape(n_examples, layout.orientation)
    ch, cw = _check_geometry(canvas_size, patch_size, rows, cols)
    cells = {}
    for r in range(rows):
        for c in range(cols):
            cells[(r, c)] = (r * ch, c * cw, ch, cw)
    if layout.orientation == "horizontal":
        answer = (rows - 1, 1)
    else:
        answer = (1, cols - 1)
    return CellMap(cells=cells, answer_cell=answer, canvas_size=canvas_size,
                   patch_size=patch_size)


def validate_cell_map(cell_map: CellMap) -> None:
    """Assert the tiling and patch-alignment invariants."""
    size = cell_map.canvas_size
    covered = np.zeros((size, size), dtype=np.int32)
    for (top, left, h, w) in cell_map.cells.values():
        for edge in (top, left, top + h, left + w):
            if edge % cell_map.patch_size != 0:
                raise GeometryError(f"cell edge {edge} off the patch lattice")
        covered[top:top + h, left:left + w] += 1
    if not (covered == 1).all():
        raise GeometryError("cells do not tile the canvas exactly once")


def _place(canvas: np.ndarray, rect: tuple[int, int, int, int], img: Image) -> None:
    top, left, h, w = rect
    canvas[top:top + h, left:left + w] = resize_bilinear(img, h, w)


def compose_prompt(examples: list[TaskExample], query: Image, layout: GridLayout,
                   canvas_size: int, patch_size: int) -> VisualPrompt:
    """Assemble example pairs and a query into a masked grid canvas.

    All cell images are bilinearly resized to the cell size; the answer cell
    is filled with mid-gray and marked in the patch mask.
    """
    n = len(examples)
    if n == 0:
        raise EmptyExampleError("at least one example pair is required")
    if n > 8:
        raise GeometryError(f"grid capacity is 8 examples + query, got {n}")
    check_image(query, "query")
    order = layout.order_for(n)
    cell_map = build_cell_map(n, layout, canvas_size, patch_size)
    rows, cols = grid_shape(n, layout.orientation)

    canvas = np.full((canvas_size, canvas_size, 3), HOLE_FILL, dtype=np.float32)
    if layout.orientation == "horizontal":
        for slot in range(n):
            ex = examples[order[slot]]
            _place(canvas, cell_map.cells[(slot, 0)], ex.input)
            _place(canvas, cell_map.cells[(slot, 1)], ex.output)
        _place(canvas, cell_map.cells[(rows - 1, 0)], query)
    else:
        for slot in range(n):
            ex = examples[order[slot]]
            _place(canvas, cell_map.cells[(0, slot)], ex.input)
            _place(canvas, cell_map.cells[(1, slot)], ex.output)
        _place(canvas, cell_map.cells[(0, cols - 1)], query)

    grid = canvas_size // patch_size
    mask = np.zeros((grid, grid), dtype=bool)
    top, left, h, w = cell_map.answer_rect
    p = patch_size
    mask[top // p:(top + h) // p, left // p:(left + w) // p] = True
    return VisualPrompt(canvas=canvas, mask=mask, cell_map=cell_map)


def extract_answer(completed: Image, cell_map: CellMap) -> Image:
    """Crop the answer cell out of a completed canvas. No resizing."""
    check_image(completed, "completed")
    if completed.shape[0] != cell_map.canvas_size or completed.shape[1] != cell_map.canvas_size:
        raise GeometryError(
            f"completed image {completed.shape[:2]} does not match canvas "
            f"{cell_map.canvas_size}")
    top, left, h, w = cell_map.answer_rect
    return completed[top:top + h, left:left + w].copy()


def paste_answer(canvas: Image, cell_map: CellMap, answer: Image) -> Image:
    """Return a copy of `canvas` with `answer` written into the answer cell."""
    check_image(canvas, "canvas")
    check_image(answer, "answer")
    top, left, h, w = cell_map.answer_rect
    if answer.shape[0] != h or answer.shape[1] != w:
        raise GeometryError(f"answer {answer.shape[:2]} does not fit cell ({h}, {w})")
    out = canvas.copy()
    out[top:top + h, left:left + w] = answer
    return out


def mask_boundary(mask: np.ndarray) -> np.ndarray:
    """Foreground pixels with a 4-neighbor (or border) outside the mask."""
    m = mask.astype(bool)
    pad = np.pad(m, 1, constant_values=False)
    interior = (pad[:-2, 1:-1] & pad[2:, 1:-1] & pad[1:-1, :-2] & pad[1:-1, 2:])
    return m & ~interior


def _checker(shape: tuple[int, int]) -> np.ndarray:
    ys, xs = np.indices(shape)
    return ((ys // TEXTURE_PERIOD + xs // TEXTURE_PERIOD) % 2) == 0


def render_label(raw_label, style: LabelStyle, size: tuple[int, int] | None = None) -> Image:
    """Draw a raw label (binary mask, box, or color image) as a cell image.

    Boxes need an explicit `size`; color images pass through unchanged.
    """
    from .metrics import Box  # local import: metrics also imports nothing from here

    if isinstance(raw_label, Box):
        if size is None:
            raise ConfigurationError("rendering a box label requires a target size")
        mask = np.zeros(size, dtype=bool)
        mask[raw_label.top:raw_label.top + raw_label.height,
             raw_label.left:raw_label.left + raw_label.width] = True
        raw_label = mask

    arr = np.asarray(raw_label)
    if arr.ndim == 3:
        return check_image(arr.astype(np.float32), "color label").copy()
    if arr.ndim != 2:
        raise ConfigurationError(f"label must be a 2-D mask, box, or color image, got ndim={arr.ndim}")
    mask = arr.astype(bool)
    fg, bg = style.colors()
    out = np.empty((*mask.shape, 3), dtype=np.float32)
    out[:] = bg
    if style.rendering == "filled":
        out[mask] = fg
    elif style.rendering == "edges_only":
        out[mask_boundary(mask)] = fg
    elif style.rendering == "textured":
        tex = _checker(mask.shape)
        out[mask & tex] = fg
        out[mask & ~tex] = bg
    return out
