"""Task evaluation: predictors, prompt ensembling, scoring, reports."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .composer import (LabelStyle, compose_prompt, extract_answer, grid_shape,
                       layout_from_name)
from .errors import ConfigurationError, NoDetectionError
from .figures import TaskInstance, TaskKind, eval_seed, materialize, sample_task
from .imageops import Image, resize_bilinear
from .mae import MaeModel, inpaint
from .metrics import bbox_iou, color_aware_miou, miou_binary, mse, round_to_palette
from .vq import VqModel

REPORT_VERSION = 1


@dataclass(frozen=True)
class EvalSpec:
    """Everything needed to reproduce one evaluation sweep."""

    task: TaskKind
    count: int = 100
    n_examples: int = 1
    canvas_size: int = 128
    patch_size: int = 8
    layouts: tuple[str, ...] = ("horizontal",)
    palette: str = "black_white"
    rendering: str = "filled"
    seed: int = 0

    def style(self) -> LabelStyle:
        return LabelStyle(self.palette, self.rendering)

    def canonical_cell(self) -> tuple[int, int]:
        rows, cols = grid_shape(self.n_examples, "horizontal")
        return self.canvas_size // rows, self.canvas_size // cols

    def as_dict(self) -> dict:
        return {"task": TaskKind(self.task).value, "count": self.count,
                "n_examples": self.n_examples, "canvas_size": self.canvas_size,
                "patch_size": self.patch_size, "layouts": list(self.layouts),
                "palette": self.palette, "rendering": self.rendering,
                "seed": self.seed}


def make_instances(spec: EvalSpec) -> list[TaskInstance]:
    """Held-out instances from the reserved evaluation seed stream."""
    return [sample_task(spec.task, spec.n_examples,
                        eval_seed(spec.seed, spec.task, j), style=spec.style())
            for j in range(spec.count)]


def copy_baseline(instance: TaskInstance, cell_hw: tuple[int, int] | None = None) -> Image:
    """First example's output, resized to the answer-cell size."""
    if not instance.examples:
        raise ConfigurationError("copy baseline needs at least one example")
    out = instance.examples[0].output
    if cell_hw is None:
        cell_hw = out.shape[:2]
    return resize_bilinear(out, *cell_hw)


def predict_with_model(mae: MaeModel, vq: VqModel, instance: TaskInstance,
                       layout_name: str, canvas_size: int, patch_size: int) -> Image:
    """compose -> inpaint -> extract for one layout; answer at that layout's cell size."""
    n = len(instance.examples)
    layout = layout_from_name(layout_name, n)
    rows, cols = grid_shape(n, layout.orientation)
    cell = (canvas_size // rows, canvas_size // cols)
    inst = materialize(instance, cell)
    prompt = compose_prompt(inst.examples, inst.query, layout, canvas_size, patch_size)
    completed = inpaint(mae, vq, prompt.canvas, prompt.mask)
    return extract_answer(completed, prompt.cell_map)


def ensemble_predict(mae: MaeModel, vq: VqModel, instance: TaskInstance,
                     layouts, canvas_size: int, patch_size: int) -> Image:
    """Per-pixel mean of per-layout predictions, canonicalized to horizontal cell dims."""
    names = [l if isinstance(l, str) else l for l in layouts]
    if not names:
        raise ConfigurationError("ensemble needs at least one layout")
    rows, cols = grid_shape(len(instance.examples), "horizontal")
    cell = (canvas_size // rows, canvas_size // cols)
    members = []
    for name in names:
        ans = predict_with_model(mae, vq, instance, name, canvas_size, patch_size)
        members.append(resize_bilinear(ans, *cell))
    return np.mean(np.stack(members), axis=0).astype(np.float32)


class CopyPredictor:
    model_id = "copy"

    def __call__(self, instance: TaskInstance, spec: EvalSpec) -> Image:
        inst = materialize(instance, spec.canonical_cell())
        return copy_baseline(inst, spec.canonical_cell())


class ModelPredictor:
    def __init__(self, mae: MaeModel, vq: VqModel, model_id: str = "mae_vqgan"):
        self.mae = mae
        self.vq = vq
        self.model_id = model_id

    def __call__(self, instance: TaskInstance, spec: EvalSpec) -> Image:
        return ensemble_predict(self.mae, self.vq, instance, spec.layouts,
                                spec.canvas_size, spec.patch_size)


class OraclePredictor:
    """Returns the true completion; pins the top of the metric scale in tests."""

    model_id = "oracle"

    def __call__(self, instance: TaskInstance, spec: EvalSpec) -> Image:
        from .figures import _answer_image
        inst = materialize(instance, spec.canonical_cell())
        return _answer_image(inst, spec.canonical_cell())


_CHANGE_TASKS = (TaskKind.color_change, TaskKind.shape_change, TaskKind.size_change,
                 TaskKind.color_and_shape, TaskKind.color_and_size,
                 TaskKind.shape_and_size)


def task_metric(kind: TaskKind) -> tuple[str, bool]:
    """(metric name, higher_is_better)."""
    kind = TaskKind(kind)
    if kind in _CHANGE_TASKS:
        return "color_aware_miou", True
    if kind == TaskKind.foreground_seg or kind == TaskKind.edge_map:
        return "miou", True
    if kind == TaskKind.single_object_detection:
        return "bbox_miou", True
    if kind == TaskKind.colorization:
        return "mse", False
    raise ConfigurationError(f"no metric for task {kind}")


def score_prediction(pred: Image, instance: TaskInstance, spec: EvalSpec) -> float:
    """Score one prediction against the instance's ground truth at canonical dims."""
    kind = TaskKind(instance.kind)
    inst = materialize(instance, spec.canonical_cell())
    if pred.shape[:2] != spec.canonical_cell():
        pred = resize_bilinear(pred, *spec.canonical_cell())
    if kind in _CHANGE_TASKS:
        return color_aware_miou(pred, inst.ground_truth, inst.meta["target_color"])
    fg, bg = spec.style().colors()
    if kind in (TaskKind.foreground_seg, TaskKind.edge_map):
        rounded = round_to_palette(pred, [fg, bg])
        fg_mask = np.all(rounded == np.asarray(fg, dtype=np.float32), axis=2)
        return miou_binary(fg_mask, inst.ground_truth)
    if kind == TaskKind.single_object_detection:
        rounded = round_to_palette(pred, [fg, bg])
        fg_mask = np.all(rounded == np.asarray(fg, dtype=np.float32), axis=2)
        box = largest_box(fg_mask)
        return bbox_iou(box, inst.ground_truth)
    if kind == TaskKind.colorization:
        return mse(pred, inst.ground_truth)
    raise ConfigurationError(f"no scorer for task {kind}")


def largest_box(mask: np.ndarray):
    from .metrics import largest_component_bbox
    return largest_component_bbox(mask)


@dataclass
class EvalReport:
    task: str
    model_id: str
    metric: str
    higher_is_better: bool
    config: dict
    scores: list
    notes: dict = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return float(np.mean(self.scores)) if self.scores else float("nan")

    @property
    def std(self) -> float:
        return float(np.std(self.scores)) if self.scores else float("nan")

    def to_dict(self) -> dict:
        return {"format_version": REPORT_VERSION, "task": self.task,
                "model_id": self.model_id, "metric": self.metric,
                "higher_is_better": self.higher_is_better,
                "miou_classes": "foreground_only", "config": self.config,
                "scores": self.scores, "notes": self.notes,
                "mean": self.mean, "std": self.std}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(task=d["task"], model_id=d["model_id"], metric=d["metric"],
                   higher_is_better=d["higher_is_better"], config=d["config"],
                   scores=d["scores"], notes={int(k): v for k, v in d["notes"].items()})


def evaluate(predictor, instances: list[TaskInstance], spec: EvalSpec) -> EvalReport:
    """Run the prompt pipeline per instance; failures score 0 with a note."""
    if not instances:
        raise ConfigurationError("evaluation needs at least one instance")
    metric, higher = task_metric(spec.task)
    scores: list[float] = []
    notes: dict = {}
    for i, inst in enumerate(instances):
        try:
            pred = predictor(inst, spec)
            scores.append(float(score_prediction(pred, inst, spec)))
        except NoDetectionError as exc:
            scores.append(0.0)
            notes[i] = f"no detection: {exc}"
        except Exception as exc:  # member failures never abort the sweep
            scores.append(0.0)
            notes[i] = f"{type(exc).__name__}: {exc}"
    config = dict(spec.as_dict(), model_id=getattr(predictor, "model_id", "custom"))
    return EvalReport(task=TaskKind(spec.task).value,
                      model_id=getattr(predictor, "model_id", "custom"),
                      metric=metric, higher_is_better=higher, config=config,
                      scores=scores, notes=notes)


def evaluate_task(predictor, spec: EvalSpec) -> EvalReport:
    return evaluate(predictor, make_instances(spec), spec)


def render_table(reports: list[EvalReport]) -> str:
    """Rows of models (or ensemble prefixes) against task columns."""
    tasks: list[str] = []
    rows: dict = {}
    for rep in reports:
        label = rep.config.get("row_label", rep.model_id)
        if rep.task not in tasks:
            tasks.append(rep.task)
        cell = (f"{rep.mean:.4f}" if rep.metric == "mse"
                else f"{100.0 * rep.mean:.2f}")
        rows.setdefault(label, {})[rep.task] = cell
    width = max([len(t) for t in tasks] + [10])
    lwidth = max([len(r) for r in rows] + [8])
    header = " " * lwidth + " | " + " | ".join(t.rjust(width) for t in tasks)
    sep = "-" * len(header)
    lines = [header, sep]
    for label, cells in rows.items():
        line = label.ljust(lwidth) + " | " + " | ".join(
            cells.get(t, "-").rjust(width) for t in tasks)
        lines.append(line)
    return "\n".join(lines)
