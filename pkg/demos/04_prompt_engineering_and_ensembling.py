"""Layout and palette sweeps plus cumulative prompt ensembling.

Run after demo 03 (it reuses demos/out/tiny_ckpt):
  python3 demos/04_prompt_engineering_and_ensembling.py
"""
from pathlib import Path

from gridprompt import checkpoint as ckpt
from gridprompt import TaskKind
from gridprompt.harness import (EvalSpec, ModelPredictor, evaluate_task,
                                render_table)

CKPT = Path(__file__).parent / "out" / "tiny_ckpt"
if not (CKPT / "mae.ckpt").exists():
    raise SystemExit("run demos/03_train_tiny_end_to_end.py first")

vq = ckpt.load_vq_model(CKPT / "vq.ckpt")
mae = ckpt.load_mae_model(CKPT / "mae.ckpt")
N = 25  # instances per sweep point; raise for smoother numbers

print("== layout sweep (foreground segmentation, black/white filled) ==")
reports = []
for layout in ("horizontal", "vertical"):
    spec = EvalSpec(task=TaskKind.foreground_seg, count=N, n_examples=1,
                    layouts=(layout,), seed=99)
    rep = evaluate_task(ModelPredictor(mae, vq), spec)
    rep.config["row_label"] = layout
    reports.append(rep)
print(render_table(reports))

print("\n== palette sweep (foreground segmentation, horizontal) ==")
reports = []
for palette in ("black_white", "purple_yellow", "green_red"):
    spec = EvalSpec(task=TaskKind.foreground_seg, count=N, n_examples=1,
                    palette=palette, seed=99)
    rep = evaluate_task(ModelPredictor(mae, vq), spec)
    rep.config["row_label"] = palette
    reports.append(rep)
print(render_table(reports))

print("\n== cumulative ensembling (color change, 3 examples) ==")
members = ("horizontal", "vertical", "vertical-rowswap")
reports = []
for k in range(1, len(members) + 1):
    spec = EvalSpec(task=TaskKind.color_change, count=N, n_examples=3,
                    layouts=members[:k], seed=99)
    rep = evaluate_task(ModelPredictor(mae, vq), spec)
    rep.config["row_label"] = members[0] if k == 1 else "+ " + members[k - 1]
    reports.append(rep)
print(render_table(reports))
print("\n(scores are color-aware mIOU x100 / mIOU x100; each row adds a prompt member)")
