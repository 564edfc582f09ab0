"""Tour of prompt composition: grids, layouts, label styles, extraction.

Run from the repo root:  python3 demos/01_compose_and_extract.py
Writes illustration PNGs into demos/out/.
"""
from pathlib import Path

import numpy as np

from gridprompt import (GridLayout, LabelStyle, TaskKind, compose_prompt,
                        extract_answer, paste_answer, render_label, sample_task)
from gridprompt.figures import materialize
from gridprompt.imageops import write_png

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

# 1. A color-change task instance: two example pairs plus a query.
inst = sample_task(TaskKind.color_change, n_examples=1, rng_seed=7)
print(f"task: {inst.kind.value}; query shape: {inst.meta['query']['in']['kind']}")

# 2. Compose the 2x2 grid the way the evaluation harness does: every cell is
#    re-rendered at the exact cell resolution, the answer cell is a mid-gray
#    hole, and the patch mask covers exactly that cell.
inst64 = materialize(inst, (64, 64))
prompt = compose_prompt(inst64.examples, inst64.query, GridLayout("horizontal"),
                        canvas_size=128, patch_size=8)
write_png(OUT / "prompt_horizontal.png", prompt.canvas)
print(f"canvas {prompt.canvas.shape}, mask covers {int(prompt.mask.sum())} patches, "
      f"answer cell at {prompt.cell_map.answer_cell}")

# 3. The vertical layout is the transpose: pairs become columns.
inst_v = materialize(inst, (64, 64))
vertical = compose_prompt(inst_v.examples, inst_v.query, GridLayout("vertical"),
                          canvas_size=128, patch_size=8)
write_png(OUT / "prompt_vertical.png", vertical.canvas)

# 4. extract_answer inverts composition: paste anything into the hole and get
#    it back bit-exactly.
stamp = np.zeros((64, 64, 3), dtype=np.float32)
stamp[16:48, 16:48] = (0.0, 0.0, 1.0)
filled = paste_answer(prompt.canvas, prompt.cell_map, stamp)
assert np.array_equal(extract_answer(filled, prompt.cell_map), stamp)
write_png(OUT / "prompt_filled.png", filled)
print("round trip paste -> extract is exact")

# 5. Label styles from the prompt-engineering study: same mask, different looks.
seg = sample_task(TaskKind.foreground_seg, n_examples=1, rng_seed=11)
mask = seg.ground_truth
for style in (LabelStyle("black_white", "filled"),
              LabelStyle("purple_yellow", "filled"),
              LabelStyle("green_red", "filled"),
              LabelStyle("black_white", "edges_only"),
              LabelStyle("black_white", "textured")):
    img = render_label(mask, style)
    write_png(OUT / f"label_{style.palette}_{style.rendering}.png", img)
print(f"label style renderings written to {OUT}/")
