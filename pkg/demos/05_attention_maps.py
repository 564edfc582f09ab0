"""Decoder attention from a masked answer-cell patch, overlaid on the prompt.

Run after demo 03:  python3 demos/05_attention_maps.py
Writes demos/out/attention_overlay.png; bright patches receive the most
attention when the model fills the clicked position.
"""
from pathlib import Path

import numpy as np

from gridprompt import checkpoint as ckpt
from gridprompt import GridLayout, TaskKind, attention_maps, compose_prompt, sample_task
from gridprompt.figures import materialize
from gridprompt.imageops import write_png

CKPT = Path(__file__).parent / "out" / "tiny_ckpt"
OUT = Path(__file__).parent / "out"
if not (CKPT / "mae.ckpt").exists():
    raise SystemExit("run demos/03_train_tiny_end_to_end.py first")

vq = ckpt.load_vq_model(CKPT / "vq.ckpt")
mae = ckpt.load_mae_model(CKPT / "mae.ckpt")

inst = sample_task(TaskKind.foreground_seg, n_examples=1, rng_seed=[31, 1, 6, 1])
inst = materialize(inst, (64, 64))
prompt = compose_prompt(inst.examples, inst.query, GridLayout("horizontal"), 128, 8)

# middle of the answer cell, in patch coordinates
top, left, h, w = prompt.cell_map.answer_rect
q = ((top + h // 2) // 8, (left + w // 2) // 8)
heat = attention_maps(mae, prompt.canvas, prompt.mask, q)
print(f"attention from patch {q}: sums to {heat.sum():.6f}")

rows = []
for (r, c), (t, l, hh, ww) in sorted(prompt.cell_map.cells.items()):
    block = heat[t // 8:(t + hh) // 8, l // 8:(l + ww) // 8].sum()
    rows.append(f"  cell {(r, c)}: attention mass {block:.3f}")
print("\n".join(rows))

# overlay: scale the heat map to pixels and tint the canvas
pix = np.kron(heat / heat.max(), np.ones((8, 8))).astype(np.float32)
overlay = prompt.canvas * 0.5
overlay[:, :, 0] += 0.5 * pix
write_png(OUT / "attention_overlay.png", np.clip(overlay, 0.0, 1.0))
print(f"overlay written to {OUT / 'attention_overlay.png'}")
