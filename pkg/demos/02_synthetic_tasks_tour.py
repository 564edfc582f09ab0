"""Every synthetic task kind, rendered as a filled grid figure.

Run:  python3 demos/02_synthetic_tasks_tour.py
Writes one annotated figure per task kind into demos/out/, plus a training
figure and a distractor exactly as the dataset generator produces them.
"""
from pathlib import Path

import numpy as np

from gridprompt import TaskKind, render_training_figure, sample_task
from gridprompt.composer import GridLayout, compose_prompt, paste_answer
from gridprompt.figures import _answer_image, materialize
from gridprompt.imageops import write_png
from gridprompt.metrics import Box

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

for kind in TaskKind:
    inst = sample_task(kind, n_examples=1, rng_seed=21)
    inst = materialize(inst, (64, 64))
    prompt = compose_prompt(inst.examples, inst.query, GridLayout("horizontal"),
                            128, 8)
    filled = paste_answer(prompt.canvas, prompt.cell_map, _answer_image(inst, (64, 64)))
    write_png(OUT / f"task_{kind.value}.png", filled)
    gt = inst.ground_truth
    desc = (f"box {tuple(gt)}" if isinstance(gt, Box)
            else f"mask {int(np.count_nonzero(gt))} px" if gt.ndim == 2
            else f"color image {gt.shape}")
    print(f"{kind.value:>24}: ground truth = {desc}")

fig = render_training_figure(rng_seed=5, canvas_size=128, patch_size=8,
                             distractor_fraction=0.0)
write_png(OUT / "training_figure.png", fig.image)
print(f"\ntraining figure: kind={fig.kind}, n={fig.n_examples} (answer cell filled)")

solo = render_training_figure(rng_seed=5, canvas_size=128, patch_size=8,
                              distractor_fraction=1.0)
write_png(OUT / "training_distractor.png", solo.image)
print("distractor figure: a single non-grid image (16% of the default mix)")
