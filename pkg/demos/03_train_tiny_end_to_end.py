"""Train a small codebook + masked-token model end to end, then inpaint.

Run:  python3 demos/03_train_tiny_end_to_end.py
Takes a few minutes on CPU. Writes checkpoints to demos/out/tiny_ckpt/ (the
prompt-engineering and attention demos reuse them) and an inpainted prompt
to demos/out/.
"""
import time
from pathlib import Path

from gridprompt import (GridLayout, TaskKind, TrainConfig, build_dataset,
                        compose_prompt, extract_answer, inpaint, sample_task,
                        train_mae, train_vq)
from gridprompt.figures import materialize
from gridprompt.harness import score_prediction, EvalSpec
from gridprompt.imageops import write_png

OUT = Path(__file__).parent / "out"
CKPT = OUT / "tiny_ckpt"
DATA = OUT / "tiny_data"
OUT.mkdir(exist_ok=True)

t0 = time.time()
if not (DATA / "manifest.jsonl").exists():
    build_dataset(400, DATA, rng_seed=31)
    print(f"dataset: 400 figures in {time.time() - t0:.0f}s")

common = dict(manifest=str(DATA / "manifest.jsonl"), batch_size=64, seed=31,
              vocab_size=256, codebook_dim=64, patch_size=8)

vq_res = train_vq(TrainConfig(stage="vq", epochs=25, base_lr=1.6e-2,
                              checkpoint=str(CKPT / "vq.ckpt"), **common),
                  resume=True)
print(f"vq val mse by epoch (every 5th): "
      f"{[round(e['loss'], 4) for e in vq_res.history['val'][::5]]}")

mae_res = train_mae(TrainConfig(stage="mae", epochs=30, base_lr=8e-3,
                                checkpoint=str(CKPT / "mae.ckpt"), **common),
                    vq_res.checkpoint, resume=True)
val = [e["loss"] for e in mae_res.history["val"]]
print(f"mae val token CE: epoch1 {val[0]:.3f} -> final {val[-1]:.3f}")

# prompt the trained model with a held-out color-change instance
inst = sample_task(TaskKind.color_change, n_examples=1, rng_seed=[31, 1, 0, 0])
inst = materialize(inst, (64, 64))
prompt = compose_prompt(inst.examples, inst.query, GridLayout("horizontal"), 128, 8)
completed = inpaint(mae_res.model, vq_res.model, prompt.canvas, prompt.mask)
answer = extract_answer(completed, prompt.cell_map)
write_png(OUT / "inpainted_prompt.png", completed)
write_png(OUT / "inpainted_answer.png", answer)

spec = EvalSpec(task=TaskKind.color_change, count=1, n_examples=1, canvas_size=128)
score = score_prediction(answer, inst, spec)
print(f"color-aware mIOU of the completion: {score:.3f}")
print(f"total time {time.time() - t0:.0f}s; outputs in {OUT}/")
