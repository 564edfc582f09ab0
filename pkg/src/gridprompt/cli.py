"""Command-line entry point: data generation, training, prompting, evaluation."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .composer import (LabelStyle, TaskExample, compose_prompt, extract_answer,
                       layout_from_name, render_label)
from .errors import ConfigurationError
from .figures import TaskKind, build_dataset
from .harness import (CopyPredictor, EvalSpec, ModelPredictor, evaluate_task,
                      render_table)
from .imageops import read_png, write_png
from .mae import inpaint
from .training import (TrainConfig, ablation_grid_vs_plain, parse_config_file,
                       train_mae, train_vq)

TASK_ALIASES = {
    "color": TaskKind.color_change, "shape": TaskKind.shape_change,
    "size": TaskKind.size_change, "color-shape": TaskKind.color_and_shape,
    "color-size": TaskKind.color_and_size, "shape-size": TaskKind.shape_and_size,
    "seg": TaskKind.foreground_seg, "detect": TaskKind.single_object_detection,
    "colorize": TaskKind.colorization, "edges": TaskKind.edge_map,
}


def parse_task(name: str) -> TaskKind:
    if name in TASK_ALIASES:
        return TASK_ALIASES[name]
    try:
        return TaskKind(name)
    except ValueError:
        raise ConfigurationError(
            f"unknown task {name!r}; options: {sorted(TASK_ALIASES)} or full kind names")


def _add_train_overrides(p: argparse.ArgumentParser):
    p.add_argument("--config", required=True, help="key = value config file")
    p.add_argument("--manifest", default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None, dest="batch_size")
    p.add_argument("--base-lr", type=float, default=None, dest="base_lr")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--checkpoint", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridprompt",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic figure dataset")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--distractor-fraction", type=float, default=0.16)
    p.add_argument("--patch-size", type=int, default=8)

    p = sub.add_parser("train-vq", help="train the VQ codebook autoencoder")
    _add_train_overrides(p)

    p = sub.add_parser("train-mae", help="train the masked-token predictor")
    _add_train_overrides(p)
    p.add_argument("--vq", required=True, help="frozen VQ checkpoint")

    p = sub.add_parser("prompt", help="compose a prompt and inpaint the answer cell")
    p.add_argument("--vq", required=True)
    p.add_argument("--mae", required=True)
    p.add_argument("--example", action="append", required=True,
                   metavar="INPUT.png:OUTPUT.png",
                   help="one input:output pair; repeat for more examples")
    p.add_argument("--query", required=True)
    p.add_argument("--layout", default="horizontal")
    p.add_argument("--palette", default=None,
                   help="re-render example outputs (treated as masks) in this palette")
    p.add_argument("--canvas-size", type=int, default=128)
    p.add_argument("--patch-size", type=int, default=8)
    p.add_argument("--out-completed", required=True)
    p.add_argument("--out-answer", required=True)

    p = sub.add_parser("eval", help="evaluate a model or baseline on synthetic tasks")
    p.add_argument("--task", required=True, help="task name or comma-separated list")
    p.add_argument("--model", default="mae-vqgan", choices=["mae-vqgan", "copy"])
    p.add_argument("--vq", default=None)
    p.add_argument("--mae", default=None)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--n-examples", type=int, default=1)
    p.add_argument("--canvas-size", type=int, default=128)
    p.add_argument("--patch-size", type=int, default=8)
    p.add_argument("--layout", default="horizontal")
    p.add_argument("--palette", default="black_white")
    p.add_argument("--rendering", default="filled")
    p.add_argument("--ensemble", default=None,
                   help="comma-separated layouts; sweeps cumulative prefixes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default=None, help="report JSON path")

    p = sub.add_parser("ablate", help="grid-figures vs distractor-only training ablation")
    p.add_argument("--grid-config", required=True)
    p.add_argument("--plain-config", required=True)
    p.add_argument("--vq", required=True)
    p.add_argument("--task", default="color")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--n-examples", type=int, default=1)
    p.add_argument("--canvas-size", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)

    p = sub.add_parser("serve", help="run the local prompt service")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--models-dir", required=True)
    p.add_argument("--parallelism", type=int, default=1)
    return parser


def cmd_gen_data(args) -> int:
    manifest = build_dataset(args.count, args.out, args.seed,
                             distractor_fraction=args.distractor_fraction,
                             patch_size=args.patch_size)
    n_train = sum(1 for r in manifest.records if r.split == "train")
    print(f"wrote {len(manifest.records)} figures ({n_train} train) to {args.out}")
    print(f"manifest: {Path(args.out) / 'manifest.jsonl'}")
    return 0


def _train_config(args) -> TrainConfig:
    return parse_config_file(args.config, manifest=args.manifest, epochs=args.epochs,
                             batch_size=args.batch_size, base_lr=args.base_lr,
                             seed=args.seed, checkpoint=args.checkpoint)


def cmd_train_vq(args) -> int:
    result = train_vq(_train_config(args))
    final = result.history["val"][-1]["loss"] if result.history["val"] else float("nan")
    print(f"vq checkpoint: {result.checkpoint} (final val mse {final:.5f})")
    return 0


def cmd_train_mae(args) -> int:
    result = train_mae(_train_config(args), args.vq)
    final = result.history["val"][-1]["loss"] if result.history["val"] else float("nan")
    print(f"mae checkpoint: {result.checkpoint} (final val ce {final:.4f})")
    return 0


def _load_pair(vq_path, mae_path):
    vq = ckpt.load_vq_model(vq_path)
    mae = ckpt.load_mae_model(mae_path)
    return vq, mae


def cmd_prompt(args) -> int:
    vq, mae = _load_pair(args.vq, args.mae)
    examples = []
    for spec in args.example:
        if ":" not in spec:
            raise ConfigurationError(f"--example wants INPUT.png:OUTPUT.png, got {spec!r}")
        in_path, out_path = spec.split(":", 1)
        inp, out = read_png(in_path), read_png(out_path)
        if args.palette is not None:
            out = render_label(np.any(out > 0.5, axis=2), LabelStyle(args.palette))
        examples.append(TaskExample(inp, out))
    query = read_png(args.query)
    layout = layout_from_name(args.layout, len(examples))
    prompt = compose_prompt(examples, query, layout, args.canvas_size, args.patch_size)
    completed = inpaint(mae, vq, prompt.canvas, prompt.mask)
    answer = extract_answer(completed, prompt.cell_map)
    write_png(args.out_completed, completed)
    write_png(args.out_answer, answer)
    print(f"completed: {args.out_completed}")
    print(f"answer: {args.out_answer}")
    return 0


def _cumulative_layouts(ensemble: str) -> list[tuple[str, tuple[str, ...]]]:
    names = [s.strip() for s in ensemble.split(",") if s.strip()]
    sweeps = []
    for i in range(1, len(names) + 1):
        label = names[0] if i == 1 else "+ " + names[i - 1]
        sweeps.append((label, tuple(names[:i])))
    return sweeps


def cmd_eval(args) -> int:
    tasks = [parse_task(t.strip()) for t in args.task.split(",")]
    if args.model == "mae-vqgan":
        if not args.vq or not args.mae:
            raise ConfigurationError("--model mae-vqgan needs --vq and --mae checkpoints")
        vq, mae = _load_pair(args.vq, args.mae)
        predictor = ModelPredictor(mae, vq)
    else:
        predictor = CopyPredictor()

    sweeps = (_cumulative_layouts(args.ensemble) if args.ensemble
              else [(args.layout, (args.layout,))])
    reports = []
    for task in tasks:
        for label, layouts in sweeps:
            spec = EvalSpec(task=task, count=args.count, n_examples=args.n_examples,
                            canvas_size=args.canvas_size, patch_size=args.patch_size,
                            layouts=layouts, palette=args.palette,
                            rendering=args.rendering, seed=args.seed)
            rep = evaluate_task(predictor, spec)
            rep.config["row_label"] = f"{rep.model_id} {label}" if args.ensemble else rep.model_id
            reports.append(rep)
    print(render_table(reports))
    if args.out:
        payload = {"format_version": 1, "reports": [r.to_dict() for r in reports]}
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n",
                                  encoding="utf-8")
        print(f"report: {args.out}")
    return 0


def cmd_ablate(args) -> int:
    task = parse_task(args.task)
    grid_cfg = parse_config_file(args.grid_config)
    plain_cfg = parse_config_file(args.plain_config)

    def eval_fn(model):
        vq = ckpt.load_vq_model(args.vq)
        spec = EvalSpec(task=task, count=args.count, n_examples=args.n_examples,
                        canvas_size=args.canvas_size, seed=args.seed)
        return {TaskKind(task).value: evaluate_task(ModelPredictor(model, vq), spec)}

    result = ablation_grid_vs_plain(grid_cfg, plain_cfg, args.vq, eval_fn)
    reports = []
    for arm in ("grid", "plain"):
        for rep in result[arm]["reports"].values():
            rep.config["row_label"] = f"{arm}-trained"
            reports.append(rep)
    print(render_table(reports))
    if args.out:
        payload = {"format_version": 1, "ablation": {
            arm: {"checkpoint": result[arm]["checkpoint"],
                  "reports": {k: r.to_dict() for k, r in result[arm]["reports"].items()}}
            for arm in ("grid", "plain")}}
        Path(args.out).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n",
                                  encoding="utf-8")
        print(f"report: {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app
    app = create_app(models_dir=args.models_dir, parallelism=args.parallelism)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-vq": cmd_train_vq,
    "train-mae": cmd_train_mae,
    "prompt": cmd_prompt,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except Exception as exc:
        line = json.dumps({"error": type(exc).__name__, "message": str(exc)})
        print(line, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
