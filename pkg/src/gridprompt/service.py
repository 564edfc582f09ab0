"""Local HTTP service exposing composition, inpainting, attention, and scoring.

JSON transport with base64-encoded 8-bit RGB PNGs. Responses are pure
functions of the request plus the frozen models; inference goes through a
bounded semaphore so CPU latency stays predictable.
"""
from __future__ import annotations

import base64
import threading
import time
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import checkpoint as ckpt
from .composer import (GridLayout, LabelStyle, TaskExample, compose_prompt,
                       extract_answer, layout_from_name, render_label)
from .errors import ConfigurationError, GeometryError
from .imageops import decode_png_bytes, encode_png_bytes
from .mae import attention_maps, inpaint
from .metrics import COLOR_AWARE_PALETTE, color_aware_miou, miou_binary, mse, round_to_palette

API_VERSION = "1"


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def _b64_image(img) -> str:
    return base64.b64encode(encode_png_bytes(img)).decode("ascii")


def _image_from_b64(data: str, name: str):
    try:
        return decode_png_bytes(base64.b64decode(data))
    except Exception as exc:
        raise ServiceError(400, "bad_image", f"could not decode {name}: {exc}")


class SessionState:
    """Loaded (vq, mae) pairs; immutable after startup."""

    def __init__(self):
        self.models: dict = {}
        self.request_count = 0
        self.lock = threading.Lock()

    def add(self, model_id: str, vq, mae):
        self.models[model_id] = (vq, mae)

    def get(self, model_id: str):
        if model_id not in self.models:
            raise ServiceError(404, "unknown_model", f"model {model_id!r} is not loaded")
        return self.models[model_id]


def load_models_dir(state: SessionState, models_dir) -> None:
    """Each subdirectory with vq.ckpt + mae.ckpt becomes one model id."""
    root = Path(models_dir)
    if not root.exists():
        raise ConfigurationError(f"models dir {models_dir} does not exist")
    for sub in sorted(root.iterdir()):
        vq_path, mae_path = sub / "vq.ckpt", sub / "mae.ckpt"
        if sub.is_dir() and vq_path.exists() and mae_path.exists():
            state.add(sub.name, ckpt.load_vq_model(vq_path), ckpt.load_mae_model(mae_path))


def _parse_layout(spec, n_examples: int) -> GridLayout:
    if spec is None:
        return GridLayout("horizontal")
    if isinstance(spec, str):
        return layout_from_name(spec, n_examples)
    order = spec.get("row_order")
    return GridLayout(spec.get("orientation", "horizontal"),
                      tuple(order) if order is not None else None)


def _compose_from_payload(body: dict):
    examples_in = body.get("examples") or []
    if not examples_in or body.get("query") is None:
        raise ServiceError(400, "bad_request", "need examples[] and query")
    palette = body.get("palette")
    examples = []
    for i, pair in enumerate(examples_in):
        inp = _image_from_b64(pair["input"], f"examples[{i}].input")
        out = _image_from_b64(pair["output"], f"examples[{i}].output")
        if palette:
            out = render_label(np.any(out > 0.5, axis=2), LabelStyle(palette))
        examples.append(TaskExample(inp, out))
    query = _image_from_b64(body["query"], "query")
    layout = _parse_layout(body.get("layout"), len(examples))
    canvas_size = int(body.get("canvas_size", 128))
    patch_size = int(body.get("patch_size", 8))
    prompt = compose_prompt(examples, query, layout, canvas_size, patch_size)
    return prompt, examples, query


def _cell_map_json(cell_map) -> dict:
    return {
        "cells": {f"{r},{c}": list(rect) for (r, c), rect in sorted(cell_map.cells.items())},
        "answer_cell": list(cell_map.answer_cell),
        "canvas_size": cell_map.canvas_size,
        "patch_size": cell_map.patch_size,
    }


def create_app(models_dir=None, parallelism: int = 1, preloaded: dict | None = None
               ) -> FastAPI:
    app = FastAPI(title="gridprompt service")
    state = SessionState()
    if preloaded:
        for model_id, (vq, mae) in preloaded.items():
            state.add(model_id, vq, mae)
    if models_dir is not None:
        load_models_dir(state, models_dir)
    gate = threading.BoundedSemaphore(max(1, parallelism))
    app.state.session = state

    @app.exception_handler(ServiceError)
    async def service_error(request: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status,
                            content={"code": exc.code, "message": exc.message,
                                     "api_version": API_VERSION})

    @app.exception_handler(GeometryError)
    async def geometry_error(request: Request, exc: GeometryError):
        return JSONResponse(status_code=400,
                            content={"code": "geometry_error", "message": str(exc),
                                     "api_version": API_VERSION})

    @app.exception_handler(ConfigurationError)
    async def config_error(request: Request, exc: ConfigurationError):
        return JSONResponse(status_code=400,
                            content={"code": "configuration_error", "message": str(exc),
                                     "api_version": API_VERSION})

    @app.exception_handler(ValueError)
    async def value_error(request: Request, exc: ValueError):
        return JSONResponse(status_code=400,
                            content={"code": "bad_value", "message": str(exc),
                                     "api_version": API_VERSION})

    @app.exception_handler(Exception)
    async def model_fault(request: Request, exc: Exception):
        return JSONResponse(status_code=500,
                            content={"code": "model_fault", "message": str(exc),
                                     "api_version": API_VERSION})

    @app.get("/models")
    def list_models():
        models = []
        for model_id, (vq, mae) in sorted(state.models.items()):
            models.append({
                "id": model_id,
                "patch_size": mae.config.patch_size,
                "vocab_size": vq.config.vocab_size,
                "codebook_dim": vq.config.embed_dim,
                "embed_dim": mae.config.embed_dim,
                "head": mae.config.head,
            })
        return {"api_version": API_VERSION, "models": models}

    @app.post("/compose")
    async def compose(request: Request):
        body = await request.json()
        with state.lock:
            state.request_count += 1
        prompt, _, _ = _compose_from_payload(body)
        return {
            "api_version": API_VERSION,
            "canvas": _b64_image(prompt.canvas),
            "mask": prompt.mask.astype(int).tolist(),
            "cell_map": _cell_map_json(prompt.cell_map),
        }

    def _inpaint_once(vq, mae, body: dict):
        """(completed, answer) for one layout or a raw canvas+mask."""
        if body.get("canvas") is not None:
            canvas = _image_from_b64(body["canvas"], "canvas")
            mask = np.asarray(body.get("mask"), dtype=bool)
            if mask.ndim != 2:
                raise ServiceError(400, "bad_request", "canvas mode needs a 2-D mask")
            completed = inpaint(mae, vq, canvas, mask)
            ys, xs = np.nonzero(np.kron(mask, np.ones(
                (mae.config.patch_size,) * 2, dtype=bool)))
            answer = completed[ys.min():ys.max() + 1, xs.min():xs.max() + 1]
            return completed, answer
        prompt, _, _ = _compose_from_payload(body)
        completed = inpaint(mae, vq, prompt.canvas, prompt.mask)
        return completed, extract_answer(completed, prompt.cell_map)

    @app.post("/inpaint")
    async def inpaint_endpoint(request: Request):
        body = await request.json()
        with state.lock:
            state.request_count += 1
        vq, mae = state.get(str(body.get("model_id")))
        t0 = time.monotonic()
        with gate:
            ensemble = body.get("ensemble")
            if ensemble and body.get("canvas") is None:
                members = []
                completed = None
                for name in ensemble:
                    sub = dict(body, layout=name, ensemble=None)
                    comp, ans = _inpaint_once(vq, mae, sub)
                    if completed is None:
                        completed, shape0 = comp, ans.shape[:2]
                    from .imageops import resize_bilinear
                    members.append(resize_bilinear(ans, *shape0))
                answer = np.mean(np.stack(members), axis=0).astype(np.float32)
            else:
                completed, answer = _inpaint_once(vq, mae, body)
        latency_ms = 1000.0 * (time.monotonic() - t0)
        return {
            "api_version": API_VERSION,
            "completed": _b64_image(completed),
            "answer": _b64_image(answer),
            "latency_ms": latency_ms,
        }

    @app.post("/score")
    async def score(request: Request):
        body = await request.json()
        pred = _image_from_b64(body["prediction"], "prediction")
        gt = _image_from_b64(body["ground_truth"], "ground_truth")
        metric = body.get("metric", "miou")
        if metric == "mse":
            value = mse(pred, gt)
        elif metric == "miou":
            white = np.asarray((1.0, 1.0, 1.0), dtype=np.float32)
            pal = [(1.0, 1.0, 1.0), (0.0, 0.0, 0.0)]
            pm = np.all(round_to_palette(pred, pal) == white, axis=2)
            gm = np.all(round_to_palette(gt, pal) == white, axis=2)
            value = miou_binary(pm, gm)
        elif metric == "color_aware_miou":
            target = tuple(body.get("target_color", (0.0, 0.0, 1.0)))
            rounded_gt = round_to_palette(gt, COLOR_AWARE_PALETTE)
            region = np.all(rounded_gt == np.asarray(target, dtype=np.float32), axis=2)
            value = color_aware_miou(pred, region, target)
        else:
            raise ServiceError(400, "unknown_metric", f"metric {metric!r} not supported")
        return {"api_version": API_VERSION, "metric": metric, "score": float(value)}

    async def attention_endpoint(request: Request):
        body = await request.json()
        vq, mae = state.get(str(body.get("model_id")))
        if body.get("canvas") is not None:
            canvas = _image_from_b64(body["canvas"], "canvas")
            mask = np.asarray(body.get("mask"), dtype=bool)
        else:
            prompt, _, _ = _compose_from_payload(body)
            canvas, mask = prompt.canvas, prompt.mask
        row, col = int(body["patch_row"]), int(body["patch_col"])
        with gate:
            heat = attention_maps(mae, canvas, mask, (row, col))
        return {"api_version": API_VERSION, "heatmap": heat.tolist(),
                "grid": list(heat.shape)}

    # spec shape is GET-with-body; browsers can only send POST, so accept both
    app.add_api_route("/attention", attention_endpoint, methods=["GET", "POST"])
    return app
