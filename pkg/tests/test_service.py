import base64

import numpy as np
import pytest
import torch
from fastapi.testclient import TestClient

from gridprompt.composer import GridLayout, TaskExample, compose_prompt, extract_answer
from gridprompt.imageops import decode_png_bytes, encode_png_bytes, from_uint8, to_uint8
from gridprompt.mae import MaeConfig, MaeModel, inpaint
from gridprompt.service import create_app
from gridprompt.vq import VqConfig, VqModel


def b64(img) -> str:
    return base64.b64encode(encode_png_bytes(img)).decode("ascii")


def unb64(data: str):
    return decode_png_bytes(base64.b64decode(data))


@pytest.fixture(scope="module")
def models():
    torch.manual_seed(21)
    vq = VqModel(VqConfig(vocab_size=16, embed_dim=8, patch_size=8, channels=(8, 12, 16)))
    mae = MaeModel(MaeConfig(patch_size=8, embed_dim=32, depth=2, num_heads=2,
                             decoder_embed_dim=24, decoder_depth=2,
                             decoder_num_heads=2, vocab_size=16))
    vq.eval()
    mae.eval()
    return vq, mae


@pytest.fixture(scope="module")
def client(models):
    vq, mae = models
    app = create_app(preloaded={"tiny": (vq, mae)})
    return TestClient(app, raise_server_exceptions=False)


def quantized_images(seed, n=1, h=64, w=64):
    """uint8-clean images shared verbatim by the service and library paths."""
    rng = np.random.default_rng(seed)
    return [from_uint8((rng.random((h, w, 3)) * 255).round().astype(np.uint8))
            for _ in range(n)]


def test_models_listing(client):
    r = client.get("/models")
    assert r.status_code == 200
    body = r.json()
    assert body["api_version"] == "1"
    assert body["models"][0]["id"] == "tiny"
    assert body["models"][0]["vocab_size"] == 16


def test_unknown_model_is_404(client):
    r = client.post("/inpaint", json={"model_id": "nope", "examples": [],
                                      "query": None})
    assert r.status_code == 404
    assert r.json()["code"] == "unknown_model"
    assert "message" in r.json()


def test_compose_matches_library(client):
    ein, eout, q = quantized_images(5, 3)
    r = client.post("/compose", json={
        "examples": [{"input": b64(ein), "output": b64(eout)}],
        "query": b64(q), "layout": "horizontal",
        "canvas_size": 128, "patch_size": 8})
    assert r.status_code == 200
    body = r.json()
    vp = compose_prompt([TaskExample(ein, eout)], q, GridLayout("horizontal"), 128, 8)
    assert np.array_equal(unb64(body["canvas"]), from_uint8(to_uint8(vp.canvas)))
    assert np.array_equal(np.asarray(body["mask"], dtype=bool), vp.mask)
    assert body["cell_map"]["answer_cell"] == [1, 1]
    assert body["cell_map"]["cells"]["1,1"] == [64, 64, 64, 64]


def test_compose_then_inpaint_parity_with_library(client, models):
    vq, mae = models
    for seed in range(5):
        ein, eout, q = quantized_images(seed, 3)
        payload = {"examples": [{"input": b64(ein), "output": b64(eout)}],
                   "query": b64(q), "layout": "horizontal",
                   "canvas_size": 128, "patch_size": 8}
        r = client.post("/inpaint", json=dict(payload, model_id="tiny"))
        assert r.status_code == 200
        body = r.json()
        vp = compose_prompt([TaskExample(ein, eout)], q, GridLayout("horizontal"), 128, 8)
        completed = inpaint(mae, vq, vp.canvas, vp.mask)
        answer = extract_answer(completed, vp.cell_map)
        assert np.array_equal(to_uint8(completed), to_uint8(unb64(body["completed"])))
        assert np.array_equal(to_uint8(answer), to_uint8(unb64(body["answer"])))
        assert body["latency_ms"] >= 0.0


def test_inpaint_ensemble_of_one_matches_plain(client):
    ein, eout, q = quantized_images(9, 3)
    payload = {"model_id": "tiny",
               "examples": [{"input": b64(ein), "output": b64(eout)}],
               "query": b64(q), "canvas_size": 128, "patch_size": 8}
    plain = client.post("/inpaint", json=dict(payload, layout="horizontal")).json()
    ens = client.post("/inpaint", json=dict(payload, ensemble=["horizontal"])).json()
    assert plain["answer"] == ens["answer"]


def test_inpaint_canvas_mode(client, models):
    vq, mae = models
    ein, eout, q = quantized_images(13, 3)
    vp = compose_prompt([TaskExample(ein, eout)], q, GridLayout("horizontal"), 128, 8)
    canvas_q = from_uint8(to_uint8(vp.canvas))
    r = client.post("/inpaint", json={"model_id": "tiny", "canvas": b64(vp.canvas),
                                      "mask": vp.mask.astype(int).tolist()})
    assert r.status_code == 200
    completed = inpaint(mae, vq, canvas_q, vp.mask)
    assert np.array_equal(to_uint8(completed), to_uint8(unb64(r.json()["completed"])))
    assert unb64(r.json()["answer"]).shape == (64, 64, 3)


def test_score_endpoint(client):
    img = quantized_images(3)[0]
    r = client.post("/score", json={"prediction": b64(img), "ground_truth": b64(img),
                                    "metric": "miou"})
    assert r.json()["score"] == 1.0
    r = client.post("/score", json={"prediction": b64(img), "ground_truth": b64(img),
                                    "metric": "mse"})
    assert r.json()["score"] == 0.0
    blue = np.zeros((16, 16, 3), dtype=np.float32)
    blue[4:12, 4:12] = (0.0, 0.0, 1.0)
    r = client.post("/score", json={"prediction": b64(blue), "ground_truth": b64(blue),
                                    "metric": "color_aware_miou",
                                    "target_color": [0.0, 0.0, 1.0]})
    assert r.json()["score"] == 1.0
    r = client.post("/score", json={"prediction": b64(img), "ground_truth": b64(img),
                                    "metric": "nonsense"})
    assert r.status_code == 400 and r.json()["code"] == "unknown_metric"


def test_geometry_violation_is_400(client):
    ein, eout, q = quantized_images(4, 3)
    r = client.post("/compose", json={
        "examples": [{"input": b64(ein), "output": b64(eout)}],
        "query": b64(q), "canvas_size": 100, "patch_size": 8})
    assert r.status_code == 400
    assert r.json()["code"] == "geometry_error"
    assert r.json()["api_version"] == "1"


def test_attention_get_and_post(client):
    ein, eout, q = quantized_images(6, 3)
    payload = {"model_id": "tiny",
               "examples": [{"input": b64(ein), "output": b64(eout)}],
               "query": b64(q), "canvas_size": 128, "patch_size": 8,
               "patch_row": 9, "patch_col": 9}
    for method in ("GET", "POST"):
        r = client.request(method, "/attention", json=payload)
        assert r.status_code == 200, r.text
        heat = np.asarray(r.json()["heatmap"])
        assert heat.shape == (16, 16)
        assert abs(heat.sum() - 1.0) < 1e-5
    bad = client.post("/attention", json=dict(payload, patch_row=0, patch_col=0))
    assert bad.status_code == 400  # visible patch is not a valid query


def test_statelessness(client):
    ein, eout, q = quantized_images(8, 3)
    payload = {"model_id": "tiny",
               "examples": [{"input": b64(ein), "output": b64(eout)}],
               "query": b64(q), "layout": "vertical",
               "canvas_size": 128, "patch_size": 8}
    r1 = client.post("/inpaint", json=payload).json()
    r2 = client.post("/inpaint", json=payload).json()
    assert r1["completed"] == r2["completed"] and r1["answer"] == r2["answer"]
