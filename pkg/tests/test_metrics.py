import numpy as np
import pytest

from gridprompt.errors import ConfigurationError, GeometryError, NoDetectionError
from gridprompt.metrics import (COLOR_AWARE_PALETTE, Box, bbox_iou,
                                color_aware_miou, largest_component_bbox,
                                miou_binary, mse, round_to_palette)
from oracles import (iou_counting, largest_component_bbox_oracle, nearest_entry,
                     rect_iou_analytic, round_pixel)

BW = [(0.0, 0.0, 0.0), (1.0, 1.0, 1.0)]


def test_round_to_palette_examples():
    white = np.ones((1, 1, 3), dtype=np.float32)
    assert np.all(round_to_palette(white, BW) == 1.0)
    gray = np.full((1, 1, 3), 0.4, dtype=np.float32)
    assert np.all(round_to_palette(gray, BW) == 0.0)  # 0.48 vs 1.08 squared distance
    with pytest.raises(ConfigurationError):
        round_to_palette(white, [])


def test_round_to_palette_oracle(rng):
    img = rng.random((25, 40, 3)).astype(np.float32)
    out = round_to_palette(img, COLOR_AWARE_PALETTE)
    for _ in range(1000):
        i = int(rng.integers(25))
        j = int(rng.integers(40))
        assert tuple(out[i, j]) == round_pixel(img[i, j], COLOR_AWARE_PALETTE)


def test_round_to_palette_outputs_in_palette(rng):
    img = rng.random((16, 16, 3)).astype(np.float32)
    out = round_to_palette(img, BW)
    colors = {tuple(px) for px in out.reshape(-1, 3)}
    assert colors <= {(0.0, 0.0, 0.0), (1.0, 1.0, 1.0)}


def test_miou_cases():
    a = np.zeros((8, 8), dtype=bool)
    b = np.zeros((8, 8), dtype=bool)
    assert miou_binary(a, b) == 1.0  # both empty
    a[:4] = True
    assert miou_binary(a, a) == 1.0
    b[4:] = True
    assert miou_binary(a, b) == 0.0
    full = np.ones((8, 8), dtype=bool)
    assert miou_binary(a, full) == 0.5  # half overlap
    with pytest.raises(GeometryError):
        miou_binary(a, np.zeros((4, 4), dtype=bool))


def test_miou_matches_counting_oracle(rng):
    for _ in range(50):
        a = rng.random((12, 12)) < 0.4
        b = rng.random((12, 12)) < 0.4
        assert abs(miou_binary(a, b) - iou_counting(a, b)) < 1e-12
        assert miou_binary(a, b) == miou_binary(b, a)


def test_color_aware_miou():
    blue = (0.0, 0.0, 1.0)
    region = np.zeros((20, 20), dtype=bool)
    region[5:15, 5:15] = True
    pred = np.zeros((20, 20, 3), dtype=np.float32)
    pred[region] = blue
    assert color_aware_miou(pred, region, blue) == 1.0
    green_pred = np.zeros((20, 20, 3), dtype=np.float32)
    green_pred[region] = (0.0, 1.0, 0.0)  # unchanged query color, no blue pixels
    assert color_aware_miou(green_pred, region, blue) == 0.0
    damaged = pred.copy()
    damaged[5:15, 5:15][:5, :5] = 0.0  # 25% of the square blacked out
    assert abs(color_aware_miou(damaged, region, blue) - 0.75) < 1e-12
    with pytest.raises(ConfigurationError):
        color_aware_miou(pred, region, (0.5, 0.5, 0.5))


def test_largest_component_examples():
    m = np.zeros((32, 32), dtype=bool)
    m[4:14, 6:16] = True
    assert largest_component_bbox(m) == Box(4, 6, 10, 10)
    m[20:22, 20:22] = True  # 2x2 speck dies in the opening
    assert largest_component_bbox(m) == Box(4, 6, 10, 10)
    with pytest.raises(NoDetectionError):
        largest_component_bbox(np.zeros((8, 8), dtype=bool))


def test_largest_component_matches_flood_fill_oracle(rng):
    checked = 0
    for _ in range(200):
        m = rng.random((32, 32)) < rng.uniform(0.2, 0.6)
        expected = largest_component_bbox_oracle(m)
        if expected is None:
            with pytest.raises(NoDetectionError):
                largest_component_bbox(m)
        else:
            assert tuple(largest_component_bbox(m)) == expected
            checked += 1
    assert checked > 100


def test_bbox_iou():
    a = Box(0, 0, 10, 10)
    assert bbox_iou(a, a) == 1.0
    assert bbox_iou(a, Box(20, 20, 5, 5)) == 0.0
    assert abs(bbox_iou(a, Box(5, 0, 10, 10)) - 1.0 / 3.0) < 1e-9
    with pytest.raises(ConfigurationError):
        bbox_iou(a, Box(0, 0, 0, 3))


def test_bbox_iou_matches_analytic_oracle(rng):
    for _ in range(200):
        a = Box(*(int(v) for v in rng.integers(0, 12, size=2)),
                *(int(v) for v in rng.integers(1, 12, size=2)))
        b = Box(*(int(v) for v in rng.integers(0, 12, size=2)),
                *(int(v) for v in rng.integers(1, 12, size=2)))
        assert abs(bbox_iou(a, b) - rect_iou_analytic(a, b)) < 1e-9
        assert bbox_iou(a, b) == bbox_iou(b, a)


def test_quantize_matches_bruteforce_oracle(rng):
    import torch

    from gridprompt.vq import quantize
    for vocab in (4, 16, 64):
        entries = rng.standard_normal((vocab, 6)).astype(np.float32)
        latents = rng.standard_normal((40, 6)).astype(np.float32)
        idx, picked = quantize(torch.from_numpy(latents), torch.from_numpy(entries))
        for i in range(40):
            assert int(idx[i]) == nearest_entry(latents[i], entries)
            assert np.array_equal(picked[i].numpy(), entries[int(idx[i])])


def test_mse():
    a = np.zeros((4, 4, 3), dtype=np.float32)
    b = np.full((4, 4, 3), 0.5, dtype=np.float32)
    assert abs(mse(a, b) - 0.25) < 1e-12
    assert mse(a, a) == 0.0
