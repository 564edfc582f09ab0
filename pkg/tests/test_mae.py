import math

import numpy as np
import pytest
import torch

from conftest import random_image
from gridprompt.composer import GridLayout, TaskExample, compose_prompt
from gridprompt.errors import ConfigurationError, GeometryError
from gridprompt.mae import (MaeConfig, MaeModel, attention_maps, forward_logits,
                            inpaint, masked_ce_loss, patchify, pixel_mae_loss,
                            predict_tokens, random_mask, softmax_probs,
                            unpatchify)
from gridprompt.vq import encode_image
from gradcheck import mae_ce_grad_errors, straight_through_grad_errors


def test_patchify_shapes(rng):
    img = random_image(rng, 16, 16)
    patches = patchify(img, 8)
    assert patches.shape == (4, 192)
    const = np.full((16, 16, 3), 0.25, dtype=np.float32)
    cp = patchify(const, 8)
    assert np.array_equal(cp[0], cp[1]) and np.array_equal(cp[0], cp[3])
    with pytest.raises(GeometryError):
        patchify(random_image(rng, 20, 16), 8)


def test_patchify_roundtrip(rng):
    for (h, w) in [(16, 16), (32, 64), (128, 128)]:
        img = random_image(rng, h, w)
        patches = patchify(img, 8)
        back = unpatchify(patches, (h // 8, w // 8), 8)
        assert np.array_equal(back, img)


def test_random_mask_counts_and_determinism():
    m = random_mask((16, 16), 0.75, 3)
    assert m.shape == (16, 16) and m.sum() == 192
    assert np.array_equal(m, random_mask((16, 16), 0.75, 3))
    assert not np.array_equal(m, random_mask((16, 16), 0.75, 4))
    for bad in (0.0, 1.0, -0.5, 1.5):
        with pytest.raises(ConfigurationError):
            random_mask((4, 4), bad, 0)


def test_random_mask_uniform_over_small_grid():
    # 2x2 grid at ratio 0.5 has C(4,2)=6 possible masks
    counts = {}
    n = 100_000
    for seed in range(n):
        key = tuple(random_mask((2, 2), 0.5, seed).reshape(-1))
        counts[key] = counts.get(key, 0) + 1
    assert len(counts) == 6
    for c in counts.values():
        assert abs(c / n - 1 / 6) < 0.02 * (1 / 6) + 0.002


def test_forward_masking_contract(tiny_mae, rng):
    img = random_image(rng, 32, 32)
    mask = random_mask((4, 4), 0.5, 0)
    base = forward_logits(tiny_mae, img, mask)
    perturbed = img.copy()
    pix = np.kron(mask, np.ones((8, 8), dtype=bool))
    perturbed[pix] = rng.random((int(pix.sum()), 3)).astype(np.float32)
    after = forward_logits(tiny_mae, perturbed, mask)
    assert torch.equal(base, after)
    # and visible perturbations do change the logits
    perturbed2 = img.copy()
    perturbed2[~pix] = rng.random((int((~pix).sum()), 3)).astype(np.float32)
    assert not torch.equal(base, forward_logits(tiny_mae, perturbed2, mask))


def test_forward_output_length_and_determinism(tiny_mae, rng):
    img = random_image(rng, 32, 48)
    mask = random_mask((4, 6), 0.5, 1)
    out = forward_logits(tiny_mae, img, mask)
    assert out.shape == (24, tiny_mae.config.vocab_size)
    assert torch.equal(out, forward_logits(tiny_mae, img, mask))


def test_forward_rejects_bad_masks(tiny_mae, rng):
    img = random_image(rng, 32, 32)
    with pytest.raises(ValueError):
        forward_logits(tiny_mae, img, np.ones((4, 4), dtype=bool))
    with pytest.raises(GeometryError):
        forward_logits(tiny_mae, img, np.zeros((3, 3), dtype=bool))


def test_zeroed_head_gives_uniform_softmax(tiny_mae, rng):
    with torch.no_grad():
        tiny_mae.head.weight.zero_()
        tiny_mae.head.bias.zero_()
    img = random_image(rng, 32, 32)
    logits = forward_logits(tiny_mae, img, random_mask((4, 4), 0.5, 0))
    probs = softmax_probs(logits)
    assert torch.all((probs - 1.0 / tiny_mae.config.vocab_size).abs() < 1e-6)
    assert float((probs.sum(-1) - 1.0).abs().max()) < 1e-6


def test_predict_tokens():
    mask = np.array([[True, False], [True, True]])
    logits = np.zeros((4, 5), dtype=np.float32)
    logits[0, 3] = 10.0
    out = predict_tokens(logits, mask)
    assert out[0, 0] == 3
    assert out[0, 1] == -1  # visible position
    assert out[1, 0] == 0   # all-equal logits tie -> index 0
    with pytest.raises(ValueError):
        predict_tokens(np.full((4, 5), np.nan), mask)


def test_predict_tokens_matches_argmax_oracle(rng):
    logits = rng.standard_normal((16, 9)).astype(np.float32)
    mask = np.ones((4, 4), dtype=bool)
    out = predict_tokens(logits, mask)
    for pos in range(16):
        best = max(range(9), key=lambda v: (logits[pos, v], -v))
        assert out.reshape(-1)[pos] == best


def test_masked_ce_loss_values():
    v = 256
    logits = torch.zeros(1, 4, v)
    targets = np.zeros((1, 4), dtype=np.int64)
    mask = np.ones((1, 4), dtype=bool)
    loss = masked_ce_loss(logits, targets, mask)
    assert abs(float(loss) - math.log(v)) < 1e-6
    hot = torch.full((1, 4, v), -1000.0)
    for i in range(4):
        hot[0, i, 7] = 1000.0
    targets7 = np.full((1, 4), 7, dtype=np.int64)
    assert float(masked_ce_loss(hot, targets7, mask)) < 1e-6
    with pytest.raises(ValueError):
        masked_ce_loss(logits, targets, np.zeros((1, 4), dtype=bool))


def test_masked_ce_two_position_oracle(rng):
    logits = torch.from_numpy(rng.standard_normal((1, 4, 3)).astype(np.float32))
    targets = np.array([[0, 2, 1, 0]])
    mask = np.array([[True, False, True, False]])
    got = float(masked_ce_loss(logits, targets, mask))
    expect = 0.0
    for pos, tgt in ((0, 0), (2, 1)):
        row = logits[0, pos].numpy().astype(np.float64)
        p = np.exp(row) / np.exp(row).sum()
        expect += -np.log(p[tgt])
    expect /= 2
    assert abs(got - expect) < 1e-6


def test_masked_ce_only_reads_masked_positions(rng):
    logits = torch.from_numpy(rng.standard_normal((1, 4, 5)).astype(np.float32))
    mask = np.array([[True, True, False, False]])
    targets = np.array([[1, 2, 3, 4]])
    targets2 = np.array([[1, 2, 0, 0]])  # visible targets differ
    assert float(masked_ce_loss(logits, targets, mask)) == \
        float(masked_ce_loss(logits, targets2, mask))


def test_pixel_mae_loss(rng):
    img = random_image(rng, 16, 16)
    pixels = torch.from_numpy(img).permute(2, 0, 1)[None]
    target = torch.from_numpy(patchify(img, 8))[None]
    mask = np.array([[True, False], [False, True]])
    assert float(pixel_mae_loss(target, pixels, mask, 8)) == 0.0
    delta = 0.25
    off = target + delta
    got = float(pixel_mae_loss(off, pixels, mask, 8))
    assert abs(got - delta**2) < 1e-6
    pred = torch.from_numpy(rng.standard_normal(target.shape).astype(np.float32))
    explicit = ((pred - target).numpy()[0].reshape(4, -1)[mask.reshape(-1)] ** 2).mean()
    assert abs(float(pixel_mae_loss(pred, pixels, mask, 8)) - explicit) < 1e-6
    with pytest.raises(ValueError):
        pixel_mae_loss(pred, pixels, np.zeros((1, 4), dtype=bool), 8)


def test_mae_ce_gradients_match_finite_differences():
    errors = mae_ce_grad_errors(n_params=20, seed=0)
    assert len(errors) == 20
    assert max(errors) <= 1e-3


def test_straight_through_matches_finite_differences():
    errors = straight_through_grad_errors(step=1e-4, seed=0)
    assert max(errors) <= 1e-3


def test_inpaint_visible_bytes_and_validation(tiny_mae, tiny_vq, rng):
    img = random_image(rng, 32, 32)
    mask = np.zeros((4, 4), dtype=bool)
    mask[2:, 2:] = True
    out = inpaint(tiny_mae, tiny_vq, img, mask)
    pix = np.kron(mask, np.ones((8, 8), dtype=bool))
    assert np.array_equal(out[~pix], img[~pix])
    assert out.shape == img.shape
    with pytest.raises(ValueError):
        inpaint(tiny_mae, tiny_vq, img, np.zeros((4, 4), dtype=bool))


def test_inpaint_one_patch_constant_image(tiny_mae, tiny_vq):
    img = np.full((32, 32, 3), 0.5, dtype=np.float32)
    mask = np.zeros((4, 4), dtype=bool)
    mask[1, 1] = True
    out = inpaint(tiny_mae, tiny_vq, img, mask)
    pix = np.kron(mask, np.ones((8, 8), dtype=bool))
    assert np.array_equal(out[~pix], img[~pix])
    # the filled patch is whatever the decoder makes of the predicted token,
    # compared against decoding that token directly
    tokens = encode_image(tiny_vq, img)
    logits = forward_logits(tiny_mae, img, mask)
    pred = predict_tokens(logits, mask)
    composite = np.where(mask, pred, tokens)
    from gridprompt.vq import decode_tokens
    assert np.array_equal(out[pix], decode_tokens(tiny_vq, composite)[pix])


def test_inpaint_geometry_mismatch(tiny_mae, rng):
    from gridprompt.vq import VqConfig, VqModel
    other = VqModel(VqConfig(vocab_size=16, embed_dim=8, patch_size=4,
                             channels=(8, 12)))
    with pytest.raises(GeometryError):
        inpaint(tiny_mae, other, random_image(rng, 32, 32), np.ones((4, 4), dtype=bool))


def test_pixel_head_inpaint(tiny_vq, rng):
    torch.manual_seed(0)
    model = MaeModel(MaeConfig(patch_size=8, embed_dim=32, depth=1, num_heads=2,
                               decoder_embed_dim=16, decoder_depth=1,
                               decoder_num_heads=2, head="pixel_regression"))
    img = random_image(rng, 32, 32)
    mask = random_mask((4, 4), 0.5, 0)
    out = inpaint(model, tiny_vq, img, mask)
    pix = np.kron(mask, np.ones((8, 8), dtype=bool))
    assert np.array_equal(out[~pix], img[~pix])
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_attention_maps(tiny_mae, rng):
    img = random_image(rng, 32, 32)
    mask = random_mask((4, 4), 0.5, 2)
    q = tuple(np.argwhere(mask)[0])
    heat = attention_maps(tiny_mae, img, mask, q)
    assert heat.shape == (4, 4)
    assert abs(heat.sum() - 1.0) < 1e-6
    vis = tuple(np.argwhere(~mask)[0])
    with pytest.raises(ValueError):
        attention_maps(tiny_mae, img, mask, vis)


def test_attention_single_layer_single_head_is_softmax_row(rng):
    torch.manual_seed(5)
    model = MaeModel(MaeConfig(patch_size=8, embed_dim=16, depth=1, num_heads=1,
                               decoder_embed_dim=16, decoder_depth=1,
                               decoder_num_heads=1, vocab_size=8))
    img = random_image(rng, 32, 32)
    mask = random_mask((4, 4), 0.5, 3)
    q = tuple(np.argwhere(mask)[0])
    heat = attention_maps(model, img, mask, q)
    px = torch.from_numpy(img).permute(2, 0, 1)[None]
    mk = torch.from_numpy(mask)[None]
    with torch.no_grad():
        _, attns = model(px, mk, need_weights=True)
    qpos = q[0] * 4 + q[1]
    row = attns[0][0, 0, qpos].numpy().reshape(4, 4)
    row = row / row.sum()
    assert np.allclose(heat, row, atol=1e-7)


def test_prompt_mask_drives_inpaint(tiny_mae, tiny_vq, rng):
    examples = [TaskExample(random_image(rng), random_image(rng))]
    vp = compose_prompt(examples, random_image(rng), GridLayout(), 128, 8)
    out = inpaint(tiny_mae, tiny_vq, vp.canvas, vp.mask)
    top, left, h, w = vp.cell_map.answer_rect
    untouched = out.copy()
    untouched[top:top + h, left:left + w] = vp.canvas[top:top + h, left:left + w]
    assert np.array_equal(untouched, vp.canvas)
