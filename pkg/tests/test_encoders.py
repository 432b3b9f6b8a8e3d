import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssmloco.config import DESK_ARCH, PAPER_ARCH
from ssmloco.diffcore import Tensor, gradcheck
from ssmloco.encoders import (
    DepthPatchifier,
    Observation,
    ProprioEncoder,
    TokenAssembler,
    encode_tokens,
    extract_patches,
    patch_count,
    perturb_depth,
)


def test_patch_counts():
    assert patch_count(16, 16, 4) == 16
    assert patch_count(64, 64, 8) == 64
    with pytest.raises(ValueError):
        patch_count(15, 16, 4)


@settings(max_examples=50, deadline=None)
@given(gh=st.integers(1, 8), gw=st.integers(1, 8), p=st.integers(1, 6))
def test_token_count_law(gh, gw, p):
    assert patch_count(gh * p, gw * p, p) == gh * gw
    depth = np.zeros((1, 2, gh * p, gw * p))
    assert extract_patches(depth, p).shape == (1, gh * gw, 2 * p * p)


def test_patches_are_raster_ordered():
    depth = np.arange(2 * 4 * 4, dtype=float).reshape(1, 2, 4, 4)
    patches = extract_patches(depth, 2)
    # patch 1 is the top-right 2x2 block of every frame
    np.testing.assert_array_equal(patches[0, 1], np.concatenate([depth[0, f, 0:2, 2:4].ravel() for f in range(2)]))


def test_proprio_encoder_zero_case_and_shape():
    enc = ProprioEncoder(DESK_ARCH, np.random.default_rng(0))
    for lin in enc.mlp.layers:
        lin.bias.data[:] = 0.0
    out = enc(np.zeros((5, DESK_ARCH.proprio_dim), np.float32))
    assert out.shape == (5, DESK_ARCH.proprio_token) and np.all(out.data == 0)
    with pytest.raises(ValueError):
        enc(np.zeros((1, 7), np.float32))


def test_proprio_encoder_gradcheck():
    rng = np.random.default_rng(1)
    enc = ProprioEncoder(DESK_ARCH.with_(proprio_hidden=(6, 6), proprio_token=4), rng, np.float64)
    x = Tensor(rng.standard_normal((3, DESK_ARCH.proprio_dim)), requires_grad=True)
    w = Tensor(rng.standard_normal((3, 4)))
    assert gradcheck(lambda: (enc(x) * w).sum(), [x] + enc.parameters()).passed(1e-6)


def test_depth_patchifier_zero_case():
    pat = DepthPatchifier(DESK_ARCH, np.random.default_rng(2))
    pat.conv.bias.data[:] = 0.0
    pat.out.bias.data[:] = 0.0
    z = pat(np.zeros((2, 4, 16, 16), np.float32))
    assert z.shape == (2, 16, DESK_ARCH.vis_token) and np.all(z.data == 0)


def _assembler(cfg=DESK_ARCH, seed=3, dtype=np.float32):
    return TokenAssembler(cfg, np.random.default_rng(seed), dtype)


def test_assembler_rows_normalized_and_shape():
    asm = _assembler(PAPER_ARCH)
    rng = np.random.default_rng(4)
    seq = asm(Tensor(rng.standard_normal((2, 128)).astype(np.float32)),
              Tensor(rng.standard_normal((2, 64, 128)).astype(np.float32)))
    assert seq.tokens.shape == (2, 65, 128) and seq.n_visual == 64
    t = seq.tokens.data.astype(np.float64)
    assert np.abs(t.mean(-1)).max() < 1e-5
    assert np.abs(t.var(-1) - 1).max() < 1e-3


def test_modality_table_has_two_distinct_rows():
    asm = _assembler()
    tab = asm.modality_table().data
    assert not np.array_equal(tab[0], tab[1])
    assert np.all(tab[1:] == tab[1])


def test_layernorm_idempotent_with_zero_embeddings():
    asm = _assembler(dtype=np.float64)
    asm.pos.data[:] = 0.0
    asm.modality.data[:] = 0.0
    d = DESK_ARCH.token_width
    asm.proj_prop.weight.data = np.eye(d)
    asm.proj_vis.weight.data = np.eye(d)
    rng = np.random.default_rng(5)
    raw = rng.standard_normal((1, 17, d))
    normed = (raw - raw.mean(-1, keepdims=True)) / raw.std(-1, keepdims=True)
    seq = asm(Tensor(normed[:, 0]), Tensor(normed[:, 1:]))
    assert np.abs(seq.tokens.data - normed).max() < 1e-4   # eps = 1e-5 inside the LN


def test_visual_permutation_bookkeeping():
    asm = _assembler(dtype=np.float64)
    rng = np.random.default_rng(6)
    zp = Tensor(rng.standard_normal((1, 32)))
    zv = rng.standard_normal((1, 16, 32))
    perm = rng.permutation(16)
    base = asm(zp, Tensor(zv)).tokens.data
    asm.pos.data[1:] = asm.pos.data[1:][perm]
    out = asm(zp, Tensor(zv[:, perm])).tokens.data
    np.testing.assert_allclose(out[0, 1:], base[0, 1:][perm], atol=1e-12)
    np.testing.assert_allclose(out[0, 0], base[0, 0], atol=1e-12)


def test_visual_count_mismatch():
    asm = _assembler()
    with pytest.raises(ValueError):
        asm(Tensor(np.zeros((1, 32), np.float32)), Tensor(np.zeros((1, 9, 32), np.float32)))


def test_encode_order_independence():
    rng = np.random.default_rng(7)
    pe, de = ProprioEncoder(DESK_ARCH, rng), DepthPatchifier(DESK_ARCH, rng)
    asm = TokenAssembler(DESK_ARCH, rng)
    obs = Observation(rng.standard_normal(15).astype(np.float32), rng.uniform(0, 5, (4, 16, 16)).astype(np.float32))
    a = encode_tokens(obs, pe, de, asm).tokens.data
    zv = de(obs.batched().depth_stack)
    zp = pe(obs.batched().proprio)
    b = asm(zp, zv).tokens.data
    assert a.tobytes() == b.tobytes()


def test_perturb_depth_contract():
    depth = np.random.default_rng(8).uniform(0, 4.9, (16, 16))
    for seed in range(200):
        out = perturb_depth(depth, np.random.default_rng(seed), 5.0)
        changed = out != depth
        assert 3 <= changed.sum() <= 30
        assert np.all(out[changed] == 5.0)
        assert np.array_equal(out[~changed], depth[~changed])
    a = perturb_depth(depth, np.random.default_rng(1), 5.0)
    b = perturb_depth(depth, np.random.default_rng(1), 5.0)
    assert np.array_equal(a, b)
