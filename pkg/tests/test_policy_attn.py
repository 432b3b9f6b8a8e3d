import math

import numpy as np
import pytest

from ssmloco.attnbase import AttnBackbone, AttnLayer, attention_flops
from ssmloco.config import DESK_ARCH
from ssmloco.diffcore import Tape, Tensor, gradcheck
from ssmloco.policy import PolicyHeads, gaussian_entropy, gaussian_logp, gaussian_logp_np


# ---- policy ---------------------------------------------------------------
def test_unit_gaussian_entropy_two_dims():
    assert gaussian_entropy(Tensor(np.zeros(2))).item() == pytest.approx(2.8379, abs=1e-4)


def test_doubling_sigma_adds_a_ln2():
    A = 3
    base = gaussian_entropy(Tensor(np.zeros(A))).item()
    doubled = gaussian_entropy(Tensor(np.full(A, math.log(2.0)))).item()
    assert doubled - base == pytest.approx(A * math.log(2), abs=1e-12)


def test_logp_matches_closed_form_and_is_maximal_at_mean():
    rng = np.random.default_rng(0)
    mu, ls = rng.standard_normal(3), rng.uniform(-1, 0.5, 3)
    x = rng.standard_normal(3)
    sig = np.exp(ls)
    ref = np.sum(-0.5 * ((x - mu) / sig) ** 2 - np.log(sig) - 0.5 * np.log(2 * np.pi))
    assert gaussian_logp(Tensor(mu), Tensor(ls), Tensor(x)).item() == pytest.approx(ref, abs=1e-12)
    assert gaussian_logp_np(mu, ls, x) == pytest.approx(ref, abs=1e-12)
    # stationary point at the mean: d logp / d x = 0
    xm = Tensor(mu.copy(), requires_grad=True)
    with Tape() as tape:
        lp = gaussian_logp(Tensor(mu), Tensor(ls), xm)
    assert np.abs(tape.backward(lp)[xm]).max() < 1e-12
    assert gaussian_logp_np(mu, ls, mu) > gaussian_logp_np(mu, ls, mu + 0.01)


def test_ratio_identity_same_params():
    heads = PolicyHeads(DESK_ARCH, np.random.default_rng(1), np.float64)
    h = Tensor(np.random.default_rng(2).standard_normal((5, DESK_ARCH.feature_dim)))
    s = heads.act(h, np.random.default_rng(3))
    logp, _, _ = heads.evaluate(h, s.a_tilde)
    np.testing.assert_allclose(np.exp(logp.data - s.logp), 1.0, atol=1e-12)


def test_squash_bounds_and_symmetry():
    heads = PolicyHeads(DESK_ARCH, np.random.default_rng(4), a_max=1.0)
    h = Tensor(np.random.default_rng(5).standard_normal((256, DESK_ARCH.feature_dim)).astype(np.float32) * 10)
    s = heads.act(h, np.random.default_rng(6))
    assert np.all(np.abs(s.a) <= 1.0)
    big = heads.squash(np.array([50.0, -50.0, 0.0]))
    assert np.all(np.abs(big) <= 1.0) and big[2] == 0.0
    with pytest.raises(ValueError):
        PolicyHeads(DESK_ARCH, np.random.default_rng(0), a_max=0.0)


def test_monte_carlo_symmetry_zero_mean():
    heads = PolicyHeads(DESK_ARCH, np.random.default_rng(7), np.float64)
    last = heads.actor.layers[-1]
    last.weight.data[:] = 0.0
    last.bias.data[:] = 0.0      # mu = 0, sigma = 1
    h = Tensor(np.zeros((20000, DESK_ARCH.feature_dim)))
    s = heads.act(h, np.random.default_rng(8))
    assert np.abs(s.a.mean(axis=0)).max() < 0.02
    assert np.abs(s.a_tilde.std(axis=0) - 1).max() < 0.02


def test_deterministic_action_is_mean():
    heads = PolicyHeads(DESK_ARCH, np.random.default_rng(9), np.float64)
    h = Tensor(np.random.default_rng(10).standard_normal((2, DESK_ARCH.feature_dim)))
    mu, _ = heads.distribution(h)
    s = heads.act(h, np.random.default_rng(0), deterministic=True)
    np.testing.assert_array_equal(s.a_tilde, mu.data)


def test_evaluate_wrong_action_dim():
    heads = PolicyHeads(DESK_ARCH, np.random.default_rng(11))
    with pytest.raises(ValueError):
        heads.evaluate(Tensor(np.zeros((1, DESK_ARCH.feature_dim), np.float32)), np.zeros((1, 7)))


def test_heads_gradcheck():
    cfg = DESK_ARCH.with_(actor_hidden=(6,), critic_hidden=(6,))
    heads = PolicyHeads(cfg, np.random.default_rng(12), np.float64)
    rng = np.random.default_rng(13)
    h = Tensor(rng.standard_normal((3, cfg.feature_dim)), requires_grad=True)
    a = rng.standard_normal((3, cfg.action_dim))

    def fn():
        lp, ent, v = heads.evaluate(h, a)
        return lp.sum() + 0.3 * ent.sum() + v.sum()
    assert gradcheck(fn, [h] + heads.parameters()).passed(1e-6)


# ---- attention ------------------------------------------------------------
def test_equal_tokens_give_uniform_weights():
    layer = AttnLayer(8, 2, 16, np.random.default_rng(14), np.float64)
    tok = np.tile(np.random.default_rng(15).standard_normal(8), (1, 6, 1))
    layer.attend(Tensor(tok))
    np.testing.assert_allclose(layer.last_weights, 1 / 6, atol=1e-12)


def test_attention_rows_sum_to_one():
    layer = AttnLayer(8, 2, 16, np.random.default_rng(16))
    layer.attend(Tensor(np.random.default_rng(17).standard_normal((3, 9, 8)).astype(np.float32) * 4))
    np.testing.assert_allclose(layer.last_weights.sum(-1), 1.0, atol=1e-5)
    assert np.all(layer.last_weights >= 0)


def test_single_token_weight_is_one():
    layer = AttnLayer(8, 2, 16, np.random.default_rng(18), np.float64)
    layer.attend(Tensor(np.random.default_rng(19).standard_normal((1, 1, 8))))
    assert np.all(layer.last_weights == 1.0)


def test_flop_counter_quadratic():
    assert attention_flops(2 * 16, 32) == 4 * attention_flops(16, 32)
    layer = AttnLayer(8, 2, 16, np.random.default_rng(20))
    layer.attend(Tensor(np.zeros((1, 10, 8), np.float32)))
    f1 = layer.flops
    layer.flops = 0
    layer.attend(Tensor(np.zeros((1, 20, 8), np.float32)))
    assert layer.flops == 4 * f1


def test_head_count_must_divide_width():
    with pytest.raises(ValueError):
        AttnLayer(10, 3, 8, np.random.default_rng(0))


def test_attn_backbone_stateless_and_gradcheck():
    cfg = DESK_ARCH.with_(token_width=8, attn_heads=2, attn_ffn=8, head_hidden=(8,))
    bb = AttnBackbone(cfg, np.random.default_rng(21), np.float64)
    rng = np.random.default_rng(22)
    toks = Tensor(rng.standard_normal((2, 5, 8)), requires_grad=True)
    h, st = bb(toks)
    assert st == [] and bb.zero_state(3) == []
    w = Tensor(rng.standard_normal(h.shape))
    assert gradcheck(lambda: (bb(toks)[0] * w).sum(), [toks] + bb.parameters(), max_probes=6,
                     rng=np.random.default_rng(0)).passed(1e-5)
