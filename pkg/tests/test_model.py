import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from playa_inundation import kernels
from playa_inundation.model import (
    TEST,
    TRAIN,
    VALIDATION,
    ModelConfig,
    batch_loss,
    embed_lookup,
    init_parameters,
    lstm_cell_forward,
    predict_proba,
    sequence_backward,
    sequence_forward,
)
from playa_inundation.numeric import finite_diff_check, numeric_gradients, relative_error
from tiny import tiny_config, tiny_model, tiny_samples


def _sig(v):
    return 1.0 / (1.0 + math.exp(-v))


def test_init_deterministic():
    cfg = tiny_config()
    a, b = init_parameters(cfg, 11), init_parameters(cfg, 11)
    assert all(np.array_equal(a[k], b[k]) for k in a)
    c = init_parameters(cfg, 12)
    assert not np.array_equal(a["w_ih"], c["w_ih"])


def test_init_h128_bound():
    cfg = ModelConfig(hidden_size=128, vocab_sizes={"playa": 2, "huc8": 2, "author": 2})
    p = init_parameters(cfg, 0)
    assert np.abs(p["w_hh"]).max() <= 0.08838834764831845
    assert p["w_hh"].shape == (512, 128)
    assert p["w_ih"].shape == (512, 24 + 16 + 8 + 4)
    assert np.all(p["b_ih"][128:256] == 1.0) and np.all(p["b_ih"][:128] == 0.0)


def test_zero_vocab_rejected():
    with pytest.raises(ValueError):
        tiny_config(vocab=(0, 2, 2))


def test_embed_lookup_bounds():
    table = np.arange(6.0).reshape(3, 2)
    assert np.array_equal(embed_lookup(table, 0), [0.0, 1.0])
    with pytest.raises(IndexError, match=r"playa index 3 out of range \[0, 3\)"):
        embed_lookup(table, 3, "playa")


def test_shared_playa_row_gradient_sums_contributions():
    cfg, params = tiny_model(seed=3)
    s = tiny_samples(cfg, T=6, n=2, seed=3, cats=[(1, 0, 0), (1, 1, 1)])
    _, joint = batch_loss(s, params, "train")
    # the mean over both samples equals the average of the per-sample means (equal windows)
    _, g0 = batch_loss(s[:1], params, "train")
    _, g1 = batch_loss(s[1:], params, "train")
    np.testing.assert_allclose(joint["emb_playa"][1], 0.5 * (g0["emb_playa"][1] + g1["emb_playa"][1]), atol=1e-15)
    assert np.all(joint["emb_playa"][[0, 2]] == 0.0)
    err = finite_diff_check(lambda p: batch_loss(s, p, "train"), {"emb_playa": params["emb_playa"]} | {k: v for k, v in params.items() if k != "emb_playa"})
    assert err < 1e-4


def test_cell_all_zero_params():
    cfg = tiny_config(H=3, F=2, dims=(1, 1, 1))
    params = {k: np.zeros_like(v) for k, v in init_parameters(cfg, 0).items()}
    x = np.array([0.7, -1.2, 0.1, 0.2, 0.3])
    h, c, _ = lstm_cell_forward(x, np.zeros(3), np.zeros(3), params)
    assert np.all(h == 0) and np.all(c == 0)
    cp = np.array([0.4, -2.0, 3.0])
    h, c, _ = lstm_cell_forward(x, np.zeros(3), cp, params)
    assert np.array_equal(c, 0.5 * cp)
    np.testing.assert_allclose(h, 0.5 * np.tanh(0.5 * cp), rtol=0, atol=1e-15)


def _scalar_cell(x, h_prev, c_prev, p):
    H = len(h_prev)
    pre = []
    for r in range(4 * H):
        acc = p["b_ih"][r] + p["b_hh"][r]
        for j in range(len(x)):
            acc += p["w_ih"][r][j] * x[j]
        for j in range(H):
            acc += p["w_hh"][r][j] * h_prev[j]
        pre.append(acc)
    h, c = [], []
    for k in range(H):
        i, f = _sig(pre[k]), _sig(pre[H + k])
        g, o = math.tanh(pre[2 * H + k]), _sig(pre[3 * H + k])
        c.append(f * c_prev[k] + i * g)
        h.append(o * math.tanh(c[-1]))
    return h, c


def test_cell_matches_scalar_loop(rng):
    cfg = tiny_config(H=3, F=4, dims=(1, 1, 1))
    p = init_parameters(cfg, 5)
    p["b_ih"] += rng.normal(size=12)
    x, h0, c0 = rng.normal(size=7), rng.normal(size=3) * 0.5, rng.normal(size=3)
    h, c, _ = lstm_cell_forward(x, h0, c0, p)
    hs, cs = _scalar_cell(x, h0, c0, p)
    np.testing.assert_allclose(h, hs, rtol=0, atol=1e-12)
    np.testing.assert_allclose(c, cs, rtol=0, atol=1e-12)


@pytest.mark.parametrize("T", [1, 3])
def test_sequence_matches_hand_unrolling(T):
    cfg, p = tiny_model(seed=2, H=2, F=3, dims=(1, 1, 1))
    (s,) = tiny_samples(cfg, T=T, n=1, seed=2)
    logits, _ = sequence_forward(s, p, cfg)
    x_emb = [p["emb_playa"][s.playa_index][0], p["emb_huc8"][s.huc8_index][0], p["emb_author"][s.author_index][0]]
    h, c = [0.0, 0.0], [0.0, 0.0]
    for t in range(T):
        h, c = _scalar_cell(list(s.features[t]) + x_emb, h, c, p)
        expected = p["head_w"][0][0] * h[0] + p["head_w"][0][1] * h[1] + p["head_b"][0]
        assert abs(logits[t] - expected) <= 1e-12


def test_identical_samples_identical_logits():
    cfg, p = tiny_model()
    (s,) = tiny_samples(cfg, n=1)
    a, _ = sequence_forward(s, p, cfg)
    b, _ = sequence_forward(s, p, cfg)
    assert np.array_equal(a, b)


def test_feature_width_mismatch():
    cfg, p = tiny_model()
    (s,) = tiny_samples(tiny_config(F=6), n=1)
    with pytest.raises(ValueError):
        sequence_forward(s, p, cfg)


def test_empty_loss_window():
    cfg, p = tiny_model()
    (s,) = tiny_samples(cfg, n=1)
    _, cache = sequence_forward(s, p, cfg)
    with pytest.raises(ValueError, match="empty loss window"):
        sequence_backward(cache, s.labels, s.split, "test", p)


def test_mask_causality():
    cfg, p = tiny_model()
    split = [TRAIN] * 5 + [VALIDATION] * 2 + [TEST]
    (s,) = tiny_samples(cfg, n=1, split=split)
    _, cache = sequence_forward(s, p, cfg)
    base, _ = sequence_backward(cache, s.labels, s.split, "train", p)
    s.features[6, 2] += 50.0
    _, cache = sequence_forward(s, p, cfg)
    after, _ = sequence_backward(cache, s.labels, s.split, "train", p)
    assert base == after


def test_cell_state_bounded(rng):
    cfg, p = tiny_model(seed=9)
    for k in p:
        p[k] = p[k] * 10
    xs = rng.normal(scale=5, size=(20, 12))
    h, c = np.zeros(4), np.zeros(4)
    for x in xs:
        h_new, c_new, _ = lstm_cell_forward(x, h, c, p)
        assert np.all(np.abs(c_new) <= np.abs(c) + 1.0)
        h, c = h_new, c_new


def test_probabilities_in_open_unit_interval():
    cfg, p = tiny_model()
    probs = predict_proba(tiny_samples(cfg, n=3), p)
    assert np.all((probs > 0) & (probs < 1))


def test_unseen_embedding_rows_exactly_zero():
    cfg, p = tiny_model(vocab=(5, 3, 2))
    s = tiny_samples(cfg, n=2, cats=[(0, 0, 0), (3, 0, 0)])
    _, g = batch_loss(s, p, "train")
    assert np.all(g["emb_playa"][[1, 2, 4]] == 0.0)
    assert np.all(g["emb_huc8"][[1, 2]] == 0.0)


def test_gradients_tiny_model_both_backends():
    cfg, p = tiny_model(seed=0)
    s = tiny_samples(cfg, T=8, n=3, seed=0)
    for backend in ("numpy", "numba"):
        with kernels.use_backend(backend):
            assert finite_diff_check(lambda q: batch_loss(s, q, "train"), p) < 1e-4


# Central differences at eps=1e-5 carry ~1e-11 of absolute roundoff noise (loss
# ~1, machine eps ~1e-16), so 1e-4 relative is only resolvable for |grad| well
# above 1e-7. Entries below 1e-6 are held to an absolute bound instead.
FD_NOISE = 1e-10
RESOLVABLE = 1e-6


@settings(max_examples=12, deadline=None)
@given(st.integers(1, 8), st.integers(1, 10), st.integers(1, 4), st.integers(0, 10_000))
def test_gradients_random_models(H, T, n, seed):
    cfg = tiny_config(H=H, F=3, dims=(2, 1, 1), vocab=(3, 2, 2))
    p = init_parameters(cfg, seed)
    s = tiny_samples(cfg, T=T, n=n, seed=seed)
    _, grads = batch_loss(s, p, "train")
    num = numeric_gradients(lambda q: batch_loss(s, q, "train"), p)
    for name in p:
        rel = relative_error(grads[name], num[name])
        resolved = np.abs(num[name]) > RESOLVABLE
        assert np.all(rel[resolved] < 1e-4), name
        assert np.all(np.abs(grads[name] - num[name])[~resolved] < FD_NOISE), name
