"""End-to-end smoke tests for the compiled module."""

import numpy as np
import pytest

import brainalign as ba


def small_config():
    return ba.EncoderConfig(
        token_count=4,
        token_dim=8,
        subject_token_count=1,
        latent_query_count=4,
        encoder_depth=2,
        attention_heads=2,
        output_channels=8,
    )


def test_forward_shape_and_determinism():
    cfg = small_config()
    state = ba.init_encoder(cfg, [("S1", 20), ("S2", 30)], seed=1)
    v = np.random.default_rng(0).normal(size=20)
    out1 = state.forward("S1", v)
    out2 = state.forward("S1", v)
    assert out1.shape == (4, 8)
    np.testing.assert_array_equal(out1, out2)

    # unknown subject is rejected
    with pytest.raises(Exception):
        state.forward("S9", v)


def test_compose_batch_dominant_block():
    entries, dominant = ba.compose_batch(
        {"A": 100, "B": 100}, batch_size=16, theta=0.5, strategy="ours", seed=3
    )
    assert len(entries) == 16
    assert dominant in ("A", "B")
    assert sum(1 for sid, _ in entries if sid == dominant) == 8


def test_training_reduces_validation_mse():
    data = ba.synthetic_dataset(
        subjects=2,
        dims=[24, 32],
        grid_tokens=4,
        grid_channels=8,
        gallery=50,
        sigma=0.0,
        n_per_subject=80,
        seed=5,
    )
    state = ba.init_encoder(small_config(), [("S1", 24), ("S2", 32)], seed=5)
    log = ba.train_align(state, data, batch_size=16, epochs=8, lr_max=2e-3, seed=5)
    val = [e["val_mse"] for e in log["epochs"]]
    assert len(val) == 8
    assert val[-1] < val[0]


def test_checkpoint_round_trip(tmp_path):
    state = ba.init_encoder(small_config(), [("S1", 20)], seed=7)
    path = str(tmp_path / "model.ckpt")
    ba.save_checkpoint(state, path, seed=7)
    loaded = ba.load_checkpoint(path)
    v = np.random.default_rng(1).normal(size=20)
    np.testing.assert_array_equal(state.forward("S1", v), loaded.forward("S1", v))


def test_adaptation_registers_new_subject():
    base = ba.init_encoder(small_config(), [("S1", 20)], seed=9)
    data = [
        ("S2", np.random.default_rng(i).normal(size=28), np.zeros((4, 8)))
        for i in range(12)
    ]
    adapted = ba.adapt_subject(base, "S2", 28, data, data_ratio=0.5, epochs=1, seed=9)
    assert set(adapted.subject_ids) == {"S1", "S2"}
    v = np.random.default_rng(2).normal(size=28)
    assert adapted.forward("S2", v).shape == (4, 8)
    # frozen adaptation leaves shared parameters untouched
    for name, tensor in adapted.tensors().items():
        if not name.startswith("tokenizer.S2."):
            np.testing.assert_array_equal(tensor, base.tensors()[name])


def test_metrics():
    assert ba.iou([0, 0, 1, 1], [0, 0, 1, 1]) == 1.0
    assert ba.bleu_k("a cat on a mat", ["a cat on a mat"], 4) == pytest.approx(1.0)
    assert ba.rouge_l("a b c", "a b c") == pytest.approx(1.0)

    rows = np.random.default_rng(3).normal(size=(20, 6))
    rep = ba.retrieval_report(rows, rows, pool=10, trials=3, seed=4)
    assert rep["forward_acc"] == 1.0
    assert rep["exemplar_acc"] == 1.0

    rep = ba.grounding_accuracy(
        [("person", 0.1, 0.1, 0.5, 0.5)], [(0.1, 0.1, 0.5, 0.5)]
    )
    assert rep["A"]["count"] == 1
    assert rep["SC"]["mean_iou"] == pytest.approx(1.0)
