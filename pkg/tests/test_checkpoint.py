import json

import numpy as np
import pytest

from flowstate.checkpoint import (
    CheckpointError,
    checkpoint_dict,
    load_checkpoint,
    restore_models,
    save_checkpoint,
)
from flowstate.dynamics import Normalization
from flowstate.encoders import EncoderConfig, build_encoder
from flowstate.flow import FlowConfig, FlowModel, perturb_parameters


def _models(kind="mlp", seed=0):
    flow = FlowModel(FlowConfig(data_dim=2, n_layers=3, hidden_features=4,
                                context_features=4, seed=seed))
    perturb_parameters(flow, 0.3, seed=seed + 1)
    enc = build_encoder(EncoderConfig(
        kind=kind, input_dim=2, embed_dim=4, model_dim=8, n_encoder_layers=1,
        n_decoder_layers=1, ff_dim=8, ssm_state_dim=4, conv_kernel_width=2,
        mlp_hidden=8, window_length=3, seed=seed,
    ))
    norm = Normalization(np.zeros(2), np.ones(2), np.array([1.0, 2.0]), np.array([3.0, 4.0]))
    window = {"direction": "forward", "R": 3, "horizon": 1,
              "include_params": False, "context_noise_sigma": 0.0,
              "target_dims": [0, 1]}
    return flow, enc, norm, window


@pytest.mark.parametrize("kind", ["mlp", "transformer", "ssm"])
def test_roundtrip_restores_parameters_exactly(tmp_path, kind):
    flow, enc, norm, window = _models(kind)
    ckpt = checkpoint_dict(flow, enc, norm, window)
    path = tmp_path / "m.json"
    save_checkpoint(path, ckpt)
    flow2, enc2, norm2, window2 = restore_models(load_checkpoint(path))
    for name, p in flow.parameters().items():
        np.testing.assert_array_equal(flow2.parameters()[name].data, p.data)
    for name, p in enc.parameters().items():
        np.testing.assert_array_equal(enc2.parameters()[name].data, p.data)
    np.testing.assert_array_equal(norm2.target_std, norm.target_std)
    assert window2 == window


def test_byte_identical_reserialization(tmp_path):
    flow, enc, norm, window = _models()
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    save_checkpoint(p1, checkpoint_dict(flow, enc, norm, window))
    flow2, enc2, norm2, window2 = restore_models(load_checkpoint(p1))
    save_checkpoint(p2, checkpoint_dict(flow2, enc2, norm2, window2))
    assert p1.read_bytes() == p2.read_bytes()


def test_restored_model_reproduces_outputs(tmp_path):
    flow, enc, norm, window = _models("ssm")
    path = tmp_path / "m.json"
    save_checkpoint(path, checkpoint_dict(flow, enc, norm, window))
    flow2, enc2, _, _ = restore_models(load_checkpoint(path))
    obs = np.random.default_rng(0).normal(size=(4, 3, 2))
    a = enc.embed(obs).data
    b = enc2.embed(obs).data
    assert a.tobytes() == b.tobytes()
    x = np.random.default_rng(1).normal(size=(4, 2))
    lp1 = flow.log_prob(x, a).log_prob.data
    lp2 = flow2.log_prob(x, b).log_prob.data
    assert lp1.tobytes() == lp2.tobytes()


def test_wrong_format_rejected(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"format": "something-else", "version": 1}))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_parameter_name_mismatch_rejected(tmp_path):
    flow, enc, norm, window = _models()
    ckpt = checkpoint_dict(flow, enc, norm, window)
    del ckpt["params"]["flow.layer0.linear.log_diag"]
    path = tmp_path / "m.json"
    save_checkpoint(path, ckpt)
    with pytest.raises(CheckpointError):
        restore_models(load_checkpoint(path))
