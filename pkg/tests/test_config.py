import pytest

from flowinr.config import ReconConfig, apply_overrides, load_config, parse_text, save_config
from flowinr.errors import ConfigurationError
from flowinr.inr import PAPER_ENCODER


def test_defaults():
    cfg = ReconConfig()
    assert cfg.encoder_preset == "desk" and cfg.iterations == 3000
    assert (cfg.adam.lr, cfg.adam.beta1, cfg.adam.beta2, cfg.adam.eps) == (0.01, 0.9, 0.999, 1e-8)
    assert cfg.loss.eps == 1e-4 and cfg.threads == 1


def test_parse_sections_and_comments():
    cfg = parse_text("""
        iterations = 12   # short run
        [loss]
        lambda_t = 0.5
        mu = 0.05
        [adam]
        lr = 0.002
    """)
    assert cfg.iterations == 12 and cfg.loss.lambda_t == 0.5 and cfg.loss.mu == 0.05 and cfg.adam.lr == 0.002


def test_dotted_keys_and_presets():
    cfg = apply_overrides(ReconConfig(), {"encoder.preset": "paper", "seed": "4", "normalize": "false"})
    assert cfg.encoder == PAPER_ENCODER and cfg.seed == 4 and cfg.normalize is False
    custom = apply_overrides(ReconConfig(), {"encoder.levels": "4"})
    assert custom.encoder_preset == "custom" and custom.encoder.levels == 4


@pytest.mark.parametrize("text", ["bogus = 1", "loss.nope = 1", "[weird]\nx = 1", "iterations = ten",
                                  "loss.mu = -1", "precision = float16", "of_jitter = 2", "no equals sign"])
def test_strict_rejection(text):
    with pytest.raises(ConfigurationError):
        parse_text(text)


def test_snapshot_roundtrip_and_hash(tmp_path):
    cfg = apply_overrides(ReconConfig(), {"loss.lambda_t": 0.3, "of_frames": 2, "mlp.hidden_width": 64,
                                          "encoder.preset": "paper"})
    save_config(cfg, tmp_path / "c.txt")
    again = load_config(tmp_path / "c.txt")
    assert again == cfg and again.hash() == cfg.hash()
    moved = apply_overrides(cfg, {"output_dir": "/elsewhere"})
    assert moved.hash() == cfg.hash()
    assert apply_overrides(cfg, {"seed": 1}).hash() != cfg.hash()
    assert cfg.to_json()["loss.lambda_t"] == 0.3
