import pytest
from hypothesis import given, strategies as st

from tempattn.config import ConfigError, TrainConfig


def test_defaults_follow_training_recipe():
    cfg = TrainConfig()
    assert (cfg.lr_g, cfg.lr_d, cfg.beta1, cfg.beta2) == (1e-4, 1e-4, 0.5, 0.9)
    assert cfg.flip_prob == 0.5 and cfg.hole_fill == (0.485, 0.456, 0.406) and cfg.patience == 30
    assert cfg.in_channels == 4 and cfg.replace(sketch_guided=True).in_channels == 5


def test_text_round_trip():
    cfg = TrainConfig(seed=9, dilations=(1, 2), lr_g=3e-4, sketch_guided=True)
    assert TrainConfig.from_text(cfg.to_text()) == cfg


def test_comments_and_overrides():
    cfg = TrainConfig.from_text("# toy\nbatch_size = 2  # small\nseed=3\n", ["seed=5"])
    assert cfg.batch_size == 2 and cfg.seed == 5


@pytest.mark.parametrize("text", ["nonsense_key=1", "batch_size", "lr_g=abc", "sketch_guided=maybe",
                                  "lr_g=0", "patience=0", "softplus_form=relu", "image_size=30"])
def test_errors(text):
    with pytest.raises(ConfigError):
        TrainConfig.from_text(text)


def test_bad_override():
    with pytest.raises(ConfigError):
        TrainConfig.from_text("", ["seed"])


@given(st.integers(1, 64), st.floats(1e-6, 1.0), st.booleans())
def test_round_trip_property(batch, lr, flag):
    cfg = TrainConfig(batch_size=batch, lr_d=lr, freeze_discriminator=flag)
    assert TrainConfig.from_text(cfg.to_text()) == cfg
