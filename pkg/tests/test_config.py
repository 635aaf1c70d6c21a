import pytest

from scpt.config import RunConfig, load_config, parse_config_text, save_config
from scpt.errors import ConfigError
from scpt.losses import LossWeights


def test_round_trip(tmp_path):
    cfg = RunConfig()
    cfg.model.rank = 4
    cfg.model.physio_channels = (8, 8, 16, 16)
    cfg.model.use_mcp = False
    cfg.train.lr = 3e-4
    cfg.loss.lambda2 = 0.25
    cfg.data.target = "valence"
    save_config(cfg, tmp_path / "c.cfg")
    back = load_config(tmp_path / "c.cfg")
    assert back == cfg


def test_lambdas_follow_target():
    cfg = RunConfig()
    assert cfg.loss_weights() == LossWeights(0.1, 0.1, 0.6)
    cfg.data.target = "valence"
    assert cfg.loss_weights() == LossWeights(0.2, 0.1, 0.6)
    cfg.loss.lambda1 = 0.0
    assert cfg.loss_weights() == LossWeights(0.0, 0.1, 0.6)


def test_parse_comments_and_sections():
    m = parse_config_text("# top\n[train]\nlr = 0.01 \n; note\n\n[model]\ndepth=2\n")
    assert m == {"train": {"lr": "0.01"}, "model": {"depth": "2"}}
    cfg = RunConfig.from_map(m)
    assert cfg.train.lr == 0.01 and cfg.model.depth == 2


@pytest.mark.parametrize("text", [
    "lr = 1\n",
    "[train]\nlr\n",
    "[train]\nlr = 1\nlr = 2\n",
    "[train]\nnope = 1\n",
    "[bogus]\nx = 1\n",
    "[train]\nepochs = ten\n",
    "[model]\nuse_mcp = maybe\n",
    "[train]\nschedule = step\n",
    "[model]\nsvd_scope = global\n",
    "[data]\ntarget = dominance\n",
    "[]\n",
])
def test_rejects(text):
    with pytest.raises(ConfigError):
        RunConfig.from_map(parse_config_text(text))
