import pytest

from rahi.config import ConfigError, RahiConfig, dump_config, load_config, parse_config


def test_defaults_validate():
    cfg = RahiConfig()
    cfg.validate()
    assert cfg.split_ratios() == pytest.approx((0.7, 0.2, 0.1))
    assert (cfg.dropout_rate, cfg.n_passes, cfg.samples_per_side, cfg.delta) == (0.5, 50, 64, 1e-4)


def test_parse_and_round_trip():
    cfg = parse_config(
        """
        # comment
        dropout_rate = 0.25
        fused_form = uniform   # trailing comment
        adjust = false
        synth_n_news = 120
        split = 8:1:1
        """
    )
    assert cfg.dropout_rate == 0.25 and cfg.fused_form == "uniform" and cfg.adjust is False
    assert cfg.synth.n_news == 120
    assert parse_config(dump_config(cfg)) == cfg


@pytest.mark.parametrize(
    "text",
    ["nonsense = 1", "dim = 100", "dropout_rate = 1.0", "fused_form = laplace", "split = 1:2", "adjust = maybe",
     "epochs = two", "no equals sign", "synth_q_m = 1.5", "tie_rule = coin"],
)
def test_rejects_bad_config(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_load_config(tmp_path):
    assert load_config(None) == RahiConfig()
    p = tmp_path / "c.cfg"
    p.write_text("seed = 3\n")
    assert load_config(p).seed == 3
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")
