import pytest

from uwqkd.adversary import AttackKind
from uwqkd.config import ConfigError, ExperimentConfig, config_from_mapping, load_config, parse_config_text


def test_defaults_describe_the_pool_experiment():
    cfg = ExperimentConfig()
    assert cfg.water == "Measured" and cfg.distance_m == 30 and cfg.system_db == 8
    assert cfg.link().total_db == pytest.approx(35.0)
    assert cfg.n_pulses == 500_000_000 and cfg.rounds == 30 and cfg.session_s == 10
    assert cfg.source.mu_signal == 0.9 and cfg.detector.polarization_error == 0.0176
    assert cfg.attack.kind is AttackKind.NONE


def test_parse_text():
    cfg = parse_config_text("""
        # comment
        seed = 7
        distance_m = 23      # trailing comment
        detector.dark_hz = 50
        attack.kind = intercept
        attack.intercept_fraction = 0.5
        post.sifting_factor = 0.489
        pulses_per_round = 1e7
        sweep.waters = JerlovI, JerlovII
        water.JerlovI.450 = 0.08
    """)
    assert cfg.seed == 7 and cfg.distance_m == 23.0
    assert cfg.detector.dark_hz == 50.0
    assert cfg.attack.kind is AttackKind.INTERCEPT and cfg.attack.intercept_fraction == 0.5
    assert cfg.post.sifting_factor == 0.489 and cfg.pulses_per_round == 10_000_000
    assert cfg.sweep.waters == ("JerlovI", "JerlovII")
    assert cfg.water_type("JerlovI").coefficient(450) == 0.08


@pytest.mark.parametrize("text, match", [
    ("seed 7", "line 1"),
    ("\n\nbogus = 1", "unknown config key"),
    ("detector.nothing = 1", "unknown config key"),
    ("seed = seven", "bad value"),
    ("water = Baltic", "unknown water type"),
    ("attack.kind = laser", "bad value"),
    ("detector.qe_450 = 2", "probability"),
    ("mode = dance", "mode"),
    ("water.Nowhere.450 = 1", "unknown water type"),
    ("rounds = 0", "positive"),
])
def test_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config_text(text)


def test_load_and_override(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("seed = 3\nrounds = 4\n")
    cfg = load_config(p)
    assert cfg.seed == 3 and cfg.rounds == 4
    assert config_from_mapping({"rounds": "5"}, cfg).seed == 3
