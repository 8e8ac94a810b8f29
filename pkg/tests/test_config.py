import pytest

from opkl.config import DEFAULTS, ConfigError, config_from_dict, load_config, parse_config


def test_defaults():
    cfg = parse_config("")
    assert cfg.values == DEFAULTS
    assert cfg.experiment == "spectral-rate"


def test_dotted_and_table_forms_agree():
    a = parse_config('model.N = 50\nschedule.eta = 1\n')
    b = parse_config('[model]\nN = 50\n[schedule]\neta = 1.0\n')
    assert a.values == b.values
    assert a["schedule.eta"] == 1.0 and isinstance(a["schedule.eta"], float)


def test_digest_tracks_text():
    assert parse_config("seeds = 3").digest != parse_config("seeds = 4").digest
    assert parse_config("seeds = 3").digest == parse_config("seeds = 3").digest


def test_unknown_key_location():
    with pytest.raises(ConfigError) as exc:
        parse_config("model.M = 3", source="x.toml")
    assert exc.value.location == "x.toml: model.M"


@pytest.mark.parametrize("text", ['seeds = "many"', "model.N = 2.5", 'schedule.mode = "batch"',
                                  "encdec.commutation = 1", "seeds = 0", "spectral.horizons = 4"])
def test_bad_values(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_syntax_error_has_line():
    with pytest.raises(ConfigError) as exc:
        parse_config("seeds = 3\nmodel.N = = 4\n", source="bad.toml")
    assert "bad.toml" in str(exc.value) and "line 2" in str(exc.value)


def test_optional_values():
    cfg = config_from_dict({"fit": {"tmin": 10}, "encdec": {"tune_etas": [0.5, 1]}})
    assert cfg["fit.tmin"] == 10.0
    assert cfg["encdec.tune_etas"] == [0.5, 1]


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "none.toml")
