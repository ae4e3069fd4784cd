import json
import warnings

import pytest

from asymvid.config import AsymmetryWarning, OptimConfig, RunConfig, smoke_config
from asymvid.errors import ConfigError
from asymvid.generator import DmConfig
from asymvid.masking import PlanConfig
from asymvid.planner import MarConfig


def test_round_trip_and_digest_stability(tmp_path):
    cfg = RunConfig()
    assert RunConfig.loads(cfg.dumps()) == cfg
    path = tmp_path / "c.json"
    cfg.save(path)
    assert RunConfig.load(path) == cfg
    # digest ignores where the run is written
    assert RunConfig(output_dir="elsewhere").digest() == cfg.digest()
    assert RunConfig(seed=1).digest() != cfg.digest()
    assert smoke_config().digest() != cfg.digest()


@pytest.mark.parametrize("patch", [
    {"bogus": 1},
    {"mar": {"depth": 2, "typo": 3}},
    {"optim": {"lr": 0.1, "beta": 0.9}},
])
def test_unknown_keys_rejected(patch):
    d = json.loads(RunConfig().dumps())
    for k, v in patch.items():
        if isinstance(v, dict):
            d[k].update(v)
        else:
            d[k] = v
    with pytest.raises(ConfigError):
        RunConfig.from_dict(d)


def test_partial_config_uses_defaults():
    cfg = RunConfig.loads('{"seed": 3, "optim": {"lr": 0.002}}')
    assert cfg.seed == 3 and cfg.optim == OptimConfig(lr=0.002)


@pytest.mark.parametrize("kw", [
    {"cond_mode": "mixed"},
    {"p_uncond": 1.5},
    {"checkpoint_every": 0},
    {"schema_version": 99},
    {"mar": MarConfig(cond_channels=32)},
    {"plan": PlanConfig(res_low=6)},
    {"plan": PlanConfig(res_high=(12, 32), res_low=8)},
])
def test_invalid_values_rejected(kw):
    with pytest.raises(ConfigError):
        RunConfig(**kw)


def test_invalid_json_is_a_config_error():
    with pytest.raises(ConfigError):
        RunConfig.loads("{not json")
    with pytest.raises(ConfigError):
        RunConfig.loads("[1, 2]")


def test_asymmetry_check_warns_but_never_raises():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert RunConfig().check_asymmetry()
    flipped = RunConfig(mar=MarConfig(depth=1, hidden=16, mlp=16, heads=2),
                        dm=DmConfig(depth=4, hidden=64, mlp=256, heads=4, cond_channels=64))
    with pytest.warns(AsymmetryWarning):
        assert not flipped.check_asymmetry()


def test_uncond_mode_drops_the_planner_stage():
    names = [s.name for s in RunConfig(cond_mode="uncond").training_plan().stages]
    assert names == ["s1b", "s2", "s3"]
    assert [s.name for s in RunConfig().training_plan().stages] == ["s1a", "s1b", "s2", "s3"]


def test_final_grid():
    assert RunConfig().final_grid() == (8, 2)
    assert RunConfig().plan.low_factor == 4


def test_portable_text_drops_the_run_location():
    a, b = RunConfig(output_dir="x"), RunConfig(output_dir="y")
    assert a.dumps(portable=True) == b.dumps(portable=True)
    assert RunConfig.loads(a.dumps(portable=True)).digest() == a.digest()
