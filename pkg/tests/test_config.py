import json
from pathlib import Path

import pytest

from robust_vsi.baseline_pr import PRParams
from robust_vsi.config import Config, ConfigError, SynthesisConfig, load_config, save_config

ROOT = Path(__file__).resolve().parents[1]


def test_defaults_roundtrip(tmp_path):
    cfg = Config()
    assert load_config(save_config(cfg, tmp_path / "c.json")) == cfg
    assert load_config(None) == cfg


def test_shipped_default_matches_inline(cfg):
    shipped = load_config(ROOT / "configs" / "default.json")
    assert shipped.plant == cfg.plant and shipped.weights == cfg.weights
    assert shipped.synthesis == cfg.synthesis and shipped.simulation == cfg.simulation
    assert isinstance(shipped.pr.params, PRParams)


def test_pr_params_reproducible_by_search(pr):
    shipped = load_config(ROOT / "configs" / "default.json")
    design, _ = pr
    p = shipped.pr.params
    assert p.k_p == pytest.approx(design.params.k_p, rel=1e-12)
    assert p.k_r == pytest.approx(design.params.k_r, rel=1e-12)


def test_partial_documents(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"weights": {"k_d1": 200}, "simulation": {"delay": False}}))
    cfg = load_config(p)
    assert cfg.weights.k_d1 == 200.0 and cfg.simulation.delay is False
    assert cfg.plant == Config().plant


@pytest.mark.parametrize("doc", [
    {"bogus": {}},
    {"plant": {"l_f": -1}},
    {"weights": {"nope": 1}},
    {"synthesis": {"backoff": 0.5}},
    {"synthesis": {"scaling": [1.0]}},
    {"pr": {"params": {"k_p": 0}}},
    {"simulation": {"dt": 1}},
])
def test_rejects_bad_documents(tmp_path, doc):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(ConfigError):
        load_config(p)


def test_malformed_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)


def test_sim_options():
    opts = Config().simulation.options(feedforward_pcc=True)
    assert opts.feedforward_pcc and opts.delay and opts.dt_plant == 1e-6
    assert SynthesisConfig(scaling=[1, 2]).scaling == (1.0, 2.0)
