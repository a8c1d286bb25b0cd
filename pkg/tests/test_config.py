import json

import pytest

from resp_scalogram.config import RunConfig
from resp_scalogram.dataset import LabelScheme
from resp_scalogram.errors import ConfigError


def test_defaults_round_trip(tmp_path):
    cfg = RunConfig()
    assert RunConfig.from_json(cfg.to_json()) == cfg
    path = tmp_path / "c.json"
    path.write_text(cfg.to_json())
    assert RunConfig.load(path) == cfg
    assert cfg.label_scheme is LabelScheme.PATHOLOGICAL6


def test_replace_and_round_trip_modified():
    cfg = RunConfig().replace(seed=4, mode="conventional", train__lr=1e-3, model__fc_widths=[10, 5],
                              synth__patients_per_class=2)
    assert cfg.seed == 4 and cfg.train.lr == 1e-3 and cfg.model.fc_widths == (10, 5)
    assert RunConfig.from_json(cfg.to_json()) == cfg


def test_partial_document_uses_defaults():
    cfg = RunConfig.from_json('{"train": {"epochs": 3}}')
    assert cfg.train.epochs == 3 and cfg.train.lr == 1e-5 and cfg.emd.max_imfs == 9


@pytest.mark.parametrize("doc", [
    '{"bogus": 1}',
    '{"train": {"learning_rate": 0.1}}',
    '{"train": {"epochs": "ten"}}',
    '{"train": {"epochs": 2.5}}',
    '{"seed": true}',
    '{"mode": "both"}',
    '{"split": {"ratio": 1.5}}',
    '{"filter": {"low_hz": 3000}}',
    '{"model": {"input_size": 8}}',
    '{"synth": {"classes": ["Martian"]}}',
    '[1, 2]',
    '{not json',
])
def test_rejects_bad_documents(doc):
    with pytest.raises(ConfigError):
        RunConfig.from_json(doc)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "nope.json")


def test_json_is_sorted_and_complete():
    data = json.loads(RunConfig().to_json())
    assert set(data) == {"paths", "seed", "scheme", "mode", "threads", "synth", "filter", "emd",
                         "cwt", "render", "split", "model", "train"}
    assert list(data) == sorted(data)
