from __future__ import annotations

import pytest

from lidar_blockage.config import (
    PipelineConfig,
    ReportConfig,
    from_dict,
    load_config,
)


def test_template_matches_defaults():
    # The annotated template ships every default value verbatim, so
    # parsing it must reproduce the zero-argument config exactly.
    assert load_config("configs/pipeline.toml") == PipelineConfig()
    assert load_config(None) == PipelineConfig()


def test_seed_feeds_unpinned_stages():
    cfg = from_dict({"seed": 42})
    assert cfg.seed == 42
    assert cfg.scene.seed == 42
    assert cfg.model.seed == 42
    # An explicit seed wins over the global one.
    cfg = from_dict({"seed": 42, "model": {"seed": 7}})
    assert cfg.model.seed == 7
    assert cfg.scene.seed == 42


def test_variant_set_once_under_model():
    cfg = from_dict({"model": {"variant": "raw-460"}})
    assert cfg.model.variant == "raw-460"
    assert cfg.window.variant == "raw-460"
    with pytest.raises(ValueError, match=r"\[window\]"):
        from_dict({"window": {"variant": "raw-460"}})


def test_unknown_keys_are_hard_errors():
    with pytest.raises(ValueError, match=r"\[scene\]"):
        from_dict({"scene": {"sample_rte": 10.0}})
    with pytest.raises(ValueError, match="valid keys"):
        from_dict({"quant": {"qbins": 216}})
    with pytest.raises(ValueError, match=r"\[top level\]"):
        from_dict({"scnee": {}})
    with pytest.raises(ValueError, match=r"\[scene.noise\]"):
        from_dict({"scene": {"noise": {"sigma": 0.01}}})
    # The street geometry lists are code-only.
    with pytest.raises(ValueError):
        from_dict({"scene": {"lanes": []}})
    with pytest.raises(ValueError):
        from_dict({"scene": {"static_objects": []}})


def test_train_keys_live_under_train_only():
    cfg = from_dict({"train": {"epochs": 7, "batch_size": 16,
                               "learning_rate": 0.01}})
    assert cfg.model.epochs == 7
    assert cfg.model.batch_size == 16
    assert cfg.model.learning_rate == 0.01
    with pytest.raises(ValueError, match=r"\[model\]"):
        from_dict({"model": {"epochs": 7}})
    with pytest.raises(ValueError, match=r"\[train\]"):
        from_dict({"train": {"dropout_rate": 0.5}})


def test_quant_owns_dictionary_scans():
    cfg = from_dict({"quant": {"dictionary_scans": 123, "q_bins": 108}})
    assert cfg.dictionary_scans == 123
    assert cfg.quant.q_bins == 108
    with pytest.raises(ValueError):
        from_dict({"quant": {"dictionary_scans": 0}})


def test_window_owns_test_fraction():
    cfg = from_dict({"window": {"test_fraction": 0.5, "stride": 4}})
    assert cfg.test_fraction == 0.5
    assert cfg.window.stride == 4
    with pytest.raises(ValueError):
        from_dict({"window": {"test_fraction": 1.0}})
    with pytest.raises(ValueError):
        from_dict({"window": {"test_fraction": 0.0}})


def test_scene_tuples_and_noise():
    cfg = from_dict({"scene": {"tx_position": [1.0, 2.0],
                               "blocker_speed_range": [2.0, 2.5],
                               "noise": {"range_sigma": 0.05,
                                         "spurious_static_points": [[0.3, 2.0]],
                                         "spurious_prob": 0.5}}})
    assert cfg.scene.tx_position == (1.0, 2.0)
    assert cfg.scene.blocker_speed_range == (2.0, 2.5)
    assert cfg.scene.noise.range_sigma == 0.05
    assert cfg.scene.noise.spurious_static_points == [(0.3, 2.0)]
    with pytest.raises(ValueError, match="2 numbers"):
        from_dict({"scene": {"tx_position": [1.0, 2.0, 3.0]}})


def test_report_validation():
    cfg = from_dict({"report": {"picks": [5],
                                "baselines": [["raw-460", 5, 0.9]]}})
    assert cfg.report.picks == (5,)
    assert cfg.report.baselines == [("raw-460", 5, 0.9)]
    with pytest.raises(ValueError):
        ReportConfig(picks=())
    with pytest.raises(ValueError):
        ReportConfig(picks=(0,))
    with pytest.raises(ValueError):
        ReportConfig(baselines=[("raw-460", 5)])
    with pytest.raises(ValueError):
        ReportConfig(baselines=[("raw-460", 5, 1.5)])


def test_toml_parse_and_bad_path(tmp_path):
    doc = tmp_path / "run.toml"
    doc.write_text('seed = 9\n[model]\nvariant = "raw-460"\n'
                   '[train]\nepochs = 3\n')
    cfg = load_config(doc)
    assert cfg.seed == 9
    assert cfg.model.variant == "raw-460"
    assert cfg.model.epochs == 3
    with pytest.raises(OSError):
        load_config(tmp_path / "missing.toml")
