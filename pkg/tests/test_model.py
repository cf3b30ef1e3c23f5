"""Model assembly, forward contract, and checkpoint round trips."""

import numpy as np
import pytest

from dcn.config import RunConfig
from dcn.model import (DcnModel, full_model_grad_check, load_checkpoint,
                       save_checkpoint, tiny_config)
from dcn.train.data import gen_dataset


@pytest.fixture(scope="module")
def tiny_ds():
    cfg = tiny_config()
    return gen_dataset(6, cfg.t, cfg.n_objects, cfg.n_attributes,
                       cfg.n_fillers, cfg.c, 0.1, seed=3)


class TestAssembly:
    def test_named_params_shapes_consistent(self):
        cfg = tiny_config()
        model = DcnModel(cfg, seed=0)
        params = model.named_params()
        assert f"layer{cfg.layers - 1}.w_fuse_v" in params
        assert params["layer0.w_v0"].shape == (cfg.d_head, cfg.d)
        assert params["layer0.m_q"].shape == (cfg.d, cfg.memory_slots)
        assert params["lstm.fwd.w_i"].shape == (cfg.d // 2, cfg.e)
        assert all(t.requires_grad for t in params.values())
        assert not model.embedding.requires_grad

    def test_k0_has_no_memory_params(self):
        cfg = tiny_config()
        cfg.memory_slots = 0
        model = DcnModel(cfg, seed=0)
        assert "layer0.m_q" not in model.named_params()

    def test_same_seed_same_init(self):
        a = DcnModel(tiny_config(), seed=5).named_params()
        b = DcnModel(tiny_config(), seed=5).named_params()
        for name in a:
            assert np.array_equal(a[name].data, b[name].data)

    def test_different_seed_different_init(self):
        a = DcnModel(tiny_config(), seed=5).named_params()
        b = DcnModel(tiny_config(), seed=6).named_params()
        assert any(not np.array_equal(a[n].data, b[n].data) for n in a)


class TestForward:
    @pytest.mark.parametrize("head", [16, 17, 18])
    def test_scores_shape_and_range(self, tiny_ds, head):
        model = DcnModel(tiny_config(head), seed=1)
        out = model.forward(tiny_ds.samples[0])
        assert out.scores.shape == (model.cfg.n_answers,)
        assert np.all(out.scores.data > 0) and np.all(out.scores.data < 1)

    def test_trace_exposes_layers(self, tiny_ds):
        cfg = tiny_config()
        model = DcnModel(cfg, seed=1)
        out = model.forward(tiny_ds.samples[0])
        assert len(out.trace.maps) == cfg.layers
        k, t, n = cfg.memory_slots, cfg.t, len(tiny_ds.samples[0].tokens)
        assert out.trace.maps[0].a_q.shape == (t + k, n + k)
        assert out.trace.maps[0].a_v.shape == (n + k, t + k)
        assert len(out.trace.q_states) == cfg.layers + 1
        assert out.alpha_q.shape == (n,)
        assert out.alpha_v.shape == (t,)
        assert out.layer_alpha.shape == (4,)

    def test_summary_average_mode_is_uniform_case(self, tiny_ds):
        cfg_a = tiny_config()
        cfg_a.summary = "average"
        model = DcnModel(cfg_a, seed=2)
        out = model.forward(tiny_ds.samples[1])
        n = len(tiny_ds.samples[1].tokens)
        assert np.allclose(out.alpha_q.data, 1.0 / n, atol=0)
        assert np.allclose(out.alpha_v.data, 1.0 / cfg_a.t, atol=0)
        q_final = out.trace.q_states[-1]
        assert np.allclose(out.s_q.data, q_final.data.mean(axis=1), atol=1e-14)

    def test_last_layer_extraction_uses_top_level_only(self, tiny_ds):
        cfg = tiny_config()
        cfg.extraction = "last_layer"
        model = DcnModel(cfg, seed=2)
        out = model.forward(tiny_ds.samples[0])
        assert np.array_equal(out.layer_alpha.data, [0.0, 0.0, 0.0, 1.0])
        level = model.image_levels(tiny_ds.samples[0])[-1]
        assert np.array_equal(out.trace.v_states[0].data, level.data)

    def test_eval_forward_deterministic(self, tiny_ds):
        model = DcnModel(tiny_config(), seed=3)
        a = model.forward(tiny_ds.samples[2]).scores.data
        b = model.forward(tiny_ds.samples[2]).scores.data
        assert np.array_equal(a, b)

    def test_dropout_changes_training_forward_only(self, tiny_ds):
        model = DcnModel(tiny_config(), seed=3)
        sample = tiny_ds.samples[0]
        base = model.forward(sample).scores.data
        rng = np.random.default_rng(0)
        trained = model.forward(sample, train=True, rng=rng,
                                dropout_fc=0.5, dropout_lstm=0.2).scores.data
        assert not np.array_equal(base, trained)
        again = model.forward(sample).scores.data
        assert np.array_equal(base, again)


class TestFullModelGradCheck:
    def test_head17_passes_at_tolerance(self):
        report = full_model_grad_check(head=17, seed=0)
        assert report.passed, report.max_rel_error
        assert report.max_rel_error < 1e-4


class TestCheckpoints:
    def test_round_trip_bit_identical_scores(self, tiny_ds, tmp_path):
        cfg = tiny_config()
        run_cfg = RunConfig(model=cfg)
        model = DcnModel(cfg, seed=7)
        save_checkpoint(model, run_cfg, tmp_path / "ckpt", meta={"epoch": 3})
        loaded, loaded_cfg, meta = load_checkpoint(tmp_path / "ckpt")
        assert meta["epoch"] == 3
        assert loaded_cfg.model == cfg
        for s in tiny_ds.samples:
            a = model.forward(s).scores.data
            b = loaded.forward(s).scores.data
            assert np.array_equal(a, b)

    def test_checkpoint_bytes_deterministic(self, tmp_path):
        cfg = tiny_config()
        run_cfg = RunConfig(model=cfg)
        for name in ("a", "b"):
            save_checkpoint(DcnModel(cfg, seed=7), run_cfg, tmp_path / name)
        for f in sorted((tmp_path / "a").iterdir()):
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()

    def test_layer_param_file_names(self, tmp_path):
        cfg = tiny_config()
        model = DcnModel(cfg, seed=0)
        save_checkpoint(model, RunConfig(model=cfg), tmp_path / "c")
        names = {f.name for f in (tmp_path / "c").glob("*.dcnt")}
        assert "layer0.w_fuse_q.dcnt" in names
        assert "layer1.m_v.dcnt" in names
        assert "embedding.dcnt" in names

    def test_shape_mismatch_detected(self, tmp_path):
        cfg = tiny_config()
        save_checkpoint(DcnModel(cfg, seed=0), RunConfig(model=cfg), tmp_path / "c")
        import json
        manifest = json.loads((tmp_path / "c" / "manifest.json").read_text())
        manifest["config"]["model"]["d"] = 16
        (tmp_path / "c" / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(ValueError):
            load_checkpoint(tmp_path / "c")
