"""Harness contracts: config validation, dataset containers, checkpoints,
the training loop, evaluation tables, parameter reports, the gradient-check
registry, and CLI exit codes."""

import filecmp
import json
from pathlib import Path

import numpy as np
import pytest

import cvnet.ctensor as ct
from cvnet.checkpoint import load_checkpoint, save_checkpoint
from cvnet.cli import main
from cvnet.config import (ConfigError, DEFAULTS, config_hash, load_config,
                          resolve_config)
from cvnet.data import generate, load_dataset, read_blob, save_dataset, write_blob
from cvnet.evaluate import eval_run, operating_point
from cvnet.models import ComplexLight
from cvnet.optim import Adam
from cvnet.params_report import build_report, format_report
from cvnet.registry import COMPONENTS, run_gradcheck
from cvnet.train import NumericAbort, build_model, train_run
from cvnet import wsim


TINY_CHANEST = {
    "task": "chanest",
    "data": {"n_train": 8, "n_eval": 4},
    "sim": {"n_f": 12, "n_s": 4},
    "model": {"n_filter": 2, "d_f": 8},
    "train": {"steps": 4, "batch_size": 2, "checkpoint_every": 2,
              "lr_decay_at": [], "seed": 99},
    "eval": {"sweep_values": [5.0, 15.0]},
}

TINY_ACTDET = {
    "task": "actdet",
    "data": {"n_train": 8, "n_eval": 8},
    "sim": {"n_users": 4, "n_antennas": 3, "pilot_len": 3},
    "model": {"d_e": 4, "n_layers": 1, "n_heads": 2, "d_head": 2, "d_f": 8},
    "train": {"steps": 3, "batch_size": 2, "checkpoint_every": 2,
              "lr_decay_at": [], "seed": 99},
    "eval": {"sweep_values": [0.25, 0.5, 0.75]},
}

TINY_PRECODE = {
    "task": "precode",
    "data": {"n_train": 6, "n_eval": 4},
    "sim": {"n_antennas": 4, "n_users": 2, "n_paths": 2},
    "model": {"m_pilots": 4, "b_bits": 3, "d_p": 4, "p_heads": 2,
              "l_p": 1, "m_p": 1, "l_d": 2, "l_f": 2, "d_p_ff": 8},
    "train": {"steps": 3, "batch_size": 2, "checkpoint_every": 2,
              "lr_decay_at": [], "seed": 99},
    "eval": {"sweep_values": [5.0, 10.0]},
}


def _gen_both(cfg, root):
    for split in ("train", "eval"):
        save_dataset(generate(cfg, split), Path(root) / split)
    return Path(root)


class TestConfig:
    def test_task_alone_is_a_complete_config(self):
        for task in ("chanest", "actdet", "precode"):
            cfg = resolve_config({"task": task})
            assert cfg["task"] == task
            assert cfg["train"]["steps"] >= 1

    def test_missing_task_rejected(self):
        with pytest.raises(ConfigError, match="task"):
            resolve_config({})

    def test_unknown_task_rejected(self):
        with pytest.raises(ConfigError, match="spectro"):
            resolve_config({"task": "spectro"})

    def test_unknown_top_level_key_named(self):
        with pytest.raises(ConfigError, match="unknown config key: momentum"):
            resolve_config({"task": "chanest", "momentum": 0.9})

    def test_unknown_nested_key_named_with_path(self):
        with pytest.raises(ConfigError,
                           match="unknown config key: train.warmup"):
            resolve_config({"task": "chanest", "train": {"warmup": 10}})

    def test_wrong_scalar_type_rejected(self):
        with pytest.raises(ConfigError, match="train.steps"):
            resolve_config({"task": "chanest", "train": {"steps": "many"}})
        with pytest.raises(ConfigError, match="train.steps"):
            resolve_config({"task": "chanest", "train": {"steps": True}})

    def test_int_promotes_to_float_fields(self):
        cfg = resolve_config({"task": "chanest",
                              "train": {"learning_rate": 1}})
        assert cfg["train"]["learning_rate"] == 1.0
        assert isinstance(cfg["train"]["learning_rate"], float)

    def test_null_only_where_allowed(self):
        cfg = resolve_config({"task": "chanest",
                              "eval": {"snr_db": None}})
        assert cfg["eval"]["snr_db"] is None
        with pytest.raises(ConfigError, match="null"):
            resolve_config({"task": "chanest", "train": {"steps": None}})

    def test_sweep_axis_checked_per_task(self):
        with pytest.raises(ConfigError, match="gamma"):
            resolve_config({"task": "chanest", "eval": {"sweep": "gamma"}})
        cfg = resolve_config({"task": "precode",
                              "eval": {"sweep": "feedback_bits",
                                       "sweep_values": [1, 3, 5]}})
        assert cfg["eval"]["sweep"] == "feedback_bits"

    def test_bad_optimizer_rejected(self):
        with pytest.raises(ConfigError, match="rmsprop"):
            resolve_config({"task": "chanest",
                            "train": {"optimizer": "rmsprop"}})

    def test_seed_override(self):
        cfg = resolve_config({"task": "chanest"}, seed=123)
        assert cfg["train"]["seed"] == 123

    def test_hash_stable_and_sensitive(self):
        a = resolve_config({"task": "chanest"})
        b = resolve_config({"task": "chanest"})
        c = resolve_config({"task": "chanest", "train": {"steps": 7}})
        assert config_hash(a) == config_hash(b)
        assert config_hash(a) != config_hash(c)

    def test_defaults_match_published_model_table(self):
        mdl = DEFAULTS["actdet"]["model"]
        assert (mdl["d_e"], mdl["n_layers"], mdl["n_heads"], mdl["d_head"],
                mdl["d_f"]) == (64, 5, 4, 16, 256)
        tr = DEFAULTS["actdet"]["train"]
        assert tr["learning_rate"] == 1e-4

    def test_load_config_rejects_bad_json(self, tmp_path):
        p = tmp_path / "broken.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_config(p)


class TestDataContainers:
    def test_blob_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        arr = wsim.crandn(rng, (5, 3, 2))
        write_blob(tmp_path / "t.c16", arr)
        back = read_blob(tmp_path / "t.c16", (5, 3, 2))
        assert back.dtype == np.complex128
        assert np.array_equal(back, arr)

    def test_chanest_counts_and_shapes(self, tmp_path):
        cfg = resolve_config(TINY_CHANEST)
        root = _gen_both(cfg, tmp_path / "ds")
        train = load_dataset(root / "train")
        assert train.n_samples == 8
        assert train.field("ls").shape == (8, 6, 2)
        assert train.field("h").shape == (8, 12, 4)
        ev = load_dataset(root / "eval")
        assert ev.n_samples == 8  # 2 sweep values x 4
        assert ev.manifest["sweep"] == {"axis": "snr",
                                        "values": [5.0, 15.0],
                                        "group_size": 4}
        snr = ev.field("snr_db").real
        assert np.all(snr[:4] == 5.0) and np.all(snr[4:] == 15.0)

    def test_train_draws_parameters_inside_ranges(self, tmp_path):
        cfg = resolve_config(TINY_CHANEST)
        ds = generate(cfg, "train")
        snr = ds.field("snr_db").real
        dop = ds.field("doppler_hz").real
        assert np.all((snr >= 5.0) & (snr <= 25.0))
        assert np.all((dop >= 0.0) & (dop <= 97.0))
        assert len(np.unique(snr)) > 1

    def test_regeneration_is_byte_identical(self, tmp_path):
        cfg = resolve_config(TINY_CHANEST)
        a = _gen_both(cfg, tmp_path / "a")
        b = _gen_both(cfg, tmp_path / "b")
        for name in ("train", "eval"):
            for f in sorted((a / name).iterdir()):
                assert filecmp.cmp(f, b / name / f.name, shallow=False), f.name

    def test_worker_count_does_not_change_bytes(self, tmp_path):
        cfg = resolve_config(TINY_ACTDET)
        one = generate(cfg, "train", workers=1)
        many = generate(cfg, "train", workers=5)
        for name in one.fields:
            assert np.array_equal(one.field(name), many.field(name)), name

    def test_different_seeds_differ(self):
        cfg1 = resolve_config(TINY_CHANEST)
        cfg2 = resolve_config(TINY_CHANEST, seed=1234)
        a = generate(cfg1, "train")
        b = generate(cfg2, "train")
        assert not np.array_equal(a.field("h"), b.field("h"))

    def test_splits_are_independent(self):
        cfg = resolve_config(TINY_ACTDET)
        tr = generate(cfg, "train")
        ev = generate(cfg, "eval")
        assert not np.array_equal(tr.field("b")[0], ev.field("b")[0])

    def test_activity_rate_matches_p_active(self):
        cfg = resolve_config({"task": "actdet",
                              "data": {"n_train": 10000, "n_eval": 1}})
        ds = generate(cfg, "train", workers=4)
        rate = float(np.mean(ds.field("a").real))
        assert abs(rate - 0.1) <= 0.01

    def test_load_missing_manifest_is_io_error(self, tmp_path):
        with pytest.raises(OSError, match="manifest"):
            load_dataset(tmp_path / "nope")

    def test_truncated_blob_is_io_error(self, tmp_path):
        cfg = resolve_config(TINY_PRECODE)
        root = _gen_both(cfg, tmp_path / "ds")
        blob = root / "train" / "h_ul.c16"
        blob.write_bytes(blob.read_bytes()[:-16])
        with pytest.raises(OSError, match="h_ul"):
            load_dataset(root / "train")


class TestCheckpoints:
    def test_save_load_save_is_byte_identical(self, tmp_path):
        cfg = resolve_config(TINY_CHANEST)
        model = build_model(cfg, wsim.rng_stream(99, "init"))
        opt = Adam(model.parameters(), lr=1e-3)
        a = tmp_path / "a"
        save_checkpoint(a, "chanest", "h" * 64, 5, {"loss": 0.5}, model, opt)
        manifest, params, opt_state = load_checkpoint(a)
        model2 = build_model(cfg, wsim.rng_stream(1, "init"))
        model2.load_state_dict(params)
        opt2 = Adam(model2.parameters(), lr=1e-3)
        opt2.load_state_dict(opt_state)
        b = tmp_path / "b"
        save_checkpoint(b, "chanest", "h" * 64, 5, {"loss": 0.5}, model2,
                        opt2)
        for f in sorted(a.rglob("*")):
            if f.is_file():
                rel = f.relative_to(a)
                assert filecmp.cmp(f, b / rel, shallow=False), str(rel)

    def test_manifest_records_step_and_metric(self, tmp_path):
        cfg = resolve_config(TINY_CHANEST)
        model = build_model(cfg, wsim.rng_stream(99, "init"))
        save_checkpoint(tmp_path / "c", "chanest", "x", 7,
                        {"loss": 0.25}, model)
        manifest, _, opt_state = load_checkpoint(tmp_path / "c")
        assert manifest["step"] == 7
        assert manifest["metric"] == {"loss": 0.25}
        assert opt_state is None


class TestTraining:
    def test_zero_lr_keeps_loss_and_params_frozen(self, tmp_path):
        cfg = resolve_config({**TINY_CHANEST,
                              "data": {"n_train": 1, "n_eval": 1},
                              "train": {"steps": 5, "batch_size": 1,
                                        "learning_rate": 0.0,
                                        "checkpoint_every": 5,
                                        "lr_decay_at": [], "seed": 99}})
        root = _gen_both(cfg, tmp_path / "ds")
        before = build_model(cfg, wsim.rng_stream(99, "init")).state_dict()
        train_run(cfg, root, tmp_path / "run", figure=False)
        rows = (tmp_path / "run" / "log.csv").read_text().splitlines()[1:]
        losses = [float(r.split(",")[1]) for r in rows]
        assert max(losses) - min(losses) <= 1e-12
        _, params, _ = load_checkpoint(tmp_path / "run" / "final")
        for k, v in before.items():
            assert np.array_equal(v, params[k]), k

    def test_task_mismatch_is_config_error(self, tmp_path):
        chan = resolve_config(TINY_CHANEST)
        root = _gen_both(chan, tmp_path / "ds")
        act = resolve_config(TINY_ACTDET)
        with pytest.raises(ConfigError, match="chanest"):
            train_run(act, root, tmp_path / "run", figure=False)

    def test_nan_loss_aborts_with_batch_indices(self, tmp_path):
        cfg = resolve_config(TINY_CHANEST)
        ds = generate(cfg, "train")
        ds.fields["h"][:] = np.nan
        save_dataset(ds, tmp_path / "ds" / "train")
        with pytest.raises(NumericAbort) as err:
            train_run(cfg, tmp_path / "ds", tmp_path / "run", figure=False)
        assert err.value.step == 0
        assert len(err.value.batch_indices) == cfg["train"]["batch_size"]

    def test_rerun_writes_identical_log_and_params(self, tmp_path):
        cfg = resolve_config(TINY_PRECODE)
        root = _gen_both(cfg, tmp_path / "ds")
        train_run(cfg, root, tmp_path / "r1", figure=False)
        train_run(cfg, root, tmp_path / "r2", figure=False)
        assert filecmp.cmp(tmp_path / "r1" / "log.csv",
                           tmp_path / "r2" / "log.csv", shallow=False)
        for f in sorted((tmp_path / "r1" / "final" / "params").iterdir()):
            assert filecmp.cmp(f, tmp_path / "r2" / "final" / "params" /
                               f.name, shallow=False)

    def test_resume_matches_uninterrupted_run(self, tmp_path):
        cfg = resolve_config({**TINY_CHANEST,
                              "train": {"steps": 6, "batch_size": 2,
                                        "checkpoint_every": 3,
                                        "lr_decay_at": [4], "seed": 99}})
        root = _gen_both(cfg, tmp_path / "ds")
        train_run(cfg, root, tmp_path / "full", figure=False)
        train_run(cfg, root, tmp_path / "resumed", figure=False,
                  resume=tmp_path / "full" / "ckpt_000003")
        for f in sorted((tmp_path / "full" / "final" / "params").iterdir()):
            assert filecmp.cmp(f, tmp_path / "resumed" / "final" / "params" /
                               f.name, shallow=False), f.name
        full_rows = (tmp_path / "full" / "log.csv").read_text().splitlines()
        res_rows = (tmp_path / "resumed" / "log.csv").read_text().splitlines()
        assert res_rows[1:] == full_rows[4:]

    def test_resume_rejects_other_config(self, tmp_path):
        cfg = resolve_config(TINY_CHANEST)
        root = _gen_both(cfg, tmp_path / "ds")
        train_run(cfg, root, tmp_path / "run", figure=False)
        other = resolve_config({**TINY_CHANEST, "train": {
            **TINY_CHANEST["train"], "learning_rate": 0.5}})
        with pytest.raises(ConfigError, match="different"):
            train_run(other, root, tmp_path / "run2", figure=False,
                      resume=tmp_path / "run" / "final")

    def test_precode_log_tracks_power_residuals(self, tmp_path):
        cfg = resolve_config(TINY_PRECODE)
        root = _gen_both(cfg, tmp_path / "ds")
        train_run(cfg, root, tmp_path / "run", figure=False)
        lines = (tmp_path / "run" / "log.csv").read_text().splitlines()
        assert lines[0] == "step,loss,pilot_power_err,precoder_trace_err"
        for line in lines[1:]:
            parts = line.split(",")
            assert float(parts[2]) < 1e-10
            assert float(parts[3]) < 1e-10

    def test_tiny_overfit_drops_loss_hundredfold(self, tmp_path):
        cfg = resolve_config({
            "task": "chanest",
            "data": {"n_train": 32, "n_eval": 2},
            "sim": {"n_f": 12, "n_s": 4, "snr_range_db": [30.0, 30.0],
                    "doppler_range_hz": [0.0, 40.0]},
            "model": {"n_filter": 2, "d_f": 8},
            "train": {"steps": 2000, "batch_size": 2,
                      "learning_rate": 1e-3, "checkpoint_every": 2000,
                      "lr_decay_at": [1500], "seed": 4242},
            "eval": {"sweep_values": [10.0]},
        })
        root = _gen_both(cfg, tmp_path / "ds")
        train_run(cfg, root, tmp_path / "run", figure=False)
        rows = (tmp_path / "run" / "log.csv").read_text().splitlines()[1:]
        losses = [float(r.split(",")[1]) for r in rows]
        assert losses[-1] <= losses[0] / 100.0


class TestEvaluation:
    def test_oracle_checkpoint_gives_zero_mse(self, tmp_path):
        cfg = resolve_config({**TINY_CHANEST,
                              "eval": {"sweep": "doppler",
                                       "sweep_values": [0.0, 30.0],
                                       "snr_db": None}})
        ds = generate(cfg, "eval")
        model = build_model(cfg, wsim.rng_stream(99, "init"))
        for p in model.parameters().values():
            p.value = np.zeros_like(p.value)
        row = wsim.crandn(np.random.default_rng(5), (1, 4))
        model.b_out.value = row.copy()
        ds.fields["h"][:] = np.tile(row, (12, 1))
        save_dataset(ds, tmp_path / "ds" / "eval")
        save_checkpoint(tmp_path / "ck", "chanest", config_hash(cfg), 0,
                        {}, model)
        rows = eval_run(cfg, tmp_path / "ds", tmp_path / "ck",
                        tmp_path / "m.csv", figure=False)
        assert all(r[1] == 0.0 for r in rows)

    def test_chanest_csv_schema_and_determinism(self, tmp_path):
        cfg = resolve_config(TINY_CHANEST)
        root = _gen_both(cfg, tmp_path / "ds")
        train_run(cfg, root, tmp_path / "run", figure=False)
        eval_run(cfg, root, tmp_path / "run" / "final",
                 tmp_path / "m1.csv", figure=False)
        eval_run(cfg, root, tmp_path / "run" / "final",
                 tmp_path / "m2.csv", workers=3, figure=False)
        text = (tmp_path / "m1.csv").read_text()
        assert text.splitlines()[0] == "sweep,mse"
        assert text == (tmp_path / "m2.csv").read_text()

    def test_actdet_pf_monotone_and_op_point(self, tmp_path):
        cfg = resolve_config(TINY_ACTDET)
        root = _gen_both(cfg, tmp_path / "ds")
        train_run(cfg, root, tmp_path / "run", figure=False)
        rows = eval_run(cfg, root, tmp_path / "run" / "final",
                        tmp_path / "m.csv", figure=False)
        pf = [r[2] for r in rows]
        assert all(pf[i] >= pf[i + 1] - 1e-12 for i in range(len(pf) - 1))
        op = json.loads((tmp_path / "m.csv.op.json").read_text())
        assert 0.0 <= op["gamma"] <= 1.0
        assert op["error"] == max(op["pm"], op["pf"])

    def test_operating_point_balances_on_separable_scores(self):
        rng = np.random.default_rng(11)
        a = (rng.uniform(size=400) < 0.3).astype(float)
        probs = np.where(a > 0, rng.uniform(0.55, 1.0, 400),
                         rng.uniform(0.0, 0.45, 400))
        op = operating_point(probs, a)
        assert op["gap"] < 1e-3
        assert op["error"] < 1e-9

    def test_precode_zf_bound_matches_simulator(self, tmp_path):
        cfg = resolve_config(TINY_PRECODE)
        root = _gen_both(cfg, tmp_path / "ds")
        train_run(cfg, root, tmp_path / "run", figure=False)
        rows = eval_run(cfg, root, tmp_path / "run" / "final",
                        tmp_path / "m.csv", figure=False)
        ev = load_dataset(root / "eval")
        rho = cfg["model"]["rho"]
        for row in rows:
            sigma2 = rho / 10.0 ** (row[0] / 10.0)
            want = np.mean([
                wsim.sum_rate(wsim.zf_precoder(ev.field("h_dl")[i], rho),
                              ev.field("h_dl")[i], sigma2)
                for i in range(ev.n_samples)])
            assert abs(row[2] - want) < 1e-12

    def test_feedback_bits_sweep_rejected_at_eval(self, tmp_path):
        cfg = resolve_config(TINY_PRECODE)
        root = _gen_both(cfg, tmp_path / "ds")
        train_run(cfg, root, tmp_path / "run", figure=False)
        swept = resolve_config({**TINY_PRECODE,
                                "eval": {"sweep": "feedback_bits",
                                         "sweep_values": [1, 3]}})
        with pytest.raises(ConfigError, match="feedback_bits"):
            eval_run(swept, root, tmp_path / "run" / "final",
                     tmp_path / "m.csv", figure=False)

    def test_checkpoint_shape_mismatch_is_config_error(self, tmp_path):
        cfg = resolve_config(TINY_CHANEST)
        root = _gen_both(cfg, tmp_path / "ds")
        train_run(cfg, root, tmp_path / "run", figure=False)
        bigger = resolve_config({**TINY_CHANEST,
                                 "model": {"n_filter": 3, "d_f": 8}})
        with pytest.raises(ConfigError, match="checkpoint"):
            eval_run(bigger, root, tmp_path / "run" / "final",
                     tmp_path / "m.csv", figure=False)

    def test_figures_rendered_next_to_csv(self, tmp_path):
        cfg = resolve_config(TINY_CHANEST)
        root = _gen_both(cfg, tmp_path / "ds")
        train_run(cfg, root, tmp_path / "run")
        assert (tmp_path / "run" / "loss.png").is_file()
        eval_run(cfg, root, tmp_path / "run" / "final", tmp_path / "m.csv")
        assert (tmp_path / "m.png").is_file()


class TestParamsReport:
    def test_single_linear_count(self):
        from cvnet.layers import CLinear, param_count
        lin = CLinear(8, 4, np.random.default_rng(0))
        assert param_count(lin) == 2 * 4 * 9

    def test_chanest_report_totals(self):
        report = build_report(resolve_config({"task": "chanest"}))
        assert report["total_real_params"] == sum(
            l["real_params"] for l in report["layers"])
        assert report["published_total"] == 80076
        assert report["notes"]

    def test_actdet_tableii_delta_explained_per_layer(self):
        report = build_report(resolve_config({"task": "actdet"}))
        assert report["total_real_params"] == 1008745
        assert report["delta"] == 1008745 - 567555
        text = " ".join(report["notes"])
        assert "six per-branch attention projections" in text
        enc = [l for l in report["layers"] if l["name"].startswith("enc")]
        assert len(enc) == 5 and all(l["real_params"] == 189716
                                     for l in enc)

    def test_actdet_other_dims_noted_as_different(self):
        report = build_report(resolve_config(TINY_ACTDET))
        assert "differ from the published table" in " ".join(report["notes"])

    def test_format_is_printable(self):
        report = build_report(resolve_config({"task": "precode"}))
        text = format_report(report)
        assert "published total" in text
        assert "23,087,472" in text


class TestRegistry:
    def test_every_component_registered(self):
        names = set(COMPONENTS)
        assert {"clinear", "cconv1d", "crelu", "cln", "c2r", "cfcn",
                "catt", "cmha", "encoder_block", "cross_attention_block",
                "decoder_block", "chanest_loss", "actdet_loss",
                "precode_loss"} <= names

    def test_scope_layer_runs_quickly_and_passes(self):
        results = run_gradcheck("clinear")
        assert len(results) == 1 and results[0]["ok"]

    def test_unknown_scope_rejected(self):
        with pytest.raises(ConfigError, match="warp"):
            run_gradcheck("warp")

    def test_corrupted_backward_is_caught_and_named(self, monkeypatch):
        orig = ct.sqrt

        def crooked(x):
            t = orig(x)
            if t._backward is not None:
                inner = t._backward

                def wrong():
                    inner()
                    if getattr(x, "grad", None) is not None:
                        x.grad *= 1.5
                t._backward = wrong
            return t

        monkeypatch.setattr(ct, "sqrt", crooked)
        results = run_gradcheck("cln")
        assert results[0]["component"] == "cln"
        assert not results[0]["ok"]


class TestCli:
    def test_pipeline_and_exit_codes(self, tmp_path, capsys):
        cfgp = tmp_path / "c.json"
        cfgp.write_text(json.dumps(TINY_CHANEST))
        ds = tmp_path / "ds"
        run = tmp_path / "run"
        assert main(["gen", "--config", str(cfgp), "--out", str(ds)]) == 0
        assert main(["train", "--config", str(cfgp), "--dataset", str(ds),
                     "--out", str(run), "--no-figure"]) == 0
        assert main(["eval", "--config", str(cfgp), "--dataset", str(ds),
                     "--checkpoint", str(run / "final"), "--out",
                     str(tmp_path / "m.csv"), "--no-figure"]) == 0
        assert (tmp_path / "m.csv").is_file()

    def test_unknown_key_exits_2(self, tmp_path, capsys):
        cfgp = tmp_path / "c.json"
        cfgp.write_text(json.dumps({"task": "chanest", "turbo": True}))
        assert main(["gen", "--config", str(cfgp),
                     "--out", str(tmp_path / "ds")]) == 2
        assert "turbo" in capsys.readouterr().err

    def test_missing_dataset_exits_3(self, tmp_path, capsys):
        cfgp = tmp_path / "c.json"
        cfgp.write_text(json.dumps(TINY_CHANEST))
        assert main(["train", "--config", str(cfgp), "--dataset",
                     str(tmp_path / "missing"), "--out",
                     str(tmp_path / "run")]) == 3

    def test_nan_dataset_exits_4(self, tmp_path, capsys):
        cfg = resolve_config(TINY_CHANEST)
        ds = generate(cfg, "train")
        ds.fields["h"][:] = np.nan
        save_dataset(ds, tmp_path / "ds" / "train")
        cfgp = tmp_path / "c.json"
        cfgp.write_text(json.dumps(TINY_CHANEST))
        assert main(["train", "--config", str(cfgp), "--dataset",
                     str(tmp_path / "ds"), "--out",
                     str(tmp_path / "run"), "--no-figure"]) == 4
        assert "batch indices" in capsys.readouterr().err

    def test_gradcheck_single_component_exits_0(self, capsys):
        assert main(["gradcheck", "--scope", "c2r"]) == 0
        out = capsys.readouterr().out
        assert "c2r" in out and "PASS" in out

    def test_params_prints_table_and_writes_json(self, tmp_path, capsys):
        cfgp = tmp_path / "c.json"
        cfgp.write_text(json.dumps({"task": "chanest"}))
        assert main(["params", "--config", str(cfgp), "--out",
                     str(tmp_path / "rep.json")]) == 0
        assert "97,275" in capsys.readouterr().out
        rep = json.loads((tmp_path / "rep.json").read_text())
        assert rep["total_real_params"] == 97275

    def test_seed_flag_changes_dataset(self, tmp_path):
        cfgp = tmp_path / "c.json"
        cfgp.write_text(json.dumps(TINY_CHANEST))
        assert main(["gen", "--config", str(cfgp), "--out",
                     str(tmp_path / "a"), "--seed", "7"]) == 0
        assert main(["gen", "--config", str(cfgp), "--out",
                     str(tmp_path / "b"), "--seed", "8"]) == 0
        ha = (tmp_path / "a" / "train" / "h.c16").read_bytes()
        hb = (tmp_path / "b" / "train" / "h.c16").read_bytes()
        assert ha != hb
