import numpy as np
import pytest

from upinn import trainer
from upinn.trainer import ConfigError, TrainConfig


def tiny(**kw):
    base = {
        "problem": "flame",
        "seed": 3,
        "train": {"lr": 1e-3, "decay": 0.05, "every": 100, "epochs": 30},
        "transfer": {"lr": 5e-3, "decay": 0.025, "every": 100, "epochs": 20},
        "ur_lambda": 5e-7,
        "ur_every": 5,
        "body_hidden": [8, 8],
        "body_output": 6,
        "head_hidden": [4],
        "n_points": 20,
        "log_every": 5,
    }
    base.update(kw)
    return TrainConfig.from_dict(base)


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"problem": "flame", "bogus": 1})
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"train": {"lr": 1e-3, "steps": 4}})
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"ur_lambda": 1e-7, "jr_lambda": 1e-7})
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"ur_every": 0})
    with pytest.warns(UserWarning):
        TrainConfig.from_dict({"ur_lambda": 1e-3})


def test_zero_epochs_keeps_initialisation():
    cfg = tiny(train={"lr": 1e-3, "decay": 0.0, "every": 10, "epochs": 0})
    model, record, _ = trainer.train_body(cfg)
    fresh = trainer.build_model(cfg, cfg.make_problem())
    assert record.rows == []
    assert all(np.array_equal(a.flat(), b.flat()) for a, b in zip(model.nets(), fresh.nets()))


def test_seed_determinism_and_loss_additivity():
    a = trainer.train_body(tiny())[1]
    b = trainer.train_body(tiny())[1]
    assert a.csv_text() == b.csv_text()
    heads = [c for c in a.columns if c.startswith("l_de_head_")]
    total = sum(a.column(c) for c in heads) + a.column("l_ur")
    assert np.allclose(total, a.column("l_tot"), rtol=1e-12, atol=0)
    assert np.any(a.column("l_ur") > 0)
    assert np.all(a.column("sqrtg_min") >= 1.0)


def test_ur_disabled_equals_zero_lambda():
    off = trainer.train_body(tiny(ur_lambda=0.0))[1]
    off2 = trainer.train_body(tiny(ur_lambda=0.0, ur_every=7))[1]
    assert off.csv_text() == off2.csv_text()
    assert np.all(off.column("l_ur") == 0)


def test_jr_baseline_runs():
    rec = trainer.train_body(tiny(ur_lambda=0.0, jr_lambda=1e-6))[1]
    assert np.any(rec.column("l_ur") > 0)


def test_transfer_freezes_body_and_old_heads():
    cfg = tiny()
    model, _, _ = trainer.train_body(cfg)
    before = [n.flat().copy() for n in model.nets()]
    digest = model.body_digest()
    alpha, record = trainer.transfer(model, cfg, 0.018)
    assert alpha == 4 and model.family[-1] == 0.018
    assert model.body_digest() == digest
    assert all(np.array_equal(b, n.flat()) for b, n in zip(before, model.nets()))
    assert record.columns[2] == "l_de_head_0" and len(record.rows) > 0


def test_transfer_zero_epochs_is_random_head():
    cfg = tiny(transfer={"lr": 1e-3, "decay": 0.0, "every": 10, "epochs": 0})
    model, _, _ = trainer.train_body(cfg)
    alpha, rec = trainer.transfer(model, cfg, 0.018)
    assert rec.rows == []
    ev = trainer.evaluate(cfg.make_problem(), model, alpha)
    assert np.isfinite(ev.rms_percent)


def test_evaluate_perfect_copy_and_implicit_oracle():
    cfg = tiny()
    problem = cfg.make_problem()
    model, _, _ = trainer.train_body(cfg)
    ev = trainer.evaluate(problem, model, 0, "rk45")
    assert ev.y_oracle[0] == pytest.approx(0.02)
    same = trainer.Evaluation(ev.t, ev.y_oracle, ev.y_oracle, ev.re * 0)
    assert same.rms_percent == 0.0
    imp = trainer.evaluate(problem, model, 0, "implicit")
    assert np.max(np.abs(imp.y_oracle - ev.y_oracle)) < 1e-6
    with pytest.raises(ConfigError):
        trainer.evaluate(TrainConfig(problem="vdp").make_problem(), model, 0, "implicit")


def test_checkpoint_roundtrip(tmp_path):
    cfg = tiny()
    model, _, rng = trainer.train_body(cfg)
    path = tmp_path / "m.ckpt"
    trainer.save_checkpoint(path, model, cfg, rng)
    loaded, cfg2, meta = trainer.load_checkpoint(path)
    assert cfg2 == cfg and meta["config_hash"] == cfg.digest()
    assert all(np.array_equal(a.flat(), b.flat()) for a, b in zip(model.nets(), loaded.nets()))
    assert meta["rng_state"] == rng.bit_generator.state
    (tmp_path / "junk.ckpt").write_bytes(b"nope")
    with pytest.raises(trainer.CheckpointError):
        trainer.load_checkpoint(tmp_path / "junk.ckpt")


def test_non_finite_training_aborts_with_epoch():
    cfg = tiny(problem_options={"rho": 1e200})
    with pytest.raises(trainer.TrainingAborted) as info:
        trainer.train_body(cfg)
    assert "epoch" in str(info.value)


def test_vdp_and_efe_steps_run():
    vdp = tiny(problem="vdp", heads=[0.0, 1.5])
    rec = trainer.train_body(vdp)[1]
    assert len(rec.columns) == 2 + 2 + 5
    efe = tiny(
        problem="efe",
        heads=[2.0],
        ur_every=10,
        ur_lambda=5e-8,
        potential_hidden=[6],
        potential_output=4,
        potential_head_hidden=[4],
        n_points=6,
        problem_options={"bundle_size": 3},
    )
    model, rec, _ = trainer.train_body(efe)
    assert np.all(np.isfinite(rec.column("l_tot")))
    rep = trainer.evaluate_efe(efe.make_problem(), model, 0)
    assert len(rep["residual_rms"]) == 7


def test_ablation_rows_and_summary():
    cfg = tiny(transfer_value=0.018, train={"lr": 1e-3, "decay": 0.0, "every": 10, "epochs": 10})
    rows = trainer.ablate(cfg, 2)
    assert [r.seed for r in rows] == [3, 4]
    s = trainer.ablation_summary(rows)
    assert s["seeds"] == 2 and 0 <= s["win_rate_ur"] <= 1
    with pytest.raises(ConfigError):
        trainer.ablate(cfg, 0)


def test_mild_flame_converges():
    # at delta = 0.1 the front is gentle enough for a short run to resolve it
    cfg = TrainConfig.from_dict(
        {
            "problem": "flame",
            "train": {"lr": 1e-3, "decay": 0.05, "every": 15000, "epochs": 5000},
            "heads": [0.1],
            "problem_options": {"train_range": [0.1, 0.12]},
            "log_every": 1000,
        }
    )
    model, record, _ = trainer.train_body(cfg)
    ev = trainer.evaluate(cfg.make_problem(), model, 0, "rk45")
    assert ev.rms_percent < 1.0
    assert record.column("l_tot")[-1] < record.column("l_tot")[0] / 10
