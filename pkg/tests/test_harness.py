import json
import math

import numpy as np
import pytest
from sklearn.metrics import average_precision_score

from simam2.harness import (
    BimodalNet,
    ConfigError,
    ExperimentConfig,
    SyntheticSpec,
    evaluate,
    evaluate_model,
    fit_model,
    gen_synthetic,
    load_checkpoint,
    load_config,
    save_checkpoint,
    train,
)
from simam2.harness.checkpoint import FORMAT_TAG
from simam2.harness.metrics import (
    METRICS_COLUMNS,
    average_precision,
    mean_average_precision,
    read_csv,
    top1_accuracy,
)
from simam2.harness.sweep import SWEEP_COLUMNS, Cell, classification_grid, sweep

from oracles import reference_run
from simam2.harness.training import NumericalAbort, RATIO_COLUMNS
from simam2.hgr import soft_hgr
from simam2.modulation import MODULATION_COLUMNS

SMALL = SyntheticSpec(train_size=96, val_size=64, test_size=64, dim_a=16)
QUICK = dict(epochs=3)


# ---------------------------------------------------------------- data

def test_synthetic_is_deterministic_and_shaped():
    a, b = gen_synthetic(SMALL), gen_synthetic(SMALL)
    for split in ("train", "val", "test"):
        for field in ("x_v", "x_a", "y"):
            x, y = getattr(getattr(a, split), field), getattr(getattr(b, split), field)
            assert x.tobytes() == y.tobytes()
    assert a.train.x_v.shape == (96, SMALL.dim_v) and a.train.x_a.shape == (96, 16)
    assert not np.array_equal(a.train.x_v[:10], a.val.x_v[:10])


def test_synthetic_validation():
    for bad in (dict(num_categories=1), dict(snr_a=0.0), dict(inter_modal_corr=1.5), dict(train_size=0)):
        with pytest.raises(ValueError):
            gen_synthetic(SyntheticSpec(**bad))
    with pytest.raises(ValueError):
        SyntheticSpec.from_dict({"bogus": 1})


def test_zero_inter_modal_corr_gives_within_class_independence():
    spec = SyntheticSpec(inter_modal_corr=0.0, train_size=4000, dim_a=4, dim_v=4, num_categories=2,
                         pair_confusion_a=False)
    d = gen_synthetic(spec).train
    mask = d.y == 0
    score = soft_hgr(d.x_v[mask], d.x_a[mask]).item()
    corr = np.corrcoef(d.x_v[mask].T, d.x_a[mask].T)[:4, 4:]
    assert np.abs(corr).max() < 4 / np.sqrt(mask.sum())
    xv, xa = d.x_v[mask], d.x_a[mask]
    baseline = -0.5 * np.trace(np.cov(xv.T) @ np.cov(xa.T))
    cross_sd = np.sqrt(np.sum(xv.var(0) * xa.var(0)) / mask.sum())
    assert score == pytest.approx(baseline, abs=4 * cross_sd)


def test_dominant_modality_wins_unimodal_baseline():
    from sklearn.linear_model import LogisticRegression
    d = gen_synthetic(SyntheticSpec(pair_confusion_a=False))
    acc = {m: LogisticRegression(max_iter=2000).fit(getattr(d.train, f"x_{m}"), d.train.y)
           .score(getattr(d.test, f"x_{m}"), d.test.y) for m in ("a", "v")}
    assert acc["a"] > acc["v"]


# ---------------------------------------------------------------- config

def test_config_rejects_disallowed_combinations():
    with pytest.raises(ConfigError, match="FiLM"):
        ExperimentConfig(fusion="film", scheme="decoupled").validate()
    with pytest.raises(ConfigError, match="summation-learnable"):
        ExperimentConfig(fusion="summation-fixed", scheme="decoupling-free").validate()
    with pytest.raises(ConfigError):
        ExperimentConfig(fusion="concatenation", scheme="decoupling-free").validate()
    for bad in (dict(lambda_=0.0), dict(s=-1.0), dict(batch_size=1), dict(fusion="sum"),
                dict(optimizer="adam"), dict(momentum=1.0), dict(modulation_start=3, modulation_end=2)):
        with pytest.raises(ConfigError):
            ExperimentConfig(**bad).validate()


def test_config_file_round_trip(tmp_path):
    path = tmp_path / "cfg.json"
    cfg = ExperimentConfig(fusion="summation-learnable", simam2=True, scheme="decoupling-free", lambda_=1e-4)
    path.write_text(json.dumps({"experiment": cfg.to_dict(), "synthetic": SMALL.to_dict()}))
    loaded, spec = load_config(path)
    assert loaded == cfg and spec == SMALL
    path.write_text(json.dumps({"experiment": {"lambda_": 1.0}}))
    with pytest.raises(ConfigError):
        load_config(path)
    path.write_text(json.dumps({"experiment": {"nope": 1}}))
    with pytest.raises(ConfigError):
        load_config(path)


# ---------------------------------------------------------------- metrics

def test_metrics_bounds_and_edge_cases():
    y = np.array([0, 1, 2])
    perfect = np.eye(3)
    assert top1_accuracy(perfect, y) == 1.0 and mean_average_precision(perfect, y) == 1.0
    assert mean_average_precision(np.array([[0.2, 0.8]]), np.array([1])) == 1.0
    assert average_precision(np.array([0.9, 0.5, 0.1]), np.array([False, False, True])) == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        average_precision(np.array([0.1, 0.2]), np.array([False, False]))


def test_average_precision_matches_sklearn():
    rng = np.random.default_rng(0)
    for _ in range(20):
        scores = rng.normal(size=50)
        positive = rng.uniform(size=50) < 0.3
        positive[0] = True
        assert average_precision(scores, positive) == pytest.approx(
            average_precision_score(positive, scores), abs=1e-12)


def test_random_scores_give_chance_level():
    rng = np.random.default_rng(1)
    k, n = 4, 20000
    y = rng.integers(0, k, size=n)
    scores = rng.uniform(size=(n, k))
    assert top1_accuracy(scores, y) == pytest.approx(1 / k, abs=0.01)
    assert mean_average_precision(scores, y) == pytest.approx(1 / k, abs=0.01)


# ---------------------------------------------------------------- training

def run(tmp_path=None, **overrides):
    cfg = ExperimentConfig(**{**QUICK, **overrides})
    return train(cfg, SMALL, tmp_path)


def test_baseline_train_loss_decreases_early():
    res = train(ExperimentConfig(epochs=4), SyntheticSpec())
    losses = [m.loss for m in res.metrics if m.split == "train"]
    assert losses[0] > losses[1] > losses[2]


def test_training_is_deterministic(tmp_path):
    run(tmp_path / "a", fusion="summation-learnable", simam2=True, scheme="decoupling-free")
    run(tmp_path / "b", fusion="summation-learnable", simam2=True, scheme="decoupling-free")
    for name in ("metrics.csv", "modulation.csv", "ratios.csv", "checkpoint.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@pytest.mark.parametrize("overrides", [
    {}, {"simam2": True}, {"scheme": "decoupled", "fusion": "concatenation", "simam2": True},
    {"fusion": "film-zeta", "scheme": "decoupling-free", "simam2": True},
    {"fusion": "film", "simam2": True, "film_conditioner": "v"},
])
def test_artifact_schema_is_stable(tmp_path, overrides):
    res = run(tmp_path, **overrides)
    rows = read_csv(tmp_path / "metrics.csv")
    assert tuple(rows[0]) == METRICS_COLUMNS and len(rows) == 2 * QUICK["epochs"]
    with open(tmp_path / "modulation.csv") as fh:
        assert fh.readline().strip().split(",") == list(MODULATION_COLUMNS)
    with open(tmp_path / "ratios.csv") as fh:
        assert fh.readline().strip().split(",") == list(RATIO_COLUMNS)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert "desk-scale" in summary["note"]
    assert 0.0 <= res.test.top1_accuracy <= 1.0 and 0.0 <= res.test.mAP <= 1.0


def test_modulation_records_follow_scheme_and_window():
    res = run(fusion="summation-learnable", scheme="decoupling-free", modulation_start=1, modulation_end=2)
    steps_per_epoch = SMALL.train_size // 64 + (SMALL.train_size % 64 >= 2)
    assert len(res.modulation) == steps_per_epoch
    for rec in res.modulation:
        assert rec.rho_v * rec.rho_a == pytest.approx(1.0, abs=1e-12)
        assert 0 < rec.k_v <= 1 and 0 < rec.k_a <= 1 and max(rec.k_v, rec.k_a) == 1.0
    assert run().modulation == []


def test_checkpoint_round_trip(tmp_path):
    res = run(fusion="summation-learnable", simam2=True)
    data = gen_synthetic(SMALL)
    before = evaluate(res.checkpoint, data.test, "test")
    save_checkpoint(res.checkpoint, tmp_path / "ck.json")
    raw = json.loads((tmp_path / "ck.json").read_text())
    assert raw["format"] == FORMAT_TAG and raw["zeta_state"]["last_r"] is not None
    loaded = load_checkpoint(tmp_path / "ck.json")
    after = evaluate(loaded, data.test, "test")
    assert before == after
    np.testing.assert_array_equal(loaded.var_max, res.checkpoint.var_max)


def test_evaluate_rejects_dim_mismatch():
    res = run()
    other = gen_synthetic(SyntheticSpec(dim_a=9, train_size=4, val_size=4, test_size=4))
    with pytest.raises(ValueError):
        evaluate(res.checkpoint, other.test)


def test_nan_abort_dumps_batch(tmp_path):
    cfg = ExperimentConfig(epochs=3, learning_rate=1e200)
    data = gen_synthetic(SMALL)
    with pytest.raises(NumericalAbort) as info:
        fit_model(cfg, data.train, data.val, SMALL.num_categories, out_dir=tmp_path)
    dump = json.loads(info.value.dump_path.read_text())
    assert {"epoch", "step", "indices", "x_v", "x_a", "y"} <= set(dump)


# ---------------------------------------------------------------- pass-through

def test_pass_through_is_bit_exact():
    cfg = ExperimentConfig(epochs=4, scheme="none", simam2=False, fusion="summation-fixed")
    data = gen_synthetic(SMALL)
    res = fit_model(cfg, data.train, data.val, SMALL.num_categories)
    harness_rows = [(m.split, m.top1_accuracy, m.mAP, m.loss) for m in res.metrics]
    assert harness_rows == reference_run(cfg, data, SMALL.num_categories)
    assert all(math.isnan(m.k_v) for m in res.metrics)


# ---------------------------------------------------------------- sweep

def test_classification_grid_layout():
    cells = classification_grid()
    assert len(cells) == 15
    labels = [c.label for c in cells]
    assert "+decoupling-free+simam2 / summation-learnable" in labels
    assert "+decoupling-free+simam2 / film-zeta" in labels


def test_sweep_isolates_failures(tmp_path):
    cells = [Cell("ok", {"fusion": "summation-fixed"}), Cell("bad", {"fusion": "film", "scheme": "decoupled"})]
    base = ExperimentConfig(epochs=2)
    result = sweep(cells, base, SMALL, seeds=(0, 1), out_dir=tmp_path)
    assert result.summary["ok"]["n"] == 2 and result.summary["bad"]["n"] == 0
    assert result.summary["bad"]["failed"] == 2
    rows = read_csv(tmp_path / "sweep.csv")
    assert tuple(rows[0]) == SWEEP_COLUMNS and len(rows) == 4
    assert {r["status"] for r in rows if r["cell"] == "bad"} == {"invalid"}
    summary = json.loads((tmp_path / "sweep_summary.json").read_text())
    assert summary["cells"]["bad"]["top1_mean"] is None
    assert "failed" in result.table()


def test_sweep_empty_grid():
    result = sweep([], seeds=(0,))
    assert result.rows == [] and result.summary == {}


def test_sweep_reports_ratio_correlation():
    cells = [Cell("df", {"fusion": "summation-learnable", "scheme": "decoupling-free", "simam2": True})]
    result = sweep(cells, ExperimentConfig(epochs=2), SMALL, seeds=(0,))
    assert -1.0 <= result.rows[0]["ratio_pearson"] <= 1.0


def test_model_owners_cover_every_parameter():
    cfg = ExperimentConfig(fusion="film-zeta")
    model = BimodalNet(cfg, 3, 4, 2)
    assert set(model.owners) == set(model.params)
    assert {model.owners[n] for n in model.params if n.startswith("enc_v")} == {"v"}
    assert all(model.owners[n] == "shared" for n in model.params if n.startswith(("gate", "film", "cls")))
    row = evaluate_model(model, gen_synthetic(SyntheticSpec(dim_v=3, dim_a=4, num_categories=2,
                                                            train_size=4, val_size=4, test_size=8)).test)
    assert 0.0 <= row.top1_accuracy <= 1.0
