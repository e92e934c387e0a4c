import os
from dataclasses import replace

import numpy as np
import pytest

from layermatch import harness
from layermatch.data import Domain, DomainDataset
from layermatch.exceptions import LoadError


def test_derive_seed_deterministic_and_distinct():
    assert harness.derive_seed(1, 2, 3) == harness.derive_seed(1, 2, 3)
    assert harness.derive_seed(1, 2, 3) != harness.derive_seed(1, 2, 4)
    assert 0 <= harness.derive_seed(7) < 2**32


def test_parse_plan_round_trip():
    plan = harness.parse_plan("2:2,3:3,5:4")
    assert plan.pairs == ((2, 2), (3, 3), (5, 4))
    assert (plan.a, plan.b) == (5, 4)
    assert harness.parse_plan(" 2:2 , 4:3 ").pairs == ((2, 2), (4, 3))


def test_config_validation():
    with pytest.raises(ValueError):
        harness.ExperimentConfig(repeats=0)
    with pytest.raises(ValueError):
        harness.ExperimentConfig(co_ratio=0.9, train_ratio=0.2)
    with pytest.raises(ValueError):
        harness.ExperimentConfig(depth_min=4, depth_max=3)
    with pytest.raises(ValueError):
        harness.ExperimentConfig(methods=("matched", "nope"))


def test_config_file_loading(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# comment line\n"
        "repeats = 4\n"
        "cca_reg = none\n"
        "methods = matched, aligned\n"
        "matched_plans = 2:2,3:3,5:4 ; 2:2,4:3\n"
        "full_rank_only = true\n"
        "lr = 0.25\n"
    )
    config = harness.load_config(str(path))
    assert config.repeats == 4
    assert config.cca_reg is None
    assert config.methods == ("matched", "aligned")
    assert config.matched_plans == ("2:2,3:3,5:4", "2:2,4:3")
    assert config.full_rank_only is True
    assert config.lr == 0.25


def test_config_overrides_win(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("repeats = 4\nseed = 1\n")
    config = harness.load_config(str(path), overrides={"repeats": 9, "jobs": None})
    assert config.repeats == 9
    assert config.seed == 1
    assert config.jobs == 1  # None override ignored


def test_config_rejects_unknown_key(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("repets = 4\n")
    with pytest.raises(LoadError, match="repets"):
        harness.load_config(str(path))
    with pytest.raises(LoadError, match="not found"):
        harness.load_config(str(tmp_path / "missing.cfg"))
    bad = tmp_path / "bad.cfg"
    bad.write_text("repeats 4\n")
    with pytest.raises(LoadError, match="key=value"):
        harness.load_config(str(bad))


def test_config_none_rejected_where_required(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("lr = none\n")
    with pytest.raises(ValueError, match="cannot be none"):
        harness.load_config(str(path))


def test_apply_smoke():
    config = harness.apply_smoke(harness.ExperimentConfig())
    assert config.repeats == harness.SMOKE_REPEATS
    assert config.n_pairs == harness.SMOKE_PAIRS
    assert len(harness.task_pairs(config)) == harness.SMOKE_PAIRS


def test_task_pairs_all_45():
    config = harness.ExperimentConfig()
    pairs = harness.task_pairs(config)
    assert len(pairs) == 45
    assert pairs[0] == (0, 1) and pairs[-1] == (8, 9)


def test_candidate_plans_full_rank_counts():
    config = harness.ExperimentConfig(depth_min=3, depth_max=5, full_rank_only=True)
    plans = harness.candidate_plans(config)
    assert len(plans) == 19
    shapes = {p.shape for p in plans}
    assert (3, 5, 4) in shapes and (2, 4, 3) in shapes and (4, 5, 5) in shapes


def test_train_config_mirrors_fields():
    config = harness.ExperimentConfig(lr=0.33, corr_weight=2.0, top_width=12)
    tc = config.train_config()
    assert tc.hyper.lr == 0.33
    assert tc.hyper.corr_weight == 2.0
    assert tc.top_width == 12
    assert config.train_config(top_width=40).top_width == 40


def test_search_train_config_heavier():
    config = harness.ExperimentConfig()
    tc = config.search_train_config()
    assert tc.max_iters == config.search_max_iters
    assert tc.pretrain_epochs == config.search_pretrain_epochs
    inherit = replace(config, search_max_iters=None)
    assert inherit.search_train_config().max_iters == config.max_iters


def test_aggregate_records_bookkeeping():
    records = []
    for task, acc in [((0, 1), 0.9), ((0, 2), 0.7)]:
        for repeat, bump in ((0, 0.0), (1, 0.1)):
            records.append({
                "class_a": task[0], "class_b": task[1], "repeat": repeat,
                "method": "aligned", "plan": "", "accuracy": acc + bump,
                "excluded": 0,
            })
    records.append({
        "class_a": 0, "class_b": 1, "repeat": 0, "method": "aligned",
        "plan": "", "accuracy": None, "excluded": 1,
    })
    with pytest.warns(UserWarning, match="incomplete"):
        categories, task_table, excluded = harness.aggregate_records(records)
    assert excluded == 1
    assert task_table["aligned"][(0, 1)] == pytest.approx(0.95)
    assert task_table["aligned"][(0, 2)] == pytest.approx(0.75)
    assert categories["aligned"][0] == pytest.approx(0.85)


def test_method_key_distinguishes_plans():
    matched = {"method": "matched", "plan": "m2-d4x3[2:2,4:3]"}
    assert harness._method_key(matched) == "matched[m2-d4x3[2:2,4:3]]"
    assert harness._method_key({"method": "cca-svm", "plan": ""}) == "cca-svm"


def _latent_views(n_per_class=120, dim_s=100, dim_t=40, seed=0):
    """Two nonlinear views of a shared latent with linearly separable classes."""
    rng = np.random.default_rng(seed)
    d_latent = 8
    labels = np.repeat([0, 1], n_per_class)
    z = rng.normal(size=(2 * n_per_class, d_latent))
    z[:, 0] += np.where(labels == 1, 2.2, -2.2)
    mix_s1 = rng.normal(size=(d_latent, dim_s)) / np.sqrt(d_latent)
    mix_s2 = rng.normal(size=(dim_s, dim_s)) / np.sqrt(dim_s)
    mix_t1 = rng.normal(size=(d_latent, dim_t)) / np.sqrt(d_latent)
    mix_t2 = rng.normal(size=(dim_t, dim_t)) / np.sqrt(dim_t)
    fs = np.tanh(np.tanh(z @ mix_s1) @ mix_s2) + 0.05 * rng.normal(size=(2 * n_per_class, dim_s))
    ft = np.tanh(np.tanh(z @ mix_t1) @ mix_t2) + 0.05 * rng.normal(size=(2 * n_per_class, dim_t))
    source = DomainDataset(fs, labels, Domain.SOURCE)
    target = DomainDataset(ft, labels, Domain.TARGET)
    return source, target


def test_heterogeneous_latent_transfer():
    """Unequal-width views of one latent: coupled nets transfer, raw weights do not.

    The no-transfer control trains on raw source features and scores raw
    target features zero-padded to the source width, which is the only
    dimension-compatible way to reuse the weights unchanged.
    """
    from layermatch import classify
    from layermatch.data import split_trial

    source, target = _latent_views()
    split = split_trial(source, target, (0, 1), ratios=(0.6, 0.2), seed=4)
    config = harness.ExperimentConfig(
        top_width=10, max_iters=12, steps_per_iter=4, pretrain_epochs=40,
        fine_tune_epochs=10, svm_c=0.1,
    )
    plan = harness.parse_plan("2:2,3:3,4:4")
    acc, _ = harness._deep_accuracy(plan, split, config, 11, 0)
    assert acc >= 0.85

    x_train, labels_train = split.train_source
    svm = classify.fit_binary(x_train, labels_train, (0, 1), c=1.0)
    x_test, labels_test = split.test_target
    padded = np.zeros((x_test.shape[0], x_train.shape[1]))
    padded[:, : x_test.shape[1]] = x_test
    raw = classify.class_accuracy(svm, padded, labels_test)
    assert raw <= 0.65


def test_run_trial_records_all_methods(dataset):
    source, target = dataset
    config = harness.ExperimentConfig(
        max_iters=4, steps_per_iter=2, pretrain_epochs=10, fine_tune_epochs=2,
    )
    matched = [harness.parse_plan(t) for t in config.matched_plans]
    records = harness.run_trial(source, target, (0, 5), 0, config, matched)
    methods = [(r["method"], r["plan"]) for r in records]
    assert ("cca-svm", "") in methods
    assert ("aligned", harness.ALIGNED_PLAN.label) in methods
    assert sum(1 for m, _ in methods if m == "matched") == 2
    for rec in records:
        assert rec["excluded"] == 0
        assert 0.0 <= rec["accuracy"] <= 1.0
        assert rec["seconds"] >= 0
        if rec["method"] != "cca-svm":
            assert np.isfinite(rec["objective"])


def test_run_experiment_smoke_end_to_end(tmp_path):
    config = harness.ExperimentConfig(
        n_pairs=2, repeats=2, max_iters=3, steps_per_iter=2, pretrain_epochs=8,
        fine_tune_epochs=2, data_dir=os.path.join(os.path.dirname(__file__), "..", "data"),
    )
    report = harness.run_experiment(config)
    # 2 pairs x 2 repeats x (1 baseline + 1 aligned + 2 matched)
    assert len(report.records) == 16
    assert report.excluded == 0
    keys = report.method_keys()
    assert "aligned" in keys and "cca-svm" in keys
    assert sum(k.startswith("matched[") for k in keys) == 2
    for key in keys:
        assert 0.0 <= report.mean_accuracy(key) <= 1.0

    out = tmp_path / "out"
    harness.emit_reports(report, str(out))
    assert (out / "report.csv").exists()
    assert (out / "summary.txt").exists()
    lines = (out / "trials.jsonl").read_text().strip().splitlines()
    assert len(lines) == 1 + 16  # meta + trials
    csv_lines = (out / "report.csv").read_text().strip().splitlines()
    assert csv_lines[0].startswith("class_a,class_b")
    assert len(csv_lines) == 17


def test_run_experiment_deterministic(dataset):
    config = harness.ExperimentConfig(
        n_pairs=1, repeats=1, max_iters=3, steps_per_iter=2, pretrain_epochs=8,
        fine_tune_epochs=2, seed=7,
        data_dir=os.path.join(os.path.dirname(__file__), "..", "data"),
    )
    a = harness.run_experiment(config)
    b = harness.run_experiment(config)
    acc_a = [r["accuracy"] for r in a.records]
    acc_b = [r["accuracy"] for r in b.records]
    assert acc_a == acc_b


def test_neuron_sweep_table(tmp_path):
    config = harness.ExperimentConfig(
        n_pairs=1, repeats=1, max_iters=3, steps_per_iter=2, pretrain_epochs=8,
        fine_tune_epochs=2,
        data_dir=os.path.join(os.path.dirname(__file__), "..", "data"),
    )
    table, records = harness.neuron_sweep(config, [10, 20])
    label = harness.parse_plan(config.sweep_plans[0]).label
    assert set(table) == {(label, 10), (label, 20)}
    assert all(0.0 <= v <= 1.0 for v in table.values())
    widths = {rec["top_width"] for rec in records}
    assert widths == {10, 20}
    harness.write_sweep(str(tmp_path), table, records)
    text = (tmp_path / "sweep.csv").read_text()
    assert text.startswith("plan,width,accuracy")
    with pytest.raises(ValueError):
        harness.neuron_sweep(config, [])


def test_resolve_dataset_errors():
    config = harness.ExperimentConfig(profile_path="/nonexistent/p.txt",
                                      pixel_path="/nonexistent/x.txt")
    with pytest.raises(LoadError, match="not found"):
        harness.resolve_dataset(config)
