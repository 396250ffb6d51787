"""Pipeline tests: splitting, per-subject runs, aggregation, reports."""

import json

import numpy as np
import pytest

from miuq.data_io import generate_synthetic
from miuq.errors import ValidationError
from miuq.metrics import PredictionSet, accuracy, brier, ece, nce
from miuq.pipeline import (
    MODEL_NAMES,
    RunConfig,
    SubjectResult,
    compute_metrics,
    config_from_dict,
    evaluate_external,
    format_report_table,
    run_benchmark,
    run_subject,
    split_within_subject,
)


def small_subject(seed=0, subject_id="s01", epochs_per_class=20, separation=3.0):
    return generate_synthetic(
        n_classes=2,
        n_channels=6,
        epochs_per_class=epochs_per_class,
        n_samples=200,
        sample_rate_hz=250.0,
        separation=separation,
        jitter=0.1,
        seed=seed,
        dataset_id="synth",
        subject_id=subject_id,
    )


class TestSplit:
    def test_counts_are_stratified(self):
        es = small_subject()
        train, test = split_within_subject(es, train_frac=0.8, seed=0)
        assert train.n_epochs == 32 and test.n_epochs == 8
        for cls in es.class_ids:
            assert train.labels.count(cls) == 16
            assert test.labels.count(cls) == 4

    def test_rounding_is_floor_of_half_up(self):
        # 0.75 * 20 = 15 exactly; 0.77 * 20 = 15.4 rounds down to 15
        es = small_subject()
        train, _ = split_within_subject(es, train_frac=0.75, seed=0)
        assert train.labels.count(es.class_ids[0]) == 15
        train, _ = split_within_subject(es, train_frac=0.77, seed=0)
        assert train.labels.count(es.class_ids[0]) == 15

    def test_both_sides_keep_every_class(self):
        es = small_subject()
        for frac in (0.05, 0.97):
            train, test = split_within_subject(es, train_frac=frac, seed=1)
            for cls in es.class_ids:
                assert train.labels.count(cls) >= 1
                assert test.labels.count(cls) >= 1

    def test_partition_is_disjoint_and_exhaustive(self):
        es = small_subject()
        train, test = split_within_subject(es, train_frac=0.8, seed=3)
        a = train.provenance["subset_indices"]
        b = test.provenance["subset_indices"]
        assert sorted(a + b) == list(range(es.n_epochs))
        assert not set(a) & set(b)

    def test_subsets_preserve_original_order(self):
        es = small_subject()
        train, test = split_within_subject(es, train_frac=0.8, seed=3)
        assert train.provenance["subset_indices"] == sorted(train.provenance["subset_indices"])
        assert test.provenance["subset_indices"] == sorted(test.provenance["subset_indices"])

    def test_same_seed_same_split(self):
        es = small_subject()
        a_train, a_test = split_within_subject(es, seed=7)
        b_train, b_test = split_within_subject(es, seed=7)
        assert a_train.provenance["subset_indices"] == b_train.provenance["subset_indices"]
        assert a_test.provenance["subset_indices"] == b_test.provenance["subset_indices"]

    def test_different_seed_different_split(self):
        es = small_subject()
        a_train, _ = split_within_subject(es, seed=0)
        b_train, _ = split_within_subject(es, seed=1)
        assert a_train.provenance["subset_indices"] != b_train.provenance["subset_indices"]

    def test_split_epochs_match_source(self):
        es = small_subject()
        train, _ = split_within_subject(es, seed=5)
        for local, original in enumerate(train.provenance["subset_indices"]):
            np.testing.assert_array_equal(train.tensor[local], es.tensor[original])
            assert train.labels[local] == es.labels[original]

    def test_rejects_bad_fraction(self):
        es = small_subject()
        for frac in (0.0, 1.0, -0.2, 1.5):
            with pytest.raises(ValidationError, match="train_frac"):
                split_within_subject(es, train_frac=frac)

    def test_rejects_tiny_class(self):
        es = small_subject().subset([0, 1, 2, 20])  # one class reduced to one epoch
        with pytest.raises(ValidationError, match="at least 2"):
            split_within_subject(es)


class TestRunConfig:
    def test_defaults_are_valid(self):
        cfg = RunConfig()
        assert cfg.train_frac == 0.8
        assert cfg.rejection_fractions[0] == 0.0
        assert len(cfg.rejection_fractions) == 20

    def test_rejects_bad_values(self):
        with pytest.raises(ValidationError, match="train_frac"):
            RunConfig(train_frac=1.0)
        with pytest.raises(ValidationError, match="seed"):
            RunConfig(seed=0.5)
        with pytest.raises(ValidationError, match="n_filters"):
            RunConfig(n_filters=1)
        with pytest.raises(ValidationError, match="brier_mode"):
            RunConfig(brier_mode="sum")
        with pytest.raises(ValidationError, match="temperature_objective"):
            RunConfig(temperature_objective="mse")

    def test_from_dict_round_trip(self):
        cfg = config_from_dict({"train_frac": 0.5, "seed": 3, "n_bins": 15})
        assert cfg.train_frac == 0.5 and cfg.seed == 3 and cfg.n_bins == 15

    def test_from_dict_rejects_unknown_keys(self):
        with pytest.raises(ValidationError, match="unknown config keys"):
            config_from_dict({"train_fraction": 0.5})

    def test_bandpass_spec_carries_band(self):
        spec = RunConfig().bandpass_spec(250.0)
        assert spec.low_hz == 7.5 and spec.high_hz == 30.0 and spec.order == 4


class TestComputeMetrics:
    def pred(self):
        probs = np.array([[0.9, 0.1], [0.8, 0.2], [0.3, 0.7], [0.6, 0.4]])
        return PredictionSet(
            class_ids=("a", "b"),
            trial_ids=("0", "1", "2", "3"),
            y_true=("a", "a", "b", "b"),
            probs=probs,
        )

    def test_matches_direct_metric_calls(self):
        p = self.pred()
        cfg = RunConfig()
        out = compute_metrics(p, cfg)
        assert out["metrics"]["accuracy"] == accuracy(p)
        assert out["metrics"]["ece"] == ece(p, cfg.n_bins)
        assert out["metrics"]["nce"] == nce(p, cfg.n_bins)
        assert out["metrics"]["brier"] == brier(p, cfg.brier_mode)

    def test_empty_bins_become_none(self):
        out = compute_metrics(self.pred(), RunConfig())
        rel = out["reliability"]
        assert any(v is None for v in rel["accuracy"])
        assert json.dumps(out)  # JSON-safe, no NaN leaks

    def test_rejection_block_lists_fractions(self):
        out = compute_metrics(self.pred(), RunConfig())
        rej = out["rejection"]
        assert rej["fractions"][0] == 0.0
        assert len(rej["fractions"]) == len(rej["accuracies"])
        assert rej["accuracies"][0] == accuracy(self.pred())


class TestRunSubject:
    def test_result_shape_and_metrics(self):
        es = small_subject()
        cfg = RunConfig()
        res = run_subject(es, "mdrm", cfg)
        assert isinstance(res, SubjectResult)
        assert res.dataset_id == "synth" and res.subject_id == "s01"
        assert res.model == "mdrm"
        assert res.n_train == 32 and res.n_test == 8
        assert res.metrics["accuracy"] == 1.0  # widely separated classes
        assert res.temperature is None
        assert res.timing["fit_seconds"] > 0.0
        assert res.timing["inference_ms_per_trial"] > 0.0

    def test_trial_ids_are_source_indices(self):
        es = small_subject()
        res = run_subject(es, "mdrm", RunConfig())
        assert list(res.predictions.trial_ids) == [str(i) for i in res.split["test_indices"]]
        assert res.split["train_indices"] == sorted(res.split["train_indices"])

    def test_mdrm_t_records_temperature(self):
        es = small_subject(epochs_per_class=30)
        res = run_subject(es, "mdrm_t", RunConfig())
        assert res.temperature is not None and res.temperature > 0.0

    def test_csp_lda_runs(self):
        es = small_subject()
        res = run_subject(es, "csp_lda", RunConfig(n_filters=4))
        assert res.model == "csp_lda"
        assert res.metrics["accuracy"] >= 0.9

    def test_unknown_model_rejected(self):
        with pytest.raises(ValidationError, match="unknown model"):
            run_subject(small_subject(), "svm", RunConfig())

    def test_report_entry_is_json_safe(self):
        res = run_subject(small_subject(), "mdrm", RunConfig())
        text = json.dumps(res.report_entry(), sort_keys=True)
        assert "predictions" not in json.loads(text)


class TestRunBenchmark:
    def subjects(self):
        return [small_subject(seed=i, subject_id=f"s{i + 1:02d}") for i in range(2)]

    def test_report_structure(self):
        report, results = run_benchmark(self.subjects(), ("mdrm", "csp_lda"), RunConfig())
        assert report["report_format_version"] == 1
        assert report["model_names"] == ["mdrm", "csp_lda"]
        assert len(report["subjects"]) == 4
        assert len(results) == 4
        assert len(report["aggregates"]) == 2
        agg = report["aggregates"][0]
        assert agg["n_subjects"] == 2 and agg["single_subject"] is False
        assert set(agg["metrics"]) == {"accuracy", "ece", "nce", "brier"}

    def test_single_subject_flags_zero_std(self):
        report, _ = run_benchmark([small_subject()], ("mdrm",), RunConfig())
        agg = report["aggregates"][0]
        assert agg["single_subject"] is True
        assert agg["metrics"]["accuracy"]["std"] == 0.0

    def test_aggregate_mean_matches_subjects(self):
        report, results = run_benchmark(self.subjects(), ("mdrm",), RunConfig())
        values = [r.metrics["ece"] for r in results]
        agg = report["aggregates"][0]["metrics"]["ece"]
        assert agg["mean"] == pytest.approx(np.mean(values), abs=1e-15)
        assert agg["std"] == pytest.approx(np.std(values, ddof=1), abs=1e-15)

    def test_two_runs_identical_outside_timing(self):
        cfg = RunConfig()
        report_a, _ = run_benchmark(self.subjects(), MODEL_NAMES, cfg)
        report_b, _ = run_benchmark(self.subjects(), MODEL_NAMES, cfg)
        assert json.dumps(_strip_timing(report_a), sort_keys=True) == json.dumps(
            _strip_timing(report_b), sort_keys=True
        )

    def test_report_serializes(self):
        report, _ = run_benchmark([small_subject()], ("mdrm",), RunConfig())
        round_tripped = json.loads(json.dumps(report, sort_keys=True))
        assert round_tripped["config"]["train_frac"] == 0.8

    def test_rejects_duplicate_subject(self):
        es = small_subject()
        with pytest.raises(ValidationError, match="duplicate subject"):
            run_benchmark([es, es], ("mdrm",), RunConfig())

    def test_rejects_empty_inputs(self):
        with pytest.raises(ValidationError, match="at least one epoch set"):
            run_benchmark([], ("mdrm",), RunConfig())
        with pytest.raises(ValidationError, match="at least one model"):
            run_benchmark([small_subject()], (), RunConfig())
        with pytest.raises(ValidationError, match="unique"):
            run_benchmark([small_subject()], ("mdrm", "mdrm"), RunConfig())

    def test_skip_errors_records_failures(self):
        good = small_subject(seed=0, subject_id="s01")
        # one class cut down to a single epoch makes the split impossible
        bad = small_subject(seed=1, subject_id="s02").subset(list(range(21)))
        report, results = run_benchmark([good, bad], ("mdrm",), RunConfig(), skip_errors=True)
        assert len(results) == 1
        assert len(report["failures"]) == 1
        failure = report["failures"][0]
        assert failure["subject_id"] == "s02"
        assert "at least 2" in failure["error"]

    def test_skip_errors_still_raises_when_all_fail(self):
        bad = small_subject(seed=1, subject_id="s02").subset(list(range(21)))
        with pytest.raises(ValidationError, match="every subject/model combination failed"):
            run_benchmark([bad], ("mdrm",), RunConfig(), skip_errors=True)

    def test_without_skip_errors_failure_propagates(self):
        bad = small_subject(seed=1, subject_id="s02").subset(list(range(21)))
        with pytest.raises(ValidationError, match="at least 2"):
            run_benchmark([bad], ("mdrm",), RunConfig())


def _strip_timing(report):
    report = json.loads(json.dumps(report))
    for entry in report["subjects"]:
        entry.pop("timing")
    for entry in report["aggregates"]:
        entry.pop("timing")
    return report


class TestEvaluateExternal:
    def test_matches_compute_metrics(self):
        probs = np.array([[0.9, 0.1], [0.2, 0.8], [0.55, 0.45]])
        pred = PredictionSet(
            class_ids=("a", "b"),
            trial_ids=("0", "1", "2"),
            y_true=("a", "b", "b"),
            probs=probs,
        )
        cfg = RunConfig()
        out = evaluate_external(pred, cfg)
        direct = compute_metrics(pred, cfg)
        assert out["metrics"] == direct["metrics"]
        assert out["n_trials"] == 3
        assert out["class_ids"] == ["a", "b"]
        assert json.dumps(out)


class TestReportTable:
    def test_table_mentions_models_and_metrics(self):
        report, _ = run_benchmark([small_subject()], ("mdrm", "mdrm_t"), RunConfig())
        text = format_report_table(report)
        assert "dataset: synth" in text
        assert "mdrm_t" in text
        assert "accuracy (%)" in text
        assert "±" in text
        assert "inference (ms/trial)" in text
