import json

import numpy as np
import pytest

from miuq.data_io import (
    EpochSet,
    generate_synthetic,
    read_epochset,
    read_predictions,
    write_epochset,
    write_predictions,
)
from miuq.errors import (
    ChecksumError,
    FormatError,
    FormatVersionError,
    TensorSizeError,
    ValidationError,
)
from miuq.metrics import PredictionSet


def small_set(n_epochs=4, n_channels=3, n_samples=10, seed=1):
    rng = np.random.default_rng(seed)
    labels = ["a" if i % 2 == 0 else "b" for i in range(n_epochs)]
    return EpochSet(
        tensor=rng.normal(size=(n_epochs, n_channels, n_samples)),
        labels=labels,
        class_ids=["a", "b"],
        channel_names=[f"ch_{i}" for i in range(n_channels)],
        sample_rate_hz=250.0,
        dataset_id="unit",
        subject_id="s01",
        provenance={"generator": "test"},
    )


class TestEpochSet:
    def test_basic_properties(self):
        es = small_set()
        assert es.n_epochs == 4
        assert es.n_channels == 3
        assert es.n_samples == 10
        assert es.tensor.dtype == np.float32
        assert not es.tensor.flags.writeable
        np.testing.assert_array_equal(es.label_indices, [0, 1, 0, 1])

    def test_float64_input_is_cast_once(self):
        data = np.random.default_rng(2).normal(size=(2, 3, 10))
        es = EpochSet(data, ["a", "b"], ["a", "b"], ["c0", "c1", "c2"], 100.0, "d", "s")
        np.testing.assert_array_equal(es.tensor, data.astype(np.float32))

    def test_epoch_accessor(self):
        es = small_set()
        e = es.epoch(1)
        assert e.label == "b"
        assert e.data.dtype == np.float64
        assert e.sample_rate_hz == 250.0
        np.testing.assert_array_equal(e.data, es.tensor[1].astype(np.float64))
        with pytest.raises(ValidationError):
            es.epoch(4)

    def test_provenance_is_copied(self):
        es = small_set()
        es.provenance["generator"] = "mutated"
        assert es.provenance["generator"] == "test"

    def test_rejects_label_not_in_classes(self):
        with pytest.raises(ValidationError, match="not among class ids"):
            EpochSet(np.zeros((1, 2, 5)), ["c"], ["a", "b"], ["x", "y"], 10.0, "d", "s")

    def test_rejects_label_count_mismatch(self):
        with pytest.raises(ValidationError, match="labels for"):
            EpochSet(np.zeros((2, 2, 5)), ["a"], ["a", "b"], ["x", "y"], 10.0, "d", "s")

    def test_rejects_channel_name_mismatch(self):
        with pytest.raises(ValidationError, match="channel names"):
            EpochSet(np.zeros((1, 2, 5)), ["a"], ["a", "b"], ["x"], 10.0, "d", "s")

    def test_rejects_few_samples(self):
        with pytest.raises(ValidationError, match="more samples"):
            EpochSet(np.zeros((1, 5, 5)), ["a"], ["a", "b"], list("vwxyz"), 10.0, "d", "s")

    def test_rejects_bad_sample_rate(self):
        for fs in (0.0, -1.0, float("nan")):
            with pytest.raises(ValidationError):
                EpochSet(np.zeros((1, 2, 5)), ["a"], ["a", "b"], ["x", "y"], fs, "d", "s")

    def test_rejects_nonfinite_tensor(self):
        t = np.zeros((1, 2, 5))
        t[0, 0, 0] = np.inf
        with pytest.raises(ValidationError, match="non-finite"):
            EpochSet(t, ["a"], ["a", "b"], ["x", "y"], 10.0, "d", "s")

    def test_rejects_unserializable_provenance(self):
        with pytest.raises(ValidationError, match="JSON"):
            EpochSet(
                np.zeros((1, 2, 5)), ["a"], ["a", "b"], ["x", "y"], 10.0, "d", "s",
                provenance={"bad": object()},
            )

    def test_subset_selects_and_records(self):
        es = small_set()
        sub = es.subset([2, 0])
        assert sub.n_epochs == 2
        assert sub.labels == ("a", "a")
        np.testing.assert_array_equal(sub.tensor, es.tensor[[2, 0]])
        assert sub.provenance["subset_indices"] == [2, 0]
        assert sub.provenance["subset_parent_epochs"] == 4

    def test_subset_validates_indices(self):
        es = small_set()
        with pytest.raises(ValidationError):
            es.subset([])
        with pytest.raises(ValidationError):
            es.subset([0, 0])
        with pytest.raises(ValidationError):
            es.subset([0, 4])
        with pytest.raises(ValidationError):
            es.subset([0.5, 1.5])

    def test_with_tensor_replaces_signal(self):
        es = small_set()
        out = es.with_tensor(np.zeros((4, 3, 10)), {"filtered": True})
        assert out.labels == es.labels
        assert out.provenance["filtered"] is True
        assert out.provenance["generator"] == "test"
        assert float(np.abs(out.tensor).max()) == 0.0

    def test_with_tensor_keeps_epoch_and_channel_counts(self):
        es = small_set()
        with pytest.raises(ValidationError, match="replacement tensor"):
            es.with_tensor(np.zeros((3, 3, 10)))


class TestEpochSetOnDisk:
    def test_round_trip_is_bit_identical(self, tmp_path):
        es = small_set()
        write_epochset(es, tmp_path / "set")
        back = read_epochset(tmp_path / "set")
        np.testing.assert_array_equal(back.tensor, es.tensor)
        assert back.labels == es.labels
        assert back.class_ids == es.class_ids
        assert back.channel_names == es.channel_names
        assert back.sample_rate_hz == es.sample_rate_hz
        assert back.dataset_id == es.dataset_id
        assert back.subject_id == es.subject_id
        assert back.provenance == es.provenance

    def test_layout_and_bytes(self, tmp_path):
        es = small_set()
        out = write_epochset(es, tmp_path / "set")
        names = sorted(p.name for p in out.iterdir())
        assert names == ["labels.txt", "manifest.json", "tensor.f32"]
        raw = (out / "tensor.f32").read_bytes()
        assert len(raw) == 4 * es.n_epochs * es.n_channels * es.n_samples
        assert raw == es.tensor.astype("<f4").tobytes(order="C")
        assert (out / "labels.txt").read_bytes() == b"a\nb\na\nb\n"
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["format_version"] == 1
        assert set(manifest["checksums"]) == {"tensor.f32", "labels.txt"}

    def test_refuses_existing_without_overwrite(self, tmp_path):
        es = small_set()
        write_epochset(es, tmp_path / "set")
        with pytest.raises(FileExistsError):
            write_epochset(es, tmp_path / "set")
        write_epochset(small_set(seed=9), tmp_path / "set", overwrite=True)
        assert read_epochset(tmp_path / "set").n_epochs == 4

    def test_corrupt_tensor_is_checksum_error(self, tmp_path):
        out = write_epochset(small_set(), tmp_path / "set")
        raw = bytearray((out / "tensor.f32").read_bytes())
        raw[0] ^= 0xFF
        (out / "tensor.f32").write_bytes(bytes(raw))
        with pytest.raises(ChecksumError, match="tensor.f32"):
            read_epochset(out)

    def test_truncated_tensor_is_size_error(self, tmp_path):
        out = write_epochset(small_set(), tmp_path / "set")
        raw = (out / "tensor.f32").read_bytes()
        (out / "tensor.f32").write_bytes(raw[:-4])
        with pytest.raises(TensorSizeError, match="bytes"):
            read_epochset(out)

    def test_edited_labels_are_checksum_error(self, tmp_path):
        out = write_epochset(small_set(), tmp_path / "set")
        (out / "labels.txt").write_bytes(b"b\nb\na\nb\n")
        with pytest.raises(ChecksumError, match="labels.txt"):
            read_epochset(out)

    def test_unknown_format_version(self, tmp_path):
        out = write_epochset(small_set(), tmp_path / "set")
        manifest = json.loads((out / "manifest.json").read_text())
        manifest["format_version"] = 2
        (out / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(FormatVersionError, match="version 2"):
            read_epochset(out)

    def test_missing_field(self, tmp_path):
        out = write_epochset(small_set(), tmp_path / "set")
        manifest = json.loads((out / "manifest.json").read_text())
        del manifest["n_samples"]
        (out / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(FormatError, match="n_samples"):
            read_epochset(out)

    def test_wrong_field_type(self, tmp_path):
        out = write_epochset(small_set(), tmp_path / "set")
        manifest = json.loads((out / "manifest.json").read_text())
        manifest["n_epochs"] = "four"
        (out / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(FormatError, match="n_epochs"):
            read_epochset(out)

    def test_invalid_json(self, tmp_path):
        out = write_epochset(small_set(), tmp_path / "set")
        (out / "manifest.json").write_text("{not json")
        with pytest.raises(FormatError, match="JSON"):
            read_epochset(out)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_epochset(tmp_path / "nowhere")


class TestPredictionsCsv:
    def make_pred(self):
        probs = np.array([[0.75, 0.25], [0.1, 0.9], [1.0 / 3.0, 2.0 / 3.0]])
        return PredictionSet(("left", "right"), ["t0", "t1", "t2"],
                             ["left", "right", "left"], probs)

    def test_round_trip_exact(self, tmp_path):
        pred = self.make_pred()
        path = write_predictions(pred, tmp_path / "pred.csv")
        back = read_predictions(path)
        assert back.class_ids == pred.class_ids
        assert back.trial_ids == pred.trial_ids
        assert back.y_true == pred.y_true
        np.testing.assert_array_equal(back.probs, pred.probs)

    def test_header_layout(self, tmp_path):
        path = write_predictions(self.make_pred(), tmp_path / "pred.csv")
        first = path.read_text().splitlines()[0]
        assert first == "trial_id,true_label,left,right"

    def test_class_ids_cross_check(self, tmp_path):
        path = write_predictions(self.make_pred(), tmp_path / "pred.csv")
        read_predictions(path, class_ids=("left", "right"))
        with pytest.raises(FormatError, match="class columns"):
            read_predictions(path, class_ids=("right", "left"))

    def test_bad_header(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("id,label,left,right\nt0,left,1.0,0.0\n")
        with pytest.raises(FormatError, match="header"):
            read_predictions(p)

    def test_row_errors_name_row_and_column(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("trial_id,true_label,left,right\nt0,left,0.5,oops\n")
        with pytest.raises(FormatError, match=r"row 2.*'right'.*'oops'"):
            read_predictions(p)
        p.write_text("trial_id,true_label,left,right\nt0,left,0.5\n")
        with pytest.raises(FormatError, match="row 2"):
            read_predictions(p)
        p.write_text("trial_id,true_label,left,right\nt0,feet,0.5,0.5\n")
        with pytest.raises(FormatError, match="row 2.*'feet'"):
            read_predictions(p)

    def test_invalid_probabilities_rejected(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("trial_id,true_label,left,right\nt0,left,0.9,0.9\n")
        with pytest.raises(FormatError, match="invalid predictions"):
            read_predictions(p)

    def test_empty_and_headerless(self, tmp_path):
        p = tmp_path / "empty.csv"
        p.write_text("")
        with pytest.raises(FormatError, match="empty"):
            read_predictions(p)
        p.write_text("trial_id,true_label,left,right\n")
        with pytest.raises(FormatError, match="no prediction rows"):
            read_predictions(p)


class TestGenerateSynthetic:
    def test_shapes_and_labels(self):
        es = generate_synthetic(n_classes=3, n_channels=4, epochs_per_class=5,
                                n_samples=50, seed=7)
        assert es.tensor.shape == (15, 4, 50)
        assert es.class_ids == ("class_0", "class_1", "class_2")
        assert es.labels[:5] == ("class_0",) * 5
        assert es.labels[5:10] == ("class_1",) * 5
        assert es.channel_names == ("ch_0", "ch_1", "ch_2", "ch_3")
        assert es.provenance["seed"] == 7

    def test_deterministic_per_seed(self):
        a = generate_synthetic(seed=42, epochs_per_class=3, n_samples=40)
        b = generate_synthetic(seed=42, epochs_per_class=3, n_samples=40)
        c = generate_synthetic(seed=43, epochs_per_class=3, n_samples=40)
        np.testing.assert_array_equal(a.tensor, b.tensor)
        assert np.abs(a.tensor - c.tensor).max() > 0

    def test_prototype_separation_shows_in_sample_covariances(self):
        from miuq.features import estimate_covariance
        from miuq.spd import riemannian_distance

        es = generate_synthetic(n_classes=2, n_channels=4, epochs_per_class=1,
                                n_samples=20000, separation=3.0, jitter=0.0, seed=3)
        c0 = estimate_covariance(es.tensor[0].astype(np.float64))
        c1 = estimate_covariance(es.tensor[1].astype(np.float64))
        assert riemannian_distance(c0, c1) == pytest.approx(3.0, abs=0.25)

    def test_zero_jitter_epochs_differ_only_by_noise(self):
        es = generate_synthetic(n_classes=2, n_channels=3, epochs_per_class=2,
                                n_samples=60, jitter=0.0, seed=5)
        assert np.abs(es.tensor[0] - es.tensor[1]).max() > 0

    def test_parameter_validation(self):
        with pytest.raises(ValidationError):
            generate_synthetic(n_classes=1)
        with pytest.raises(ValidationError):
            generate_synthetic(n_classes=5, n_channels=4)
        with pytest.raises(ValidationError):
            generate_synthetic(epochs_per_class=0)
        with pytest.raises(ValidationError):
            generate_synthetic(n_samples=8, n_channels=8)
        with pytest.raises(ValidationError):
            generate_synthetic(ambiguous_fraction=1.5)
        with pytest.raises(ValidationError):
            generate_synthetic(separation=-1.0)
        with pytest.raises(ValidationError):
            generate_synthetic(separation=1e6)
        with pytest.raises(ValidationError):
            generate_synthetic(jitter=-0.5)

    def test_round_trip_through_disk(self, tmp_path):
        es = generate_synthetic(seed=11, epochs_per_class=3, n_samples=40)
        write_epochset(es, tmp_path / "synth")
        back = read_epochset(tmp_path / "synth")
        np.testing.assert_array_equal(back.tensor, es.tensor)
        assert back.provenance == es.provenance
