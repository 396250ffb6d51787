"""Writer tests: the consumer package's reader is the format oracle."""

import numpy as np
import pytest

import miuq
from miuq_export.errors import ExportError
from miuq_export.formats import write_epochset_dir


def sample_pieces(seed=0, n_epochs=6, n_channels=3, n_samples=40):
    rng = np.random.default_rng(seed)
    tensor = rng.normal(size=(n_epochs, n_channels, n_samples))
    labels = ["right_hand" if i % 2 else "feet" for i in range(n_epochs)]
    return {
        "tensor": tensor,
        "labels": labels,
        "class_ids": ["right_hand", "feet"],
        "channel_names": ["C3", "Cz", "C4"],
        "sample_rate_hz": 512.0,
        "dataset_id": "steyrl",
        "subject_id": "s01",
        "provenance": {"exporter": {"name": "miuq-export"}},
    }


class TestRoundTrip:
    def test_consumer_reader_accepts_output(self, tmp_path):
        pieces = sample_pieces()
        write_epochset_dir(tmp_path / "s01", **pieces)
        es = miuq.read_epochset(tmp_path / "s01")
        assert es.dataset_id == "steyrl"
        assert es.subject_id == "s01"
        assert es.class_ids == ("right_hand", "feet")
        assert es.channel_names == ("C3", "Cz", "C4")
        assert es.sample_rate_hz == 512.0
        assert list(es.labels) == pieces["labels"]
        assert es.provenance["exporter"]["name"] == "miuq-export"

    def test_tensor_survives_bit_exact_as_float32(self, tmp_path):
        pieces = sample_pieces()
        write_epochset_dir(tmp_path / "s01", **pieces)
        es = miuq.read_epochset(tmp_path / "s01")
        np.testing.assert_array_equal(
            es.tensor, pieces["tensor"].astype(np.float32)
        )

    def test_reexport_is_byte_identical(self, tmp_path):
        pieces = sample_pieces()
        write_epochset_dir(tmp_path / "a", **pieces)
        write_epochset_dir(tmp_path / "b", **pieces)
        for name in ("manifest.json", "tensor.f32", "labels.txt"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_corruption_is_caught_by_consumer(self, tmp_path):
        write_epochset_dir(tmp_path / "s01", **sample_pieces())
        blob = bytearray((tmp_path / "s01" / "tensor.f32").read_bytes())
        blob[7] ^= 0x10
        (tmp_path / "s01" / "tensor.f32").write_bytes(bytes(blob))
        with pytest.raises(miuq.ChecksumError):
            miuq.read_epochset(tmp_path / "s01")


class TestValidation:
    def test_rejects_bad_tensor_rank(self, tmp_path):
        pieces = sample_pieces()
        pieces["tensor"] = pieces["tensor"][0]
        with pytest.raises(ExportError, match="epochs, channels, samples"):
            write_epochset_dir(tmp_path / "x", **pieces)

    def test_rejects_label_outside_vocabulary(self, tmp_path):
        pieces = sample_pieces()
        pieces["labels"][2] = "tongue"
        with pytest.raises(ExportError, match="tongue"):
            write_epochset_dir(tmp_path / "x", **pieces)

    def test_rejects_label_count_mismatch(self, tmp_path):
        pieces = sample_pieces()
        pieces["labels"] = pieces["labels"][:-1]
        with pytest.raises(ExportError, match="labels for"):
            write_epochset_dir(tmp_path / "x", **pieces)

    def test_rejects_nonfinite_values(self, tmp_path):
        pieces = sample_pieces()
        pieces["tensor"][1, 1, 1] = np.nan
        with pytest.raises(ExportError, match="non-finite"):
            write_epochset_dir(tmp_path / "x", **pieces)

    def test_rejects_channel_name_mismatch(self, tmp_path):
        pieces = sample_pieces()
        pieces["channel_names"] = ["C3", "Cz"]
        with pytest.raises(ExportError, match="channel names"):
            write_epochset_dir(tmp_path / "x", **pieces)

    def test_rejects_unserializable_provenance(self, tmp_path):
        pieces = sample_pieces()
        pieces["provenance"] = {"bad": object()}
        with pytest.raises(ExportError, match="JSON"):
            write_epochset_dir(tmp_path / "x", **pieces)

    def test_existing_directory_needs_overwrite(self, tmp_path):
        pieces = sample_pieces()
        write_epochset_dir(tmp_path / "s01", **pieces)
        with pytest.raises(FileExistsError):
            write_epochset_dir(tmp_path / "s01", **pieces)
        write_epochset_dir(tmp_path / "s01", overwrite=True, **pieces)
