import numpy as np
import pytest

from prunekit.archspec import tiny4
from prunekit.errors import DataFormatError
from prunekit.nncore import Network
from prunekit.nncore.checkpoint import (
    MAGIC,
    load_model,
    load_state,
    save_model,
    save_state,
)

HASH = "ab" * 32  # any 64-hex-digit tag works for raw state files


def sample_arrays(rng):
    return {
        "conv.weight": rng.normal(size=(4, 3, 3, 3)).astype(np.float32),
        "conv.bias": rng.normal(size=4).astype(np.float64),
        "counts": rng.integers(0, 100, size=(2, 5)).astype(np.int64),
        "scalarish": np.array([3.5], dtype=np.float32),
    }


class TestStateRoundtrip:
    def test_exact_across_dtypes_and_shapes(self, tmp_path, rng):
        arrays = sample_arrays(rng)
        path = tmp_path / "state.bin"
        save_state(path, arrays, HASH)
        got_hash, got = load_state(path)
        assert got_hash == HASH
        assert set(got) == set(arrays)
        for name, arr in arrays.items():
            assert got[name].dtype == arr.dtype
            assert got[name].shape == arr.shape
            np.testing.assert_array_equal(got[name], arr)

    def test_bytes_independent_of_insertion_order(self, tmp_path, rng):
        arrays = sample_arrays(rng)
        reordered = dict(reversed(list(arrays.items())))
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        save_state(a, arrays, HASH)
        save_state(b, reordered, HASH)
        assert a.read_bytes() == b.read_bytes()

    def test_empty_mapping_roundtrips(self, tmp_path):
        path = tmp_path / "empty.bin"
        save_state(path, {}, HASH)
        got_hash, got = load_state(path)
        assert got_hash == HASH and got == {}

    def test_unsupported_dtype_rejected(self, tmp_path):
        with pytest.raises(DataFormatError, match="unsupported dtype"):
            save_state(tmp_path / "x.bin",
                       {"bad": np.zeros(3, dtype=np.int32)}, HASH)


class TestCorruption:
    def _saved(self, tmp_path, rng):
        path = tmp_path / "state.bin"
        save_state(path, sample_arrays(rng), HASH)
        return path

    def test_bad_magic(self, tmp_path, rng):
        path = self._saved(tmp_path, rng)
        blob = bytearray(path.read_bytes())
        blob[0] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(DataFormatError, match="magic") as err:
            load_state(path)
        assert err.value.offset == 0

    def test_bad_version(self, tmp_path, rng):
        path = self._saved(tmp_path, rng)
        blob = bytearray(path.read_bytes())
        blob[len(MAGIC)] = 99
        path.write_bytes(bytes(blob))
        with pytest.raises(DataFormatError, match="version 99") as err:
            load_state(path)
        assert err.value.offset == 8

    def test_truncation_reports_read_position(self, tmp_path, rng):
        path = self._saved(tmp_path, rng)
        blob = path.read_bytes()
        path.write_bytes(blob[:len(blob) - 7])
        with pytest.raises(DataFormatError, match="truncated") as err:
            load_state(path)
        assert err.value.offset is not None
        assert 0 < err.value.offset <= len(blob) - 7

    def test_trailing_bytes_rejected(self, tmp_path, rng):
        path = self._saved(tmp_path, rng)
        blob = path.read_bytes()
        path.write_bytes(blob + b"junk")
        with pytest.raises(DataFormatError, match="trailing") as err:
            load_state(path)
        assert err.value.offset == len(blob)


class TestModelCheckpoints:
    def test_roundtrip_restores_forward_pass(self, tmp_path, rng):
        template = tiny4(num_classes=4)
        net = Network(template, seed=5)
        x = rng.normal(size=(2, 3, 16, 16)).astype(np.float32)
        want = net.forward(x, train=False)

        path = tmp_path / "model.bin"
        save_model(path, net)
        other = Network(template, seed=999)  # different init, then overwritten
        load_model(path, other)
        got = other.forward(x, train=False)
        np.testing.assert_array_equal(got, want)

    def test_template_hash_mismatch_rejected(self, tmp_path):
        net = Network(tiny4(num_classes=4), seed=0)
        path = tmp_path / "model.bin"
        save_model(path, net)
        different = Network(tiny4(num_classes=7), seed=0)
        with pytest.raises(DataFormatError, match="template"):
            load_model(path, different)
