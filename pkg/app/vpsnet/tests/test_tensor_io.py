import numpy as np
import pytest
import torch

from vpsnet.exceptions import CheckpointError
from vpsnet.tensor_io import load_tensors, save_tensors


def test_named_tensors_and_metadata_survive(tmp_path):
    path = save_tensors(
        tmp_path / "nested" / "t.vpst",
        {"w": torch.arange(6.0).reshape(2, 3), "b": np.array([0.5], dtype=np.float64), "s": np.float32(2.0)},
        {"format": "x", "steps": 3},
    )
    tensors, metadata = load_tensors(path)
    assert list(tensors) == ["w", "b", "s"]
    np.testing.assert_array_equal(tensors["w"], np.arange(6.0, dtype=np.float32).reshape(2, 3))
    assert tensors["b"].dtype == np.float32
    assert tensors["s"].shape == ()
    assert metadata == {"format": "x", "steps": 3}


def test_header_is_little_endian_length_then_json(tmp_path):
    path = save_tensors(tmp_path / "t.vpst", {"a": np.ones(2)})
    raw = path.read_bytes()
    header_len = int.from_bytes(raw[:8], "little")
    assert raw[8 : 8 + header_len].startswith(b"{")
    assert len(raw) == 8 + header_len + 8


@pytest.mark.parametrize(
    "content",
    [b"", b"\x05\x00", (1000).to_bytes(8, "little") + b"{}", (2).to_bytes(8, "little") + b"\xff\xfe"],
)
def test_corrupt_files_raise(tmp_path, content):
    path = tmp_path / "bad.vpst"
    path.write_bytes(content)
    with pytest.raises(CheckpointError):
        load_tensors(path)


def test_truncated_payload_raises(tmp_path):
    path = save_tensors(tmp_path / "t.vpst", {"a": np.ones(16)})
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(CheckpointError):
        load_tensors(path)


def test_missing_file_raises(tmp_path):
    with pytest.raises(CheckpointError):
        load_tensors(tmp_path / "absent.vpst")
