import os
import struct

import numpy as np
import pytest

from core.checkpoint_manager import (
    PREAMBLE,
    CheckpointManager,
    CheckpointStatus,
    decode_checkpoint,
    encode_checkpoint,
)
from core.error_monitor import DataFormatError


@pytest.fixture
def manager():
    return CheckpointManager()


def _blobs(rng):
    return {
        'param/w': rng.standard_normal((3, 2)).astype(np.float32),
        'momentum/w': rng.standard_normal((3, 2)),
        'labels': np.arange(4, dtype=np.uint16),
        'scalar': np.array(7, dtype=np.int64),
    }


def test_blobs_keep_dtype_shape_and_order(rng):
    blobs = _blobs(rng)
    metadata, decoded = decode_checkpoint(encode_checkpoint({'iteration': 3}, blobs))
    assert metadata == {'iteration': 3}
    assert list(decoded) == list(blobs)
    for name, array in blobs.items():
        assert decoded[name].dtype == array.dtype.newbyteorder('<')
        assert decoded[name].tobytes() == array.tobytes()


def test_big_endian_arrays_are_stored_little_endian():
    array = np.arange(3, dtype='>f8')
    _, decoded = decode_checkpoint(encode_checkpoint({}, {'x': array}))
    np.testing.assert_array_equal(decoded['x'], [0.0, 1.0, 2.0])


def test_encoding_is_deterministic(rng):
    blobs = _blobs(rng)
    assert encode_checkpoint({'b': 1, 'a': 2}, blobs) == encode_checkpoint({'a': 2, 'b': 1}, blobs)


def test_rejects_unsupported_dtype():
    with pytest.raises(DataFormatError, match='unsupported dtype'):
        encode_checkpoint({}, {'c': np.zeros(2, dtype=np.complex64)})


def test_rejects_bad_magic_and_version(rng):
    raw = encode_checkpoint({}, _blobs(rng))
    with pytest.raises(DataFormatError, match='magic') as excinfo:
        decode_checkpoint(b'XXXX' + raw[4:])
    assert excinfo.value.offset == 0
    with pytest.raises(DataFormatError, match='version'):
        decode_checkpoint(raw[:4] + bytes([9]) + raw[5:])


def test_rejects_truncation_with_offset(rng):
    raw = encode_checkpoint({'iteration': 1}, _blobs(rng))
    with pytest.raises(DataFormatError, match='truncated') as excinfo:
        decode_checkpoint(raw[:-1])
    assert excinfo.value.offset is not None and excinfo.value.offset < len(raw)


def test_rejects_trailing_bytes(rng):
    raw = encode_checkpoint({}, _blobs(rng))
    with pytest.raises(DataFormatError, match='trailing'):
        decode_checkpoint(raw + b'\x00')


def test_rejects_unreadable_metadata():
    raw = PREAMBLE.pack(b'FFCK', 1, 3) + b'{x]' + struct.pack('<Q', 0)
    with pytest.raises(DataFormatError, match='metadata') as excinfo:
        decode_checkpoint(raw)
    assert excinfo.value.offset == PREAMBLE.size


def test_manager_save_and_load(tmp_path, manager, rng):
    blobs = _blobs(rng)
    record = manager.save(tmp_path / 'run' / 'a.ffck', {'iteration': 5}, blobs)
    assert record.status is CheckpointStatus.WRITTEN
    assert record.iteration == 5
    assert not (tmp_path / 'run' / 'a.ffck.tmp').exists()

    metadata, loaded = manager.load(tmp_path / 'run' / 'a.ffck')
    assert metadata['iteration'] == 5
    assert set(loaded) == set(blobs)
    stats = manager.get_stats()
    assert stats['checkpoints_written'] == 1
    assert stats['checkpoints_loaded'] == 1
    assert stats['bytes_written'] == record.size_bytes
    assert [entry['status'] for entry in manager.list_checkpoints()] == ['written', 'loaded']


def test_manager_load_missing_file(tmp_path, manager):
    with pytest.raises(DataFormatError, match='reading checkpoint'):
        manager.load(tmp_path / 'missing.ffck')
    assert manager.get_stats()['failures'] == 1


def test_prune_keeps_newest(tmp_path, manager):
    paths = []
    for index in range(4):
        path = tmp_path / f'epoch_{index}.ffck'
        manager.save(path, {'iteration': index}, {})
        os.utime(path, ns=(index * 10**9, index * 10**9))
        paths.append(path)
    removed = manager.prune(tmp_path, keep_last=2)
    assert removed == paths[:2]
    assert sorted(p.name for p in tmp_path.glob('*.ffck')) == ['epoch_2.ffck', 'epoch_3.ffck']
    assert manager.get_stats()['checkpoints_pruned'] == 2
    assert len(manager.list_checkpoints(CheckpointStatus.PRUNED)) == 2
