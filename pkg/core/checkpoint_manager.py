"""
FFCE Segmenter - Checkpoint Manager
FFCK checkpoint files: a JSON metadata header followed by named,
little-endian array blobs. Tracks written checkpoints and prunes old ones.
"""

import json
import logging
import os
import struct
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from core.error_monitor import DataFormatError

logger = logging.getLogger(__name__)

FFCK_MAGIC = b'FFCK'
FFCK_VERSION = 1
PREAMBLE = struct.Struct('<4sB3xQ')     # magic, version, reserved, metadata length
COUNT = struct.Struct('<Q')
NAME_LENGTH = struct.Struct('<H')
BLOB_HEADER = struct.Struct('<BB')      # dtype code, rank
EXTENT = struct.Struct('<Q')

_DTYPE_CODES = {
    0: np.dtype('<f4'),
    1: np.dtype('<f8'),
    2: np.dtype('<u2'),
    3: np.dtype('<i8'),
}
_CODE_FOR_DTYPE = {dtype.str: code for code, dtype in _DTYPE_CODES.items()}

PathLike = Union[str, Path]


class CheckpointStatus(Enum):
    """Checkpoint operation status"""
    WRITTEN = "written"
    LOADED = "loaded"
    FAILED = "failed"
    PRUNED = "pruned"


@dataclass
class CheckpointRecord:
    """Record of a checkpoint operation"""
    checkpoint_id: str
    timestamp: datetime
    status: CheckpointStatus
    path: str
    size_bytes: int = 0
    iteration: Optional[int] = None
    error_message: Optional[str] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        """Convert checkpoint record to dictionary"""
        return {
            'checkpoint_id': self.checkpoint_id,
            'timestamp': self.timestamp.isoformat(),
            'status': self.status.value,
            'path': self.path,
            'size_bytes': self.size_bytes,
            'iteration': self.iteration,
            'error_message': self.error_message,
            'metadata': self.metadata,
        }


class _Reader:
    """Sequential reader that reports the byte offset of any shortfall."""

    def __init__(self, raw: bytes, path: str):
        self.raw = raw
        self.path = path
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        end = self.offset + size
        if end > len(self.raw):
            raise DataFormatError(f"truncated checkpoint while reading {what}", offset=self.offset, path=self.path)
        chunk = self.raw[self.offset:end]
        self.offset = end
        return chunk

    def unpack(self, layout: struct.Struct, what: str) -> tuple:
        return layout.unpack(self.take(layout.size, what))


def encode_checkpoint(metadata: Dict[str, Any], blobs: Dict[str, np.ndarray]) -> bytes:
    """
    Serialize metadata and named arrays.

    Args:
        metadata: JSON-serializable header data
        blobs: Arrays keyed by name, written in key order

    Returns:
        FFCK bytes
    """
    header = json.dumps(metadata, sort_keys=True).encode('utf-8')
    parts = [PREAMBLE.pack(FFCK_MAGIC, FFCK_VERSION, len(header)), header, COUNT.pack(len(blobs))]
    for name, array in blobs.items():
        array = np.asarray(array)
        dtype = array.dtype.newbyteorder('<')
        if dtype.str not in _CODE_FOR_DTYPE:
            raise DataFormatError(f"blob {name!r} has unsupported dtype {array.dtype}")
        encoded_name = name.encode('utf-8')
        parts.append(NAME_LENGTH.pack(len(encoded_name)))
        parts.append(encoded_name)
        parts.append(BLOB_HEADER.pack(_CODE_FOR_DTYPE[dtype.str], array.ndim))
        parts.extend(EXTENT.pack(extent) for extent in array.shape)
        parts.append(np.ascontiguousarray(array, dtype=dtype).tobytes())
    return b''.join(parts)


def decode_checkpoint(raw: bytes, path: PathLike = '<memory>') -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    """Inverse of encode_checkpoint; rejects bad magic, versions, truncation and trailing bytes."""
    reader = _Reader(raw, str(path))
    magic, version, header_length = reader.unpack(PREAMBLE, 'preamble')
    if magic != FFCK_MAGIC:
        raise DataFormatError(f"bad magic {magic!r}, expected {FFCK_MAGIC!r}", offset=0, path=str(path))
    if version != FFCK_VERSION:
        raise DataFormatError(f"unsupported checkpoint version {version}, expected {FFCK_VERSION}",
                              offset=4, path=str(path))
    header_offset = reader.offset
    try:
        metadata = json.loads(reader.take(header_length, 'metadata').decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataFormatError(f"unreadable metadata: {e}", offset=header_offset, path=str(path)) from None

    (count,) = reader.unpack(COUNT, 'blob count')
    blobs: Dict[str, np.ndarray] = {}
    for _ in range(count):
        blob_offset = reader.offset
        (name_length,) = reader.unpack(NAME_LENGTH, 'blob name length')
        name = reader.take(name_length, 'blob name').decode('utf-8')
        code, rank = reader.unpack(BLOB_HEADER, f"blob {name!r} header")
        if code not in _DTYPE_CODES:
            raise DataFormatError(f"blob {name!r} has unknown dtype code {code}", offset=blob_offset, path=str(path))
        shape = tuple(reader.unpack(EXTENT, f"blob {name!r} extents")[0] for _ in range(rank))
        dtype = _DTYPE_CODES[code]
        payload = reader.take(int(np.prod(shape, dtype=np.int64)) * dtype.itemsize, f"blob {name!r} payload")
        blobs[name] = np.frombuffer(payload, dtype=dtype).reshape(shape).copy()

    if reader.offset != len(raw):
        raise DataFormatError(f"{len(raw) - reader.offset} trailing bytes after last blob",
                              offset=reader.offset, path=str(path))
    return metadata, blobs


class CheckpointManager:
    """
    Writes and reads checkpoint files and keeps a bounded log of operations.
    Writes go to a temporary sibling first and are moved into place.
    """

    def __init__(self, max_records: int = 200):
        self._records: List[CheckpointRecord] = []
        self._max_records = max_records
        self._stats = {
            'checkpoints_written': 0,
            'checkpoints_loaded': 0,
            'checkpoints_pruned': 0,
            'failures': 0,
            'bytes_written': 0,
        }

    def _generate_checkpoint_id(self, path: Path) -> str:
        """Generate a unique checkpoint ID"""
        timestamp = datetime.now(timezone.utc).strftime("%Y%m%d_%H%M%S_%f")
        return f"{path.stem}_{timestamp}"

    def _add_record(self, record: CheckpointRecord) -> CheckpointRecord:
        self._records.append(record)
        if len(self._records) > self._max_records:
            self._records = self._records[-self._max_records:]
        return record

    def save(self, path: PathLike, metadata: Dict[str, Any], blobs: Dict[str, np.ndarray]) -> CheckpointRecord:
        """
        Write a checkpoint.

        Args:
            path: Destination file
            metadata: JSON-serializable header data; an 'iteration' key is recorded
            blobs: Named arrays

        Returns:
            CheckpointRecord of the write
        """
        path = Path(path)
        record = CheckpointRecord(
            checkpoint_id=self._generate_checkpoint_id(path),
            timestamp=datetime.now(timezone.utc),
            status=CheckpointStatus.WRITTEN,
            path=str(path),
            iteration=metadata.get('iteration'),
        )
        raw = encode_checkpoint(metadata, blobs)
        temporary = path.with_name(path.name + '.tmp')
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            temporary.write_bytes(raw)
            os.replace(temporary, path)
        except OSError as e:
            record.status = CheckpointStatus.FAILED
            record.error_message = str(e)
            self._stats['failures'] += 1
            self._add_record(record)
            raise DataFormatError(f"writing checkpoint failed: {e.strerror or e}", path=str(path)) from e

        record.size_bytes = len(raw)
        self._stats['checkpoints_written'] += 1
        self._stats['bytes_written'] += len(raw)
        logger.info(f"Checkpoint written: {path} ({len(raw)} bytes, iteration {record.iteration})")
        return self._add_record(record)

    def load(self, path: PathLike) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
        """Read a checkpoint and return (metadata, blobs)."""
        path = Path(path)
        try:
            raw = path.read_bytes()
        except OSError as e:
            self._stats['failures'] += 1
            raise DataFormatError(f"reading checkpoint failed: {e.strerror or e}", path=str(path)) from e
        metadata, blobs = decode_checkpoint(raw, path)
        self._stats['checkpoints_loaded'] += 1
        self._add_record(CheckpointRecord(
            checkpoint_id=self._generate_checkpoint_id(path),
            timestamp=datetime.now(timezone.utc),
            status=CheckpointStatus.LOADED,
            path=str(path),
            size_bytes=len(raw),
            iteration=metadata.get('iteration'),
        ))
        logger.info(f"Checkpoint loaded: {path} (iteration {metadata.get('iteration')})")
        return metadata, blobs

    def prune(self, directory: PathLike, keep_last: int, pattern: str = '*.ffck') -> List[Path]:
        """
        Delete all but the `keep_last` most recently modified checkpoints in
        `directory` matching `pattern`.

        Returns:
            Paths that were removed
        """
        if keep_last < 1:
            return []
        candidates = sorted(Path(directory).glob(pattern), key=lambda p: (p.stat().st_mtime_ns, p.name))
        removed = []
        for stale in candidates[:-keep_last]:
            try:
                stale.unlink()
            except OSError as e:
                logger.error(f"Could not prune checkpoint {stale}: {e}")
                continue
            removed.append(stale)
            self._stats['checkpoints_pruned'] += 1
            self._add_record(CheckpointRecord(
                checkpoint_id=self._generate_checkpoint_id(stale),
                timestamp=datetime.now(timezone.utc),
                status=CheckpointStatus.PRUNED,
                path=str(stale),
            ))
        if removed:
            logger.info(f"Pruned {len(removed)} old checkpoints from {directory}")
        return removed

    def list_checkpoints(self, status: Optional[CheckpointStatus] = None) -> List[Dict[str, Any]]:
        return [record.to_dict() for record in self._records if status is None or record.status == status]

    def get_stats(self) -> Dict[str, Any]:
        return dict(self._stats)


# Global checkpoint manager instance
checkpoint_manager = CheckpointManager()
