"""
FFCE Segmenter - Volume Store
MVOL volume files and dataset manifests on local disk.
"""

import logging
import struct
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple, Union

import numpy as np

from core.error_monitor import DataFormatError
from data.samples import LabelVolume, Volume

logger = logging.getLogger(__name__)

MVOL_MAGIC = b'MVOL'
MVOL_VERSION = 1
HEADER = struct.Struct('<4sBBH3Q')          # magic, version, dtype code, reserved, D, H, W
HEADER_SIZE = HEADER.size                   # 32

DTYPE_FLOAT32 = 0
DTYPE_UINT16 = 1
_PAYLOAD_DTYPES = {DTYPE_FLOAT32: np.dtype('<f4'), DTYPE_UINT16: np.dtype('<u2')}

MANIFEST_TAG = 'ffce-manifest'

PathLike = Union[str, Path]


@contextmanager
def _handle_io(operation: str, path: PathLike) -> Iterator[None]:
    """Translate filesystem failures into DataFormatError naming the file."""
    try:
        yield
    except OSError as e:
        raise DataFormatError(f"{operation} failed: {e.strerror or e}", path=str(path)) from e


# Volumes

def _parse_header(raw: bytes, path: PathLike) -> Tuple[int, Tuple[int, int, int]]:
    if len(raw) < HEADER_SIZE:
        raise DataFormatError(f"truncated header ({len(raw)} of {HEADER_SIZE} bytes)", offset=len(raw), path=str(path))
    magic, version, code, reserved, depth, height, width = HEADER.unpack_from(raw)
    if magic != MVOL_MAGIC:
        raise DataFormatError(f"bad magic {magic!r}, expected {MVOL_MAGIC!r}", offset=0, path=str(path))
    if version != MVOL_VERSION:
        raise DataFormatError(f"unsupported version {version}, expected {MVOL_VERSION}", offset=4, path=str(path))
    if code not in _PAYLOAD_DTYPES:
        raise DataFormatError(f"unknown dtype code {code}", offset=5, path=str(path))
    if reserved != 0:
        raise DataFormatError(f"reserved bytes must be zero, got {reserved:#06x}", offset=6, path=str(path))
    dims = (depth, height, width)
    if 0 in dims:
        raise DataFormatError(f"extents must be positive, got {dims}", offset=8, path=str(path))
    return code, dims


def decode_volume(raw: bytes, path: PathLike = '<memory>', volume_id: str = '') -> Union[Volume, LabelVolume]:
    """
    Decode MVOL bytes.

    Args:
        raw: Whole file contents
        path: Source name used in diagnostics
        volume_id: Identifier given to the decoded volume

    Returns:
        Volume for float payloads, LabelVolume for uint16 payloads
    """
    code, dims = _parse_header(raw, path)
    dtype = _PAYLOAD_DTYPES[code]
    expected = int(np.prod(dims)) * dtype.itemsize
    actual = len(raw) - HEADER_SIZE
    if actual != expected:
        raise DataFormatError(
            f"payload holds {actual} bytes but dims {dims} need {expected}",
            offset=HEADER_SIZE + min(actual, expected), path=str(path),
        )
    payload = np.frombuffer(raw, dtype=dtype, offset=HEADER_SIZE).reshape(dims)

    if code == DTYPE_FLOAT32:
        finite = np.isfinite(payload)
        if not finite.all():
            first = int(np.argmin(finite.reshape(-1)))
            raise DataFormatError("non-finite intensity", offset=HEADER_SIZE + first * dtype.itemsize, path=str(path))
        return Volume(payload.astype(np.float32), id=volume_id)
    return LabelVolume(payload.astype(np.uint16), id=volume_id)


def encode_volume(volume: Union[Volume, LabelVolume]) -> bytes:
    """MVOL bytes for a volume; labels are stored as uint16, intensities as float32."""
    if isinstance(volume, LabelVolume):
        code, grid = DTYPE_UINT16, volume.labels
    else:
        code, grid = DTYPE_FLOAT32, volume.intensities
    header = HEADER.pack(MVOL_MAGIC, MVOL_VERSION, code, 0, *grid.shape)
    return header + np.ascontiguousarray(grid, dtype=_PAYLOAD_DTYPES[code]).tobytes()


def read_volume(path: PathLike) -> Union[Volume, LabelVolume]:
    path = Path(path)
    with _handle_io('reading volume', path):
        raw = path.read_bytes()
    volume = decode_volume(raw, path, volume_id=path.stem)
    logger.debug(f"Read {type(volume).__name__} {volume.dims} from {path}")
    return volume


def write_volume(volume: Union[Volume, LabelVolume], path: PathLike) -> Path:
    path = Path(path)
    with _handle_io('writing volume', path):
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_volume(volume))
    logger.debug(f"Wrote {type(volume).__name__} {volume.dims} to {path}")
    return path


def read_volume_header(path: PathLike) -> Tuple[int, Tuple[int, int, int]]:
    """Dtype code and extents of an MVOL file without reading its payload."""
    path = Path(path)
    with _handle_io('reading volume header', path):
        with path.open('rb') as handle:
            raw = handle.read(HEADER_SIZE)
    return _parse_header(raw, path)


# Manifests

@dataclass
class DatasetManifest:
    """Image/label file pairs plus the class and stack settings they were made for."""
    entries: List[Tuple[Path, Path]]
    split: str = 'train'
    num_classes: Optional[int] = None
    stack_depth: Optional[int] = None
    path: Optional[Path] = None
    metadata: Dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def to_dict(self) -> dict:
        return {
            'split': self.split,
            'num_classes': self.num_classes,
            'stack_depth': self.stack_depth,
            'entries': [[str(image), str(label)] for image, label in self.entries],
        }


def _header_line(manifest: DatasetManifest) -> str:
    fields = {'split': manifest.split}
    if manifest.num_classes is not None:
        fields['num_classes'] = str(manifest.num_classes)
    if manifest.stack_depth is not None:
        fields['stack_depth'] = str(manifest.stack_depth)
    fields.update(manifest.metadata)
    return '# ' + ' '.join([MANIFEST_TAG] + [f"{key}={value}" for key, value in fields.items()])


def write_manifest(manifest: DatasetManifest, path: PathLike) -> Path:
    """
    Write `image<TAB>label` lines, paths relative to the manifest's directory
    when they live under it.
    """
    path = Path(path)
    base = path.parent.resolve()

    def relative(entry: Path) -> str:
        try:
            return Path(entry).resolve().relative_to(base).as_posix()
        except ValueError:
            return str(entry)

    lines = [_header_line(manifest)]
    lines.extend(f"{relative(image)}\t{relative(label)}" for image, label in manifest.entries)
    with _handle_io('writing manifest', path):
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
    manifest.path = path
    return path


def read_manifest(path: PathLike, check_dims: bool = True) -> DatasetManifest:
    """
    Parse a manifest.

    Args:
        path: Manifest file
        check_dims: Verify every referenced file exists and that each pair's
            extents agree (headers only)

    Returns:
        DatasetManifest with absolute entry paths
    """
    path = Path(path)
    with _handle_io('reading manifest', path):
        text = path.read_text(encoding='utf-8')

    manifest = DatasetManifest(entries=[], path=path)
    base = path.parent
    offset = 0
    for number, line in enumerate(text.splitlines(keepends=True), start=1):
        line_offset, offset = offset, offset + len(line.encode('utf-8'))
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith('#'):
            _apply_header(manifest, stripped.lstrip('#').split(), path, line_offset)
            continue
        parts = stripped.split('\t')
        if len(parts) != 2:
            raise DataFormatError(f"line {number}: expected image<TAB>label", offset=line_offset, path=str(path))
        image, label = (Path(part) if Path(part).is_absolute() else base / part for part in parts)
        manifest.entries.append((image, label))

    if check_dims:
        for image, label in manifest.entries:
            _, image_dims = read_volume_header(image)
            _, label_dims = read_volume_header(label)
            if image_dims != label_dims:
                raise DataFormatError(f"{image.name} dims {image_dims} differ from {label.name} dims {label_dims}",
                                      path=str(path))
    logger.info(f"Loaded manifest {path} with {len(manifest)} volume pairs")
    return manifest


def _apply_header(manifest: DatasetManifest, tokens: List[str], path: Path, offset: int) -> None:
    for token in tokens:
        if '=' not in token:
            continue
        key, value = token.split('=', 1)
        try:
            if key == 'split':
                manifest.split = value
            elif key == 'num_classes':
                manifest.num_classes = int(value)
            elif key == 'stack_depth':
                manifest.stack_depth = int(value)
            else:
                manifest.metadata[key] = value
        except ValueError:
            raise DataFormatError(f"bad manifest header value {token!r}", offset=offset, path=str(path)) from None
