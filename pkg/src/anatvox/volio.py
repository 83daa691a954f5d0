"""Volume file I/O: minimal single-file NIfTI-1 and a raw + JSON sidecar pair.

NIfTI-1 support is deliberately small and dependency free. Honored header
fields (byte offsets in the 348-byte header):

    sizeof_hdr   int32    @0    must be 348
    dim          int16[8] @40   dim[0] = 3, dim[1..3] = (nx, ny, nz)
    datatype     int16    @70   2 uint8 | 4 int16 | 8 int32 | 16 float32
    bitpix       int16    @72
    pixdim       float[8] @76   pixdim[1..3] = (sx, sy, sz) in mm
    vox_offset   float    @108  352 for files we write
    scl_slope    float    @112  applied on read when nonzero
    scl_inter    float    @116
    magic        char[4]  @344  "n+1\\0"

Everything else (qform/sform in particular) is carried as opaque bytes: a
header read from disk is kept on the metadata and written back verbatim
apart from the honored fields. Files are little-endian regardless of host;
byte-swapped input is rejected rather than converted. Uncompressed .nii
only; decompress .nii.gz externally.

The raw format is <name>.raw (little-endian voxels, z slowest) next to
<name>.json holding {"dims": [nz, ny, nx], "spacing": [sz, sy, sx],
"datatype": "float32"}.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import Dims, Spacing, VoxelGrid

HEADER_SIZE = 348
VOX_OFFSET = 352
MAGIC = b"n+1\x00"

DATATYPES = {"uint8": 2, "int16": 4, "int32": 8, "float32": 16}
_CODE_TO_NAME = {v: k for k, v in DATATYPES.items()}
_NP_DTYPES = {
    "uint8": np.dtype("<u1"),
    "int16": np.dtype("<i2"),
    "int32": np.dtype("<i4"),
    "float32": np.dtype("<f4"),
}
_BITPIX = {"uint8": 8, "int16": 16, "int32": 32, "float32": 32}


class VolumeFormatError(ValueError):
    """File is not a volume this reader understands."""


class UnsupportedDatatypeError(VolumeFormatError):
    """Header datatype code outside the supported set."""


class CorruptFileError(VolumeFormatError):
    """Header claims more data than the file holds."""


@dataclass
class VolumeMeta:
    dims: Dims
    spacing: Spacing
    datatype: str
    scl_slope: float = 0.0
    scl_inter: float = 0.0
    source_format: str = "nifti1"
    raw_header: bytes | None = None

    def __post_init__(self):
        if self.datatype not in DATATYPES:
            raise UnsupportedDatatypeError(
                f"unsupported datatype {self.datatype!r}, expected one of {sorted(DATATYPES)}"
            )
        if self.source_format not in ("nifti1", "rawjson"):
            raise ValueError(f"unknown source format {self.source_format!r}")

    @classmethod
    def for_grid(cls, grid: VoxelGrid, datatype: str | None = None,
                 source_format: str = "nifti1") -> "VolumeMeta":
        if datatype is None:
            datatype = _natural_datatype(grid.data.dtype)
        return cls(grid.dims, grid.spacing, datatype, source_format=source_format)


def _natural_datatype(dtype: np.dtype) -> str:
    if dtype == np.bool_ or dtype == np.uint8:
        return "uint8"
    if dtype == np.int16:
        return "int16"
    if np.issubdtype(dtype, np.integer):
        return "int32"
    return "float32"


def _encode_payload(grid: VoxelGrid, datatype: str, path) -> bytes:
    """Grid data as little-endian bytes, refusing any lossy conversion."""
    data = grid.data
    target = _NP_DTYPES[datatype]
    if data.dtype == np.bool_:
        cast = data.astype(target)
    else:
        cast = data.astype(target)
        back = cast.astype(data.dtype)
        if not np.array_equal(back, data):
            raise ValueError(
                f"{path}: datatype {datatype} cannot losslessly represent the grid data"
            )
    return np.ascontiguousarray(cast).tobytes()


# ---------------------------------------------------------------------------
# NIfTI-1
# ---------------------------------------------------------------------------

def _build_header(meta: VolumeMeta) -> bytes:
    hdr = bytearray(meta.raw_header) if meta.raw_header else bytearray(HEADER_SIZE)
    if len(hdr) != HEADER_SIZE:
        raise ValueError("stored raw header has wrong size")
    dims = meta.dims
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    struct.pack_into("<8h", hdr, 40, 3, dims.nx, dims.ny, dims.nz, 1, 1, 1, 1)
    struct.pack_into("<h", hdr, 70, DATATYPES[meta.datatype])
    struct.pack_into("<h", hdr, 72, _BITPIX[meta.datatype])
    if not meta.raw_header:
        # fresh header: pixdim[0] is the qform handedness flag, units are mm
        struct.pack_into("<f", hdr, 76, 1.0)
        hdr[123] = 2
    struct.pack_into("<3f", hdr, 80, meta.spacing.sx, meta.spacing.sy, meta.spacing.sz)
    struct.pack_into("<f", hdr, 108, float(VOX_OFFSET))
    struct.pack_into("<f", hdr, 112, meta.scl_slope)
    struct.pack_into("<f", hdr, 116, meta.scl_inter)
    hdr[344:348] = MAGIC
    return bytes(hdr)


def _write_nifti(grid: VoxelGrid, meta: VolumeMeta, path: Path) -> None:
    payload = _encode_payload(grid, meta.datatype, path)
    header = _build_header(meta)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(b"\x00" * (VOX_OFFSET - HEADER_SIZE))
        fh.write(payload)


def _read_nifti(path: Path) -> tuple[VoxelGrid, VolumeMeta]:
    with open(path, "rb") as fh:
        hdr = fh.read(HEADER_SIZE)
        if len(hdr) < HEADER_SIZE:
            raise CorruptFileError(f"{path}: file shorter than a NIfTI-1 header")
        (sizeof_hdr,) = struct.unpack_from("<i", hdr, 0)
        if sizeof_hdr != HEADER_SIZE:
            (swapped,) = struct.unpack_from(">i", hdr, 0)
            if swapped == HEADER_SIZE:
                raise VolumeFormatError(
                    f"{path}: big-endian (byte-swapped) NIfTI-1 is not supported"
                )
            raise VolumeFormatError(f"{path}: sizeof_hdr is {sizeof_hdr}, not 348")
        if hdr[344:348] != MAGIC:
            raise VolumeFormatError(f"{path}: magic is {hdr[344:348]!r}, not 'n+1'")
        dim = struct.unpack_from("<8h", hdr, 40)
        if not (1 <= dim[0] <= 7):
            raise VolumeFormatError(f"{path}: implausible dim[0] = {dim[0]}")
        sizes = list(dim[1 : 1 + dim[0]])
        if any(s != 1 for s in sizes[3:]):
            raise VolumeFormatError(f"{path}: only 3D volumes are supported, dim = {dim}")
        sizes = (sizes + [1, 1, 1])[:3]
        if any(s < 1 for s in sizes):
            raise VolumeFormatError(f"{path}: non-positive dimension in {sizes}")
        nx, ny, nz = sizes

        (code,) = struct.unpack_from("<h", hdr, 70)
        if code not in _CODE_TO_NAME:
            raise UnsupportedDatatypeError(f"{path}: unsupported datatype code {code}")
        datatype = _CODE_TO_NAME[code]

        pixdim = struct.unpack_from("<8f", hdr, 76)
        try:
            spacing = Spacing(float(pixdim[3]), float(pixdim[2]), float(pixdim[1]))
        except ValueError as exc:
            raise VolumeFormatError(f"{path}: bad pixdim {pixdim[1:4]}: {exc}") from None

        (vox_offset,) = struct.unpack_from("<f", hdr, 108)
        offset = int(vox_offset)
        if offset < HEADER_SIZE:
            raise VolumeFormatError(f"{path}: vox_offset {vox_offset} inside the header")
        scl_slope, scl_inter = struct.unpack_from("<2f", hdr, 112)

        fh.seek(offset)
        np_dtype = _NP_DTYPES[datatype]
        expected = nx * ny * nz * np_dtype.itemsize
        payload = fh.read(expected)
        if len(payload) < expected:
            raise CorruptFileError(
                f"{path}: payload truncated ({len(payload)} of {expected} bytes)"
            )

    arr = np.frombuffer(payload, dtype=np_dtype).reshape(nz, ny, nx).copy()
    scl_slope, scl_inter = float(scl_slope), float(scl_inter)
    if scl_slope != 0.0 and (scl_slope, scl_inter) != (1.0, 0.0):
        arr = (arr.astype(np.float32) * np.float32(scl_slope)) + np.float32(scl_inter)
        datatype = "float32"
        # data is now in scaled units; writing it back must not rescale
        scl_slope, scl_inter = 0.0, 0.0
    meta = VolumeMeta(
        Dims(nz, ny, nx), spacing, datatype,
        scl_slope=scl_slope, scl_inter=scl_inter,
        source_format="nifti1", raw_header=hdr,
    )
    return VoxelGrid(arr, spacing), meta


# ---------------------------------------------------------------------------
# raw + JSON sidecar
# ---------------------------------------------------------------------------

def _sidecar_paths(path: Path) -> tuple[Path, Path]:
    stem = path.with_suffix("")
    return stem.with_suffix(".raw"), stem.with_suffix(".json")


def _write_rawjson(grid: VoxelGrid, meta: VolumeMeta, path: Path) -> None:
    raw_path, json_path = _sidecar_paths(path)
    payload = _encode_payload(grid, meta.datatype, path)
    raw_path.write_bytes(payload)
    sidecar = {
        "dims": list(meta.dims.shape),
        "spacing": list(meta.spacing.zyx),
        "datatype": meta.datatype,
    }
    json_path.write_text(json.dumps(sidecar, sort_keys=True) + "\n", encoding="utf-8")


def _read_rawjson(path: Path) -> tuple[VoxelGrid, VolumeMeta]:
    raw_path, json_path = _sidecar_paths(path)
    try:
        sidecar = json.loads(json_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise VolumeFormatError(f"{json_path}: invalid JSON sidecar: {exc}") from None
    unknown = set(sidecar) - {"dims", "spacing", "datatype"}
    if unknown:
        raise VolumeFormatError(f"{json_path}: unknown sidecar keys {sorted(unknown)}")
    try:
        dims = Dims(*(int(v) for v in sidecar["dims"]))
        spacing = Spacing(*(float(v) for v in sidecar["spacing"]))
        datatype = str(sidecar["datatype"])
    except (KeyError, TypeError, ValueError) as exc:
        raise VolumeFormatError(f"{json_path}: bad sidecar: {exc}") from None
    if datatype not in DATATYPES:
        raise UnsupportedDatatypeError(f"{json_path}: unsupported datatype {datatype!r}")

    np_dtype = _NP_DTYPES[datatype]
    expected = dims.n * np_dtype.itemsize
    payload = raw_path.read_bytes()
    if len(payload) != expected:
        raise CorruptFileError(
            f"{raw_path}: payload is {len(payload)} bytes, expected {expected}"
        )
    arr = np.frombuffer(payload, dtype=np_dtype).reshape(dims.shape).copy()
    meta = VolumeMeta(dims, spacing, datatype, source_format="rawjson")
    return VoxelGrid(arr, spacing), meta


# ---------------------------------------------------------------------------
# Public entry points
# ---------------------------------------------------------------------------

def write_volume(grid: VoxelGrid, meta: VolumeMeta, path) -> None:
    """Write a grid under ``meta``'s datatype; booleans encode as uint8 {0, 1}."""
    path = Path(path)
    if meta.dims != grid.dims:
        raise ValueError(f"{path}: metadata dims {meta.dims} do not match grid {grid.dims}")
    if path.suffix == ".nii":
        _write_nifti(grid, meta, path)
    elif path.suffix in (".raw", ".json"):
        _write_rawjson(grid, meta, path)
    else:
        raise ValueError(f"{path}: unknown volume extension {path.suffix!r}")


def read_volume(path) -> tuple[VoxelGrid, VolumeMeta]:
    """Read a volume; the format is chosen by extension (.nii or .raw/.json)."""
    path = Path(path)
    if path.suffix == ".nii":
        if not path.exists():
            raise FileNotFoundError(f"volume not found: {path}")
        return _read_nifti(path)
    if path.suffix in (".raw", ".json"):
        raw_path, json_path = _sidecar_paths(path)
        if not raw_path.exists() or not json_path.exists():
            raise FileNotFoundError(f"missing raw/json pair for {path}")
        return _read_rawjson(path)
    raise ValueError(f"{path}: unknown volume extension {path.suffix!r}")
