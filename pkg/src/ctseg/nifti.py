"""Minimal NIfTI-1 single-file (.nii / .nii.gz) reader and writer.

Only what the toolkit needs: 3D scalar volumes, common integer/float
datatypes, qform/sform geometry. World coordinates are converted between
NIfTI's RAS+ convention and the toolkit's LPS frame on the way in and out.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from .errors import GeometryError, ParseError, UnsupportedFormatError
from .grid import DistanceMap, Grid, Mask, Volume

HDR_SIZE = 348

# NIfTI datatype code -> numpy dtype
_DTYPES = {
    2: np.uint8,
    4: np.int16,
    8: np.int32,
    16: np.float32,
    64: np.float64,
    256: np.int8,
    512: np.uint16,
    768: np.uint32,
}
_DTYPE_CODES = {np.dtype(np.uint8): 2, np.dtype(np.float32): 16}

# RAS <-> LPS: negate x and y world axes
_RAS2LPS = np.diag([-1.0, -1.0, 1.0])


def _open_maybe_gz(path: Path):
    with open(path, "rb") as f:
        magic = f.read(2)
    if magic == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _quaternion_to_matrix(b: float, c: float, d: float, qfac: float) -> np.ndarray:
    a2 = 1.0 - (b * b + c * c + d * d)
    a = np.sqrt(max(a2, 0.0))
    r = np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
        ]
    )
    if qfac < 0:
        r[:, 2] *= -1.0
    return r


def _read_header(raw: bytes, path: Path):
    if len(raw) < HDR_SIZE:
        raise ParseError(f"{path}: file shorter than the 348-byte NIfTI-1 header")
    (sizeof_hdr,) = struct.unpack_from("<i", raw, 0)
    endian = "<"
    if sizeof_hdr != HDR_SIZE:
        (sizeof_hdr,) = struct.unpack_from(">i", raw, 0)
        endian = ">"
        if sizeof_hdr != HDR_SIZE:
            raise ParseError(f"{path}: not a NIfTI-1 file (bad sizeof_hdr)")
    magic = raw[344:348]
    if magic[:3] == b"ni1":
        raise UnsupportedFormatError(f"{path}: two-file (.hdr/.img) NIfTI not supported")
    if magic[:3] != b"n+1":
        raise ParseError(f"{path}: bad NIfTI magic {magic!r}")

    dim = struct.unpack_from(endian + "8h", raw, 40)
    datatype, bitpix = struct.unpack_from(endian + "2h", raw, 70)
    pixdim = struct.unpack_from(endian + "8f", raw, 76)
    (vox_offset,) = struct.unpack_from(endian + "f", raw, 108)
    scl_slope, scl_inter = struct.unpack_from(endian + "2f", raw, 112)
    qform_code, sform_code = struct.unpack_from(endian + "2h", raw, 252)
    quat = struct.unpack_from(endian + "3f", raw, 256)
    qoffset = struct.unpack_from(endian + "3f", raw, 268)
    srows = np.array(struct.unpack_from(endian + "12f", raw, 280)).reshape(3, 4)

    ndim = dim[0]
    if ndim < 3 or any(d <= 0 for d in dim[1:4]):
        raise UnsupportedFormatError(f"{path}: need a 3D volume, got dim={dim[: ndim + 1]}")
    if ndim > 3 and any(d > 1 for d in dim[4 : ndim + 1]):
        raise UnsupportedFormatError(f"{path}: 4D+ volumes not supported, dim={dim[: ndim + 1]}")
    if datatype not in _DTYPES:
        raise UnsupportedFormatError(f"{path}: unsupported NIfTI datatype code {datatype}")

    shape = tuple(int(d) for d in dim[1:4])

    # voxel -> RAS affine: sform wins, then qform, then pixdim-scaled identity
    if sform_code > 0:
        affine = np.eye(4)
        affine[:3, :] = srows
    elif qform_code > 0:
        qfac = pixdim[0] if pixdim[0] in (-1.0, 1.0) else 1.0
        r = _quaternion_to_matrix(*quat, qfac)
        affine = np.eye(4)
        affine[:3, :3] = r @ np.diag(pixdim[1:4])
        affine[:3, 3] = qoffset
    else:
        affine = np.diag([pixdim[1], pixdim[2], pixdim[3], 1.0])

    return {
        "endian": endian,
        "shape": shape,
        "dtype": np.dtype(_DTYPES[datatype]).newbyteorder(endian),
        "bitpix": bitpix,
        "vox_offset": int(vox_offset),
        "scl": (scl_slope, scl_inter),
        "affine_ras": affine,
    }


def _grid_from_ras(affine_ras: np.ndarray, shape) -> Grid:
    affine = affine_ras.copy()
    affine[:3, :] = _RAS2LPS @ affine_ras[:3, :]
    m = affine[:3, :3]
    spacing = np.linalg.norm(m, axis=0)
    if (spacing <= 0).any():
        raise GeometryError("degenerate affine: zero-length axis")
    direction = m / spacing
    return Grid(shape, tuple(spacing), tuple(affine[:3, 3]), tuple(map(tuple, direction)))


def read_nifti(path, kind: str = "volume"):
    """Read a .nii / .nii.gz file.

    kind: "volume" -> Volume (float32 HU), "mask" -> Mask (voxels > 0.5),
    "distance" -> DistanceMap (float32 mm).
    """
    path = Path(path)
    with _open_maybe_gz(path) as f:
        raw = f.read()
    hdr = _read_header(raw, path)

    shape = hdr["shape"]
    n = int(np.prod(shape))
    itemsize = np.dtype(hdr["dtype"]).itemsize
    start = max(hdr["vox_offset"], HDR_SIZE)
    end = start + n * itemsize
    if len(raw) < end:
        raise ParseError(f"{path}: truncated voxel data ({len(raw)} < {end} bytes)")
    data = np.frombuffer(raw, dtype=hdr["dtype"], count=n, offset=start)
    data = data.reshape(shape, order="F").astype(np.float64)

    slope, inter = hdr["scl"]
    if slope not in (0.0, 1.0) or (slope != 0.0 and inter != 0.0):
        data = data * slope + inter

    grid = _grid_from_ras(hdr["affine_ras"], shape)
    if kind == "volume":
        return Volume(grid, data.astype(np.float32))
    if kind == "mask":
        return Mask(grid, data > 0.5)
    if kind == "distance":
        return DistanceMap(grid, data.astype(np.float32))
    raise ValueError(f"unknown kind {kind!r}")


def write_nifti(obj, path) -> None:
    """Write a Volume, Mask or DistanceMap as single-file NIfTI-1.

    Masks are stored uint8, everything else float32. Files ending in .gz are
    gzip-compressed with a zeroed timestamp so identical inputs give identical
    bytes.
    """
    path = Path(path)
    voxels = obj.voxels
    if isinstance(obj, Mask):
        data = np.asarray(voxels, dtype=np.uint8)
    else:
        data = np.asarray(voxels, dtype=np.float32)
    code = _DTYPE_CODES[data.dtype]

    grid: Grid = obj.grid
    lps = np.eye(4)
    lps[:3, :3] = grid.direction_matrix @ np.diag(grid.spacing)
    lps[:3, 3] = grid.origin
    ras = lps.copy()
    ras[:3, :] = _RAS2LPS @ lps[:3, :]

    hdr = bytearray(HDR_SIZE)
    struct.pack_into("<i", hdr, 0, HDR_SIZE)
    struct.pack_into("<8h", hdr, 40, 3, *grid.dims, 1, 1, 1, 1)
    struct.pack_into("<2h", hdr, 70, code, data.dtype.itemsize * 8)
    struct.pack_into("<8f", hdr, 76, 1.0, *grid.spacing, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", hdr, 108, 352.0)  # vox_offset
    struct.pack_into("<2f", hdr, 112, 1.0, 0.0)  # scl_slope / scl_inter
    struct.pack_into("<b", hdr, 123, 2)  # xyzt_units: mm
    descrip = b"ctseg"
    hdr[148 : 148 + len(descrip)] = descrip
    struct.pack_into("<2h", hdr, 252, 0, 1)  # qform off, sform on
    struct.pack_into("<4f", hdr, 280, *ras[0, :])
    struct.pack_into("<4f", hdr, 296, *ras[1, :])
    struct.pack_into("<4f", hdr, 312, *ras[2, :])
    hdr[344:348] = b"n+1\x00"

    payload = bytes(hdr) + b"\x00\x00\x00\x00" + data.tobytes(order="F")
    if path.suffix == ".gz":
        with open(path, "wb") as f:
            # empty filename + zero mtime: identical content -> identical bytes
            with gzip.GzipFile(filename="", fileobj=f, mode="wb", mtime=0) as gz:
                gz.write(payload)
    else:
        with open(path, "wb") as f:
            f.write(payload)
