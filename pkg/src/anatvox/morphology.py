"""Binary 3D morphology with a bit-packed fast path.

Masks are packed 64 voxels per uint64 word along x, so one dilation step is
a handful of word-wise shifts and ORs. A plain shift-and-combine path over
boolean arrays (`dilate_naive` / `erode_naive`) is kept as the reference;
both paths must produce bitwise identical masks.

Voxels outside the grid are background for both dilation and erosion, so
dilation never wraps and erosion strips open borders.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import VoxelGrid, shifted

_WORD = 64


@dataclass(frozen=True)
class StructElem:
    """Structuring element: face-6 cross or full 26-neighborhood cube.

    The origin voxel is always part of the element; ``offsets`` lists only
    the neighbors.
    """

    kind: str

    def __post_init__(self):
        if self.kind not in ("face6", "full26"):
            raise ValueError(f"unknown structuring element {self.kind!r}")

    @property
    def offsets(self) -> tuple[tuple[int, int, int], ...]:
        if self.kind == "face6":
            return (
                (1, 0, 0), (-1, 0, 0),
                (0, 1, 0), (0, -1, 0),
                (0, 0, 1), (0, 0, -1),
            )
        return tuple(
            (dz, dy, dx)
            for dz in (-1, 0, 1)
            for dy in (-1, 0, 1)
            for dx in (-1, 0, 1)
            if (dz, dy, dx) != (0, 0, 0)
        )


FACE6 = StructElem("face6")
FULL26 = StructElem("full26")


def elem_from_name(name: str) -> StructElem:
    return StructElem(name.lower())


# ---------------------------------------------------------------------------
# Naive reference path (boolean arrays, shift-and-combine)
# ---------------------------------------------------------------------------

def dilate_naive(mask: np.ndarray, elem: StructElem, times: int) -> np.ndarray:
    _check_mask(mask, times)
    out = mask.copy()
    for _ in range(times):
        step = out.copy()
        for dz, dy, dx in elem.offsets:
            step |= shifted(out, dz, dy, dx, fill=False)
        out = step
    return out


def erode_naive(mask: np.ndarray, elem: StructElem, times: int) -> np.ndarray:
    _check_mask(mask, times)
    out = mask.copy()
    for _ in range(times):
        step = out.copy()
        for dz, dy, dx in elem.offsets:
            step &= shifted(out, dz, dy, dx, fill=False)
        out = step
    return out


def _check_mask(mask: np.ndarray, times: int) -> None:
    if mask.dtype != np.bool_:
        raise ValueError("morphology requires a boolean mask")
    if mask.ndim != 3:
        raise ValueError("morphology requires a 3D mask")
    if times < 0:
        raise ValueError(f"repeat count must be >= 0, got {times}")


# ---------------------------------------------------------------------------
# Bit-packed path
# ---------------------------------------------------------------------------

def _pack(mask: np.ndarray) -> np.ndarray:
    """(nz, ny, nx) bool -> (nz, ny, nw) uint64, voxel x at bit x%64 of word x//64.

    Tail bits past nx-1 in the last word are zero and every operation below
    keeps them zero.
    """
    nz, ny, nx = mask.shape
    nw = (nx + _WORD - 1) // _WORD
    if nx != nw * _WORD:
        padded = np.zeros((nz, ny, nw * _WORD), dtype=np.bool_)
        padded[..., :nx] = mask
    else:
        padded = mask
    packed = np.packbits(padded, axis=-1, bitorder="little")
    return np.ascontiguousarray(packed).view(np.uint64)


def _unpack(words: np.ndarray, nx: int) -> np.ndarray:
    bits = np.unpackbits(words.view(np.uint8), axis=-1, count=nx, bitorder="little")
    return bits.astype(np.bool_)


def _tail_mask(nx: int) -> np.uint64:
    rem = nx % _WORD
    if rem == 0:
        return np.uint64(0xFFFFFFFFFFFFFFFF)
    return np.uint64((1 << rem) - 1)


def _x_plus(w: np.ndarray) -> np.ndarray:
    """Value of the x+1 neighbor for every voxel (zeros shift in at x = nx-1)."""
    out = w >> np.uint64(1)
    out[..., :-1] |= w[..., 1:] << np.uint64(63)
    return out


def _x_minus(w: np.ndarray, tail: np.uint64) -> np.ndarray:
    """Value of the x-1 neighbor (zeros at x = 0); tail bits re-cleared."""
    out = w << np.uint64(1)
    out[..., 1:] |= w[..., :-1] >> np.uint64(63)
    out[..., -1] &= tail
    return out


def _axis_shift(w: np.ndarray, axis: int, d: int) -> np.ndarray:
    """Neighbor value along z (axis 0) or y (axis 1), zero filled."""
    out = np.zeros_like(w)
    if axis == 0:
        if d > 0:
            out[:-1] = w[1:]
        else:
            out[1:] = w[:-1]
    else:
        if d > 0:
            out[:, :-1] = w[:, 1:]
        else:
            out[:, 1:] = w[:, :-1]
    return out


def _dilate_step_packed(w: np.ndarray, elem: StructElem, tail: np.uint64) -> np.ndarray:
    if elem.kind == "face6":
        out = w | _x_plus(w) | _x_minus(w, tail)
        out |= _axis_shift(w, 1, 1) | _axis_shift(w, 1, -1)
        out |= _axis_shift(w, 0, 1) | _axis_shift(w, 0, -1)
        return out
    # full26 cube is separable into three axis segments
    out = w | _x_plus(w) | _x_minus(w, tail)
    out = out | _axis_shift(out, 1, 1) | _axis_shift(out, 1, -1)
    out = out | _axis_shift(out, 0, 1) | _axis_shift(out, 0, -1)
    return out


def _erode_step_packed(w: np.ndarray, elem: StructElem, tail: np.uint64) -> np.ndarray:
    if elem.kind == "face6":
        out = w & _x_plus(w) & _x_minus(w, tail)
        out &= _axis_shift(w, 1, 1) & _axis_shift(w, 1, -1)
        out &= _axis_shift(w, 0, 1) & _axis_shift(w, 0, -1)
        return out
    out = w & _x_plus(w) & _x_minus(w, tail)
    out = out & _axis_shift(out, 1, 1) & _axis_shift(out, 1, -1)
    out = out & _axis_shift(out, 0, 1) & _axis_shift(out, 0, -1)
    return out


def dilate_mask(mask: np.ndarray, elem: StructElem, times: int) -> np.ndarray:
    """Iterated binary dilation on a boolean array (bit-packed)."""
    _check_mask(mask, times)
    if times == 0:
        return mask.copy()
    tail = _tail_mask(mask.shape[2])
    w = _pack(mask)
    for _ in range(times):
        w = _dilate_step_packed(w, elem, tail)
    return _unpack(w, mask.shape[2])


def erode_mask(mask: np.ndarray, elem: StructElem, times: int) -> np.ndarray:
    """Iterated binary erosion on a boolean array (bit-packed)."""
    _check_mask(mask, times)
    if times == 0:
        return mask.copy()
    tail = _tail_mask(mask.shape[2])
    w = _pack(mask)
    for _ in range(times):
        w = _erode_step_packed(w, elem, tail)
    return _unpack(w, mask.shape[2])


# ---------------------------------------------------------------------------
# Grid-level API
# ---------------------------------------------------------------------------

def dilate(mask: VoxelGrid, elem: StructElem, times: int) -> VoxelGrid:
    return mask.with_data(dilate_mask(mask.data, elem, times))


def erode(mask: VoxelGrid, elem: StructElem, times: int) -> VoxelGrid:
    return mask.with_data(erode_mask(mask.data, elem, times))


def boundary_band(mask: VoxelGrid, elem: StructElem, r_out: int, r_in: int) -> VoxelGrid:
    """XOR of the r_out-dilated and r_in-eroded mask: a thick boundary shell."""
    if r_out < 0 or r_in < 0:
        raise ValueError(f"band radii must be >= 0, got ({r_out}, {r_in})")
    outer = dilate_mask(mask.data, elem, r_out)
    inner = erode_mask(mask.data, elem, r_in)
    return mask.with_data(outer ^ inner)
