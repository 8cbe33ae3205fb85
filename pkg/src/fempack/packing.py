"""Lane-major element packing.

Elements of one type are grouped into packs of `vector_size` lanes.  All
per-element tensors downstream place the lane index last, so consecutive
lanes are unit-stride in memory and the innermost loops of the packed
assembly kernels touch contiguous scalars.  The final pack of a group is
padded by replicating the last element's connectivity; padded lanes carry
zero integration weights, so their contributions vanish identically when
scattered.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .elements import NNODES, ElementType
from .errors import ConfigurationError
from .mesh import Mesh

VALID_VECTOR_SIZES = (1, 2, 4, 8, 16, 32)

#: allocation alignment in bytes; covers 8 float64 lanes (AVX-512 width)
ALIGNMENT = 64


@dataclass(frozen=True)
class PackConfig:
    vector_size: int = 8

    def __post_init__(self):
        if self.vector_size not in VALID_VECTOR_SIZES:
            raise ConfigurationError(
                f"vector_size must be one of {VALID_VECTOR_SIZES}, "
                f"got {self.vector_size}"
            )


def aligned_zeros(shape, dtype=np.float64, alignment: int = ALIGNMENT) -> np.ndarray:
    """Zero-initialized C-contiguous array whose data start is aligned."""
    dtype = np.dtype(dtype)
    size = int(np.prod(shape)) * dtype.itemsize
    buf = np.zeros(size + alignment, dtype=np.uint8)
    offset = (-buf.ctypes.data) % alignment
    view = buf[offset : offset + size].view(dtype).reshape(shape)
    return view


@dataclass
class PackSet:
    """Packed connectivity for all elements of one type.

    Attributes
    ----------
    etype : ElementType
    vector_size : int
    nelem : int
        Number of active (real) elements.
    elem_index : ndarray, shape (npacks, vector_size)
        Global element index per lane; padded lanes repeat the last one.
    lane_conn : ndarray, shape (npacks, nnodes, vector_size)
        Node ids per lane, gathered through elem_index.
    active_mask : ndarray of bool, shape (npacks, vector_size)
        False on padded lanes.  Diagnostics only: kernels rely on zeroed
        weights, not on the mask.
    """

    etype: ElementType
    vector_size: int
    nelem: int
    elem_index: np.ndarray
    lane_conn: np.ndarray
    active_mask: np.ndarray

    @property
    def npacks(self) -> int:
        return self.lane_conn.shape[0]

    @property
    def npadded(self) -> int:
        return self.npacks * self.vector_size - self.nelem


def build_packs(mesh: Mesh, config: PackConfig) -> list[PackSet]:
    """Split each element-type block of a mesh into lane packs.

    The mesh must already be grouped by type (one block per type); groups
    with zero elements produce no PackSet.  Global element indices follow
    the concatenated group order.
    """
    if not mesh.is_grouped_by_type():
        raise ConfigurationError(
            "mesh has repeated element-type blocks; renumber_by_type first"
        )
    vs = config.vector_size
    packs = []
    offset = 0
    for g in mesh.groups:
        ne = g.nelem
        if ne == 0:
            offset += ne
            continue
        npacks = -(-ne // vs)
        elem_index = np.empty((npacks, vs), dtype=np.int64)
        flat = elem_index.reshape(-1)
        flat[:ne] = offset + np.arange(ne)
        flat[ne:] = offset + ne - 1
        active = np.zeros(npacks * vs, dtype=bool)
        active[:ne] = True
        local = elem_index - offset
        # gather (npacks, vs, nn) then put lanes last and force C order
        lane_conn = np.ascontiguousarray(
            np.moveaxis(g.conn[local], 1, 2), dtype=np.int64
        )
        packs.append(
            PackSet(
                etype=g.etype,
                vector_size=vs,
                nelem=ne,
                elem_index=elem_index,
                lane_conn=lane_conn,
                active_mask=active.reshape(npacks, vs),
            )
        )
        offset += ne
    return packs


def pack_array(values: np.ndarray, packset: PackSet, zero_pad: bool = True) -> np.ndarray:
    """Gather a per-element array (nelem_total, ...) into lane-major form.

    Output shape is (npacks, ..., vector_size), 64-byte aligned.  Padded
    lanes are zeroed unless zero_pad is False, in which case they repeat
    the last active element's values.
    """
    gathered = np.moveaxis(values[packset.elem_index], 1, -1)
    out = aligned_zeros(gathered.shape, dtype=values.dtype)
    out[...] = gathered
    if zero_pad:
        out[packset.npacks - 1, ..., ~packset.active_mask[-1]] = 0
    return out


def unpack_array(packed: np.ndarray, packset: PackSet, nelem_total: int) -> np.ndarray:
    """Scatter active lanes of a lane-major array back to per-element form."""
    out_shape = (nelem_total,) + packed.shape[1:-1]
    out = np.zeros(out_shape, dtype=packed.dtype)
    lanes_first = np.moveaxis(packed, -1, 1)
    out[packset.elem_index[packset.active_mask]] = lanes_first[packset.active_mask]
    return out
