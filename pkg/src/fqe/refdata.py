"""Reference distribution dataset: build, persist, query.

Every raw patch is double-compressed with all pairs of constant matrices
(M_q1, M_q2); the DC histogram and the pooled AC histograms of coefficients
2..k land in the sub-dataset keyed by that (q1, q2), indexed by the
Laplacian fit (mu for DC, beta for AC). Records are held in packed arrays
sorted by key so that nearest-key windows are contiguous slices and the
chi-square scan over a window is one vectorized pass.
"""

from __future__ import annotations

import struct
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import dctsim
from .stats import CoeffHistogram, chi2, fit_laplacian
from .types import ZIGZAG_TO_NATURAL, GrayImage


class DatasetFormatError(Exception):
    """Corrupt, truncated, or incompatible dataset file."""


class NoCandidatesError(ValueError):
    """A sub-dataset holds no records for the requested comparison."""


@dataclass(eq=False)
class RefRecord:
    """One reference histogram and its sort key (mu for DC, beta for AC)."""

    key: float
    hist: CoeffHistogram

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RefRecord):
            return NotImplemented
        return self.key == other.key and self.hist == other.hist


class PackedRecords:
    """Records of one (sub-dataset, kind), packed into flat arrays.

    keys is sorted ascending; record i owns bins values[offsets[i]:offsets[i+1]]
    with matching masses, and counts[i] samples behind the masses.
    """

    __slots__ = ("keys", "offsets", "values", "masses", "counts")

    def __init__(self, keys, offsets, values, masses, counts):
        self.keys = keys
        self.offsets = offsets
        self.values = values
        self.masses = masses
        self.counts = counts

    @classmethod
    def empty(cls) -> "PackedRecords":
        return cls(
            keys=np.empty(0, dtype=np.float64),
            offsets=np.zeros(1, dtype=np.int64),
            values=np.empty(0, dtype=np.int16),
            masses=np.empty(0, dtype=np.float64),
            counts=np.empty(0, dtype=np.uint32),
        )

    @classmethod
    def from_items(
        cls, items: list[tuple[float, np.ndarray, np.ndarray, int]]
    ) -> "PackedRecords":
        """Pack (key, support, mass, count) items, stably sorted by key."""
        if not items:
            return cls.empty()
        keys = np.array([it[0] for it in items], dtype=np.float64)
        order = np.argsort(keys, kind="stable")
        lengths = np.array([items[i][1].size for i in order], dtype=np.int64)
        offsets = np.zeros(lengths.size + 1, dtype=np.int64)
        np.cumsum(lengths, out=offsets[1:])
        return cls(
            keys=keys[order],
            offsets=offsets,
            values=np.concatenate([items[i][1] for i in order]).astype(np.int16),
            masses=np.concatenate([items[i][2] for i in order]),
            counts=np.array([items[i][3] for i in order], dtype=np.uint32),
        )

    def __len__(self) -> int:
        return self.keys.size

    def record(self, i: int) -> RefRecord:
        lo, hi = int(self.offsets[i]), int(self.offsets[i + 1])
        hist = CoeffHistogram(
            support=self.values[lo:hi].astype(np.int64),
            mass=self.masses[lo:hi].copy(),
            count=int(self.counts[i]),
        )
        return RefRecord(key=float(self.keys[i]), hist=hist)

    def records(self) -> list[RefRecord]:
        return [self.record(i) for i in range(len(self))]


@dataclass
class SubDataset:
    q1: int
    q2: int
    dc: PackedRecords = field(default_factory=PackedRecords.empty)
    ac: PackedRecords = field(default_factory=PackedRecords.empty)

    def kind(self, name: str) -> PackedRecords:
        if name == "dc":
            return self.dc
        if name == "ac":
            return self.ac
        raise ValueError(f"unknown record kind {name!r} (expected 'dc' or 'ac')")


@dataclass
class ReferenceDataset:
    q1_max: int
    k: int
    patch_side: int
    source_count: int
    subs: dict[tuple[int, int], SubDataset]

    def sub(self, q1: int, q2: int) -> SubDataset:
        try:
            return self.subs[(q1, q2)]
        except KeyError:
            raise KeyError(f"no sub-dataset for (q1={q1}, q2={q2})") from None


def _nearest_window(keys: np.ndarray, key: float, n: int) -> tuple[int, int]:
    """Bounds of the n records with keys nearest to key.

    The window is contiguous because keys are sorted. On equal distance the
    lower-key record is preferred.
    """
    r = keys.size
    if n >= r:
        return 0, r
    pos = int(np.searchsorted(keys, key))
    lo_min = max(0, pos - n)
    lo_max = min(pos, r - n)
    if lo_max <= lo_min:
        return lo_min, lo_min + n
    cand = np.arange(lo_min, lo_max)
    shift = (key - keys[cand]) > (keys[cand + n] - key)
    lo = lo_min + int(np.count_nonzero(shift))
    return lo, lo + n


def _patch_items(patch: GrayImage, q1_max: int, k: int):
    """Per-(q1, q2) DC and AC record items for one patch.

    Bit-exact with double_compress followed by build_histogram: the forward
    DCT of each q1 reconstruction is computed once and requantized for every
    q2, which is the same arithmetic in the same order.
    """
    blocks = (
        patch.pixels.reshape(patch.height // 8, 8, patch.width // 8, 8)
        .transpose(0, 2, 1, 3)
        .reshape(-1, 8, 8)
        .astype(np.float64)
    )
    f0 = dctsim.fdct_blocks(blocks)
    zz_first_k = ZIGZAG_TO_NATURAL[:k]
    out = {}
    for q1 in range(1, q1_max + 1):
        t1 = dctsim.constant_table(q1)
        zz1 = dctsim.quantize_blocks(f0, t1)
        recon = dctsim.idct_blocks(dctsim.dequantize_blocks(zz1, t1))
        f1 = dctsim.fdct_blocks(recon).reshape(-1, 64)[:, zz_first_k]
        n_blocks = f1.shape[0]
        for q2 in range(1, q1_max + 1):
            quantized = dctsim.round_half_away(f1 / float(q2)).astype(np.int32)
            dc_items = []
            ac_items = []
            for i in range(k):
                support, counts = np.unique(quantized[:, i], return_counts=True)
                if support.size == 1:
                    continue  # degenerate: carries no information about q1
                mass = counts / n_blocks
                params = fit_laplacian(
                    CoeffHistogram(support=support, mass=mass, count=n_blocks)
                )
                key = params.mu if i == 0 else params.beta
                (dc_items if i == 0 else ac_items).append(
                    (key, support.astype(np.int16), mass, n_blocks)
                )
            out[(q1, q2)] = (dc_items, ac_items)
    return out


def _patch_items_star(args):
    return _patch_items(*args)


def build_reference(
    patches: list[GrayImage],
    q1_max: int = 22,
    k: int = 15,
    jobs: int | None = None,
) -> ReferenceDataset:
    """Build the reference dataset from raw patches.

    Deterministic given the patch sequence and parameters, independent of
    the worker count: records merge in patch order and sort stably by key.
    """
    if not patches:
        raise ValueError("cannot build a reference dataset from no patches")
    if q1_max < 1 or q1_max > 255:
        raise ValueError(f"q1_max {q1_max} out of range [1, 255]")
    if not 2 <= k <= 64:
        raise ValueError(f"k {k} out of range [2, 64]")
    side = patches[0].width
    if side % 8 or side == 0:
        raise ValueError("patch side must be a positive multiple of 8")
    for p in patches:
        if p.width != side or p.height != side:
            raise ValueError("all patches must share one square size")

    if jobs is not None and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_patch = list(
                pool.map(
                    _patch_items_star,
                    [(p, q1_max, k) for p in patches],
                    chunksize=max(1, -(-len(patches) // (4 * jobs))),
                )
            )
    else:
        per_patch = [_patch_items(p, q1_max, k) for p in patches]

    subs = {}
    for q1 in range(1, q1_max + 1):
        for q2 in range(1, q1_max + 1):
            dc_items = []
            ac_items = []
            for result in per_patch:
                d, a = result[(q1, q2)]
                dc_items.extend(d)
                ac_items.extend(a)
            subs[(q1, q2)] = SubDataset(
                q1=q1,
                q2=q2,
                dc=PackedRecords.from_items(dc_items),
                ac=PackedRecords.from_items(ac_items),
            )
    return ReferenceDataset(
        q1_max=q1_max,
        k=k,
        patch_side=side,
        source_count=len(patches),
        subs=subs,
    )


def query(
    ds: ReferenceDataset, q1: int, q2: int, kind: str, key: float, n: int
) -> list[RefRecord]:
    """The n records of sub-dataset (q1, q2) whose keys are nearest to key."""
    if n < 1:
        raise ValueError("n must be at least 1")
    packed = ds.sub(q1, q2).kind(kind)
    lo, hi = _nearest_window(packed.keys, key, n)
    return [packed.record(i) for i in range(lo, hi)]


def min_distance(h: CoeffHistogram, candidates: list[RefRecord]) -> float:
    """Smallest chi-square distance from h to any candidate record."""
    if not candidates:
        raise NoCandidatesError("no reference records for this (q1, q2)")
    return min(chi2(h, r.hist) for r in candidates)


def batch_min_distance(
    packed: PackedRecords, h: CoeffHistogram, key: float, n: int
) -> float:
    """min_distance over the n nearest records, computed in one array pass.

    Returns inf when the sub-dataset is empty. Equivalent to
    min_distance(h, query(...)); exact zero is preserved for a record whose
    support and masses match h bit for bit.
    """
    if len(packed) == 0:
        return float("inf")
    lo, hi = _nearest_window(packed.keys, key, n)
    start, end = int(packed.offsets[lo]), int(packed.offsets[hi])
    vals = packed.values[start:end].astype(np.int64)
    mass = packed.masses[start:end]

    qmin = int(h.support[0])
    dense = np.zeros(int(h.support[-1]) - qmin + 1)
    dense[h.support - qmin] = h.mass
    idx = vals - qmin
    inside = (idx >= 0) & (idx < dense.size)
    x = np.where(inside, dense[np.clip(idx, 0, dense.size - 1)], 0.0)

    # chi2 = sum over record bins of (x-m)^2/(x+m), plus the query mass that
    # falls outside the record support: total_x - sum over record bins of x.
    # total_x uses the same reduction as the per-record sums so an identical
    # record cancels to exactly zero.
    terms = (x - mass) ** 2 / (x + mass)
    seg = packed.offsets[lo:hi] - start
    total_x = float(np.add.reduceat(h.mass, [0])[0])
    dist = np.add.reduceat(terms, seg) + (total_x - np.add.reduceat(x, seg))
    return float(max(dist.min(), 0.0))


# ---------------------------------------------------------------------------
# Serialization: little-endian, CRC-32 trailer. Record masses are stored as
# f32; because every mass is bin_count / sample_count, the exact f64 masses
# are recovered on load by rounding mass * count back to integers (valid up
# to counts of ~8 million, far beyond any patch), so serialize/deserialize
# round-trips both the bytes and the in-memory values.
# ---------------------------------------------------------------------------

_MAGIC = b"FQE1"
_VERSION = 1
_HEADER = struct.Struct("<HBBHI")
_SUB_HEADER = struct.Struct("<II")
_REC_HEADER = struct.Struct("<dH")
_REC_COUNT = struct.Struct("<I")
_PAIR_DTYPE = np.dtype([("v", "<i2"), ("m", "<f4")])


def _write_records(out: bytearray, packed: PackedRecords) -> None:
    offsets = packed.offsets
    for i in range(len(packed)):
        lo, hi = int(offsets[i]), int(offsets[i + 1])
        out += _REC_HEADER.pack(float(packed.keys[i]), hi - lo)
        pairs = np.empty(hi - lo, dtype=_PAIR_DTYPE)
        pairs["v"] = packed.values[lo:hi]
        pairs["m"] = packed.masses[lo:hi]
        out += pairs.tobytes()
        out += _REC_COUNT.pack(int(packed.counts[i]))


def serialize(ds: ReferenceDataset) -> bytes:
    out = bytearray()
    out += _MAGIC
    out += _HEADER.pack(_VERSION, ds.q1_max, ds.k, ds.patch_side, ds.source_count)
    out += bytes(16)
    for q1 in range(1, ds.q1_max + 1):
        for q2 in range(1, ds.q1_max + 1):
            sub = ds.sub(q1, q2)
            out += _SUB_HEADER.pack(len(sub.dc), len(sub.ac))
            _write_records(out, sub.dc)
            _write_records(out, sub.ac)
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    return bytes(out)


def _read_records(data: bytes, pos: int, count: int) -> tuple[PackedRecords, int]:
    keys = np.empty(count, dtype=np.float64)
    counts = np.empty(count, dtype=np.uint32)
    lengths = np.empty(count, dtype=np.int64)
    val_chunks = []
    mass_chunks = []
    for i in range(count):
        if pos + 10 > len(data) - 4:
            raise DatasetFormatError("dataset file is truncated")
        key, slen = _REC_HEADER.unpack_from(data, pos)
        pos += 10
        if slen < 1:
            raise DatasetFormatError("record with empty support")
        if pos + 6 * slen + 4 > len(data) - 4:
            raise DatasetFormatError("dataset file is truncated")
        pairs = np.frombuffer(data, dtype=_PAIR_DTYPE, count=slen, offset=pos)
        pos += 6 * slen
        (n,) = _REC_COUNT.unpack_from(data, pos)
        pos += 4
        if n < 1:
            raise DatasetFormatError("record with zero sample count")
        m32 = pairs["m"]
        approx = np.rint(m32.astype(np.float64) * n)
        mass = approx / n
        if approx.min() < 1 or not np.array_equal(mass.astype(np.float32), m32):
            mass = m32.astype(np.float64)
        keys[i] = key
        counts[i] = n
        lengths[i] = slen
        val_chunks.append(pairs["v"])
        mass_chunks.append(mass)
    offsets = np.zeros(count + 1, dtype=np.int64)
    np.cumsum(lengths, out=offsets[1:])
    packed = PackedRecords(
        keys=keys,
        offsets=offsets,
        values=(
            np.concatenate(val_chunks).astype(np.int16)
            if val_chunks
            else np.empty(0, dtype=np.int16)
        ),
        masses=(
            np.concatenate(mass_chunks) if mass_chunks else np.empty(0, dtype=np.float64)
        ),
        counts=counts,
    )
    return packed, pos


def deserialize(data: bytes) -> ReferenceDataset:
    if len(data) < 30 + 4:
        raise DatasetFormatError("dataset file is truncated")
    (crc_stored,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4]) != crc_stored:
        raise DatasetFormatError("dataset checksum mismatch")
    if data[:4] != _MAGIC:
        raise DatasetFormatError("bad dataset magic")
    version, q1_max, k, patch_side, source_count = _HEADER.unpack_from(data, 4)
    if version != _VERSION:
        raise DatasetFormatError(f"unsupported dataset version {version}")
    pos = 30
    subs = {}
    for q1 in range(1, q1_max + 1):
        for q2 in range(1, q1_max + 1):
            if pos + 8 > len(data) - 4:
                raise DatasetFormatError("dataset file is truncated")
            dc_count, ac_count = _SUB_HEADER.unpack_from(data, pos)
            pos += 8
            dc, pos = _read_records(data, pos, dc_count)
            ac, pos = _read_records(data, pos, ac_count)
            subs[(q1, q2)] = SubDataset(q1=q1, q2=q2, dc=dc, ac=ac)
    if pos != len(data) - 4:
        raise DatasetFormatError("trailing bytes after the last sub-dataset")
    return ReferenceDataset(
        q1_max=q1_max,
        k=k,
        patch_side=patch_side,
        source_count=source_count,
        subs=subs,
    )
