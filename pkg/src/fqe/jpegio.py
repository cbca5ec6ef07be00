"""Baseline JPEG parsing and encoding, plus PGM ingestion.

The parser recovers quantization tables and quantized luminance DCT
coefficients exactly as stored in the entropy-coded stream; no inverse DCT
or pixel reconstruction happens here, so no extra rounding or truncation
error is introduced on the estimation path. The encoder writes minimal
single-component baseline files using the standard annex Huffman tables and
the same quantizer as the DCT simulator, which makes the file-based and
simulated compression paths agree bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dctsim
from .types import CoeffGrid, GrayImage, QuantTable


class JpegError(Exception):
    """Base class for JPEG parse and encode failures."""


class JpegFormatError(JpegError):
    """Malformed or truncated JPEG stream."""


class UnsupportedJpegError(JpegError):
    """Well-formed JPEG using a coding mode this parser does not handle."""


class PgmError(ValueError):
    """Malformed or truncated PGM stream."""


# Marker code bytes (the byte after 0xFF).
_SOI, _EOI, _SOS, _DQT, _DHT, _DRI, _DNL, _DAC = (
    0xD8, 0xD9, 0xDA, 0xDB, 0xC4, 0xDD, 0xDC, 0xCC,
)
_SOF_NAMES = {
    0xC1: "extended sequential",
    0xC2: "progressive",
    0xC3: "lossless",
    0xC5: "differential sequential",
    0xC6: "differential progressive",
    0xC7: "differential lossless",
    0xC9: "arithmetic sequential",
    0xCA: "arithmetic progressive",
    0xCB: "arithmetic lossless",
    0xCD: "differential arithmetic sequential",
    0xCE: "differential arithmetic progressive",
    0xCF: "differential arithmetic lossless",
}

# Annex K.3 Huffman table specs: (bits per code length 1..16, values).
_DC_LUM_BITS = (0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0)
_DC_LUM_VALS = tuple(range(12))
_AC_LUM_BITS = (0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 125)
_AC_LUM_VALS = (
    0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12,
    0x21, 0x31, 0x41, 0x06, 0x13, 0x51, 0x61, 0x07,
    0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xA1, 0x08,
    0x23, 0x42, 0xB1, 0xC1, 0x15, 0x52, 0xD1, 0xF0,
    0x24, 0x33, 0x62, 0x72, 0x82, 0x09, 0x0A, 0x16,
    0x17, 0x18, 0x19, 0x1A, 0x25, 0x26, 0x27, 0x28,
    0x29, 0x2A, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39,
    0x3A, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48, 0x49,
    0x4A, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59,
    0x5A, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69,
    0x6A, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79,
    0x7A, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89,
    0x8A, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98,
    0x99, 0x9A, 0xA2, 0xA3, 0xA4, 0xA5, 0xA6, 0xA7,
    0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4, 0xB5, 0xB6,
    0xB7, 0xB8, 0xB9, 0xBA, 0xC2, 0xC3, 0xC4, 0xC5,
    0xC6, 0xC7, 0xC8, 0xC9, 0xCA, 0xD2, 0xD3, 0xD4,
    0xD5, 0xD6, 0xD7, 0xD8, 0xD9, 0xDA, 0xE1, 0xE2,
    0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8, 0xE9, 0xEA,
    0xF1, 0xF2, 0xF3, 0xF4, 0xF5, 0xF6, 0xF7, 0xF8,
    0xF9, 0xFA,
)


@dataclass
class ComponentInfo:
    comp_id: int
    h: int
    v: int
    tq: int
    blocks_w: int = 0
    blocks_h: int = 0


@dataclass
class FrameInfo:
    width: int
    height: int
    components: list[ComponentInfo]
    restart_interval: int = 0


@dataclass
class ParsedJpeg:
    """Quant tables keyed by component id, luminance grid, frame metadata."""

    tables: dict[int, QuantTable]
    coeffs: CoeffGrid
    frame: FrameInfo

    @property
    def luma_table(self) -> QuantTable:
        return self.tables[self.frame.components[0].comp_id]


# ---------------------------------------------------------------------------
# Huffman decode: 16-bit prefix lookup tables, cached per table definition.
# lut[peek16] = (symbol << 8) | code_length, 0 for invalid prefixes.
# ---------------------------------------------------------------------------

_LUT_CACHE: dict[bytes, list[int]] = {}


def _build_decode_lut(bits: tuple[int, ...], values: tuple[int, ...]) -> list[int]:
    key = bytes(bits) + bytes(values)
    cached = _LUT_CACHE.get(key)
    if cached is not None:
        return cached
    lut = np.zeros(1 << 16, dtype=np.uint16)
    code = 0
    vi = 0
    for length in range(1, 17):
        for _ in range(bits[length - 1]):
            if code >= (1 << length):
                raise JpegFormatError("Huffman table overflows its code space")
            start = code << (16 - length)
            end = (code + 1) << (16 - length)
            lut[start:end] = (values[vi] << 8) | length
            vi += 1
            code += 1
        code <<= 1
    result = lut.tolist()
    _LUT_CACHE[key] = result
    return result


def _split_entropy(data: bytes, start: int) -> tuple[list[bytes], list[int], int]:
    """Slice the entropy-coded stream into restart segments.

    Returns the unstuffed segments, the RST indices found between them, and
    the offset of the terminating marker's 0xFF byte.
    """
    segments: list[bytes] = []
    rst_indices: list[int] = []
    chunks: list[bytes] = []
    pos = start
    n = len(data)
    while True:
        ff = data.find(b"\xff", pos)
        if ff == -1 or ff + 1 >= n:
            raise JpegFormatError("entropy-coded data is truncated")
        nxt = data[ff + 1]
        if nxt == 0x00:
            chunks.append(data[pos : ff + 1])
            pos = ff + 2
        elif 0xD0 <= nxt <= 0xD7:
            chunks.append(data[pos:ff])
            segments.append(b"".join(chunks))
            rst_indices.append(nxt - 0xD0)
            chunks = []
            pos = ff + 2
        elif nxt == 0xFF:
            chunks.append(data[pos:ff])
            pos = ff + 1
        else:
            chunks.append(data[pos:ff])
            segments.append(b"".join(chunks))
            return segments, rst_indices, ff


def _decode_segment(
    data: bytes,
    units: list[tuple[int, int]],
    comp_tables: list[tuple[list[int], list[int]]],
    outputs: list[np.ndarray],
    dc_pred: list[int],
) -> None:
    """Decode `units` (comp_index, dest_block) from one restart segment."""
    pos = 0
    n = len(data)
    buf = 0
    nbits = 0
    padded = 0
    for ci, dest in units:
        dc_lut, ac_lut = comp_tables[ci]
        out = outputs[ci]
        block = [0] * 64
        pred = dc_pred[ci]
        k = 0
        while True:
            # Refill so a 16-bit peek is available; pad with 1s at stream end.
            # A legitimate stream touches at most a few pad bytes of lookahead,
            # so sustained padding means the scan data was cut short.
            while nbits < 16:
                if pos < n:
                    buf = (buf << 8) | data[pos]
                    pos += 1
                    nbits += 8
                else:
                    buf = (buf << 8) | 0xFF
                    nbits += 8
                    padded += 1
                    if padded > 6:
                        raise JpegFormatError("entropy-coded data is truncated")
            peek = (buf >> (nbits - 16)) & 0xFFFF
            entry = (dc_lut if k == 0 else ac_lut)[peek]
            if entry == 0:
                raise JpegFormatError("invalid Huffman code in scan data")
            length = entry & 0xFF
            symbol = entry >> 8
            nbits -= length
            buf &= (1 << nbits) - 1
            if k == 0:
                size = symbol
                if size:
                    while nbits < size:
                        if pos >= n:
                            raise JpegFormatError("entropy-coded data is truncated")
                        buf = (buf << 8) | data[pos]
                        pos += 1
                        nbits += 8
                    v = (buf >> (nbits - size)) & ((1 << size) - 1)
                    nbits -= size
                    buf &= (1 << nbits) - 1
                    if v < (1 << (size - 1)):
                        v -= (1 << size) - 1
                    pred += v
                block[0] = pred
                k = 1
                continue
            run = symbol >> 4
            size = symbol & 0x0F
            if size == 0:
                if run == 15:
                    k += 16
                    if k > 64:
                        raise JpegFormatError("AC run overflows the block")
                    continue
                break  # EOB
            k += run
            if k > 63:
                raise JpegFormatError("AC coefficient index overflows the block")
            while nbits < size:
                if pos >= n:
                    raise JpegFormatError("entropy-coded data is truncated")
                buf = (buf << 8) | data[pos]
                pos += 1
                nbits += 8
            v = (buf >> (nbits - size)) & ((1 << size) - 1)
            nbits -= size
            buf &= (1 << nbits) - 1
            if v < (1 << (size - 1)):
                v -= (1 << size) - 1
            block[k] = v
            k += 1
            if k == 64:
                break
        dc_pred[ci] = pred
        out[dest] = block


class _Parser:
    def __init__(self, data: bytes):
        self.data = data
        self.quant_tables: dict[int, np.ndarray] = {}
        self.huff_luts: dict[tuple[int, int], list[int]] = {}
        self.frame: FrameInfo | None = None
        self.restart_interval = 0
        self.comp_coeffs: dict[int, np.ndarray] = {}

    def parse(self) -> ParsedJpeg:
        data = self.data
        if len(data) < 4 or data[0] != 0xFF or data[1] != _SOI:
            raise JpegFormatError("missing SOI marker")
        pos = 2
        saw_eoi = False
        while pos < len(data):
            if data[pos] != 0xFF:
                raise JpegFormatError(f"expected marker at offset {pos}")
            # Fill bytes: any number of 0xFF may precede the marker code.
            while pos < len(data) and data[pos] == 0xFF:
                pos += 1
            if pos >= len(data):
                raise JpegFormatError("truncated marker")
            marker = data[pos]
            pos += 1
            if marker == _EOI:
                saw_eoi = True
                break
            if marker == _SOI or marker == 0x00 or 0xD0 <= marker <= 0xD7 or marker == 0x01:
                raise JpegFormatError(f"unexpected marker 0xFF{marker:02X}")
            if pos + 2 > len(data):
                raise JpegFormatError("truncated segment header")
            seg_len = (data[pos] << 8) | data[pos + 1]
            if seg_len < 2 or pos + seg_len > len(data):
                raise JpegFormatError("segment length exceeds file size")
            seg = data[pos + 2 : pos + seg_len]
            if marker == _DQT:
                self._read_dqt(seg)
                pos += seg_len
            elif marker == _DHT:
                self._read_dht(seg)
                pos += seg_len
            elif marker == _DRI:
                if len(seg) != 2:
                    raise JpegFormatError("bad DRI segment")
                self.restart_interval = (seg[0] << 8) | seg[1]
                pos += seg_len
            elif marker == 0xC0:
                self._read_sof(seg)
                pos += seg_len
            elif marker in _SOF_NAMES:
                raise UnsupportedJpegError(
                    f"{_SOF_NAMES[marker]} JPEG is not supported (baseline only)"
                )
            elif marker == _DAC:
                raise UnsupportedJpegError("arithmetic coding is not supported")
            elif marker == _SOS:
                pos = self._read_scan(seg, pos + seg_len)
            else:
                pos += seg_len  # APPn, COM, DNL, anything skippable
        if not saw_eoi:
            raise JpegFormatError("missing EOI marker")
        return self._assemble()

    def _read_dqt(self, seg: bytes) -> None:
        pos = 0
        while pos < len(seg):
            pq = seg[pos] >> 4
            tq = seg[pos] & 0x0F
            pos += 1
            if pq not in (0, 1) or tq > 3:
                raise JpegFormatError("bad DQT precision or table id")
            n = 64 * (pq + 1)
            if pos + n > len(seg):
                raise JpegFormatError("truncated DQT segment")
            if pq == 0:
                zz = np.frombuffer(seg, dtype=np.uint8, count=64, offset=pos)
            else:
                zz = np.frombuffer(seg, dtype=">u2", count=64, offset=pos)
            if zz.min() < 1 or zz.max() > 255:
                raise JpegFormatError("quantization factor outside [1, 255]")
            self.quant_tables[tq] = zz.astype(np.int64)
            pos += n

    def _read_dht(self, seg: bytes) -> None:
        pos = 0
        while pos < len(seg):
            tc = seg[pos] >> 4
            th = seg[pos] & 0x0F
            pos += 1
            if tc > 1 or th > 3:
                raise JpegFormatError("bad DHT class or table id")
            if pos + 16 > len(seg):
                raise JpegFormatError("truncated DHT segment")
            bits = tuple(seg[pos : pos + 16])
            pos += 16
            total = sum(bits)
            if pos + total > len(seg):
                raise JpegFormatError("truncated DHT segment")
            values = tuple(seg[pos : pos + total])
            pos += total
            self.huff_luts[(tc, th)] = _build_decode_lut(bits, values)

    def _read_sof(self, seg: bytes) -> None:
        if self.frame is not None:
            raise JpegFormatError("multiple SOF segments")
        if len(seg) < 6:
            raise JpegFormatError("truncated SOF segment")
        precision = seg[0]
        if precision != 8:
            raise UnsupportedJpegError(f"{precision}-bit precision is not supported")
        height = (seg[1] << 8) | seg[2]
        width = (seg[3] << 8) | seg[4]
        n_comp = seg[5]
        if height == 0:
            raise UnsupportedJpegError("deferred height (DNL) is not supported")
        if width == 0 or n_comp == 0:
            raise JpegFormatError("bad frame dimensions")
        if len(seg) != 6 + 3 * n_comp:
            raise JpegFormatError("bad SOF segment length")
        comps = []
        for c in range(n_comp):
            cid = seg[6 + 3 * c]
            hv = seg[7 + 3 * c]
            tq = seg[8 + 3 * c]
            h, v = hv >> 4, hv & 0x0F
            if not (1 <= h <= 4 and 1 <= v <= 4) or tq > 3:
                raise JpegFormatError("bad component sampling or table id")
            comps.append(ComponentInfo(comp_id=cid, h=h, v=v, tq=tq))
        self.frame = FrameInfo(width=width, height=height, components=comps)

    def _read_scan(self, seg: bytes, entropy_start: int) -> int:
        frame = self.frame
        if frame is None:
            raise JpegFormatError("SOS before SOF")
        if len(seg) < 1:
            raise JpegFormatError("truncated SOS segment")
        ns = seg[0]
        if len(seg) != 1 + 2 * ns + 3:
            raise JpegFormatError("bad SOS segment length")
        by_id = {c.comp_id: i for i, c in enumerate(frame.components)}
        scan_comps: list[ComponentInfo] = []
        comp_tables: list[tuple[list[int], list[int]]] = []
        for s in range(ns):
            cid = seg[1 + 2 * s]
            tdta = seg[2 + 2 * s]
            if cid not in by_id:
                raise JpegFormatError(f"scan references unknown component {cid}")
            comp = frame.components[by_id[cid]]
            td, ta = tdta >> 4, tdta & 0x0F
            dc_lut = self.huff_luts.get((0, td))
            ac_lut = self.huff_luts.get((1, ta))
            if dc_lut is None or ac_lut is None:
                raise JpegFormatError("scan references a missing Huffman table")
            scan_comps.append(comp)
            comp_tables.append((dc_lut, ac_lut))
        ss, se, ahal = seg[1 + 2 * ns], seg[2 + 2 * ns], seg[3 + 2 * ns]
        if ss != 0 or se != 63 or ahal != 0:
            raise UnsupportedJpegError("spectral selection implies a non-baseline scan")

        hmax = max(c.h for c in frame.components)
        vmax = max(c.v for c in frame.components)
        units: list[tuple[int, int]] = []
        if ns == 1:
            comp = scan_comps[0]
            cw = -(-frame.width * comp.h // hmax)
            ch = -(-frame.height * comp.v // vmax)
            bw, bh = -(-cw // 8), -(-ch // 8)
            comp.blocks_w, comp.blocks_h = bw, bh
            n_units = bw * bh
            units = [(0, d) for d in range(n_units)]
            n_mcus = n_units
            per_mcu = 1
        else:
            mcus_x = -(-frame.width // (8 * hmax))
            mcus_y = -(-frame.height // (8 * vmax))
            n_mcus = mcus_x * mcus_y
            for comp in scan_comps:
                comp.blocks_w = mcus_x * comp.h
                comp.blocks_h = mcus_y * comp.v
            for m in range(n_mcus):
                my, mx = divmod(m, mcus_x)
                for ci, comp in enumerate(scan_comps):
                    for by in range(comp.v):
                        row = my * comp.v + by
                        for bx in range(comp.h):
                            units.append((ci, row * comp.blocks_w + mx * comp.h + bx))
            per_mcu = len(units) // n_mcus

        outputs = []
        for comp in scan_comps:
            arr = np.zeros((comp.blocks_w * comp.blocks_h, 64), dtype=np.int32)
            self.comp_coeffs[comp.comp_id] = arr
            outputs.append(arr)

        segments, rst_indices, marker_pos = _split_entropy(self.data, entropy_start)
        ri = self.restart_interval
        expected = 1 if ri == 0 else -(-n_mcus // ri)
        if len(segments) != expected:
            raise JpegFormatError(
                f"expected {expected} restart segment(s), found {len(segments)}"
            )
        for i, n in enumerate(rst_indices):
            if n != i % 8:
                raise JpegFormatError("restart markers out of sequence")

        dc_pred = [0] * len(scan_comps)
        for si, segment in enumerate(segments):
            if ri:
                lo, hi = si * ri * per_mcu, min((si * ri + ri) * per_mcu, len(units))
                dc_pred = [0] * len(scan_comps)
            else:
                lo, hi = 0, len(units)
            _decode_segment(segment, units[lo:hi], comp_tables, outputs, dc_pred)
        return marker_pos

    def _assemble(self) -> ParsedJpeg:
        frame = self.frame
        if frame is None:
            raise JpegFormatError("file contains no frame")
        luma = frame.components[0]
        if luma.comp_id not in self.comp_coeffs:
            raise JpegFormatError("luminance component was never scanned")
        tables: dict[int, QuantTable] = {}
        for comp in frame.components:
            zz = self.quant_tables.get(comp.tq)
            if zz is None:
                raise JpegFormatError(
                    f"component {comp.comp_id} references missing DQT {comp.tq}"
                )
            tables[comp.comp_id] = QuantTable.from_zigzag(zz)
        frame.restart_interval = self.restart_interval
        grid = CoeffGrid(
            width_blocks=luma.blocks_w,
            height_blocks=luma.blocks_h,
            values=self.comp_coeffs[luma.comp_id],
        )
        return ParsedJpeg(tables=tables, coeffs=grid, frame=frame)


def parse_jpeg(data: bytes) -> ParsedJpeg:
    """Parse a baseline JPEG into tables, luminance coefficients, metadata."""
    return _Parser(bytes(data)).parse()


# ---------------------------------------------------------------------------
# Encoder
# ---------------------------------------------------------------------------


def _build_encode_table(
    bits: tuple[int, ...], values: tuple[int, ...]
) -> dict[int, tuple[int, int]]:
    table: dict[int, tuple[int, int]] = {}
    code = 0
    vi = 0
    for length in range(1, 17):
        for _ in range(bits[length - 1]):
            table[values[vi]] = (code, length)
            vi += 1
            code += 1
        code <<= 1
    return table


_DC_ENC = _build_encode_table(_DC_LUM_BITS, _DC_LUM_VALS)
_AC_ENC = _build_encode_table(_AC_LUM_BITS, _AC_LUM_VALS)


class _BitWriter:
    def __init__(self) -> None:
        self.out = bytearray()
        self.buf = 0
        self.nbits = 0

    def write(self, code: int, length: int) -> None:
        buf = (self.buf << length) | code
        nbits = self.nbits + length
        out = self.out
        while nbits >= 8:
            nbits -= 8
            byte = (buf >> nbits) & 0xFF
            out.append(byte)
            if byte == 0xFF:
                out.append(0x00)
        self.buf = buf & ((1 << nbits) - 1)
        self.nbits = nbits

    def flush(self) -> None:
        if self.nbits:
            pad = 8 - self.nbits
            self.write((1 << pad) - 1, pad)


def _segment(marker: int, payload: bytes) -> bytes:
    return bytes([0xFF, marker]) + (len(payload) + 2).to_bytes(2, "big") + payload


def encode_baseline_gray(img: GrayImage, table: QuantTable) -> bytes:
    """Encode a grayscale image as a single-component baseline JPEG.

    Dimensions not divisible by 8 are padded by replicating the last row
    and column; the stored frame dimensions stay the original ones.
    """
    if img.width < 8 or img.height < 8:
        raise ValueError("image must be at least 8x8")
    pad_h = (-img.height) % 8
    pad_w = (-img.width) % 8
    pixels = np.pad(img.pixels, ((0, pad_h), (0, pad_w)), mode="edge")
    padded = GrayImage(pixels)
    blocks = dctsim.fdct_blocks(
        pixels.reshape(padded.height // 8, 8, padded.width // 8, 8)
        .transpose(0, 2, 1, 3)
        .reshape(-1, 8, 8)
        .astype(np.float64)
    )
    zz = dctsim.quantize_blocks(blocks, table)

    writer = _BitWriter()
    dc_enc, ac_enc = _DC_ENC, _AC_ENC
    pred = 0
    for block in zz.tolist():
        diff = block[0] - pred
        pred = block[0]
        size = abs(diff).bit_length()
        code, length = dc_enc[size]
        writer.write(code, length)
        if size:
            v = diff if diff >= 0 else diff + (1 << size) - 1
            writer.write(v, size)
        run = 0
        for k in range(1, 64):
            val = block[k]
            if val == 0:
                run += 1
                continue
            while run > 15:
                code, length = ac_enc[0xF0]
                writer.write(code, length)
                run -= 16
            size = abs(val).bit_length()
            code, length = ac_enc[(run << 4) | size]
            writer.write(code, length)
            v = val if val >= 0 else val + (1 << size) - 1
            writer.write(v, size)
            run = 0
        if run:
            code, length = ac_enc[0x00]
            writer.write(code, length)
    writer.flush()

    dqt = _segment(_DQT, bytes([0x00]) + bytes(int(x) for x in table.to_zigzag()))
    sof = _segment(
        0xC0,
        bytes([8])
        + img.height.to_bytes(2, "big")
        + img.width.to_bytes(2, "big")
        + bytes([1, 1, 0x11, 0]),
    )
    dht = _segment(
        _DHT,
        bytes([0x00]) + bytes(_DC_LUM_BITS) + bytes(_DC_LUM_VALS)
        + bytes([0x10]) + bytes(_AC_LUM_BITS) + bytes(_AC_LUM_VALS),
    )
    sos = _segment(_SOS, bytes([1, 1, 0x00, 0, 63, 0]))
    return (
        bytes([0xFF, _SOI]) + dqt + sof + dht + sos
        + bytes(writer.out) + bytes([0xFF, _EOI])
    )


# ---------------------------------------------------------------------------
# PGM input and cropping
# ---------------------------------------------------------------------------


def read_pgm(data: bytes) -> GrayImage:
    """Read a binary PGM (P5). 16-bit samples are mapped to their high byte."""
    if not data.startswith(b"P5"):
        raise PgmError("not a binary PGM (P5) stream")
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos] == 0x23:  # comment line
            nl = data.find(b"\n", pos)
            if nl == -1:
                raise PgmError("unterminated comment in PGM header")
            pos = nl + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        token = data[start:pos]
        if not token.isdigit():
            raise PgmError(f"bad PGM header token {token!r}")
        fields.append(int(token))
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise PgmError("bad PGM dimensions")
    if not 1 <= maxval <= 65535:
        raise PgmError(f"unsupported PGM maxval {maxval}")
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise PgmError("missing whitespace before PGM raster")
    pos += 1  # exactly one whitespace byte before the raster
    n = width * height
    if maxval > 255:
        if pos + 2 * n > len(data):
            raise PgmError("truncated PGM pixel data")
        samples = np.frombuffer(data, dtype=">u2", count=n, offset=pos)
        pixels = (samples >> 8).astype(np.uint8)
    else:
        if pos + n > len(data):
            raise PgmError("truncated PGM pixel data")
        pixels = np.frombuffer(data, dtype=np.uint8, count=n, offset=pos).copy()
    return GrayImage(pixels.reshape(height, width))


def crop_center(img: GrayImage, side: int) -> GrayImage:
    """Centered side x side crop; odd remainders leave the extra pixel
    at the right/bottom."""
    if side < 1:
        raise ValueError("crop side must be positive")
    if side > min(img.width, img.height):
        raise ValueError(
            f"crop side {side} exceeds image size {img.width}x{img.height}"
        )
    top = (img.height - side) // 2
    left = (img.width - side) // 2
    return GrayImage(img.pixels[top : top + side, left : left + side].copy())
