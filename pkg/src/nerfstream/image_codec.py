"""Block-transform image/video codec used in place of HEVC.

Intra frames: 8x8 DCT blocks, DC prediction from reconstructed neighbours,
uniform quantization, zigzag run-level coding on the adaptive range coder.
Inter frames: 16x16 macroblocks choosing skip, motion-compensated residual or
intra by Lagrangian cost. Chroma is kept at full resolution.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .rangecoder import Contexts, DecodeError, ExpGolombContexts, RangeDecoder, RangeEncoder, decode_eg0, encode_eg0
from .scene import CameraPose, pose_from_record, pose_to_record

MAGIC = b"IVSb"
VERSION = 1
MODES = ("intra", "inter")
BLOCK = 8
MB = 16
SEARCH = 8
LAMBDA_SCALE = 0.85

# --- color -----------------------------------------------------------------

_RGB2YCC = np.array(
    [[0.299, 0.587, 0.114], [-0.168736, -0.331264, 0.5], [0.5, -0.418688, -0.081312]]
)
_YCC2RGB = np.linalg.inv(_RGB2YCC)
_CHROMA_OFFSET = np.array([0.0, 128.0, 128.0])


@dataclass
class Frame:
    """Three 8-bit planes (Y, Cb, Cr), each H x W."""

    planes: np.ndarray  # (3, H, W) uint8

    def __post_init__(self):
        self.planes = np.asarray(self.planes)
        if self.planes.ndim != 3 or self.planes.shape[0] != 3:
            raise ValueError("a frame holds three planes")
        if self.planes.dtype != np.uint8:
            raise ValueError("planes must be uint8")

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]

    def __eq__(self, other):
        return isinstance(other, Frame) and np.array_equal(self.planes, other.planes)


def to_uint8(image: np.ndarray) -> np.ndarray:
    """[0, 1] floats to 8-bit: round to nearest, clamp."""
    return np.clip(np.rint(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def rgb_to_ycbcr(image: np.ndarray) -> Frame:
    """BT.601 full-range conversion of an 8-bit (H, W, 3) RGB image."""
    rgb = np.asarray(image, dtype=np.float64)
    ycc = rgb @ _RGB2YCC.T + _CHROMA_OFFSET
    planes = np.clip(np.rint(ycc), 0, 255).astype(np.uint8)
    return Frame(np.moveaxis(planes, -1, 0).copy())


def ycbcr_to_rgb(frame: Frame) -> np.ndarray:
    ycc = np.moveaxis(frame.planes.astype(np.float64), 0, -1)
    rgb = (ycc - _CHROMA_OFFSET) @ _YCC2RGB.T
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)


# --- transform -------------------------------------------------------------


def _dct_matrix(n: int = BLOCK) -> np.ndarray:
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    c = np.cos(np.pi * (2 * i + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    c[0] /= np.sqrt(2.0)
    return c


_C = _dct_matrix()


def dct8(block: np.ndarray) -> np.ndarray:
    """Orthonormal 2-D DCT-II of an 8x8 block (or a stack of them)."""
    return _C @ np.asarray(block, dtype=np.float64) @ _C.T


def idct8(coef: np.ndarray) -> np.ndarray:
    return _C.T @ np.asarray(coef, dtype=np.float64) @ _C


def _zigzag_order(n: int = BLOCK) -> np.ndarray:
    cells = sorted(
        ((r, c) for r in range(n) for c in range(n)),
        key=lambda rc: (rc[0] + rc[1], rc[0] if (rc[0] + rc[1]) % 2 else rc[1]),
    )
    return np.array([r * n + c for r, c in cells])


ZIGZAG = _zigzag_order()


def qp_to_qstep(qp: int) -> float:
    if not 0 <= int(qp) <= 51:
        raise ValueError(f"video QP {qp} outside [0, 51]")
    return 2.0 ** ((int(qp) - 4) / 6.0)


def lagrangian(qp: int) -> float:
    """Mode-decision multiplier 0.85 * 2**((qp - 12) / 3), i.e. about 0.134 * qstep**2."""
    qp_to_qstep(qp)
    return LAMBDA_SCALE * 2.0 ** ((int(qp) - 12) / 3.0)


# --- motion ----------------------------------------------------------------


@dataclass(frozen=True)
class MotionVector:
    """Displacement of content from the reference to the current frame:
    the prediction for pixel (x, y) is reference pixel (x - dx, y - dy)."""

    dx: int = 0
    dy: int = 0

    def __post_init__(self):
        if not (-SEARCH <= self.dx <= SEARCH and -SEARCH <= self.dy <= SEARCH):
            raise ValueError(f"motion vector ({self.dx}, {self.dy}) outside +-{SEARCH}")


def motion_search(block: np.ndarray, reference: np.ndarray, x0: int, y0: int, search: int = SEARCH) -> tuple[MotionVector, int]:
    """Full-search SAD minimiser for ``block`` located at (x0, y0).

    Only displacements whose reference block lies inside the frame are tried.
    Ties go to the smallest |dx| + |dy|, then the smallest dy, then dx.
    """
    bh, bw = block.shape
    h, w = reference.shape
    if not (0 <= x0 <= w - bw and 0 <= y0 <= h - bh):
        raise ValueError("block must lie inside the frame")
    windows = sliding_window_view(reference.astype(np.int64), (bh, bw))
    cur = block.astype(np.int64)
    best = None
    for dy in range(-search, search + 1):
        ry = y0 - dy
        if not 0 <= ry <= h - bh:
            continue
        xs = [dx for dx in range(-search, search + 1) if 0 <= x0 - dx <= w - bw]
        if not xs:
            continue
        cand = windows[ry, [x0 - dx for dx in xs]]
        sads = np.abs(cand - cur).sum(axis=(1, 2))
        for dx, sad in zip(xs, sads.tolist()):
            key = (sad, abs(dx) + abs(dy), dy, dx)
            if best is None or key < best:
                best = key
    sad, _, dy, dx = best
    return MotionVector(dx, dy), int(sad)


def motion_compensate(reference: np.ndarray, x0: int, y0: int, size: int, mv: MotionVector) -> np.ndarray:
    """Reference block(s) for a macroblock; ``reference`` may be (H, W) or (3, H, W)."""
    ry, rx = y0 - mv.dy, x0 - mv.dx
    return reference[..., ry : ry + size, rx : rx + size]


# --- entropy coding of blocks ----------------------------------------------


class _BlockContexts:
    """Context banks for one plane class (luma or chroma)."""

    def __init__(self):
        self.coded = Contexts(2)  # selected by whether the previous block was coded
        self.last = Contexts(1)
        self.sign = Contexts(1)
        self.gt1 = Contexts(1)
        self.run = ExpGolombContexts()
        self.level = ExpGolombContexts()
        self.prev_coded = 0


class _FrameContexts:
    def __init__(self):
        self.planes = (_BlockContexts(), _BlockContexts())  # luma, chroma
        self.mode = Contexts(3)  # skip flag, intra-vs-inter flag, (unused slot kept for layout)
        self.mv_zero = Contexts(2)
        self.mv_sign = Contexts(1)
        self.mv_mag = ExpGolombContexts()

    def block(self, plane: int) -> _BlockContexts:
        return self.planes[0 if plane == 0 else 1]


def _run_levels(levels_zz: list[int]) -> list[tuple[int, int]]:
    pairs = []
    run = 0
    for v in levels_zz:
        if v == 0:
            run += 1
        else:
            pairs.append((run, v))
            run = 0
    return pairs


def _encode_block(enc: RangeEncoder, ctx: _BlockContexts, levels: np.ndarray) -> None:
    pairs = _run_levels(levels.ravel()[ZIGZAG].tolist())
    enc.encode(1 if pairs else 0, ctx.coded, ctx.prev_coded)
    ctx.prev_coded = 1 if pairs else 0
    for n, (run, level) in enumerate(pairs):
        encode_eg0(enc, run, ctx.run)
        enc.encode(1 if level < 0 else 0, ctx.sign, 0)
        a = abs(level)
        enc.encode(1 if a > 1 else 0, ctx.gt1, 0)
        if a > 1:
            encode_eg0(enc, a - 2, ctx.level)
        enc.encode(1 if n == len(pairs) - 1 else 0, ctx.last, 0)


def _decode_block(dec: RangeDecoder, ctx: _BlockContexts) -> np.ndarray:
    zz = np.zeros(BLOCK * BLOCK, dtype=np.int64)
    coded = dec.decode(ctx.coded, ctx.prev_coded)
    ctx.prev_coded = coded
    if coded:
        pos = 0
        while True:
            pos += decode_eg0(dec, ctx.run)
            if pos >= BLOCK * BLOCK:
                raise DecodeError("coefficient run past end of block", dec.pos)
            neg = dec.decode(ctx.sign, 0)
            a = 1
            if dec.decode(ctx.gt1, 0):
                a = 2 + decode_eg0(dec, ctx.level)
            zz[pos] = -a if neg else a
            pos += 1
            if dec.decode(ctx.last, 0):
                break
            if pos >= BLOCK * BLOCK:
                raise DecodeError("coefficient list overruns block", dec.pos)
    levels = np.zeros(BLOCK * BLOCK, dtype=np.int64)
    levels[ZIGZAG] = zz
    return levels.reshape(BLOCK, BLOCK)


def _eg_bits(v: int) -> int:
    return 2 * (v + 1).bit_length() - 1


def estimate_block_bits(levels: np.ndarray) -> float:
    """Rough bin count for a block, used only for mode decisions."""
    pairs = _run_levels(levels.ravel()[ZIGZAG].tolist())
    bits = 1.0
    for run, level in pairs:
        a = abs(level)
        bits += _eg_bits(run) + 2 + (_eg_bits(a - 2) if a > 1 else 0) + 1
    return bits


def _encode_mvd(enc: RangeEncoder, ctx: _FrameContexts, mvd: tuple[int, int]) -> None:
    for comp, v in enumerate(mvd):
        enc.encode(0 if v == 0 else 1, ctx.mv_zero, comp)
        if v:
            enc.encode(1 if v < 0 else 0, ctx.mv_sign, 0)
            encode_eg0(enc, abs(v) - 1, ctx.mv_mag)


def _decode_mvd(dec: RangeDecoder, ctx: _FrameContexts) -> tuple[int, int]:
    out = []
    for comp in range(2):
        if not dec.decode(ctx.mv_zero, comp):
            out.append(0)
            continue
        neg = dec.decode(ctx.mv_sign, 0)
        a = 1 + decode_eg0(dec, ctx.mv_mag)
        out.append(-a if neg else a)
    return out[0], out[1]


# --- block coding primitives -------------------------------------------------


def _dc_prediction(recon: np.ndarray, y: int, x: int) -> float:
    """Mean of the reconstructed row above and column left of the block; 128 with neither."""
    vals = []
    if y > 0:
        vals.append(recon[y - 1, x : x + BLOCK])
    if x > 0:
        vals.append(recon[y : y + BLOCK, x - 1])
    if not vals:
        return 128.0
    return float(np.rint(np.mean(np.concatenate(vals).astype(np.float64))))


def _quantize_residual(residual: np.ndarray, qstep: float) -> np.ndarray:
    return np.rint(dct8(residual) / qstep).astype(np.int64)


def _reconstruct(pred: np.ndarray, levels: np.ndarray, qstep: float) -> np.ndarray:
    if not levels.any():
        return np.clip(np.rint(pred), 0, 255).astype(np.uint8)
    res = idct8(levels.astype(np.float64) * qstep)
    return np.clip(np.rint(pred + res), 0, 255).astype(np.uint8)


def _intra_block(src: np.ndarray, recon: np.ndarray, y: int, x: int, qstep: float):
    pred = np.full((BLOCK, BLOCK), _dc_prediction(recon, y, x))
    levels = _quantize_residual(src[y : y + BLOCK, x : x + BLOCK].astype(np.float64) - pred, qstep)
    return levels, _reconstruct(pred, levels, qstep)


# --- frame coding --------------------------------------------------------------


def _check_dims(frame: Frame) -> None:
    if frame.width % MB or frame.height % MB:
        raise ValueError(f"frame {frame.width}x{frame.height} must be padded to multiples of {MB}")


def encode_intra(frame: Frame, qp: int) -> tuple[bytes, Frame]:
    """Code one frame without reference; returns (payload, reconstruction)."""
    _check_dims(frame)
    qstep = qp_to_qstep(qp)
    enc = RangeEncoder()
    ctx = _FrameContexts()
    recon = np.zeros_like(frame.planes)
    for p in range(3):
        src = frame.planes[p]
        for y in range(0, frame.height, BLOCK):
            for x in range(0, frame.width, BLOCK):
                levels, rec = _intra_block(src, recon[p], y, x, qstep)
                _encode_block(enc, ctx.block(p), levels)
                recon[p, y : y + BLOCK, x : x + BLOCK] = rec
    return enc.finish(), Frame(recon)


def decode_intra(payload: bytes, width: int, height: int, qp: int) -> Frame:
    qstep = qp_to_qstep(qp)
    dec = RangeDecoder(payload)
    ctx = _FrameContexts()
    recon = np.zeros((3, height, width), dtype=np.uint8)
    for p in range(3):
        for y in range(0, height, BLOCK):
            for x in range(0, width, BLOCK):
                levels = _decode_block(dec, ctx.block(p))
                pred = np.full((BLOCK, BLOCK), _dc_prediction(recon[p], y, x))
                recon[p, y : y + BLOCK, x : x + BLOCK] = _reconstruct(pred, levels, qstep)
    dec.check_consumed()
    return Frame(recon)


@dataclass
class _MBChoice:
    kind: str  # "skip" | "inter" | "intra"
    mv: MotionVector
    levels: list[np.ndarray] = field(default_factory=list)  # 12 blocks: plane-major, raster within MB
    recon: np.ndarray | None = None  # (3, 16, 16)
    cost: float = 0.0


def _mb_blocks():
    for p in range(3):
        for by in (0, BLOCK):
            for bx in (0, BLOCK):
                yield p, by, bx


def _try_inter(src: np.ndarray, ref: np.ndarray, y: int, x: int, mv: MotionVector, qstep: float, lam: float, mv_bits: float):
    pred = motion_compensate(ref, x, y, MB, mv).astype(np.float64)
    cur = src[:, y : y + MB, x : x + MB].astype(np.float64)
    levels, recon = [], np.empty((3, MB, MB), dtype=np.uint8)
    bits = mv_bits
    for p, by, bx in _mb_blocks():
        pb = pred[p, by : by + BLOCK, bx : bx + BLOCK]
        lv = _quantize_residual(cur[p, by : by + BLOCK, bx : bx + BLOCK] - pb, qstep)
        levels.append(lv)
        recon[p, by : by + BLOCK, bx : bx + BLOCK] = _reconstruct(pb, lv, qstep)
        bits += estimate_block_bits(lv)
    ssd = float(np.sum((recon.astype(np.float64) - cur) ** 2))
    return levels, recon, ssd + lam * bits


def _try_intra(src: np.ndarray, recon_frame: np.ndarray, y: int, x: int, qstep: float, lam: float):
    # intra prediction reads the reconstruction, so work on a scratch copy of the MB area
    scratch = recon_frame.copy()
    levels = []
    bits = 1.0
    for p, by, bx in _mb_blocks():
        lv, rec = _intra_block(src[p], scratch[p], y + by, x + bx, qstep)
        scratch[p, y + by : y + by + BLOCK, x + bx : x + bx + BLOCK] = rec
        levels.append(lv)
        bits += estimate_block_bits(lv)
    recon = scratch[:, y : y + MB, x : x + MB].copy()
    ssd = float(np.sum((recon.astype(np.float64) - src[:, y : y + MB, x : x + MB]) ** 2))
    return levels, recon, ssd + lam * bits


def _skip_mv(pred: MotionVector, x: int, y: int, w: int, h: int) -> MotionVector:
    """Skip reuses the predicted vector, or zero motion when that would leave the frame."""
    if 0 <= x - pred.dx <= w - MB and 0 <= y - pred.dy <= h - MB:
        return pred
    return MotionVector()


def _mv_bits(mvd: tuple[int, int]) -> float:
    return sum(1 if v == 0 else 2 + _eg_bits(abs(v) - 1) for v in mvd)


def encode_inter(frame: Frame, reference: Frame, qp: int) -> tuple[bytes, Frame]:
    """Code a frame against the previous reconstruction; returns (payload, reconstruction).

    Per macroblock: skip (predicted MV, no residual), motion-compensated residual,
    or intra, whichever has the smallest SSD + lambda * estimated bits.
    """
    _check_dims(frame)
    qstep = qp_to_qstep(qp)
    lam = lagrangian(qp)
    enc = RangeEncoder()
    ctx = _FrameContexts()
    src = frame.planes
    ref = reference.planes
    recon = np.zeros_like(src)
    for y in range(0, frame.height, MB):
        prev_mv = MotionVector()
        for x in range(0, frame.width, MB):
            cur = src[:, y : y + MB, x : x + MB].astype(np.float64)
            # skip: predicted motion, no residual
            smv = _skip_mv(prev_mv, x, y, frame.width, frame.height)
            skip_pred = motion_compensate(ref, x, y, MB, smv)
            skip_cost = float(np.sum((skip_pred.astype(np.float64) - cur) ** 2)) + lam * 1.0
            best = _MBChoice("skip", smv, [], skip_pred.copy(), skip_cost)

            mv, _ = motion_search(src[0, y : y + MB, x : x + MB], ref[0], x, y)
            mvd = (mv.dx - prev_mv.dx, mv.dy - prev_mv.dy)
            lv, rec, cost = _try_inter(src, ref, y, x, mv, qstep, lam, 2.0 + _mv_bits(mvd))
            if cost < best.cost:
                best = _MBChoice("inter", mv, lv, rec, cost)

            lv, rec, cost = _try_intra(src, recon, y, x, qstep, lam)
            if cost < best.cost:
                best = _MBChoice("intra", MotionVector(), lv, rec, cost)

            _write_mb(enc, ctx, best, prev_mv)
            recon[:, y : y + MB, x : x + MB] = best.recon
            if best.kind != "intra":
                prev_mv = best.mv
    return enc.finish(), Frame(recon)


def _write_mb(enc: RangeEncoder, ctx: _FrameContexts, mb: _MBChoice, prev_mv: MotionVector) -> None:
    enc.encode(1 if mb.kind == "skip" else 0, ctx.mode, 0)
    if mb.kind == "skip":
        return
    enc.encode(1 if mb.kind == "intra" else 0, ctx.mode, 1)
    if mb.kind == "inter":
        _encode_mvd(enc, ctx, (mb.mv.dx - prev_mv.dx, mb.mv.dy - prev_mv.dy))
    for (p, _, _), lv in zip(_mb_blocks(), mb.levels):
        _encode_block(enc, ctx.block(p), lv)


def decode_inter(payload: bytes, reference: Frame, qp: int) -> Frame:
    qstep = qp_to_qstep(qp)
    dec = RangeDecoder(payload)
    ctx = _FrameContexts()
    ref = reference.planes
    h, w = ref.shape[1:]
    recon = np.zeros_like(ref)
    for y in range(0, h, MB):
        prev_mv = MotionVector()
        for x in range(0, w, MB):
            if dec.decode(ctx.mode, 0):
                prev_mv = _skip_mv(prev_mv, x, y, w, h)
                recon[:, y : y + MB, x : x + MB] = motion_compensate(ref, x, y, MB, prev_mv)
                continue
            if dec.decode(ctx.mode, 1):
                for p, by, bx in _mb_blocks():
                    lv = _decode_block(dec, ctx.block(p))
                    pred = np.full((BLOCK, BLOCK), _dc_prediction(recon[p], y + by, x + bx))
                    recon[p, y + by : y + by + BLOCK, x + bx : x + bx + BLOCK] = _reconstruct(pred, lv, qstep)
                continue
            ddx, ddy = _decode_mvd(dec, ctx)
            try:
                mv = MotionVector(prev_mv.dx + ddx, prev_mv.dy + ddy)
            except ValueError as e:
                raise DecodeError(str(e), dec.pos) from None
            if not (0 <= x - mv.dx <= w - MB and 0 <= y - mv.dy <= h - MB):
                raise DecodeError("motion vector points outside the reference", dec.pos)
            pred = motion_compensate(ref, x, y, MB, mv).astype(np.float64)
            for p, by, bx in _mb_blocks():
                lv = _decode_block(dec, ctx.block(p))
                recon[p, y + by : y + by + BLOCK, x + bx : x + bx + BLOCK] = _reconstruct(
                    pred[p, by : by + BLOCK, bx : bx + BLOCK], lv, qstep
                )
            prev_mv = mv
    dec.check_consumed()
    return Frame(recon)


# --- sequences ------------------------------------------------------------------


@dataclass
class ImageBitstream:
    mode: str
    qp: int
    width: int
    height: int
    poses: list[CameraPose]
    payloads: list[bytes]
    data: bytes = field(repr=False, default=b"")

    @property
    def frame_count(self) -> int:
        return len(self.payloads)

    @property
    def bit_length(self) -> int:
        return 8 * len(self.data)


def _pad(planes: np.ndarray) -> np.ndarray:
    h, w = planes.shape[1:]
    ph, pw = (-h) % MB, (-w) % MB
    if ph or pw:
        planes = np.pad(planes, ((0, 0), (0, ph), (0, pw)), mode="edge")
    return planes


def prepare_frame(image: np.ndarray) -> Frame:
    """[0, 1] RGB image to a padded YCbCr frame."""
    return Frame(_pad(rgb_to_ycbcr(to_uint8(image)).planes))


def encode_sequence(
    images: Sequence[np.ndarray], poses: Sequence[CameraPose], mode: str, qp: int, return_recon: bool = False
):
    """Code ``images`` ([0, 1] RGB, all the same size) with their poses.

    ``intra`` codes every frame alone; ``inter`` codes frame 0 intra and each
    later frame against the previous reconstruction. With ``return_recon`` the
    encoder's reconstructed frames are returned alongside the bitstream.
    """
    if mode not in MODES:
        raise ValueError(f"unknown coding mode {mode!r}")
    if not images:
        raise ValueError("need at least one frame")
    if len(images) != len(poses):
        raise ValueError("frame and pose counts differ")
    qp_to_qstep(qp)
    h, w = np.asarray(images[0]).shape[:2]
    payloads, recons = [], []
    prev = None
    for k, im in enumerate(images):
        if np.asarray(im).shape[:2] != (h, w):
            raise ValueError(f"frame {k} has a different size")
        frame = prepare_frame(im)
        if mode == "intra" or prev is None:
            payload, rec = encode_intra(frame, qp)
        else:
            payload, rec = encode_inter(frame, prev, qp)
        payloads.append(payload)
        recons.append(rec)
        prev = rec
    bs = ImageBitstream(mode, int(qp), w, h, list(poses), payloads)
    bs.data = write_bitstream(bs)
    return (bs, recons) if return_recon else bs


def write_bitstream(bs: ImageBitstream) -> bytes:
    """Layout: magic, version (u8), mode (u8), qp (u8), frame count, W, H (u32 each),
    pose count (u32) and 15 float64 per pose, then per frame a u32 bit count and the bytes."""
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<BBBIII", VERSION, MODES.index(bs.mode), bs.qp, len(bs.payloads), bs.width, bs.height))
    buf.write(struct.pack("<I", len(bs.poses)))
    for p in bs.poses:
        buf.write(struct.pack("<15d", *pose_to_record(p)))
    for payload in bs.payloads:
        buf.write(struct.pack("<I", 8 * len(payload)))
        buf.write(payload)
    return buf.getvalue()


def read_bitstream(data: bytes) -> ImageBitstream:
    try:
        if data[:4] != MAGIC:
            raise DecodeError(f"bad magic {data[:4]!r}", 0)
        version, mode, qp, count, w, h = struct.unpack_from("<BBBIII", data, 4)
        if version != VERSION or mode >= len(MODES):
            raise DecodeError("unsupported version or mode", 4)
        off = 19
        (npose,) = struct.unpack_from("<I", data, off)
        off += 4
        poses = []
        for _ in range(npose):
            poses.append(pose_from_record(struct.unpack_from("<15d", data, off)))
            off += 120
        payloads = []
        for k in range(count):
            (bits,) = struct.unpack_from("<I", data, off)
            off += 4
            n = bits // 8
            if off + n > len(data):
                raise DecodeError(f"frame {k}: payload truncated", len(data))
            payloads.append(data[off : off + n])
            off += n
    except struct.error as e:
        raise DecodeError(f"truncated header: {e}", len(data)) from None
    if off != len(data):
        raise DecodeError(f"{len(data) - off} trailing bytes", off)
    bs = ImageBitstream(MODES[mode], qp, w, h, poses, payloads)
    bs.data = bytes(data)
    return bs


def decode_frames(bs: ImageBitstream) -> list[Frame]:
    """Decoded (padded) YCbCr frames; errors name the failing frame."""
    hp, wp = bs.height + (-bs.height) % MB, bs.width + (-bs.width) % MB
    frames: list[Frame] = []
    for k, payload in enumerate(bs.payloads):
        try:
            if bs.mode == "intra" or k == 0:
                frames.append(decode_intra(payload, wp, hp, bs.qp))
            else:
                frames.append(decode_inter(payload, frames[-1], bs.qp))
        except DecodeError as e:
            raise DecodeError(f"frame {k}: {e}", e.offset) from None
    return frames


def frame_to_image(frame: Frame, width: int, height: int) -> np.ndarray:
    """Crop padding and convert back to [0, 1] RGB floats."""
    cropped = Frame(frame.planes[:, :height, :width].copy())
    return ycbcr_to_rgb(cropped).astype(np.float64) / 255.0


def decode_sequence(bs: ImageBitstream | bytes) -> tuple[list[np.ndarray], list[CameraPose]]:
    if isinstance(bs, (bytes, bytearray)):
        bs = read_bitstream(bytes(bs))
    frames = decode_frames(bs)
    return [frame_to_image(f, bs.width, bs.height) for f in frames], list(bs.poses)
