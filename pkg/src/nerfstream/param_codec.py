"""Compression of radiance-field parameters: QP to step size, uniform and
trellis (dependent) scalar quantization, context-adaptive binary arithmetic
coding, and the ``NNCb`` container."""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .field import EncodingConfig, MLPParams, RadianceFieldModel, RenderConfig
from .rangecoder import (
    Contexts,
    DecodeError,
    ExpGolombContexts,
    RangeDecoder,
    RangeEncoder,
    decode_eg0,
    encode_eg0,
)

MAGIC = b"NNCb"
VERSION = 1
QP_MIN, QP_MAX = -64, 64
KINDS = ("uniform", "dependent")

# 4-state machine: next state from (state, index parity).
# States 0 and 1 reconstruct on the step grid only; states 2 and 3 may also use
# the grid shifted by step/2, so every state can reproduce the uniform choice.
_NEXT_STATE = ((0, 2), (2, 0), (1, 3), (3, 1))
_FINE_STATES = (False, False, True, True)


@dataclass
class TensorRecord:
    name: str
    shape: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        self.shape = tuple(int(s) for s in self.shape)
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if self.values.size != int(np.prod(self.shape)):
            raise ValueError(f"{self.name}: {self.values.size} values for shape {self.shape}")


@dataclass
class QuantizedTensor:
    name: str
    shape: tuple[int, ...]
    step: float
    indices: np.ndarray
    quantizer_kind: str = "uniform"

    def __post_init__(self):
        self.shape = tuple(int(s) for s in self.shape)
        self.indices = np.asarray(self.indices, dtype=np.int64).ravel()
        if self.indices.size != int(np.prod(self.shape)):
            raise ValueError(f"{self.name}: {self.indices.size} indices for shape {self.shape}")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.quantizer_kind not in KINDS:
            raise ValueError(f"unknown quantizer kind {self.quantizer_kind!r}")

    def __eq__(self, other):
        if not isinstance(other, QuantizedTensor):
            return NotImplemented
        return (
            self.name == other.name
            and self.shape == other.shape
            and self.step == other.step
            and self.quantizer_kind == other.quantizer_kind
            and np.array_equal(self.indices, other.indices)
        )

    def reconstruct(self) -> np.ndarray:
        return dequantize(self).reshape(self.shape)


@dataclass
class ManifestEntry:
    name: str
    shape: tuple[int, ...]
    step: float
    payload_bits: int


@dataclass
class ParamBitstream:
    qp: int
    quantizer_kind: str
    manifest: list[ManifestEntry]
    payloads: list[bytes]
    data: bytes = field(repr=False, default=b"")

    @property
    def bit_length(self) -> int:
        return 8 * len(self.data)


def check_qp(qp: int) -> int:
    if not QP_MIN <= int(qp) <= QP_MAX:
        raise ValueError(f"NN QP {qp} outside [{QP_MIN}, {QP_MAX}]")
    return int(qp)


def qp_to_stepsize(qp: int, tensor: TensorRecord) -> float:
    check_qp(qp)
    if tensor.values.size == 0:
        raise ValueError("empty tensor")
    max_abs = float(np.max(np.abs(tensor.values)))
    if max_abs == 0.0:
        return 1.0
    return max_abs * 2.0 ** (qp / 4.0)


def quantize_uniform(tensor: TensorRecord, step: float) -> QuantizedTensor:
    if not step > 0:
        raise ValueError("step must be positive")
    idx = np.rint(tensor.values / step).astype(np.int64)
    return QuantizedTensor(tensor.name, tensor.shape, step, idx, "uniform")


def quantize_dependent(tensor: TensorRecord, step: float) -> QuantizedTensor:
    """Viterbi search over the 4-state trellis minimizing total squared error.

    Coarse states reconstruct ``k * step``; fine states reconstruct
    ``k * step / 2``. The state for element ``i + 1`` follows from the state
    and index parity at element ``i``; coding starts in state 0.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    x = tensor.values
    n = x.size
    inf = float("inf")
    cost = [0.0, inf, inf, inf]
    # back[i][s] = (prev_state, index) for reaching state s after element i
    back: list[list[tuple[int, int] | None]] = []
    grid = [step, step, 0.5 * step, 0.5 * step]
    for v in x.tolist():
        new = [inf, inf, inf, inf]
        links: list[tuple[int, int] | None] = [None, None, None, None]
        for s in range(4):
            c = cost[s]
            if c == inf:
                continue
            g = grid[s]
            lo = int(np.floor(v / g))
            for k in (lo, lo + 1):
                e = v - k * g
                total = c + e * e
                t = _NEXT_STATE[s][k & 1]
                # ties prefer the smaller magnitude index, then the lower previous state
                if total < new[t] or (total == new[t] and links[t] is not None and abs(k) < abs(links[t][1])):
                    new[t] = total
                    links[t] = (s, k)
        cost = new
        back.append(links)
    idx = np.zeros(n, dtype=np.int64)
    if n:
        s = int(np.argmin(cost))
        for i in range(n - 1, -1, -1):
            prev, k = back[i][s]
            idx[i] = k
            s = prev
    return QuantizedTensor(tensor.name, tensor.shape, step, idx, "dependent")


def dequantize(qt: QuantizedTensor) -> np.ndarray:
    if qt.quantizer_kind == "uniform":
        return qt.indices.astype(np.float64) * qt.step
    out = np.empty(qt.indices.size)
    s = 0
    for i, k in enumerate(qt.indices.tolist()):
        out[i] = k * (0.5 * qt.step if _FINE_STATES[s] else qt.step)
        s = _NEXT_STATE[s][k & 1]
    return out


# --- entropy coding --------------------------------------------------------


class _IndexContexts:
    def __init__(self):
        self.sig = Contexts(2)  # selected by whether the previous index was zero
        self.sign = Contexts(1)
        self.gt = Contexts(2)  # |k| > 1, |k| > 2
        self.rem = ExpGolombContexts()


def _encode_indices(enc: RangeEncoder, indices: Sequence[int], ctx: _IndexContexts) -> None:
    prev_zero = 1
    for k in indices:
        sig_ctx = 0 if prev_zero else 1
        if k == 0:
            enc.encode(0, ctx.sig, sig_ctx)
            prev_zero = 1
            continue
        enc.encode(1, ctx.sig, sig_ctx)
        enc.encode(1 if k < 0 else 0, ctx.sign, 0)
        a = -k if k < 0 else k
        enc.encode(1 if a > 1 else 0, ctx.gt, 0)
        if a > 1:
            enc.encode(1 if a > 2 else 0, ctx.gt, 1)
            if a > 2:
                encode_eg0(enc, a - 3, ctx.rem)
        prev_zero = 0


def _decode_indices(dec: RangeDecoder, count: int, ctx: _IndexContexts) -> np.ndarray:
    out = np.zeros(count, dtype=np.int64)
    prev_zero = 1
    for i in range(count):
        if not dec.decode(ctx.sig, 0 if prev_zero else 1):
            prev_zero = 1
            continue
        neg = dec.decode(ctx.sign, 0)
        a = 1
        if dec.decode(ctx.gt, 0):
            a = 2
            if dec.decode(ctx.gt, 1):
                a = 3 + decode_eg0(dec, ctx.rem)
        out[i] = -a if neg else a
        prev_zero = 0
    return out


def entropy_encode(qt: QuantizedTensor) -> bytes:
    """Code the indices of one tensor; the result is byte aligned."""
    enc = RangeEncoder()
    _encode_indices(enc, qt.indices.tolist(), _IndexContexts())
    return enc.finish()


def entropy_decode(bits: bytes, manifest: ManifestEntry, quantizer_kind: str = "uniform") -> QuantizedTensor:
    count = int(np.prod(manifest.shape))
    try:
        dec = RangeDecoder(bits)
        idx = _decode_indices(dec, count, _IndexContexts())
        dec.check_consumed()
    except DecodeError as e:
        raise DecodeError(f"tensor {manifest.name!r}: {e}", e.offset) from None
    return QuantizedTensor(manifest.name, manifest.shape, manifest.step, idx, quantizer_kind)


# --- model level -----------------------------------------------------------


def model_records(model: RadianceFieldModel) -> list[TensorRecord]:
    recs = []
    for net_name, net in model.networks().items():
        for k, (w, b) in enumerate(net.layers):
            recs.append(TensorRecord(f"{net_name}.{k}.weight", w.shape, w))
            recs.append(TensorRecord(f"{net_name}.{k}.bias", b.shape, b))
    return recs


def quantize(tensor: TensorRecord, step: float, kind: str) -> QuantizedTensor:
    if kind == "uniform":
        return quantize_uniform(tensor, step)
    if kind == "dependent":
        return quantize_dependent(tensor, step)
    raise ValueError(f"unknown quantizer kind {kind!r}")


def encode_model(model: RadianceFieldModel, qp: int, kind: str = "dependent") -> ParamBitstream:
    """Quantize every tensor with its own step (same QP for all) and entropy code it."""
    check_qp(qp)
    manifest, payloads = [], []
    for rec in model_records(model):
        step = qp_to_stepsize(qp, rec)
        payload = entropy_encode(quantize(rec, step, kind))
        manifest.append(ManifestEntry(rec.name, rec.shape, step, 8 * len(payload)))
        payloads.append(payload)
    bs = ParamBitstream(qp, kind, manifest, payloads)
    bs.data = write_bitstream(bs)
    return bs


def write_bitstream(bs: ParamBitstream) -> bytes:
    """Serialize: magic, version (u8), QP (i8), kind (u8), tensor count (u32), per-tensor
    manifest (name length u16 + UTF-8 name, rank u8, dims u32, step f64, payload bits u64),
    then the payloads in manifest order."""
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<BbBI", VERSION, bs.qp, KINDS.index(bs.quantizer_kind), len(bs.manifest)))
    for m in bs.manifest:
        name = m.name.encode("utf-8")
        buf.write(struct.pack("<H", len(name)))
        buf.write(name)
        buf.write(struct.pack("<B", len(m.shape)))
        buf.write(struct.pack(f"<{len(m.shape)}I", *m.shape))
        buf.write(struct.pack("<dQ", m.step, m.payload_bits))
    for p in bs.payloads:
        buf.write(p)
    return buf.getvalue()


def read_header(data: bytes) -> tuple[ParamBitstream, int]:
    """Parse the header only; returns a bitstream with empty payloads and the payload offset."""
    try:
        if data[:4] != MAGIC:
            raise DecodeError(f"bad magic {data[:4]!r}", 0)
        version, qp, kind, count = struct.unpack_from("<BbBI", data, 4)
        if version != VERSION:
            raise DecodeError(f"unsupported version {version}", 4)
        if kind >= len(KINDS):
            raise DecodeError(f"unknown quantizer kind {kind}", 6)
        off = 11
        manifest = []
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", data, off)
            off += 2
            name = data[off : off + nlen].decode("utf-8")
            off += nlen
            (rank,) = struct.unpack_from("<B", data, off)
            off += 1
            shape = struct.unpack_from(f"<{rank}I", data, off)
            off += 4 * rank
            step, bits = struct.unpack_from("<dQ", data, off)
            off += 16
            manifest.append(ManifestEntry(name, tuple(shape), step, bits))
    except struct.error as e:
        raise DecodeError(f"truncated header: {e}", len(data)) from None
    return ParamBitstream(qp, KINDS[kind], manifest, []), off


def read_bitstream(data: bytes) -> ParamBitstream:
    bs, off = read_header(data)
    for m in bs.manifest:
        if m.payload_bits % 8:
            raise DecodeError(f"tensor {m.name!r}: payload not byte aligned", off)
        n = m.payload_bits // 8
        if off + n > len(data):
            raise DecodeError(f"tensor {m.name!r}: payload truncated", len(data))
        bs.payloads.append(data[off : off + n])
        off += n
    if off != len(data):
        raise DecodeError(f"{len(data) - off} trailing bytes", off)
    bs.data = bytes(data)
    return bs


def _model_from_tensors(tensors: dict[str, np.ndarray], template: RadianceFieldModel | None) -> RadianceFieldModel:
    nets = {}
    for net_name in ("proposal", "main"):
        layers = []
        k = 0
        while f"{net_name}.{k}.weight" in tensors:
            layers.append((tensors[f"{net_name}.{k}.weight"], tensors[f"{net_name}.{k}.bias"]))
            k += 1
        if not layers:
            raise DecodeError(f"bitstream holds no {net_name} network")
        nets[net_name] = MLPParams(layers)
    if template is not None:
        return RadianceFieldModel(nets["proposal"], nets["main"], template.encoding, template.render_cfg)
    width = nets["main"].in_width
    return RadianceFieldModel(nets["proposal"], nets["main"], EncodingConfig(L_pos=width // 6), RenderConfig())


def decode_model(bs: ParamBitstream | bytes, template: RadianceFieldModel | None = None) -> RadianceFieldModel:
    """Reconstruct the model. Encoding and render settings are not carried in the
    stream; they come from ``template`` (the client's copy of the architecture)."""
    if isinstance(bs, (bytes, bytearray)):
        bs = read_bitstream(bytes(bs))
    tensors = {}
    for m, payload in zip(bs.manifest, bs.payloads):
        qt = entropy_decode(payload, m, bs.quantizer_kind)
        tensors[m.name] = qt.reconstruct()
    return _model_from_tensors(tensors, template)
