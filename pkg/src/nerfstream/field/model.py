"""Two-network radiance field: encoding, queries, ray rendering and its gradient."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .mlp import MLPParams, init_mlp, mlp_backward, mlp_forward, sigmoid, softplus
from .render import RenderConfig, composite, composite_backward, deltas, fine_draws, sample_coarse


@dataclass(frozen=True)
class EncodingConfig:
    """Sinusoidal encoding. Positions are mapped to ``(x - center) / scale`` first,
    so every sampled point should land inside the unit cube."""

    L_pos: int = 6
    L_dir: int = 0
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    scale: float = 1.0

    def __post_init__(self):
        if self.L_pos < 1 or self.L_dir < 0:
            raise ValueError("need L_pos >= 1 and L_dir >= 0")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    @property
    def width(self) -> int:
        return 3 * 2 * self.L_pos + 3 * 2 * self.L_dir


def positional_encode(v, L: int) -> np.ndarray:
    """Encode the last axis of ``v`` (k components) into k*2L features.

    Layout: for each frequency f = 1, 2, ..., 2**(L-1) the block
    ``[sin(f*pi*v_0..k-1), cos(f*pi*v_0..k-1)]``, lowest frequency first.
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    v = np.asarray(v, dtype=np.float64)
    sin = np.empty(v.shape[:-1] + (L, v.shape[-1]))
    cos = np.empty_like(sin)
    sin[..., 0, :] = np.sin(np.pi * v)
    cos[..., 0, :] = np.cos(np.pi * v)
    # double-angle recurrence; drift after L doublings stays near 2**L ulp
    for f in range(1, L):
        s0, c0 = sin[..., f - 1, :], cos[..., f - 1, :]
        sin[..., f, :] = 2.0 * s0 * c0
        cos[..., f, :] = (c0 - s0) * (c0 + s0)
    enc = np.concatenate([sin, cos], axis=-1)  # (..., L, 2k)
    return enc.reshape(v.shape[:-1] + (2 * L * v.shape[-1],))


@dataclass
class RadianceFieldModel:
    proposal: MLPParams
    main: MLPParams
    encoding: EncodingConfig = field(default_factory=EncodingConfig)
    render_cfg: RenderConfig = field(default_factory=RenderConfig)

    def __post_init__(self):
        w = self.encoding.width
        if self.proposal.in_width != w or self.main.in_width != w:
            raise ValueError(f"network input widths must equal encoded width {w}")
        if self.proposal.out_width != 1 or self.main.out_width != 4:
            raise ValueError("proposal must emit 1 value and main 4 values")

    def networks(self) -> dict[str, MLPParams]:
        return {"proposal": self.proposal, "main": self.main}

    def tensors(self) -> list[np.ndarray]:
        return self.proposal.tensors() + self.main.tensors()

    def with_tensors(self, tensors) -> "RadianceFieldModel":
        n = 2 * len(self.proposal.layers)
        ts = list(tensors)
        return replace(self, proposal=MLPParams.from_tensors(ts[:n]), main=MLPParams.from_tensors(ts[n:]))

    def copy(self) -> "RadianceFieldModel":
        return replace(self, proposal=self.proposal.copy(), main=self.main.copy())

    def num_params(self) -> int:
        return self.proposal.num_params() + self.main.num_params()


def init_model(
    seed: int,
    encoding: EncodingConfig | None = None,
    render_cfg: RenderConfig | None = None,
    main_width: int = 64,
    main_depth: int = 4,
    proposal_width: int = 32,
    proposal_depth: int = 2,
) -> RadianceFieldModel:
    """Randomly initialized model; depth counts hidden layers."""
    encoding = encoding or EncodingConfig()
    render_cfg = render_cfg or RenderConfig()
    rng = np.random.default_rng(seed)
    w = encoding.width
    proposal = init_mlp([w] + [proposal_width] * proposal_depth + [1], rng)
    main = init_mlp([w] + [main_width] * main_depth + [4], rng)
    return RadianceFieldModel(proposal, main, encoding, render_cfg)


def zero_model(model: RadianceFieldModel) -> RadianceFieldModel:
    return model.with_tensors([np.zeros_like(t) for t in model.tensors()])


def encode_inputs(enc: EncodingConfig, x: np.ndarray, d: np.ndarray | None = None) -> np.ndarray:
    xn = (np.asarray(x, dtype=np.float64) - np.asarray(enc.center)) / enc.scale
    feats = positional_encode(xn, enc.L_pos)
    if enc.L_dir:
        d = np.broadcast_to(np.asarray(d, dtype=np.float64), x.shape)
        feats = np.concatenate([feats, positional_encode(d, enc.L_dir)], axis=-1)
    return feats


def query_field(model: RadianceFieldModel, x, d=None) -> tuple[np.ndarray, np.ndarray]:
    """Main-network density (softplus) and color (sigmoid) at points ``x`` (..., 3)."""
    x = np.asarray(x, dtype=np.float64)
    raw = mlp_forward(model.main, encode_inputs(model.encoding, x, d))
    return softplus(raw[..., 0]), sigmoid(raw[..., 1:])


def query_proposal(model: RadianceFieldModel, x, d=None) -> np.ndarray:
    raw = mlp_forward(model.proposal, encode_inputs(model.encoding, np.asarray(x, dtype=np.float64), d))
    return softplus(raw[..., 0])


@dataclass
class RayBatchOutput:
    color: np.ndarray  # main-network render, (B, 3)
    proposal_color: np.ndarray  # proposal render with main colors at coarse depths, (B, 3)
    cache: dict | None = None


def render_rays(
    model: RadianceFieldModel,
    origins: np.ndarray,
    dirs: np.ndarray,
    rng: np.random.Generator | None = None,
    keep_cache: bool = False,
    coarse_ts: np.ndarray | None = None,
) -> RayBatchOutput:
    """Coarse pass on the proposal net, fine resampling, main pass and compositing.

    The proposal render reuses the main network's colors at the coarse depths;
    those colors and the resampled depths are treated as constants by the
    backward pass.
    """
    cfg = model.render_cfg
    enc = model.encoding
    bg = np.asarray(cfg.background, dtype=np.float64)
    nrays = origins.shape[0]
    tc = sample_coarse(nrays, cfg, rng) if coarse_ts is None else coarse_ts
    nc = tc.shape[1]

    pc: list | None = [] if keep_cache else None
    xc = origins[:, None, :] + tc[..., None] * dirs[:, None, :]
    raw_p = mlp_forward(model.proposal, encode_inputs(enc, xc, dirs[:, None, :]), pc)[..., 0]
    sig_p = softplus(raw_p)
    dc = deltas(tc, cfg.t_far)
    _, w_p = composite(sig_p, np.zeros(tc.shape + (3,)), dc, np.zeros(3))

    if cfg.n_fine:
        tf = fine_draws(tc, w_p, cfg.n_fine, cfg.t_far, rng)
        t_all = np.concatenate([tc, tf], axis=1)
        order = np.argsort(t_all, axis=1, kind="stable")
        t = np.take_along_axis(t_all, order, axis=1)
        # position of coarse sample k inside the sorted list
        inv = np.argsort(order, axis=1, kind="stable")[:, :nc]
    else:
        t = tc
        inv = np.broadcast_to(np.arange(nc), (nrays, nc))

    mc: list | None = [] if keep_cache else None
    x = origins[:, None, :] + t[..., None] * dirs[:, None, :]
    raw = mlp_forward(model.main, encode_inputs(enc, x, dirs[:, None, :]), mc)
    sig = softplus(raw[..., 0])
    rgb = sigmoid(raw[..., 1:])
    dm = deltas(t, cfg.t_far)
    color, w = composite(sig, rgb, dm, bg)

    rgb_c = np.take_along_axis(rgb, inv[..., None], axis=1)
    color_p, w_p2 = composite(sig_p, rgb_c, dc, bg)

    cache = None
    if keep_cache:
        cache = dict(
            raw_p=raw_p, sig_p=sig_p, dc=dc, rgb_c=rgb_c, w_p=w_p2, color_p=color_p, pc=pc,
            raw=raw, sig=sig, rgb=rgb, dm=dm, w=w, color=color, mc=mc, bg=bg,
        )
    return RayBatchOutput(color, color_p, cache)


def backward_rays(model: RadianceFieldModel, out: RayBatchOutput, g_color: np.ndarray, g_color_p: np.ndarray) -> list[np.ndarray]:
    """Gradients of (loss on main render, loss on proposal render) w.r.t. all tensors.

    The main-render loss reaches only the main network and the proposal-render
    loss only the proposal network.
    """
    c = out.cache
    g_sig, g_rgb = composite_backward(c["sig"], c["rgb"], c["dm"], c["bg"], c["w"], c["color"], g_color)
    g_raw = np.empty_like(c["raw"])
    g_raw[..., 0] = g_sig * sigmoid(c["raw"][..., 0])
    g_raw[..., 1:] = g_rgb * c["rgb"] * (1.0 - c["rgb"])
    g_main = mlp_backward(model.main, c["mc"], g_raw)

    g_sig_p, _ = composite_backward(c["sig_p"], c["rgb_c"], c["dc"], c["bg"], c["w_p"], c["color_p"], g_color_p)
    g_raw_p = (g_sig_p * sigmoid(c["raw_p"]))[..., None]
    g_prop = mlp_backward(model.proposal, c["pc"], g_raw_p)
    return g_prop + g_main
