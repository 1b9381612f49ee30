"""Transformer building blocks with hand-written forward/backward passes.

Every layer's `fwd` is pure: it returns (output, cache) and touches no shared
state, so inference forwards can run concurrently over one set of weights.
`bwd(dy, cache)` returns the input gradient and accumulates parameter
gradients in place (training holds exclusive access).
"""
from __future__ import annotations

import numpy as np

from . import kernels
from .rope import rotate_half_split

LN_EPS = 1e-6


class Param:
    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = value
        self.grad = np.zeros_like(value)

    @property
    def size(self) -> int:
        return self.value.size


class Module:
    """Minimal parameter container with named traversal."""

    def __init__(self):
        self._params: dict[str, Param] = {}
        self._children: dict[str, Module] = {}

    def param(self, name: str, value: np.ndarray) -> Param:
        p = Param(value)
        self._params[name] = p
        return p

    def child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = ""):
        for n, p in self._params.items():
            yield prefix + n, p
        for cn, ch in self._children.items():
            yield from ch.named_parameters(prefix + cn + ".")

    def parameters(self) -> list[Param]:
        return [p for _, p in self.named_parameters()]

    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grads(self) -> None:
        for p in self.parameters():
            p.grad[...] = 0.0


def xavier_uniform(rng: np.random.Generator, d_in: int, d_out: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (d_in + d_out))
    return rng.uniform(-limit, limit, size=(d_in, d_out)).astype(dtype)


class Linear(Module):
    def __init__(self, rng, d_in: int, d_out: int, dtype, zero_init: bool = False):
        super().__init__()
        w = np.zeros((d_in, d_out), dtype) if zero_init else xavier_uniform(rng, d_in, d_out, dtype)
        self.w = self.param("w", w)
        self.b = self.param("b", np.zeros(d_out, dtype))

    def fwd(self, x: np.ndarray):
        return x @ self.w.value + self.b.value, x

    def bwd(self, dy: np.ndarray, cache) -> np.ndarray:
        x = cache
        x2 = x.reshape(-1, x.shape[-1])
        dy2 = dy.reshape(-1, dy.shape[-1])
        self.w.grad += x2.T @ dy2
        self.b.grad += dy2.sum(axis=0)
        return dy @ self.w.value.T


def layernorm_fwd(x: np.ndarray):
    y, rstd = kernels.layernorm(x, LN_EPS)
    return y, (y, rstd)


def layernorm_bwd(dy: np.ndarray, cache) -> np.ndarray:
    y, rstd = cache
    return kernels.layernorm_bwd(y, rstd, dy)


def modulate_fwd(h: np.ndarray, shift: np.ndarray, scale: np.ndarray):
    # h: (B, N, d); shift/scale: (B, d)
    return h * (1.0 + scale[:, None, :]) + shift[:, None, :], (h, scale)


def modulate_bwd(dy: np.ndarray, cache):
    h, scale = cache
    dh = dy * (1.0 + scale[:, None, :])
    dscale = (dy * h).sum(axis=1)
    dshift = dy.sum(axis=1)
    return dh, dshift, dscale


def silu_fwd(x: np.ndarray):
    s = 1.0 / (1.0 + np.exp(-x))
    return x * s, (x, s)


def silu_bwd(dy: np.ndarray, cache) -> np.ndarray:
    x, s = cache
    return dy * (s * (1.0 + x * (1.0 - s)))


class Mlp(Module):
    def __init__(self, rng, d: int, hidden: int, dtype):
        super().__init__()
        self.fc1 = self.child("fc1", Linear(rng, d, hidden, dtype))
        self.fc2 = self.child("fc2", Linear(rng, hidden, d, dtype))

    def fwd(self, x: np.ndarray):
        h, c1 = self.fc1.fwd(x)
        a = kernels.gelu(h)
        y, c2 = self.fc2.fwd(a)
        return y, (c1, h, c2)

    def bwd(self, dy: np.ndarray, cache) -> np.ndarray:
        c1, h, c2 = cache
        da = self.fc2.bwd(dy, c2)
        dh = kernels.gelu_bwd(h, da)
        return self.fc1.bwd(dh, c1)


def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    b, n, d = x.shape
    return x.reshape(b, n, heads, d // heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, h, n, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, n, h * dh)


class SelfAttention(Module):
    """Multi-head self-attention with rotary-embedded queries and keys."""

    def __init__(self, rng, d: int, heads: int, dtype):
        super().__init__()
        assert d % heads == 0
        self.heads = heads
        self.scale = (d // heads) ** -0.5
        self.qkv = self.child("qkv", Linear(rng, d, 3 * d, dtype))
        self.proj = self.child("proj", Linear(rng, d, d, dtype))

    def fwd(self, x: np.ndarray, rot):
        """rot is (cos, sin) of shape (N, head_dim/2), or None to skip rotation."""
        qkv, cqkv = self.qkv.fwd(x)
        q, k, v = (_split_heads(t, self.heads) for t in np.split(qkv, 3, axis=-1))
        if rot is not None:
            cos, sin = rot
            q = rotate_half_split(q, cos, sin)
            k = rotate_half_split(k, cos, sin)
        s = (q @ k.transpose(0, 1, 3, 2)) * self.scale
        a = kernels.softmax(s)
        o = _merge_heads(a @ v)
        y, cproj = self.proj.fwd(o)
        return y, (cqkv, q, k, v, a, rot, cproj)

    def bwd(self, dy: np.ndarray, cache) -> np.ndarray:
        cqkv, q, k, v, a, rot, cproj = cache
        do = _split_heads(self.proj.bwd(dy, cproj), self.heads)
        da = do @ v.transpose(0, 1, 3, 2)
        dv = a.transpose(0, 1, 3, 2) @ do
        ds = kernels.softmax_bwd(a, da)
        dq = (ds @ k) * self.scale
        dk = (ds.transpose(0, 1, 3, 2) @ q) * self.scale
        if rot is not None:
            cos, sin = rot
            dq = rotate_half_split(dq, cos, -sin)
            dk = rotate_half_split(dk, cos, -sin)
        dqkv = np.concatenate([_merge_heads(g) for g in (dq, dk, dv)], axis=-1)
        return self.qkv.bwd(dqkv, cqkv)


class CrossAttention(Module):
    """Queries from the main stream, keys/values from condition tokens (no rotary)."""

    def __init__(self, rng, d: int, heads: int, dtype):
        super().__init__()
        self.heads = heads
        self.scale = (d // heads) ** -0.5
        self.q = self.child("q", Linear(rng, d, d, dtype))
        self.kv = self.child("kv", Linear(rng, d, 2 * d, dtype))
        self.proj = self.child("proj", Linear(rng, d, d, dtype))

    def fwd(self, x: np.ndarray, ctx: np.ndarray):
        qf, cq = self.q.fwd(x)
        kvf, ckv = self.kv.fwd(ctx)
        q = _split_heads(qf, self.heads)
        k, v = (_split_heads(t, self.heads) for t in np.split(kvf, 2, axis=-1))
        s = (q @ k.transpose(0, 1, 3, 2)) * self.scale
        a = kernels.softmax(s)
        o = _merge_heads(a @ v)
        y, cproj = self.proj.fwd(o)
        return y, (cq, ckv, q, k, v, a, cproj)

    def bwd(self, dy: np.ndarray, cache):
        cq, ckv, q, k, v, a, cproj = cache
        do = _split_heads(self.proj.bwd(dy, cproj), self.heads)
        da = do @ v.transpose(0, 1, 3, 2)
        dv = a.transpose(0, 1, 3, 2) @ do
        ds = kernels.softmax_bwd(a, da)
        dq = (ds @ k) * self.scale
        dk = (ds.transpose(0, 1, 3, 2) @ q) * self.scale
        dx = self.q.bwd(_merge_heads(dq), cq)
        dkv = np.concatenate([_merge_heads(dk), _merge_heads(dv)], axis=-1)
        dctx = self.kv.bwd(dkv, ckv)
        return dx, dctx


class DiTBlock(Module):
    """Pre-norm self-attention + MLP, both gated by timestep-conditioned
    modulation whose projection starts at zero (the block is the identity at
    initialization)."""

    def __init__(self, rng, d: int, heads: int, mlp_ratio: int, dtype):
        super().__init__()
        self.mod = self.child("mod", Linear(rng, d, 6 * d, dtype, zero_init=True))
        self.attn = self.child("attn", SelfAttention(rng, d, heads, dtype))
        self.mlp = self.child("mlp", Mlp(rng, d, mlp_ratio * d, dtype))

    def fwd(self, x: np.ndarray, c: np.ndarray, rot):
        """x: (B, N, d); c: (B, d) conditioning (already SiLU-activated)."""
        m, cmod = self.mod.fwd(c)
        sh1, sc1, g1, sh2, sc2, g2 = np.split(m, 6, axis=-1)
        n1, cn1 = layernorm_fwd(x)
        h1, cm1 = modulate_fwd(n1, sh1, sc1)
        a, ca = self.attn.fwd(h1, rot)
        x1 = x + g1[:, None, :] * a
        n2, cn2 = layernorm_fwd(x1)
        h2, cm2 = modulate_fwd(n2, sh2, sc2)
        o, co = self.mlp.fwd(h2)
        y = x1 + g2[:, None, :] * o
        return y, (cmod, g1, g2, cn1, cm1, ca, a, cn2, cm2, co, o)

    def bwd(self, dy: np.ndarray, cache):
        cmod, g1, g2, cn1, cm1, ca, a, cn2, cm2, co, o = cache
        dg2 = (dy * o).sum(axis=1)
        do = dy * g2[:, None, :]
        dx1 = dy.copy()
        dh2 = self.mlp.bwd(do, co)
        dn2, dsh2, dsc2 = modulate_bwd(dh2, cm2)
        dx1 += layernorm_bwd(dn2, cn2)
        dg1 = (dx1 * a).sum(axis=1)
        da = dx1 * g1[:, None, :]
        dx = dx1.copy()
        dh1 = self.attn.bwd(da, ca)
        dn1, dsh1, dsc1 = modulate_bwd(dh1, cm1)
        dx += layernorm_bwd(dn1, cn1)
        dm = np.concatenate([dsh1, dsc1, dg1, dsh2, dsc2, dg2], axis=-1)
        dc = self.mod.bwd(dm, cmod)
        return dx, dc


class CrossCondBlock(Module):
    """DiT block plus a gated cross-attention sublayer reading condition tokens.

    Used by the ablation that injects the foreground through cross-attention
    instead of token-wise concatenation."""

    def __init__(self, rng, d: int, heads: int, mlp_ratio: int, dtype):
        super().__init__()
        self.mod = self.child("mod", Linear(rng, d, 9 * d, dtype, zero_init=True))
        self.attn = self.child("attn", SelfAttention(rng, d, heads, dtype))
        self.xattn = self.child("xattn", CrossAttention(rng, d, heads, dtype))
        self.mlp = self.child("mlp", Mlp(rng, d, mlp_ratio * d, dtype))

    def fwd(self, x: np.ndarray, c: np.ndarray, rot, ctx: np.ndarray):
        m, cmod = self.mod.fwd(c)
        sh1, sc1, g1, shx, scx, gx, sh2, sc2, g2 = np.split(m, 9, axis=-1)
        n1, cn1 = layernorm_fwd(x)
        h1, cm1 = modulate_fwd(n1, sh1, sc1)
        a, ca = self.attn.fwd(h1, rot)
        x1 = x + g1[:, None, :] * a
        nx, cnx = layernorm_fwd(x1)
        hx, cmx = modulate_fwd(nx, shx, scx)
        xa, cxa = self.xattn.fwd(hx, ctx)
        x2 = x1 + gx[:, None, :] * xa
        n2, cn2 = layernorm_fwd(x2)
        h2, cm2 = modulate_fwd(n2, sh2, sc2)
        o, co = self.mlp.fwd(h2)
        y = x2 + g2[:, None, :] * o
        return y, (cmod, g1, gx, g2, cn1, cm1, ca, a, cnx, cmx, cxa, xa, cn2, cm2, co, o)

    def bwd(self, dy: np.ndarray, cache):
        (cmod, g1, gx, g2, cn1, cm1, ca, a, cnx, cmx, cxa, xa, cn2, cm2, co, o) = cache
        dg2 = (dy * o).sum(axis=1)
        do = dy * g2[:, None, :]
        dx2 = dy.copy()
        dh2 = self.mlp.bwd(do, co)
        dn2, dsh2, dsc2 = modulate_bwd(dh2, cm2)
        dx2 += layernorm_bwd(dn2, cn2)
        dgx = (dx2 * xa).sum(axis=1)
        dxa = dx2 * gx[:, None, :]
        dx1 = dx2.copy()
        dhx, dctx = self.xattn.bwd(dxa, cxa)
        dnx, dshx, dscx = modulate_bwd(dhx, cmx)
        dx1 += layernorm_bwd(dnx, cnx)
        dg1 = (dx1 * a).sum(axis=1)
        da = dx1 * g1[:, None, :]
        dx = dx1.copy()
        dh1 = self.attn.bwd(da, ca)
        dn1, dsh1, dsc1 = modulate_bwd(dh1, cm1)
        dx += layernorm_bwd(dn1, cn1)
        dm = np.concatenate([dsh1, dsc1, dg1, dshx, dscx, dgx, dsh2, dsc2, dg2], axis=-1)
        dc = self.mod.bwd(dm, cmod)
        return dx, dc, dctx


class TimestepEmbedder(Module):
    """Sinusoidal step embedding refined by a 2-layer MLP."""

    def __init__(self, rng, d: int, dtype, max_period: float = 10000.0):
        super().__init__()
        self.d = d
        self.max_period = max_period
        self.fc1 = self.child("fc1", Linear(rng, d, d, dtype))
        self.fc2 = self.child("fc2", Linear(rng, d, d, dtype))
        self.dtype = dtype

    def sinusoid(self, t: np.ndarray) -> np.ndarray:
        half = self.d // 2
        freqs = np.exp(-np.log(self.max_period) * np.arange(half, dtype=np.float64) / half)
        args = np.asarray(t, dtype=np.float64)[:, None] * freqs
        return np.concatenate([np.cos(args), np.sin(args)], axis=-1).astype(self.dtype)

    def fwd(self, t: np.ndarray):
        e = self.sinusoid(t)
        h, c1 = self.fc1.fwd(e)
        s, cs = silu_fwd(h)
        y, c2 = self.fc2.fwd(s)
        return y, (c1, cs, c2)

    def bwd(self, dy: np.ndarray, cache) -> None:
        c1, cs, c2 = cache
        ds = self.fc2.bwd(dy, c2)
        dh = silu_bwd(ds, cs)
        self.fc1.bwd(dh, c1)  # sinusoid has no parameters upstream


class FinalHead(Module):
    """Modulated layernorm followed by a zero-initialized projection to patches."""

    def __init__(self, rng, d: int, d_out: int, dtype):
        super().__init__()
        self.mod = self.child("mod", Linear(rng, d, 2 * d, dtype, zero_init=True))
        self.proj = self.child("proj", Linear(rng, d, d_out, dtype, zero_init=True))

    def fwd(self, x: np.ndarray, c: np.ndarray):
        m, cmod = self.mod.fwd(c)
        sh, sc = np.split(m, 2, axis=-1)
        n, cn = layernorm_fwd(x)
        h, cm = modulate_fwd(n, sh, sc)
        y, cp = self.proj.fwd(h)
        return y, (cmod, cn, cm, cp)

    def bwd(self, dy: np.ndarray, cache):
        cmod, cn, cm, cp = cache
        dh = self.proj.bwd(dy, cp)
        dn, dsh, dsc = modulate_bwd(dh, cm)
        dx = layernorm_bwd(dn, cn)
        dc = self.mod.bwd(np.concatenate([dsh, dsc], axis=-1), cmod)
        return dx, dc
