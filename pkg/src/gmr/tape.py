"""Minimal reverse-mode autodiff over numpy arrays.

Ops are recorded on a :class:`Tape` in execution order together with a
vector-Jacobian product closure; :meth:`Tape.backward` walks the record in
reverse, which is a reverse topological order by construction.

Only what the motion regressor and its losses need is provided. Broadcasting
follows numpy and gradients are summed back to the input shape.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .rot3 import rodrigues_coeffs, rotation_angle, skew, vee


class Var:
    __slots__ = ("value", "grad", "requires_grad")

    def __init__(self, value: np.ndarray, requires_grad: bool = False):
        self.value = value
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Var(shape={self.value.shape}, requires_grad={self.requires_grad})"


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Tape:
    def __init__(self):
        self._record: list[tuple[Var, tuple[Var, ...], Callable]] = []

    def __len__(self) -> int:
        return len(self._record)

    def param(self, value: np.ndarray) -> Var:
        return Var(np.asarray(value, dtype=float), requires_grad=True)

    @staticmethod
    def const(value) -> Var:
        return Var(np.asarray(value, dtype=float))

    def _push(self, value: np.ndarray, inputs: tuple[Var, ...], vjp: Callable) -> Var:
        if any(v.requires_grad for v in inputs):
            out = Var(value, True)
            self._record.append((out, inputs, vjp))
            return out
        return Var(value)

    def backward(self, loss: Var) -> None:
        if loss.value.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.value.shape}")
        if not loss.requires_grad:
            return
        loss.grad = np.ones_like(loss.value)
        for out, inputs, vjp in reversed(self._record):
            if out.grad is None:
                continue
            grads = vjp(out.grad)
            for v, g in zip(inputs, grads):
                if g is None or not v.requires_grad:
                    continue
                v.grad = g if v.grad is None else v.grad + g

    # -- linear algebra -------------------------------------------------

    def matmul(self, a: Var, b: Var) -> Var:
        av, bv = a.value, b.value

        def vjp(g):
            ga = _unbroadcast(g @ np.swapaxes(bv, -1, -2), av.shape) if a.requires_grad else None
            gb = _unbroadcast(np.swapaxes(av, -1, -2) @ g, bv.shape) if b.requires_grad else None
            return ga, gb

        return self._push(av @ bv, (a, b), vjp)

    def add(self, a: Var, b: Var) -> Var:
        sa, sb = a.value.shape, b.value.shape
        return self._push(
            a.value + b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb))
        )

    def sub(self, a: Var, b: Var) -> Var:
        sa, sb = a.value.shape, b.value.shape
        return self._push(
            a.value - b.value, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb))
        )

    def mul(self, a: Var, b: Var) -> Var:
        av, bv = a.value, b.value
        return self._push(
            av * bv,
            (a, b),
            lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
        )

    def scale(self, a: Var, c: float) -> Var:
        return self._push(a.value * c, (a,), lambda g: (g * c,))

    # -- elementwise ----------------------------------------------------

    def sigmoid(self, a: Var) -> Var:
        y = 1.0 / (1.0 + np.exp(-a.value))
        return self._push(y, (a,), lambda g: (g * y * (1.0 - y),))

    def tanh(self, a: Var) -> Var:
        y = np.tanh(a.value)
        return self._push(y, (a,), lambda g: (g * (1.0 - y * y),))

    def square(self, a: Var) -> Var:
        av = a.value
        return self._push(av * av, (a,), lambda g: (2.0 * g * av,))

    def abs(self, a: Var) -> Var:
        av = a.value
        return self._push(np.abs(av), (a,), lambda g: (g * np.sign(av),))

    # -- structure ------------------------------------------------------

    def sum(self, a: Var) -> Var:
        shape = a.value.shape
        return self._push(np.asarray(a.value.sum()), (a,), lambda g: (np.broadcast_to(g, shape),))

    def getitem(self, a: Var, key) -> Var:
        shape = a.value.shape

        def vjp(g):
            out = np.zeros(shape)
            out[key] = g
            return (out,)

        return self._push(a.value[key], (a,), vjp)

    def reshape(self, a: Var, shape: tuple[int, ...]) -> Var:
        old = a.value.shape
        return self._push(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))

    def concat(self, parts: Sequence[Var], axis: int = -1) -> Var:
        values = [p.value for p in parts]
        bounds = np.cumsum([v.shape[axis] for v in values])[:-1]
        return self._push(
            np.concatenate(values, axis=axis),
            tuple(parts),
            lambda g: tuple(np.split(g, bounds, axis=axis)),
        )

    def stack(self, parts: Sequence[Var], axis: int = 0) -> Var:
        n = len(parts)

        def vjp(g):
            return tuple(np.take(g, i, axis=axis) for i in range(n))

        return self._push(np.stack([p.value for p in parts], axis=axis), tuple(parts), vjp)

    # -- recurrent ----------------------------------------------------

    def gru(self, xs: Var, W: Var, U: Var, b: Var, reverse: bool = False) -> Var:
        """A whole GRU direction over ``xs`` ``(T, B, in)`` as one op.

        Returns the states ``(T, B, H)`` in time order. Gate layout in the
        ``3H`` columns is (z, r, h); see :func:`gmr.net.gru_cell`. The VJP is
        backpropagation through time over the saved gates.
        """
        xv, Wv, Uv = xs.value, W.value, U.value
        T, B = xv.shape[:2]
        H = Uv.shape[0]
        U_zr, U_h = Uv[:, : 2 * H], Uv[:, 2 * H :]
        xp = xv @ Wv + b.value
        order = range(T - 1, -1, -1) if reverse else range(T)
        hs = np.empty((T, B, H))
        prev = np.empty((T, B, H))
        zr_all = np.empty((T, B, 2 * H))
        cand_all = np.empty((T, B, H))
        h = np.zeros((B, H))
        for i in order:
            zr = 1.0 / (1.0 + np.exp(-(xp[i, :, : 2 * H] + h @ U_zr)))
            cand = np.tanh(xp[i, :, 2 * H :] + (zr[:, H:] * h) @ U_h)
            prev[i], zr_all[i], cand_all[i] = h, zr, cand
            h = cand + zr[:, :H] * (h - cand)
            hs[i] = h

        def vjp(g):
            dxp = np.empty((T, B, 3 * H))
            dzr = np.empty((B, 2 * H))
            U_hT, U_zrT = U_h.T, U_zr.T
            dh = np.zeros((B, H))
            for i in reversed(order):
                dh = dh + g[i]
                hp, zr, cand = prev[i], zr_all[i], cand_all[i]
                z, r = zr[:, :H], zr[:, H:]
                da_h = dh * (1.0 - z) * (1.0 - cand * cand)
                d_rh = da_h @ U_hT
                dzr[:, :H] = dh * (hp - cand)
                dzr[:, H:] = d_rh * hp
                dzr *= zr * (1.0 - zr)
                dxp[i, :, : 2 * H] = dzr
                dxp[i, :, 2 * H :] = da_h
                dh = dh * z + d_rh * r + dzr @ U_zrT
            flat_g = dxp.reshape(T * B, 3 * H)
            flat_p = prev.reshape(T * B, H)
            dU = np.empty_like(Uv)
            dU[:, : 2 * H] = flat_p.T @ flat_g[:, : 2 * H]
            rh = (zr_all[..., H:] * prev).reshape(T * B, H)
            dU[:, 2 * H :] = rh.T @ flat_g[:, 2 * H :]
            gx = (dxp @ Wv.T) if xs.requires_grad else None
            return gx, xv.reshape(T * B, -1).T @ flat_g, dU, flat_g.sum(axis=0)

        return self._push(hs, (xs, W, U, b), vjp)

    # -- rotation primitives -------------------------------------------

    def rodrigues(self, v: Var) -> Var:
        """Axis-angle ``(..., 3)`` to rotation matrices ``(..., 3, 3)``."""
        vv = v.value
        theta = np.linalg.norm(vv, axis=-1)
        a, b = rodrigues_coeffs(theta)
        k = skew(vv)
        kk = k @ k
        R = np.eye(3) + a[..., None, None] * k + b[..., None, None] * kk

        def vjp(g):
            c, d = _rodrigues_dcoeffs(theta)
            gk = np.sum(g * k, axis=(-2, -1))
            gkk = np.sum(g * kk, axis=(-2, -1))
            out = (
                (c * gk + d * gkk)[..., None] * vv
                + 2.0 * a[..., None] * vee(g)
                - 2.0 * b[..., None] * vee(g @ k + k @ g)
            )
            return (out,)

        return self._push(R, (v,), vjp)

    def wrap_aa(self, v: Var) -> Var:
        """Differentiable map into the ball ``|v| <= pi`` (identity inside it)."""
        vv = v.value
        theta = np.linalg.norm(vv, axis=-1, keepdims=True)
        outside = theta > np.pi
        if not np.any(outside):
            return self._push(vv, (v,), lambda g: (g,))
        k = np.where(outside, np.round(theta / (2.0 * np.pi)), 0.0)
        safe = np.where(outside, theta, 1.0)
        s = 1.0 - 2.0 * np.pi * k / safe

        def vjp(g):
            dot = np.sum(vv * g, axis=-1, keepdims=True)
            return (g * s + vv * (2.0 * np.pi * k / safe**3) * dot,)

        return self._push(vv * s, (v,), vjp)

    def angle_sq(self, m: Var) -> Var:
        """Squared rotation angle of each ``(..., 3, 3)`` rotation matrix.

        The gradient is that of ``arccos((tr m - 1) / 2) ** 2``, which agrees
        with every other extension along SO(3).
        """
        mv = m.value
        theta = rotation_angle(mv)

        def vjp(g):
            sin_t = np.sin(theta)
            small = theta < 1e-4
            ratio = np.where(small, 1.0 + theta * theta / 6.0, theta / np.where(small, 1.0, np.maximum(sin_t, 1e-12)))
            return ((-g * ratio)[..., None, None] * np.eye(3),)

        return self._push(theta * theta, (m,), vjp)


_TAYLOR_BELOW = 1e-2


def _rodrigues_dcoeffs(theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``a'(t)/t`` and ``b'(t)/t`` for ``a = sin t / t`` and ``b = (1 - cos t) / t^2``."""
    small = theta < _TAYLOR_BELOW
    t = np.where(small, 1.0, theta)
    t2 = theta * theta
    c = np.where(
        small,
        -1.0 / 3.0 + t2 / 30.0 - t2 * t2 / 840.0,
        (t * np.cos(t) - np.sin(t)) / t**3,
    )
    d = np.where(
        small,
        -1.0 / 12.0 + t2 / 180.0 - t2 * t2 / 6720.0,
        (t * np.sin(t) - 2.0 * (1.0 - np.cos(t))) / t**4,
    )
    return c, d
