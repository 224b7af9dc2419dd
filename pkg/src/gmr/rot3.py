"""Conversions between SO(3) representations and rotation distances.

Conventions
-----------
- Every function accepts a single rotation or a batch with arbitrary
  leading dimensions.
- Quaternions are ordered ``(w, x, y, z)`` and canonicalized to ``w >= 0``
  (if ``w == 0`` the first nonzero of ``x, y, z`` is made positive).
- Axis-angle vectors are ``angle * unit_axis`` and live in the ball of
  radius pi; larger vectors are wrapped.
- 6D rotations are the first two columns ``a, b`` of a matrix, stored as
  ``concat(a, b)`` with shape ``(..., 6)``.
- Matrices act on column vectors.
"""
from __future__ import annotations

import numpy as np

SMALL_ANGLE = 1e-8
ORTHO_TOL = 1e-6
DEGENERATE_6D_TOL = 1e-9


class InvalidInput(ValueError):
    pass


class InvalidRotation(ValueError):
    pass


class Degenerate6D(ValueError):
    pass


def _check_finite(x: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(x)):
        raise InvalidInput(f"{what} contains non-finite values")


def _check_last(x: np.ndarray, size: int, what: str) -> None:
    if x.shape[-1:] != (size,):
        raise InvalidInput(f"{what} must have trailing dimension {size}, got {x.shape}")


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix ``[v]x`` so that ``skew(v) @ u == cross(v, u)``."""
    v = np.asarray(v, dtype=float)
    z = np.zeros(v.shape[:-1])
    return np.stack(
        [
            np.stack([z, -v[..., 2], v[..., 1]], axis=-1),
            np.stack([v[..., 2], z, -v[..., 0]], axis=-1),
            np.stack([-v[..., 1], v[..., 0], z], axis=-1),
        ],
        axis=-2,
    )


def vee(m: np.ndarray) -> np.ndarray:
    """Inverse of :func:`skew` applied to the skew part of ``m``."""
    return 0.5 * np.stack(
        [m[..., 2, 1] - m[..., 1, 2], m[..., 0, 2] - m[..., 2, 0], m[..., 1, 0] - m[..., 0, 1]],
        axis=-1,
    )


def rz(theta) -> np.ndarray:
    """Rotation about the z axis."""
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    o, z = np.ones_like(theta), np.zeros_like(theta)
    return np.stack(
        [np.stack([c, -s, z], -1), np.stack([s, c, z], -1), np.stack([z, z, o], -1)], -2
    )


def rodrigues_coeffs(theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``sin(t)/t`` and ``(1 - cos(t))/t**2`` with a Taylor fallback near zero."""
    theta = np.asarray(theta, dtype=float)
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    t2 = theta * theta
    a = np.where(small, 1.0 - t2 / 6.0, np.sin(safe) / safe)
    half = np.sin(0.5 * safe) / safe
    b = np.where(small, 0.5 - t2 / 24.0, 2.0 * half * half)
    return a, b


def wrap_aa(v: np.ndarray) -> np.ndarray:
    """Map an axis-angle vector into the canonical ball ``|v| <= pi``."""
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v, axis=-1, keepdims=True)
    wrapped = np.mod(theta + np.pi, 2.0 * np.pi) - np.pi
    # exactly pi lands on -pi; keep the original direction there
    wrapped = np.where(wrapped == -np.pi, np.pi, wrapped)
    scale = np.where(theta > np.pi, wrapped / np.where(theta > 0, theta, 1.0), 1.0)
    return v * scale


def aa_to_mat(v: np.ndarray) -> np.ndarray:
    """Rodrigues' formula ``I + a(t) K + b(t) K^2`` with ``K = [v]x``."""
    v = np.asarray(v, dtype=float)
    _check_last(v, 3, "axis-angle")
    _check_finite(v, "axis-angle")
    theta = np.linalg.norm(v, axis=-1)
    a, b = rodrigues_coeffs(theta)
    k = skew(v)
    eye = np.broadcast_to(np.eye(3), k.shape)
    return eye + a[..., None, None] * k + b[..., None, None] * (k @ k)


def check_rotation(m: np.ndarray, tol: float = ORTHO_TOL) -> None:
    m = np.asarray(m, dtype=float)
    if m.shape[-2:] != (3, 3):
        raise InvalidInput(f"rotation matrix must be 3x3, got {m.shape}")
    _check_finite(m, "rotation matrix")
    resid = np.abs(np.swapaxes(m, -1, -2) @ m - np.eye(3)).max(initial=0.0)
    det = np.linalg.det(m)
    if resid > tol or np.abs(det - 1.0).max(initial=0.0) > tol:
        raise InvalidRotation(
            f"not a proper rotation (orthonormality residual {resid:.3g})"
        )


def _first_nonzero_positive(v: np.ndarray) -> np.ndarray:
    """Sign (+1/-1) making the first nonzero entry along the last axis positive."""
    nz = np.abs(v) > 0
    idx = np.argmax(nz, axis=-1)
    first = np.take_along_axis(v, idx[..., None], axis=-1)[..., 0]
    return np.where(first < 0, -1.0, 1.0)


def mat_to_aa(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    check_rotation(m)
    s = vee(m)  # sin(theta) * axis
    sin_t = np.linalg.norm(s, axis=-1)
    cos_t = 0.5 * (np.trace(m, axis1=-2, axis2=-1) - 1.0)
    theta = np.arctan2(sin_t, cos_t)

    # generic branch: axis from the skew part
    safe_sin = np.where(sin_t > 0, sin_t, 1.0)
    factor = np.where(theta < SMALL_ANGLE, 1.0 + theta * theta / 6.0, theta / safe_sin)
    out = s * factor[..., None]

    # near pi the skew part vanishes; read the axis off (m + m^T)/2 - cos(t) I = (1 - cos t) k k^T
    near_pi = cos_t < -0.7
    if np.any(near_pi):
        sym = 0.5 * (m + np.swapaxes(m, -1, -2)) - cos_t[..., None, None] * np.eye(3)
        diag = np.diagonal(sym, axis1=-2, axis2=-1)
        col = np.argmax(diag, axis=-1)
        axis = np.take_along_axis(sym, col[..., None, None], axis=-1)[..., 0]
        axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
        dot = np.sum(axis * s, axis=-1)
        sign = np.where(
            np.abs(dot) > 1e-12, np.sign(dot), _first_nonzero_positive(axis)
        )
        alt = axis * (sign * theta)[..., None]
        out = np.where(near_pi[..., None], alt, out)
    return out


def canonical_quat(q: np.ndarray) -> np.ndarray:
    """Normalize and pick the ``w >= 0`` member of ``{q, -q}``."""
    q = np.asarray(q, dtype=float)
    _check_last(q, 4, "quaternion")
    _check_finite(q, "quaternion")
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n < 1e-12):
        raise InvalidInput("zero quaternion")
    q = q / n
    w = q[..., 0]
    sign = np.where(w > 0, 1.0, np.where(w < 0, -1.0, _first_nonzero_positive(q[..., 1:])))
    return q * sign[..., None]


def quat_to_mat(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    _check_last(q, 4, "quaternion")
    _check_finite(q, "quaternion")
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = np.moveaxis(q, -1, 0)
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
        ],
        -2,
    )


def mat_to_quat(m: np.ndarray) -> np.ndarray:
    """Shepperd's method: branch on the largest of ``w, x, y, z``."""
    m = np.asarray(m, dtype=float)
    check_rotation(m)
    tr = np.trace(m, axis1=-2, axis2=-1)
    d = np.diagonal(m, axis1=-2, axis2=-1)
    # 4*c^2 for each component c in (w, x, y, z)
    cand = np.stack(
        [1 + tr, 1 + 2 * d[..., 0] - tr, 1 + 2 * d[..., 1] - tr, 1 + 2 * d[..., 2] - tr], -1
    )
    k = np.argmax(cand, axis=-1)
    m00, m01, m02 = m[..., 0, 0], m[..., 0, 1], m[..., 0, 2]
    m10, m11, m12 = m[..., 1, 0], m[..., 1, 1], m[..., 1, 2]
    m20, m21, m22 = m[..., 2, 0], m[..., 2, 1], m[..., 2, 2]
    # unnormalized quaternions, each exact for its branch
    qw = np.stack([1 + tr, m21 - m12, m02 - m20, m10 - m01], -1)
    qx = np.stack([m21 - m12, 1 + m00 - m11 - m22, m01 + m10, m02 + m20], -1)
    qy = np.stack([m02 - m20, m01 + m10, 1 - m00 + m11 - m22, m12 + m21], -1)
    qz = np.stack([m10 - m01, m02 + m20, m12 + m21, 1 - m00 - m11 + m22], -1)
    allq = np.stack([qw, qx, qy, qz], -2)
    q = np.take_along_axis(allq, k[..., None, None], axis=-2)[..., 0, :]
    return canonical_quat(q)


def aa_to_quat(v: np.ndarray) -> np.ndarray:
    v = wrap_aa(np.asarray(v, dtype=float))
    _check_last(v, 3, "axis-angle")
    _check_finite(v, "axis-angle")
    theta = np.linalg.norm(v, axis=-1)
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    k = np.where(small, 0.5 - theta * theta / 48.0, np.sin(0.5 * safe) / safe)
    q = np.concatenate([np.cos(0.5 * theta)[..., None], v * k[..., None]], axis=-1)
    return canonical_quat(q)


def quat_to_aa(q: np.ndarray) -> np.ndarray:
    q = canonical_quat(q)
    xyz = q[..., 1:]
    s = np.linalg.norm(xyz, axis=-1)
    theta = 2.0 * np.arctan2(s, q[..., 0])  # in [0, pi] since w >= 0
    small = theta < SMALL_ANGLE
    safe = np.where(s > 0, s, 1.0)
    factor = np.where(small, 2.0 + theta * theta / 12.0, theta / safe)
    return xyz * factor[..., None]


def sixd_to_mat(s: np.ndarray) -> np.ndarray:
    """Gram-Schmidt on ``(a, b)``; third column is ``a x b``."""
    s = np.asarray(s, dtype=float)
    _check_last(s, 6, "6D rotation")
    _check_finite(s, "6D rotation")
    a, b = s[..., :3], s[..., 3:]
    na = np.linalg.norm(a, axis=-1, keepdims=True)
    if np.any(na < DEGENERATE_6D_TOL):
        raise Degenerate6D("first 6D column is (near) zero")
    a1 = a / na
    b_perp = b - np.sum(b * a1, axis=-1, keepdims=True) * a1
    nb = np.linalg.norm(b_perp, axis=-1, keepdims=True)
    if np.any(nb < DEGENERATE_6D_TOL):
        raise Degenerate6D("6D columns are (near) parallel")
    b1 = b_perp / nb
    c1 = np.cross(a1, b1)
    return np.stack([a1, b1, c1], axis=-1)


def mat_to_sixd(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    check_rotation(m)
    return np.concatenate([m[..., :, 0], m[..., :, 1]], axis=-1)


def rotation_angle(m: np.ndarray) -> np.ndarray:
    """Angle of a rotation matrix in ``[0, pi]``, stable at both ends."""
    sin_t = np.linalg.norm(vee(m), axis=-1)
    cos_t = 0.5 * (np.trace(m, axis1=-2, axis2=-1) - 1.0)
    return np.arctan2(sin_t, cos_t)


def geodesic_angle(m1: np.ndarray, m2: np.ndarray) -> np.ndarray:
    """``|log(m2 m1^T)|`` in radians."""
    m1 = np.asarray(m1, dtype=float)
    m2 = np.asarray(m2, dtype=float)
    check_rotation(m1)
    check_rotation(m2)
    return rotation_angle(m2 @ np.swapaxes(m1, -1, -2))


def random_quats(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotations as canonical quaternions (normalized 4D Gaussians)."""
    return canonical_quat(rng.standard_normal((n, 4)))


def random_rotations(n: int, rng: np.random.Generator) -> np.ndarray:
    return quat_to_mat(random_quats(n, rng))


def quat_mul(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Hamilton product; ``quat_to_mat(quat_mul(p, q)) == quat_to_mat(p) @ quat_to_mat(q)``."""
    pw, px, py, pz = np.moveaxis(np.asarray(p, dtype=float), -1, 0)
    qw, qx, qy, qz = np.moveaxis(np.asarray(q, dtype=float), -1, 0)
    return np.stack(
        [
            pw * qw - px * qx - py * qy - pz * qz,
            pw * qx + px * qw + py * qz - pz * qy,
            pw * qy - px * qz + py * qw + pz * qx,
            pw * qz + px * qy - py * qx + pz * qw,
        ],
        -1,
    )
