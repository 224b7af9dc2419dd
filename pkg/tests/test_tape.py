import numpy as np
import pytest

from gmr import rot3
from gmr.tape import Tape


def fd_check(fn, arrays, seed=0, eps=1e-6, tol=1e-7):
    """Compare tape gradients of sum(w * fn(*vars)) with central differences."""
    rng = np.random.default_rng(seed)
    tape = Tape()
    vs = [tape.param(a) for a in arrays]
    out = fn(tape, *vs)
    w = rng.normal(size=out.value.shape)
    tape.backward(tape.sum(tape.mul(out, tape.const(w))))

    def f(xs):
        t = Tape()
        return float(np.sum(w * fn(t, *[t.const(x) for x in xs]).value))

    for k, a in enumerate(arrays):
        num = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            xp = [x.copy() for x in arrays]
            xm = [x.copy() for x in arrays]
            xp[k][idx] += eps
            xm[k][idx] -= eps
            num[idx] = (f(xp) - f(xm)) / (2 * eps)
        err = np.abs(vs[k].grad - num).max() / max(1.0, np.abs(num).max())
        assert err < tol, (k, err)


def test_matmul_broadcast(rng):
    fd_check(lambda t, a, b: t.matmul(a, b), [rng.normal(size=(2, 3, 4)), rng.normal(size=(4, 5))])


def test_add_sub_mul_broadcast(rng):
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(1, 4))
    fd_check(lambda t, x, y: t.add(x, y), [a, b])
    fd_check(lambda t, x, y: t.sub(x, y), [a, b])
    fd_check(lambda t, x, y: t.mul(x, y), [a, b])
    fd_check(lambda t, x: t.scale(x, -2.5), [a])


def test_elementwise(rng):
    a = rng.normal(size=(4, 3))
    fd_check(lambda t, x: t.sigmoid(x), [a])
    fd_check(lambda t, x: t.tanh(x), [a])
    fd_check(lambda t, x: t.square(x), [a])
    fd_check(lambda t, x: t.abs(x), [a + np.sign(a) * 0.1])


def test_structural(rng):
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(3, 2))
    fd_check(lambda t, x: t.getitem(x, (slice(1, 3), [0, 2])), [a])
    fd_check(lambda t, x: t.reshape(x, (2, 6)), [a])
    fd_check(lambda t, x, y: t.concat([x, y], axis=-1), [a, b])
    fd_check(lambda t, x, y: t.stack([x, y], axis=1), [a, a * 2 + b.sum()])


@pytest.mark.parametrize("reverse", [False, True])
def test_gru_sequence(rng, reverse):
    from gmr.net import gru_cell

    T, B, n_in, H = 4, 2, 3, 5
    xs = rng.normal(size=(T, B, n_in))
    W, U, b = rng.normal(size=(n_in, 3 * H)), rng.normal(size=(H, 3 * H)), rng.normal(size=3 * H)
    h = np.zeros((B, H))
    want = np.empty((T, B, H))
    for i in (range(T - 1, -1, -1) if reverse else range(T)):
        h = gru_cell(xs[i], h, W, U, b)
        want[i] = h
    got = Tape().gru(Tape.const(xs), Tape.const(W), Tape.const(U), Tape.const(b), reverse).value
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-14)
    fd_check(lambda t, *a: t.gru(*a, reverse=reverse), [xs, W * 0.5, U * 0.5, b])


def test_rodrigues_value_and_grad(rng):
    v = rng.normal(size=(6, 3)) * 1.5
    v[0] = [1e-4, -2e-3, 5e-4]      # Taylor branch
    v[1] = 0.0
    v[2] = [4.0, 1.0, -2.0]         # beyond pi
    t = Tape()
    np.testing.assert_allclose(t.rodrigues(t.const(v)).value, rot3.aa_to_mat(v), atol=1e-14)
    fd_check(lambda t, x: t.rodrigues(x), [v], tol=1e-6)


def test_rodrigues_grad_at_zero_is_skew():
    t = Tape()
    x = t.param(np.zeros(3))
    g = np.arange(9.0).reshape(3, 3)
    t.backward(t.sum(t.mul(t.rodrigues(x), t.const(g))))
    np.testing.assert_allclose(x.grad, 2 * rot3.vee(g), atol=1e-15)


def test_wrap_aa(rng):
    v = rng.normal(size=(5, 3)) * 3.0
    t = Tape()
    np.testing.assert_allclose(t.wrap_aa(t.const(v)).value, rot3.wrap_aa(v), atol=1e-15)
    fd_check(lambda t, x: t.wrap_aa(x), [v], tol=1e-6)


def test_angle_sq(rng):
    m = rot3.random_rotations(5, rng)
    t = Tape()
    np.testing.assert_allclose(t.angle_sq(t.const(m)).value, rot3.rotation_angle(m) ** 2, atol=1e-12)
    # gradient of the trace-extended function; differentiate along rotation curves
    for k in range(5):
        xi = rng.normal(size=3)
        t = Tape()
        var = t.param(m[k])
        t.backward(t.angle_sq(var))
        eps = 1e-6
        f = lambda s: rot3.rotation_angle(m[k] @ rot3.aa_to_mat(s * xi)) ** 2
        num = (f(eps) - f(-eps)) / (2 * eps)
        ana = np.sum(var.grad * (m[k] @ rot3.skew(xi)))
        assert ana == pytest.approx(num, rel=1e-6, abs=1e-8)


def test_accumulates_over_reuse(rng):
    a = rng.normal(size=3)
    fd_check(lambda t, x: t.mul(x, t.add(x, x)), [a])


def test_backward_needs_scalar():
    t = Tape()
    x = t.param(np.ones(3))
    with pytest.raises(ValueError):
        t.backward(t.square(x))


def test_constants_not_recorded():
    t = Tape()
    t.add(t.const(1.0), t.const(2.0))
    assert len(t) == 0
