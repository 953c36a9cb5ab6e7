import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from swinlesion import tensor as T
from swinlesion.gradcheck import check_tensors, finite_diff_check, rel_error
from swinlesion.tensor import GraphError, ShapeError, Tensor, no_grad

OP_TOL = 1e-4


def _weighted(out: Tensor, seed: int = 99) -> Tensor:
    """Scalar probe sum(out * W) with fixed random W, so every output entry matters."""
    w = np.random.default_rng(seed).normal(size=out.shape)
    return T.sum_(T.mul(out, w))


def _leaf(shape, seed=0, low=-1.0, high=1.0):
    return Tensor(np.random.default_rng(seed).uniform(low, high, size=shape), requires_grad=True)


# -- forward values ------------------------------------------------------------
def test_matmul_hand_cases():
    eye = Tensor(np.eye(2))
    assert np.array_equal((eye @ eye).data, np.eye(2))
    out = Tensor([[1.0, 2.0], [3.0, 4.0]]) @ Tensor([[1.0], [1.0]])
    assert np.array_equal(out.data, [[3.0], [7.0]])


def test_softmax_symmetry_and_overflow():
    assert np.allclose(T.softmax(Tensor([0.0, 0.0, 0.0])).data, [1 / 3] * 3, atol=0, rtol=1e-15)
    out = T.softmax(Tensor([1000.0, 0.0])).data
    assert np.isfinite(out).all()
    assert out[0] == 1.0 and out[1] < 1e-300


def test_layer_norm_cases():
    one, zero = Tensor(np.ones(3)), Tensor(np.zeros(3))
    assert np.array_equal(T.layer_norm(Tensor([2.0, 2.0, 2.0]), one, zero).data, np.zeros(3))
    two = T.layer_norm(Tensor([1.0, 3.0]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=1e-14).data
    assert np.allclose(two, [-1.0, 1.0], atol=1e-12)


def test_scalar_slice_keeps_zero_dims():
    assert T.slice_(Tensor(np.arange(3.0)), 1).shape == ()


def test_gelu_zero_and_reshape_roundtrip():
    assert T.gelu(Tensor([0.0])).data[0] == 0.0
    x = Tensor(np.random.default_rng(0).normal(size=(2, 3, 4)))
    back = x.reshape(6, 4).reshape(2, 3, 4)
    assert np.array_equal(back.data, x.data)


def test_sum_gradient_is_ones():
    x = Tensor([1.0, -2.0, 5.0], requires_grad=True)
    x.sum().backward()
    assert np.array_equal(x.grad, np.ones(3))


def test_square_gradient_by_hand():
    x = Tensor([1.0, 2.0], requires_grad=True)
    (x * x).sum().backward()
    assert np.array_equal(x.grad, [2.0, 4.0])


# -- gradients against central differences -------------------------------------
def test_matmul_gradient_vs_fd():
    a, b = _leaf((3, 4), 1), _leaf((4, 2), 2)
    for r in check_tensors(lambda: T.sum_(a @ b), [("a", a), ("b", b)]):
        assert r.max_rel_err < 1e-6, r.line()


def test_softmax_jacobian_vs_fd():
    x = _leaf((5,), 3)
    # every output component separately, i.e. the full Jacobian
    for k in range(5):
        r = finite_diff_check(lambda t: T.slice_(T.softmax(t), k), x, tol=1e-5)
        assert r.passed, r.line()


def test_layer_norm_gradient_vs_fd():
    x, g, b = _leaf((4, 8), 4), _leaf((8,), 5, 0.5, 1.5), _leaf((8,), 6)
    for r in check_tensors(lambda: _weighted(T.layer_norm(x, g, b)), [("x", x), ("gain", g), ("bias", b)]):
        assert r.passed, r.line()


OPS = {
    "add": (lambda a, b: T.add(a, b), [(3, 4), (3, 4)]),
    "add_broadcast": (lambda a, b: T.add(a, b), [(2, 3, 4), (4,)]),
    "add_scalar": (lambda a, b: T.add(a, b), [(3, 4), ()]),
    "sub": (lambda a, b: T.sub(a, b), [(3, 4), (4,)]),
    "mul": (lambda a, b: T.mul(a, b), [(3, 4), (3, 4)]),
    "mul_broadcast": (lambda a, b: T.mul(a, b), [(2, 3, 4), (3, 4)]),
    "div": (lambda a, b: T.div(a, T.add(T.mul(b, b), 0.5)), [(3, 4), (3, 4)]),
    "exp": (lambda a: T.exp(a), [(3, 4)]),
    "log": (lambda a: T.log(T.add(T.mul(a, a), 0.3)), [(3, 4)]),
    "power": (lambda a: T.power(T.add(T.mul(a, a), 0.2), 1.7), [(3, 4)]),
    "power_int": (lambda a: T.power(a, 3.0), [(3, 4)]),
    "clip": (lambda a: T.clip(a, -0.5, 0.5), [(3, 4)]),
    "gelu": (lambda a: T.gelu(T.mul(a, 3.0)), [(3, 4)]),
    "sum_axis": (lambda a: T.sum_(a, axis=1, keepdims=True), [(3, 4, 2)]),
    "mean": (lambda a: T.mean(a, axis=(0, 2)), [(3, 4, 2)]),
    "matmul_batched": (lambda a, b: T.matmul(a, b), [(2, 3, 4), (2, 4, 5)]),
    "matmul_shared": (lambda a, b: T.matmul(a, b), [(2, 3, 4), (4, 5)]),
    "reshape": (lambda a: T.reshape(a, (4, 6)), [(2, 3, 4)]),
    "transpose": (lambda a: T.transpose(a, (2, 0, 1)), [(2, 3, 4)]),
    "slice": (lambda a: T.slice_(a, (slice(None), 1, slice(1, 3))), [(2, 3, 4)]),
    "concat": (lambda a, b: T.concat([a, b], axis=1), [(2, 3), (2, 5)]),
    "roll": (lambda a: T.roll(a, (1, -2), (1, 2)), [(2, 4, 4, 3)]),
    "gather_rows": (lambda a: T.gather_rows(a, np.array([[0, 2], [2, 2], [1, 0]])), [(3, 4)]),
    "softmax": (lambda a: T.softmax(T.mul(a, 2.0), axis=-1), [(3, 5)]),
    "softmax_axis0": (lambda a: T.softmax(a, axis=0), [(3, 5)]),
    "log_softmax": (lambda a: T.log_softmax(T.mul(a, 3.0)), [(3, 5)]),
    "dropout": (lambda a: T.dropout(a, 0.3, np.random.default_rng(5)), [(4, 6)]),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradient_vs_fd(name):
    fn, shapes = OPS[name]
    leaves = [_leaf(s, seed=10 + i) for i, s in enumerate(shapes)]
    if name == "clip":  # keep clear of the kinks
        leaves[0].data = np.where(np.abs(np.abs(leaves[0].data) - 0.5) < 0.05, 0.2, leaves[0].data)

    def f():
        return _weighted(fn(*leaves))

    reports = check_tensors(f, [(f"{name}[{i}]", t) for i, t in enumerate(leaves)], tol=OP_TOL)
    for r in reports:
        assert r.passed, r.line()


def test_gradcheck_self_test_linear_and_ce():
    # f = sum is linear: the central difference only carries rounding error
    x = Tensor(np.random.default_rng(0).integers(-8, 8, size=(4,)) / 4.0, requires_grad=True)
    r = finite_diff_check(lambda t: T.sum_(t), x, h=2.0 ** -16)
    assert r.max_rel_err == 0.0
    logits = _leaf((4, 5), 7, -3, 3)
    labels = np.array([0, 3, 4, 1])
    from swinlesion.losses import cross_entropy
    r = finite_diff_check(lambda t: cross_entropy(t, labels), logits, tol=1e-5)
    assert r.passed, r.line()


def test_rel_error_floor():
    assert rel_error(0.0, 0.0) == 0.0
    assert rel_error(1e-12, 0.0) == pytest.approx(1e-6)
    assert rel_error(2.0, 1.0) == 0.5


# -- tape semantics ----------------------------------------------------------
def test_gradients_accumulate_on_shared_leaf():
    x = Tensor([3.0], requires_grad=True)
    y = x * x + x * 2.0  # x used on several paths
    y.sum().backward()
    assert x.grad[0] == 8.0


def test_backward_consumes_graph():
    x = Tensor([1.0, 2.0], requires_grad=True)
    tape = T.get_tape()
    y = x * 3.0
    assert len(tape) > 0
    y.sum().backward()
    assert len(tape) == 0
    with pytest.raises(GraphError):
        (y * 2.0).sum().backward()


def test_no_grad_records_nothing():
    x = Tensor([1.0], requires_grad=True)
    with no_grad():
        y = x * 2.0
    assert not y.requires_grad and y.node_id is None


def test_backward_needs_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(GraphError):
        (x * 2.0).backward()


def test_bad_broadcast_and_shapes():
    with pytest.raises(ShapeError):
        T.add(Tensor(np.zeros((3, 4))), Tensor(np.zeros((3,))))
    with pytest.raises(ShapeError):
        T.matmul(Tensor(np.zeros((3, 4))), Tensor(np.zeros((3, 4))))
    with pytest.raises(ShapeError):
        T.reshape(Tensor(np.zeros(6)), (4, 2))
    with pytest.raises(IndexError):
        T.gather_rows(Tensor(np.zeros((3, 2))), np.array([3]))
    with pytest.raises(TypeError):
        T.slice_(Tensor(np.zeros(3)), np.array([0, 1]))


# -- properties ----------------------------------------------------------------
finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6)), elements=finite))
def test_softmax_rows_are_distributions(x):
    p = T.softmax(Tensor(x)).data
    assert (p >= 0).all()
    assert np.allclose(p.sum(axis=-1), 1.0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6)), elements=finite))
def test_log_softmax_matches_log_of_softmax(x):
    a = T.log_softmax(Tensor(x)).data
    b = np.log(T.softmax(Tensor(x)).data)
    ok = np.isfinite(b)
    assert np.allclose(a[ok], b[ok], atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 3), st.integers(2, 5), st.integers(2, 5)), elements=finite),
       st.integers(-6, 6), st.integers(-6, 6))
def test_roll_roundtrip(x, s1, s2):
    t = T.roll(T.roll(Tensor(x), (s1, s2), (1, 2)), (-s1, -s2), (1, 2))
    assert np.array_equal(t.data, x)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4)), elements=finite),
       st.permutations([0, 1, 2]))
def test_transpose_roundtrip(x, perm):
    inv = tuple(np.argsort(perm))
    assert np.array_equal(T.transpose(T.transpose(Tensor(x), perm), inv).data, x)
