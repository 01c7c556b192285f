import math
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iov_offload import numkit as nk
from iov_offload.numkit import autodiff


def triple_loop_matmul(a, b):
    """Independent product oracle: naive three-loop accumulation."""
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            acc = 0.0
            for k in range(a.shape[1]):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


# ---------------------------------------------------------------- matmul

def test_matmul_identity():
    m = np.array([[1.5, -2.0], [0.25, 7.0]])
    out = nk.matmul(np.eye(2), m).value
    assert np.allclose(out, m, atol=1e-12)


def test_matmul_hand_case():
    out = nk.matmul(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[0.0], [1.0]])).value
    assert np.array_equal(out, np.array([[2.0], [4.0]]))


def test_matmul_against_triple_loop(rng):
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4, 2))
    assert np.allclose(nk.matmul(a, b).value, triple_loop_matmul(a, b), atol=1e-12)


def test_matmul_shape_mismatch_names_both_shapes():
    with pytest.raises(nk.ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        nk.matmul(np.zeros((2, 3)), np.zeros((2, 3)))


# ------------------------------------------------------------ activation

def test_relu_definition():
    out = nk.activation(np.array([[-1.0, 0.0, 2.0]]), "relu").value
    assert np.array_equal(out, np.array([[0.0, 0.0, 2.0]]))


def test_abs_definition():
    out = nk.activation(np.array([[-3.0, 4.0]]), "abs").value
    assert np.array_equal(out, np.array([[3.0, 4.0]]))


def test_elu_negative_matches_formula():
    # independent evaluation of e^x - 1 at x = -1
    expected = math.exp(-1.0) - 1.0
    out = nk.activation(np.array([[-1.0]]), "elu").value[0, 0]
    assert out == pytest.approx(expected, abs=1e-15)
    assert out == pytest.approx(-0.6321, abs=1e-4)


def test_unknown_activation_rejected():
    with pytest.raises(ValueError, match="tanh"):
        nk.activation(np.zeros((1, 1)), "tanh")


# --------------------------------------------------------------- reduce

def test_mean_rows():
    out = nk.reduce(np.array([[1.0, 3.0], [3.0, 5.0]]), "mean_rows").value
    assert np.array_equal(out, np.array([[2.0, 4.0]]))


def test_max_rows():
    out = nk.reduce(np.array([[1.0, 3.0], [3.0, 5.0]]), "max_rows").value
    assert np.array_equal(out, np.array([[3.0, 5.0]]))


@given(st.integers(2, 6), st.integers(1, 5), st.integers(0, 10**6))
@settings(max_examples=40, deadline=None)
def test_reduce_permutation_invariance(rows, cols, seed):
    r = np.random.default_rng(seed)
    x = r.normal(size=(rows, cols))
    perm = r.permutation(rows)
    assert np.array_equal(
        nk.reduce(x, "max_rows").value, nk.reduce(x[perm], "max_rows").value
    )
    assert np.allclose(
        nk.reduce(x, "mean_rows").value, nk.reduce(x[perm], "mean_rows").value, atol=1e-12
    )


def test_reduce_empty_rejected():
    with pytest.raises(ValueError, match="empty"):
        nk.reduce(np.zeros((0, 2)), "mean_rows")


# ------------------------------------------------------------- backward

def test_backward_sum_all_gives_ones():
    w = nk.Param(np.array([[1.0, 2.0], [3.0, 4.0]]))
    with nk.Tape() as tape:
        loss = nk.reduce(w, "sum_all")
    tape.backward(loss)
    assert np.array_equal(w.grad, np.ones((2, 2)))


def test_backward_matmul_closed_form(rng):
    # loss = sum(x @ W) has grad_W = x^T @ ones
    x = rng.normal(size=(3, 2))
    w = nk.Param(rng.normal(size=(2, 4)))
    with nk.Tape() as tape:
        loss = nk.reduce(nk.matmul(x, w), "sum_all")
    tape.backward(loss)
    assert np.allclose(w.grad, x.T @ np.ones((3, 4)), atol=1e-12)


def test_backward_requires_scalar_loss():
    w = nk.Param(np.ones((2, 2)))
    with nk.Tape() as tape:
        out = nk.activation(w, "relu")
    with pytest.raises(nk.ShapeError, match="1x1"):
        tape.backward(out)


def test_backward_empty_tape_rejected():
    with pytest.raises(ValueError, match="empty"):
        nk.Tape().backward(nk.constant(np.zeros((1, 1))))


def test_grads_accumulate_until_cleared():
    w = nk.Param(np.ones((1, 2)))
    for _ in range(2):
        with nk.Tape() as tape:
            loss = nk.reduce(w, "sum_all")
        tape.backward(loss)
    assert np.array_equal(w.grad, 2.0 * np.ones((1, 2)))
    w.zero_grad()
    assert np.array_equal(w.grad, np.zeros((1, 2)))


def test_max_rows_gradient_routes_to_first_argmax():
    x = nk.Param(np.array([[2.0, 1.0], [2.0, 5.0]]))  # column 0 has a tie
    with nk.Tape() as tape:
        loss = nk.reduce(nk.reduce(x, "max_rows"), "sum_all")
    tape.backward(loss)
    assert np.array_equal(x.grad, np.array([[1.0, 0.0], [0.0, 1.0]]))


def test_no_tape_means_no_recording():
    w = nk.Param(np.ones((2, 2)))
    out = nk.matmul(w, np.eye(2))
    assert out.track
    with nk.Tape() as tape:
        pass
    assert len(tape) == 0


# -------------------------------------------------- two-layer grad check

def two_layer_forward(x, w1, b1, w2, b2, kind):
    h = nk.activation(nk.add_row(nk.matmul(nk.constant(x), w1), b1), kind)
    out = nk.matmul(h, w2)
    out = nk.add_row(out, b2)
    return nk.reduce(nk.activation(out, "elu"), "sum_all")


@pytest.mark.parametrize("kind", ["relu", "elu", "abs", "identity"])
def test_two_layer_net_matches_finite_differences(kind, rng):
    x = rng.normal(size=(5, 3))
    params = {
        "w1": nk.Param(rng.normal(size=(3, 6))),
        "b1": nk.Param(rng.normal(size=(1, 6))),
        "w2": nk.Param(rng.normal(size=(6, 1))),
        "b2": nk.Param(rng.normal(size=(1, 1))),
    }
    report = nk.grad_check(
        lambda: two_layer_forward(x, params["w1"], params["b1"], params["w2"], params["b2"], kind),
        params,
    )
    assert report.max_rel_error <= 1e-4, str(report)


def test_grad_check_linear_is_exact(rng):
    x = rng.normal(size=(4, 3))
    params = {"w": nk.Param(rng.normal(size=(3, 2)))}
    report = nk.grad_check(
        lambda: nk.reduce(nk.matmul(nk.constant(x), params["w"]), "sum_all"), params
    )
    assert report.max_rel_error <= 1e-10


def test_grad_check_detects_corrupted_backward(monkeypatch, rng):
    # mutation check: break relu's derivative and demand a loud failure
    bad = dict(autodiff._ACTIVATIONS)
    bad["relu"] = (bad["relu"][0], lambda v, o: np.ones_like(v))
    monkeypatch.setattr(autodiff, "_ACTIVATIONS", bad)
    x = rng.normal(size=(6, 3))
    params = {
        "w1": nk.Param(rng.normal(size=(3, 5))),
        "b1": nk.Param(rng.normal(size=(1, 5))),
        "w2": nk.Param(rng.normal(size=(5, 1))),
        "b2": nk.Param(rng.normal(size=(1, 1))),
    }
    report = nk.grad_check(
        lambda: two_layer_forward(x, params["w1"], params["b1"], params["w2"], params["b2"], "relu"),
        params,
    )
    assert report.max_rel_error > 1e-2


# -------------------------------------------------------------- rmsprop

def test_rmsprop_zero_gradient_is_noop():
    p = nk.Param(np.array([[1.0, -2.0]]))
    before = p.value.copy()
    nk.rmsprop_step([p], learning_rate=1e-4)
    assert np.array_equal(p.value, before)


def test_rmsprop_single_weight_hand_value():
    # g=1, s=0, decay=0.99: s -> 0.01, step -> lr * 1 / (0.1 + 1e-8)
    p = nk.Param(np.array([[0.0]]))
    p.grad[0, 0] = 1.0
    nk.rmsprop_step([p], learning_rate=1e-4, decay=0.99, epsilon=1e-8)
    expected_delta = -1e-4 / (math.sqrt(0.01) + 1e-8)
    assert p.rms_state[0, 0] == pytest.approx(0.01, abs=1e-15)
    assert p.value[0, 0] == pytest.approx(expected_delta, rel=1e-12)
    assert p.value[0, 0] == pytest.approx(-1e-3, rel=1e-6)
    assert np.array_equal(p.grad, np.zeros((1, 1)))  # cleared


def test_rmsprop_second_identical_step_is_smaller():
    p = nk.Param(np.array([[0.0]]))
    p.grad[0, 0] = 1.0
    nk.rmsprop_step([p], learning_rate=1e-4)
    first = abs(p.value[0, 0])
    prev = p.value[0, 0]
    p.grad[0, 0] = 1.0
    nk.rmsprop_step([p], learning_rate=1e-4)
    second = abs(p.value[0, 0] - prev)
    assert second < first


def test_rmsprop_state_nonnegative(rng):
    p = nk.Param(rng.normal(size=(3, 3)))
    for _ in range(5):
        p.grad[...] = rng.normal(size=(3, 3))
        nk.rmsprop_step([p], 1e-3)
        assert (p.rms_state >= 0).all()


def test_rmsprop_rejects_nonfinite_gradient():
    p = nk.Param(np.ones((1, 1)))
    p.grad[0, 0] = np.nan
    with pytest.raises(FloatingPointError):
        nk.rmsprop_step([p], 1e-4)


# ------------------------------------------------------------ checkpoint

def test_checkpoint_roundtrip_bit_identical(tmp_path, rng):
    params = {
        "agent.w1": nk.Param(rng.normal(size=(4, 7))),
        "mixer.hw1.w": nk.Param(rng.normal(size=(3, 2)) * 1e-17),
    }
    path = tmp_path / "ck.nkc"
    nk.save_checkpoint(path, params, {"mixer": "qmix", "episode": 3})
    meta, arrays = nk.load_checkpoint(path)
    assert meta == {"mixer": "qmix", "episode": 3}
    for name, p in params.items():
        assert arrays[name].tobytes() == p.value.tobytes()


def test_checkpoint_stable_bytes(tmp_path):
    params = {"b": nk.Param(np.ones((1, 2))), "a": nk.Param(np.zeros((2, 1)))}
    p1, p2 = tmp_path / "a.nkc", tmp_path / "b.nkc"
    nk.save_checkpoint(p1, params, {"v": 1})
    nk.save_checkpoint(p2, params, {"v": 1})
    assert p1.read_bytes() == p2.read_bytes()


def test_checkpoint_rejects_wrong_magic(tmp_path):
    path = tmp_path / "bad.nkc"
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(nk.CheckpointError):
        nk.load_checkpoint(path)


# ------------------------------------------------------------ properties

@given(st.integers(0, 10**6))
@settings(max_examples=30, deadline=None)
def test_ops_preserve_finiteness(seed):
    r = np.random.default_rng(seed)
    x = nk.constant(r.normal(size=(3, 4)) * 10.0)
    w = nk.Param(r.normal(size=(4, 3)))
    with nk.Tape() as tape:
        y = nk.matmul(x, w)
        y = nk.activation(y, "elu")
        y = nk.add_row(y, nk.constant(r.normal(size=(1, 3))))
        y = nk.mul(y, y)
        y = nk.reduce(y, "mean_rows")
        loss = nk.reduce(y, "sum_all")
    tape.backward(loss)
    assert np.isfinite(loss.value).all()
    assert np.isfinite(w.grad).all()


def test_take_rows_and_concat_rows_roundtrip(rng):
    x = nk.Param(rng.normal(size=(6, 3)))
    with nk.Tape() as tape:
        parts = [nk.take_rows(x, 0, 2), nk.take_rows(x, 2, 6)]
        glued = nk.concat_rows(parts)
        loss = nk.reduce(glued, "sum_all")
    tape.backward(loss)
    assert np.array_equal(glued.value, x.value)
    assert np.array_equal(x.grad, np.ones((6, 3)))


def test_independent_tapes_on_threads_agree(rng):
    # params/tapes are independent per thread; results must match serial runs
    def job(seed, out, i):
        r = np.random.default_rng(seed)
        w = nk.Param(r.normal(size=(3, 3)))
        x = r.normal(size=(2, 3))
        with nk.Tape() as tape:
            loss = nk.reduce(nk.matmul(nk.constant(x), w), "sum_all")
        tape.backward(loss)
        out[i] = (loss.value[0, 0], w.grad.copy())

    serial: dict = {}
    threaded: dict = {}
    for i, seed in enumerate([7, 8]):
        job(seed, serial, i)
    threads = [threading.Thread(target=job, args=(seed, threaded, i)) for i, seed in enumerate([7, 8])]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for i in range(2):
        assert serial[i][0] == threaded[i][0]
        assert np.array_equal(serial[i][1], threaded[i][1])
