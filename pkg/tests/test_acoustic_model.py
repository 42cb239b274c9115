import numpy as np
import pytest
from _oracles import central_difference, rel_l2

from psyhide._validation import DimensionError
from psyhide.acoustic_model import (
    LexiconError,
    PhoneInventory,
    ToyAcousticModel,
    cross_entropy_loss,
    model_backward,
    model_forward,
    read_lexicon,
    softmax,
    splice,
    unsplice,
    write_lexicon,
)
from psyhide.corpus import default_inventory


def small_model(n_bins=6, n_states=5, hidden=(7,), seed=0):
    rng = np.random.default_rng(seed)
    m = ToyAcousticModel(n_states=n_states, hidden=hidden, seed=seed)
    m.initialize(n_bins, [rng.standard_normal((20, n_bins))])
    return m


def test_inventory_sizes():
    inv = default_inventory()
    assert inv.n_states == 1 + 15 * 3 == 46
    assert inv.phone_states("AA") == [1, 2, 3]
    assert inv.state_chain(["ON"]) == [0, *inv.phone_states("AA"), *inv.phone_states("N"), 0]
    assert len(inv.state_names()) == inv.n_states
    with pytest.raises(LexiconError):
        inv.pronounce("XYZZY")


def test_inventory_rejects_unknown_phone():
    with pytest.raises(ValueError):
        PhoneInventory(["A"], {"W": ["B"]})


def test_lexicon_round_trip(tmp_path):
    inv = default_inventory()
    write_lexicon(inv, tmp_path / "lex.txt")
    back = read_lexicon(tmp_path / "lex.txt")
    assert back.phones == inv.phones and back.lexicon == inv.lexicon


def test_lexicon_without_phone_header(tmp_path):
    (tmp_path / "l.txt").write_text("# toy\nhi H AY\n\nyo Y OW\n")
    inv = read_lexicon(tmp_path / "l.txt")
    assert inv.phones == ["AY", "H", "OW", "Y"]
    assert inv.pronounce("HI") == ["H", "AY"]


def test_zero_weights_uniform():
    m = small_model()
    m.weights_ = [np.zeros_like(w) for w in m.weights_]
    post = m.predict_proba(np.random.default_rng(0).standard_normal((4, 6)))
    assert np.allclose(post, 1 / 5)


def test_rows_normalize():
    m = small_model()
    post = model_forward(m, 50 * np.random.default_rng(1).standard_normal((9, 6)))
    assert np.allclose(post.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(post >= 0)


def test_single_large_logit():
    logits = np.zeros((1, 5))
    logits[0, 2] = 20.0
    assert softmax(logits)[0, 2] > 0.999


def test_wrong_width():
    with pytest.raises(DimensionError):
        small_model().predict_proba(np.zeros((3, 5)))


def test_ce_examples():
    y = np.eye(4)[[0, 1, 2]]
    assert cross_entropy_loss(y, [0, 1, 2])[0] == 0.0
    assert cross_entropy_loss(np.full((3, 4), 0.25), [0, 1, 2])[0] == pytest.approx(np.log(4))


def test_ce_clamps_zero():
    loss, grad = cross_entropy_loss(np.array([[0.0, 1.0]]), [0])
    assert np.isfinite(loss) and np.all(np.isfinite(grad))


def test_ce_gradient_finite_differences():
    rng = np.random.default_rng(0)
    y = rng.uniform(0.05, 1.0, size=(4, 6))
    target = rng.integers(0, 6, size=4)
    _, grad = cross_entropy_loss(y, target)
    numeric = central_difference(lambda v: cross_entropy_loss(v, target)[0], y, 1e-6)
    assert rel_l2(grad, numeric) < 1e-5


def test_splice_adjoint():
    rng = np.random.default_rng(0)
    f = rng.standard_normal((5, 3))
    g = rng.standard_normal((5, 15))
    assert np.isclose(np.sum(splice(f, 2) * g), np.sum(f * unsplice(g, 5, 3, 2)))


def test_zero_grad_posteriors():
    m = small_model()
    f = np.random.default_rng(0).standard_normal((4, 6))
    assert not model_backward(m, f, np.zeros((4, 5))).any()


def test_identity_layer_closed_form():
    """One linear layer that copies the centre frame: d/dfeat = softmax JVP."""
    m = ToyAcousticModel(n_states=3, context=0, hidden=())
    m.initialize(3)
    m.weights_ = [np.eye(3)]
    f = np.array([[0.2, -0.5, 1.0], [1.5, 0.0, -1.0]])
    g = np.array([[1.0, 0.0, -2.0], [0.5, 0.5, 0.0]])
    p = softmax(f)
    expected = p * (g - np.sum(g * p, axis=1, keepdims=True))
    assert np.allclose(m.backward(f, g), expected)


@pytest.mark.parametrize("hidden", [(7,), (5, 4)])
def test_model_gradient_finite_differences(hidden):
    rng = np.random.default_rng(1)
    m = small_model(hidden=hidden)
    f = rng.standard_normal((5, 6))
    target = rng.integers(0, 5, size=5)

    def loss(v):
        return cross_entropy_loss(m.predict_proba(v), target)[0]

    _, gpost = cross_entropy_loss(m.predict_proba(f), target)
    analytic = m.backward(f, gpost)
    assert rel_l2(analytic, central_difference(loss, f, 1e-5)) < 1e-4


def test_fit_reduces_loss_and_is_deterministic():
    rng = np.random.default_rng(0)
    centres = rng.standard_normal((3, 6)) * 3
    labels = rng.integers(0, 3, size=200)
    X = centres[labels] + 0.3 * rng.standard_normal((200, 6))

    def train():
        return ToyAcousticModel(n_states=3, context=0, hidden=(8,), n_epochs=15, learning_rate=1e-2).fit(X, labels)

    a, b = train(), train()
    assert a.loss_curve_[-1] < a.loss_curve_[0]
    assert all(np.array_equal(u, v) for u, v in zip(a.weights_, b.weights_))
    assert a.score(X, labels) > 0.9


def test_small_lr_loss_non_increasing():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((100, 4))
    y = (X[:, 0] > 0).astype(int)
    m = ToyAcousticModel(n_states=2, context=0, hidden=(6,), n_epochs=5, learning_rate=1e-3, batch_size=None).fit(X, y)
    assert np.all(np.diff(m.loss_curve_) <= 0)


def test_checkpoint_round_trip(tmp_path):
    m = small_model()
    m.save(tmp_path / "m.json")
    back = ToyAcousticModel.load(tmp_path / "m.json")
    f = np.random.default_rng(0).standard_normal((4, 6))
    assert np.array_equal(back.predict_proba(f), m.predict_proba(f))
    assert back.get_params() == m.get_params()


def test_bad_checkpoint():
    with pytest.raises(ValueError):
        ToyAcousticModel.from_dict({"format": "other"})


def test_label_range_checked():
    m = small_model()
    with pytest.raises(ValueError):
        m.fit(np.zeros((3, 6)), [0, 1, 9])
