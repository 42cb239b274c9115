import warnings

import numpy as np
import pytest
from _oracles import brute_chain_alignment, brute_viterbi, random_posteriors, tiny_inventory
from hypothesis import given, settings
from hypothesis import strategies as st

from psyhide.acoustic_model import LexiconError, PhoneInventory
from psyhide.corpus import default_inventory
from psyhide.decoding import (
    AlignmentError,
    AlignmentFallbackWarning,
    DecodingGraph,
    align_chain,
    equal_align,
    forced_align,
    log_emissions,
    phone_rate_check,
    viterbi_decode,
    viterbi_path,
)


def test_graph_shape():
    g = DecodingGraph(tiny_inventory())
    assert g.n_nodes == 4 + 2 + 1 <= 8
    assert np.allclose(np.logaddexp.reduce(g.log_trans, axis=1), 0.0)


@pytest.mark.parametrize("n_frames", [1, 2, 4, 6])
@pytest.mark.parametrize("seed", range(4))
def test_viterbi_matches_enumeration(n_frames, seed):
    inv = tiny_inventory()
    g = DecodingGraph(inv)
    post = random_posteriors(np.random.default_rng(seed), n_frames, inv.n_states)
    path, score = viterbi_path(post, g)
    ref_path, ref_score = brute_viterbi(post, g)
    assert score == pytest.approx(ref_score, abs=1e-9)
    assert g.path_score(path, log_emissions(post)) == pytest.approx(score, abs=1e-9)
    assert g.path_words(path) == g.path_words(ref_path)


def test_viterbi_one_hot_word():
    inv = default_inventory()
    g = DecodingGraph(inv)
    chain = inv.word_states("ON")
    post = np.eye(inv.n_states)[np.repeat(chain, 2)]
    assert viterbi_decode(post, g) == ["ON"]


def test_viterbi_uniform_is_deterministic():
    inv = default_inventory()
    g = DecodingGraph(inv)
    post = np.full((12, inv.n_states), 1 / inv.n_states)
    assert viterbi_decode(post, g) == viterbi_decode(post, g)


def test_viterbi_skips_silence_words():
    inv = default_inventory()
    g = DecodingGraph(inv)
    states = [0, 0, *np.repeat(inv.state_chain(["NO"], silence=False), 2), 0, *np.repeat(inv.word_states("ME"), 2), 0]
    assert viterbi_decode(np.eye(inv.n_states)[states], g) == ["NO", "ME"]


def test_align_chain_example():
    # chain [A, B]; posteriors favour A, A, B
    post = np.array([[0.9, 0.1], [0.8, 0.2], [0.1, 0.9]])
    positions, _ = align_chain(post, [0, 1])
    assert positions.tolist() == [0, 0, 1]


def test_align_uniform_takes_latest_transitions():
    positions, _ = align_chain(np.full((6, 3), 1 / 3), [0, 1, 2])
    assert positions.tolist() == [0, 0, 0, 0, 1, 2]


@pytest.mark.parametrize("seed", range(30))
def test_forced_align_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    n_frames = int(rng.integers(1, 7))
    n_pos = int(rng.integers(1, min(n_frames, 8) + 1))
    post = random_posteriors(rng, n_frames, 8)
    chain = list(rng.integers(0, 8, size=n_pos))
    best, top = brute_chain_alignment(post, chain)
    positions, score = align_chain(post, chain)
    assert positions.tolist() == best
    assert score == pytest.approx(top)


def test_forced_beats_equal():
    inv = default_inventory()
    g = DecodingGraph(inv)
    post = random_posteriors(np.random.default_rng(0), 40, inv.n_states)
    forced = forced_align(post, ["SOON"], g)
    equal = equal_align(["SOON"], 40, g)
    assert forced.score(post) >= equal.score(post)
    assert forced.source == "forced" and equal.source == "equal"
    assert sorted(set(forced.positions)) == list(range(len(forced.chain)))
    assert np.all(np.diff(forced.positions) >= 0)


def test_forced_fallback_on_short_input():
    inv = default_inventory()
    g = DecodingGraph(inv)
    chain_len = len(inv.state_chain(["SOON"]))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        with pytest.raises(AlignmentError):
            forced_align(np.full((chain_len - 1, inv.n_states), 0.1), ["SOON"], g)
    assert any(issubclass(w.category, AlignmentFallbackWarning) for w in caught)


def test_equal_align_blocks():
    inv = PhoneInventory(["A", "B", "C"], {"ONE": ["A"], "TWO": ["A", "B"], "THREE": ["A", "B", "C"]}, 1)
    g = DecodingGraph(inv)
    assert equal_align(["TWO"], 10, g, silence=False).states.tolist() == [1] * 5 + [2] * 5
    assert equal_align(["THREE"], 10, g, silence=False).states.tolist() == [1] * 4 + [2] * 3 + [3] * 3
    with pytest.raises(AlignmentError):
        equal_align(["THREE"], 2, g, silence=False)
    with pytest.raises(ValueError):
        equal_align([], 5, g)


@settings(max_examples=50, deadline=None)
@given(st.integers(14, 60), st.sampled_from(["ON", "SOON", "MONEY", "TO ME"]))
def test_equal_align_monotone_cover(n_frames, text):
    inv = default_inventory()
    a = equal_align(text, n_frames, DecodingGraph(inv))
    assert len(a) == n_frames
    assert np.all(np.diff(a.positions) >= 0)
    assert set(a.positions) == set(range(len(a.chain)))
    sizes = np.bincount(a.positions)
    assert sizes.max() - sizes.min() <= 1


def test_phone_rate():
    inv = PhoneInventory(["A"], {"W4": ["A"] * 4, "W7": ["A"] * 7})
    assert phone_rate_check(["W4"] * 3, 3.0, 6, inv) == (True, 4.0)
    assert phone_rate_check(["W7"] * 3, 3.0, 6, inv) == (False, 7.0)
    with pytest.raises(ValueError):
        phone_rate_check([], 3.0, 6, inv)
    with pytest.raises(LexiconError):
        phone_rate_check(["NOPE"], 3.0, 6, inv)
