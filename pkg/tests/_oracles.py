"""Independent reference implementations used by the tests."""

import itertools

import numpy as np

from psyhide.acoustic_model import PhoneInventory
from psyhide.decoding import log_emissions


def central_difference(f, x, step):
    grad = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = step
        grad.flat[i] = (f(x + e) - f(x - e)) / (2 * step)
    return grad


def rel_l2(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def naive_features(x, frame_len, hop, dft_size, window, eps):
    """Direct DFT sum, no FFT."""
    n_frames = 1 + (len(x) - frame_len) // hop
    n = np.arange(frame_len)
    k = np.arange(dft_size)[:, None]
    basis = np.exp(-2j * np.pi * k * n / dft_size)
    out = []
    for t in range(n_frames):
        xw = x[t * hop : t * hop + frame_len] * window
        out.append(np.log(np.abs(basis @ xw) ** 2 + eps))
    return np.array(out)


def all_monotone_paths(n_frames, n_pos):
    """Every non-decreasing path from position 0 to n_pos-1 with unit steps."""
    for moves in itertools.combinations(range(1, n_frames), n_pos - 1):
        path, pos = [], 0
        for t in range(n_frames):
            if t in moves:
                pos += 1
            path.append(pos)
        yield path


def brute_edit_distance(a, b):
    """Plain recursion over the three edit choices, memoized on suffix lengths."""
    memo = {}

    def go(i, j):
        if i == len(a):
            return len(b) - j
        if j == len(b):
            return len(a) - i
        if (i, j) not in memo:
            memo[(i, j)] = min(go(i + 1, j) + 1, go(i, j + 1) + 1, go(i + 1, j + 1) + (a[i] != b[j]))
        return memo[(i, j)]

    return go(0, 0)


def tiny_inventory():
    return PhoneInventory(["A", "B"], {"X": ["A", "B"], "Y": ["B"]}, states_per_phone=2)


def random_posteriors(rng, n_frames, n_states):
    return rng.dirichlet(np.ones(n_states), size=n_frames)


def brute_viterbi(posteriors, graph):
    """Score every node sequence; return the best path and its log score."""
    log_emit = log_emissions(posteriors)
    n_frames = log_emit.shape[0]
    nodes = np.array(list(itertools.product(range(graph.n_nodes), repeat=n_frames)))
    score = graph.log_start[nodes[:, 0]] + log_emit[0, graph.node_state[nodes[:, 0]]]
    for t in range(1, n_frames):
        score = score + graph.log_trans[nodes[:, t - 1], nodes[:, t]] + log_emit[t, graph.node_state[nodes[:, t]]]
    ok = np.isin(nodes[:, -1], graph.finals)
    score = np.where(ok, score, -np.inf)
    best = int(np.argmax(score))
    return list(nodes[best]), float(score[best])


def brute_chain_alignment(posteriors, chain):
    """Best monotone path through ``chain``; ties go to the latest transitions (smallest path)."""
    logp = log_emissions(posteriors)
    n_frames = logp.shape[0]
    chain = np.asarray(chain)
    scored = [(logp[np.arange(n_frames), chain[p]].sum(), p) for p in all_monotone_paths(n_frames, len(chain))]
    top = max(s for s, _ in scored)
    return min(p for s, p in scored if s >= top - 1e-9), top
