import itertools
import math

import numpy as np
import pytest

from parityaudit.data import ClusteredDataset


def brute_nw(dataset, group, s, h, mode="user", k=0):
    """Double loop over members and their instances, Gaussian kernel."""
    num = den = 0.0
    for m in dataset.members:
        if m.group != group:
            continue
        c = 1.0 / m.n if mode == "user" else 1.0
        a = b = 0.0
        for obs in m.instances:
            u = (obs.scores[k] - s) / h
            w = math.exp(-0.5 * u * u) / math.sqrt(2 * math.pi)
            a += w * obs.outcomes[k]
            b += w
        num += c * a
        den += c * b
    return num / den


def brute_isotonic(y, w):
    """Exhaustive search over partitions into consecutive blocks."""
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    n = len(y)
    best, best_fit = np.inf, None
    for cuts in itertools.product((0, 1), repeat=n - 1):
        bounds = [0] + [i + 1 for i, c in enumerate(cuts) if c] + [n]
        means = [np.average(y[a:b], weights=w[a:b]) for a, b in zip(bounds, bounds[1:])]
        if any(x > z for x, z in zip(means, means[1:])):
            continue
        fit = np.concatenate([np.full(b - a, v) for (a, b), v in
                              zip(zip(bounds, bounds[1:]), means)])
        sse = float(np.sum(w * (y - fit) ** 2))
        if sse < best - 1e-15:
            best, best_fit = sse, fit
    return best_fit


def random_clustered(rng, M=20, max_n=5, groups=("a", "b"), K=1, binary=False):
    sizes = rng.integers(1, max_n + 1, M)
    N = int(sizes.sum())
    scores = rng.random((N, K))
    outcomes = (rng.random((N, K)) < 0.5).astype(float) if binary else rng.random((N, K))
    g = np.array(groups)[np.arange(M) % len(groups)]
    return ClusteredDataset(np.arange(M).astype(str), g, sizes, scores, outcomes)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance results, printed as one line per criterion at the end of the run
ACCEPTANCE = {}


def record(criterion, ok, detail):
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE[criterion] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(str(k).rstrip("abcdefghijklmnopqrstuvwxyz")),
                                                 str(k))):
        terminalreporter.write_line(ACCEPTANCE[key])
