import numpy as np
import pytest

from mvmn.types import Dataset, Trajectory


def random_dataset(seed=0, n_users=12, n_locations=9, max_len=8, n_edges=20, span_hours=48):
    """Small random dataset with every user holding a trajectory."""
    rng = np.random.default_rng(seed)
    trajectories = {}
    for u in range(n_users):
        k = int(rng.integers(1, max_len + 1))
        stamps = np.sort(rng.integers(0, span_hours * 3600, size=k))
        trajectories[u] = Trajectory(u, rng.integers(n_locations, size=k), stamps)
    pairs = [(a, b) for a in range(n_users) for b in range(a + 1, n_users)]
    chosen = rng.choice(len(pairs), size=min(n_edges, len(pairs)), replace=False)
    edges = [pairs[i] for i in chosen]
    n_train = int(0.6 * len(edges))
    n_val = (len(edges) - n_train) // 2
    return Dataset(
        [f"u{u}" for u in range(n_users)],
        [f"p{i}" for i in range(n_locations)],
        trajectories,
        frozenset(edges[:n_train]),
        frozenset(edges[n_train : n_train + n_val]),
        frozenset(edges[n_train + n_val :]),
    )


@pytest.fixture
def small_dataset():
    return random_dataset()


def numeric_gradients(fn, arrays, h=1e-5):
    """Central differences of scalar ``fn(*arrays)`` w.r.t. each array."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat, gflat = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = fn(*arrays)
            flat[i] = old - h
            down = fn(*arrays)
            flat[i] = old
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def max_rel_error(analytic, numeric):
    scale = max(np.abs(numeric).max(initial=0.0), np.abs(analytic).max(initial=0.0), 1e-12)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def check_gradients(op, arrays, seed=0, h=1e-5):
    """Backprop through ``op(*tensors)`` against central differences.

    Non-scalar outputs are reduced with a fixed random weighting so every
    output coordinate matters.  Returns max |analytic - numeric| over the largest gradient magnitude.
    """
    from mvmn import autodiff as ad

    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    rng = np.random.default_rng(seed)
    probe = ad.Tensor(np.zeros(0))
    with ad.Tape():
        probe = op(*[ad.Tensor(a) for a in arrays])
    weights = rng.normal(size=probe.shape)

    def value(*arrs):
        return float(np.sum(op(*[ad.Tensor(a) for a in arrs]).data * weights))

    tensors = [ad.Tensor(a.copy(), requires_grad=True) for a in arrays]
    with ad.Tape() as tape:
        out = ad.sum_all(op(*tensors) * weights)
    tape.backward(out)
    numeric = numeric_gradients(value, [a.copy() for a in arrays], h)
    analytic = [t.grad if t.grad is not None else np.zeros_like(n) for t, n in zip(tensors, numeric)]
    # one scale for all inputs: an input whose true gradient is zero only sees roundoff
    flat_a = np.concatenate([g.ravel() for g in analytic])
    flat_n = np.concatenate([g.ravel() for g in numeric])
    return max_rel_error(flat_a, flat_n)


_ACCEPTANCE: list[tuple[str, bool, str]] = []


def record_acceptance(label: str, passed: bool, detail: str) -> None:
    _ACCEPTANCE.append((label, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance")
    for label, passed, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {label}: {detail}")
