import numpy as np
import pytest

from sparsevae.data import SynthConfig, preprocess, synth_generate, windowize
from sparsevae.nn.autograd import Tensor, backward

FD_STEP = 1e-4
REL_TOL = 1e-5
# gradients whose magnitude is below this are compared in absolute terms
ABS_FLOOR = 1e-6


def numeric_grad(f, arrays, i):
    """Central differences of scalar f(*arrays) with respect to arrays[i]."""
    a = arrays[i]
    grad = np.zeros_like(a)
    it = np.nditer(a, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = a[idx]
        a[idx] = old + FD_STEP
        up = f(*arrays)
        a[idx] = old - FD_STEP
        down = f(*arrays)
        a[idx] = old
        grad[idx] = (up - down) / (2 * FD_STEP)
    return grad


def rel_error(analytic, numeric):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), ABS_FLOOR)
    return np.abs(analytic - numeric) / denom


def gradcheck(build, arrays, wrt=None):
    """Compare autograd against central differences.

    ``build(*tensors)`` returns a scalar Tensor. Returns the largest
    elementwise relative error over the checked inputs.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    wrt = range(len(arrays)) if wrt is None else wrt
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    grads = backward(build(*tensors), [tensors[i] for i in wrt])

    def scalar(*arrs):
        return float(build(*[Tensor(a) for a in arrs]).data)

    worst = 0.0
    for g, i in zip(grads, wrt):
        num = numeric_grad(scalar, arrays, i)
        worst = max(worst, float(rel_error(g, num).max()))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_bundle():
    cfg = SynthConfig(n_train=600, n_validation=200, n_mixed=400)
    return preprocess(synth_generate(cfg, seed=3))


@pytest.fixture(scope="session")
def small_windows(small_bundle):
    return {name: windowize(ds, 5) for name, ds in small_bundle.datasets().items()}


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
