import numpy as np
import pytest

from deblur import tensor as T


@pytest.fixture
def f64():
    with T.precision("f64"):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def fd_check(f, inputs, coords=None, seed=0):
    """Finite-difference check of ``f`` at 64-bit, step 1e-5."""
    return T.finite_diff_check(f, inputs, step=1e-5, coords=coords, rng=np.random.default_rng(seed))


def projection_loss(out, seed=0):
    """Scalar ``sum(out * R)`` with a fixed random ``R``; keeps gradients well scaled."""
    r = np.random.default_rng(seed + 999).standard_normal(out.shape)
    return T.sum_(T.mul(out, T.Tensor(r, dtype=out.dtype)))


def jitter(module, seed=0, scale=0.5):
    """Move a freshly built module off its special initial point.

    Zero-initialized scalars (attention gamma, biases) give exactly-zero
    gradients for whole parameter groups, where a relative error only measures
    round-off. The 0.02-std init leaves many ReLU inputs within one finite
    difference step of the kink. Gradient checks therefore run at a generic
    point: weights at 1/sqrt(fan_in) scale, nonzero biases and gamma. Batch
    norm shifts stay at 0; a random shift can park a whole channel below the
    ReLU threshold, leaving gradients so small that the relative error is
    dominated by the ~1e-10 round-off floor of a 1e-5 central difference.
    """
    rng = np.random.default_rng(seed)
    for name, p in module.named_parameters():
        if name.endswith("weight"):
            fan_in = p.data.size // p.shape[0]
            p.data[...] = rng.standard_normal(p.shape) / np.sqrt(fan_in)
        elif name.endswith("gamma") or name.endswith("bias"):
            p.data[...] = scale * rng.standard_normal(p.shape)
        elif name.endswith("scale"):
            p.data[...] = 1 + 0.2 * rng.standard_normal(p.shape)
    return module


def module_grad_error(f, module, inputs=(), coords=6, seed=0, zero_grad=()):
    """Worst conclusive relative error; infinite if over 10% of coordinates are inconclusive."""
    report = module_grad_report(f, module, inputs, coords, seed, zero_grad)
    return report.max_relative() if report.inconclusive_fraction() <= 0.1 else np.inf


def module_grad_report(f, module, inputs=(), coords=6, seed=0, zero_grad=(), rtol=1e-4):
    """Gradient report over the inputs and every parameter of ``module``.

    Parameters named in ``zero_grad`` have an identically zero derivative by
    construction; for those the analytic gradient is asserted to vanish
    instead, since a relative error between two round-off values is noise.
    """
    params = module.parameters()
    zero = [n for n in params if any(n == z or n.endswith("." + z) for z in zero_grad)]
    tensors = list(inputs) + [p for n, p in params.items() if n not in zero]
    report = T.finite_diff_report(f, tensors, step=1e-5, coords=coords, rng=np.random.default_rng(seed), rtol=rtol)
    if zero:
        grads = T.gradients(f(), {n: params[n] for n in zero})
        assert all(np.abs(g).max() < 1e-10 for g in grads.values())
    return report


def describe(report):
    return report.summary()


ACCEPTANCE = []  # one line per acceptance criterion, filled by test_acceptance.py


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
