"""Finite-difference gradient checking for layers and whole models."""

from dataclasses import dataclass, field

import numpy as np

from .tensor import DTYPE, make_rng

DEFAULT_STEP = 1e-5
DEFAULT_TOL = 1e-4
# guards the relative error against division by ~0 where both gradients vanish
_FLOOR = 1e-7


@dataclass
class GradCheckReport:
    """Per-tensor max relative error between analytic and numeric gradients."""

    errors: dict = field(default_factory=dict)
    tolerance: float = DEFAULT_TOL

    @property
    def max_error(self):
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self):
        return self.max_error < self.tolerance

    def __str__(self):
        lines = [f"{name}: {err:.2e}" for name, err in self.errors.items()]
        lines.append(f"max {self.max_error:.2e} ({'pass' if self.passed else 'FAIL'} @ {self.tolerance:g})")
        return "\n".join(lines)


def relative_error(analytic, numeric):
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), _FLOOR)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def numeric_gradient(f, x, step=DEFAULT_STEP):
    """Central differences of scalar ``f()`` with respect to array ``x``, perturbed in place."""
    grad = np.zeros_like(x, dtype=DTYPE)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + step
        fp = f()
        flat[i] = old - step
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2.0 * step)
    return grad


def grad_check(layer, input_shape=None, rng=0, batch=2, training=False,
               step=DEFAULT_STEP, tolerance=DEFAULT_TOL, x=None):
    """Compare ``layer.backward`` against central differences.

    The scalar probed is ``sum(R * layer(x))`` for a fixed random ``R``. A fresh
    generator with the same seed is handed to every forward call so training-mode
    dropout masks stay fixed across perturbations.
    """
    rng = make_rng(rng)
    if not layer.built:
        layer.build(input_shape, rng)
    if x is None:
        x = rng.standard_normal((batch, *layer.input_shape))
    x = np.array(x, dtype=DTYPE)
    mask_seed = int(rng.integers(2**32))
    out_shape = layer.forward(x, training=training, rng=make_rng(mask_seed)).shape
    upstream = rng.standard_normal(out_shape)

    def loss():
        y = layer.forward(x, training=training, rng=make_rng(mask_seed))
        return float(np.sum(upstream * y))

    loss()
    dx = layer.backward(upstream)
    analytic = {name: g.copy() for name, g in layer.grads.items()}

    report = GradCheckReport(tolerance=tolerance)
    for name, p in layer.params.items():
        report.errors[name] = relative_error(analytic[name], numeric_gradient(loss, p, step))
    report.errors["input"] = relative_error(dx, numeric_gradient(loss, x, step))
    return report


def model_grad_check(model, x, y, loss_kind, rng=0, training=False,
                     step=DEFAULT_STEP, tolerance=DEFAULT_TOL):
    """Whole-model check of :meth:`Model.loss_and_grad` against central differences."""
    seed = int(make_rng(rng).integers(2**32))

    def loss():
        return model.loss_and_grad(x, y, loss_kind, training=training, rng=make_rng(seed),
                                   compute_grad=False)[0]

    _, grads = model.loss_and_grad(x, y, loss_kind, training=training, rng=make_rng(seed))
    report = GradCheckReport(tolerance=tolerance)
    for name, p in model.parameters().items():
        report.errors[name] = relative_error(grads[name], numeric_gradient(loss, p, step))
    return report
