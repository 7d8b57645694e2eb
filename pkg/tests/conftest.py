"""Shared test helpers. Thread pinning must happen before numpy loads."""

import os

os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import numpy as np  # noqa: E402

from fabricnet import Model, Tensor, cross_entropy, forward  # noqa: E402


def relative_error(analytic: float, numeric: float) -> float:
    denom = max(abs(analytic), abs(numeric))
    if denom < 1e-8:  # both effectively zero
        return 0.0
    return abs(analytic - numeric) / denom


def model_loss(model, batch, labels, rng_seed=None):
    rng = np.random.default_rng(rng_seed) if rng_seed is not None else None
    scores, _ = forward(model, batch, rng)
    loss, _ = cross_entropy(scores, labels)
    return loss


def fd_param_grad(model, batch, labels, name, index, h=1e-5, rng_seed=None):
    """Central finite difference of the loss w.r.t. one parameter entry."""
    base = model.params[name].array
    bumped = {}
    for sign in (+1, -1):
        w = base.copy()
        w[index] += sign * h
        params = dict(model.params)
        params[name] = Tensor(w)
        bumped[sign] = model_loss(Model(model.spec, params, model.mode),
                                  batch, labels, rng_seed)
    return (bumped[+1] - bumped[-1]) / (2 * h)


def fd_input_grad(model, batch, labels, index, h=1e-5, rng_seed=None):
    """Central finite difference of the loss w.r.t. one input entry."""
    vals = {}
    for sign in (+1, -1):
        x = np.array(batch.array)
        x[index] += sign * h
        vals[sign] = model_loss(model, Tensor(x), labels, rng_seed)
    return (vals[+1] - vals[-1]) / (2 * h)


def check_model_gradients(model, batch, labels, h=1e-5, tol=1e-4, rng_seed=None):
    """Compare every analytic gradient entry (params and input) against
    central finite differences; returns the worst relative error seen."""
    from fabricnet import backward

    rng = np.random.default_rng(rng_seed) if rng_seed is not None else None
    scores, tape = forward(model, batch, rng)
    loss, loss_grad = cross_entropy(scores, labels)
    grads = backward(model, tape, loss_grad)

    worst = 0.0
    for name, grad in grads.params.items():
        analytic = grad.array
        for index in np.ndindex(*analytic.shape):
            numeric = fd_param_grad(model, batch, labels, name, index, h, rng_seed)
            err = relative_error(analytic[index], numeric)
            assert err < tol, f"{name}{index}: analytic {analytic[index]} vs fd {numeric}"
            worst = max(worst, err)
    gin = grads.input.array
    for index in np.ndindex(*gin.shape):
        numeric = fd_input_grad(model, batch, labels, index, h, rng_seed)
        err = relative_error(gin[index], numeric)
        assert err < tol, f"input{index}: analytic {gin[index]} vs fd {numeric}"
        worst = max(worst, err)
    return worst
