"""Finite-difference gradient verification.

`finite_diff_grad` perturbs each parameter component with central differences
and packs the result as (dL/dx + i dL/dy) / 2, which is exactly the dL/dz*
convention the tape propagates. `check_gradients` compares that oracle with
one backward pass and reports the worst relative error per parameter.
"""

from __future__ import annotations

import numpy as np

from .ctensor import backward

__all__ = ["finite_diff_grad", "check_gradients", "GradcheckFailure"]


class GradcheckFailure(AssertionError):
    """At least one component's analytic gradient disagrees with the oracle."""


def finite_diff_grad(loss_fn, params, h=1e-6):
    """Central-difference dL/dz* for every tensor in `params`.

    loss_fn() must evaluate the loss from the parameters' current values and
    return a float. Returns {name: ndarray} matching each parameter's shape.
    For real_only parameters only the real axis is perturbed.
    """
    grads = {}
    for name, p in params.items():
        g = np.zeros_like(p.value)
        flat = p.value.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = loss_fn()
            flat[i] = orig - h
            lm = loss_fn()
            dldx = (lp - lm) / (2.0 * h)
            dldy = 0.0
            if not p.real_only:
                flat[i] = orig + 1j * h
                lp = loss_fn()
                flat[i] = orig - 1j * h
                lm = loss_fn()
                dldy = (lp - lm) / (2.0 * h)
            flat[i] = orig
            gflat[i] = 0.5 * (dldx + 1j * dldy)
        grads[name] = g
    return grads


def _rel_err(a, b, floor):
    """Worst relative error; gradients below `floor` are compared absolutely
    (central differences carry ~eps/h of rounding noise, so a pure relative
    comparison on near-zero gradients only measures that noise)."""
    denom = max(np.max(np.abs(a)), np.max(np.abs(b)), floor)
    return float(np.max(np.abs(a - b)) / denom)


def check_gradients(build_fn, tol=1e-5, h=1e-6, floor=1e-2):
    """Compare tape gradients against the finite-difference oracle.

    build_fn() -> (params: dict[str, CTensor], loss_fn: () -> CTensor)
    where loss_fn builds a fresh graph from the parameters' current values.
    Returns {name: relative_error}; raises GradcheckFailure above `tol`.
    """
    params, loss_fn = build_fn()
    loss = loss_fn()
    backward(loss)
    analytic = {k: p.grad.copy() for k, p in params.items()}

    def scalar_loss():
        return float(loss_fn().value.reshape(()).real)

    numeric = finite_diff_grad(scalar_loss, params, h=h)
    errs = {}
    bad = []
    for k in params:
        a = analytic[k]
        if params[k].real_only:
            a = a.real.astype(np.complex128)
        errs[k] = _rel_err(a, numeric[k], floor)
        if errs[k] > tol:
            bad.append(f"{k}: rel err {errs[k]:.3e}")
    if bad:
        raise GradcheckFailure("gradient mismatch -> " + "; ".join(bad))
    return errs
