"""First-order optimizers over named parameter maps.

Parameters are leaf CTensors; after `backward()` each carries grad = dL/dz*.
SGD applies z <- z - lr * grad. Adam keeps bias-corrected first/second
moments independently on the real and imaginary components of the gradient
(the second moments ride in one complex buffer: real part tracks Re(g)^2,
imaginary part tracks Im(g)^2).
"""

from __future__ import annotations

import numpy as np

__all__ = ["SGD", "Adam"]


class _Optimizer:
    def __init__(self, params, lr):
        if hasattr(params, "items"):
            params = dict(params)
        else:
            params = {str(i): p for i, p in enumerate(params)}
        if not params:
            raise ValueError("optimizer: empty parameter set")
        self.params = params
        self.lr = float(lr)

    def _grad(self, p):
        if p.grad is None:
            raise RuntimeError("optimizer: parameter has no gradient; call backward first")
        g = p.grad
        if p.real_only:
            g = g.real.astype(np.complex128)
        return g

    def state_dict(self):
        return {}

    def load_state_dict(self, state):
        if state:
            raise ValueError("optimizer: unexpected state for stateless optimizer")


class SGD(_Optimizer):
    def step(self):
        for p in self.params.values():
            p.value = p.value - self.lr * self._grad(p)


class Adam(_Optimizer):
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        super().__init__(params, lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = {k: np.zeros_like(p.value) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.value) for k, p in self.params.items()}

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, p in self.params.items():
            g = self._grad(p)
            m = self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            v = self.v[k] = b2 * self.v[k] + (1.0 - b2) * (
                g.real * g.real + 1j * (g.imag * g.imag))
            mh = m / c1
            vh = v / c2
            upd = (mh.real / (np.sqrt(vh.real) + self.eps)
                   + 1j * (mh.imag / (np.sqrt(vh.imag) + self.eps)))
            if p.real_only:
                upd = upd.real.astype(np.complex128)
            p.value = p.value - self.lr * upd

    def state_dict(self):
        return {"t": self.t,
                "m": {k: v.copy() for k, v in self.m.items()},
                "v": {k: v.copy() for k, v in self.v.items()}}

    def load_state_dict(self, state):
        self.t = int(state["t"])
        for k in self.params:
            self.m[k] = np.array(state["m"][k], dtype=np.complex128)
            self.v[k] = np.array(state["v"][k], dtype=np.complex128)
