"""Central finite-difference gradient checks.

The error of an analytic gradient ``a`` against a numerical one ``n`` is
measured per tensor as ``||a - n|| / max(||a||, ||n||, floor)``.  Some
gradients are exactly zero (a key bias under softmax shift invariance), and
there the numerical estimate is pure rounding noise: about 1e-11 per
coordinate at ``h = 1e-5``, or around 1e-10 over a small tensor after a full
network forward.  The floor of 1e-5 sits above that noise, so a true zero
passes while any real gradient is still compared relatively.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from pairtopk.tensor.core import Tensor

FLOOR = 1e-5


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = FLOOR) -> float:
    analytic, numeric = np.asarray(analytic, dtype=np.float64), np.asarray(numeric, dtype=np.float64)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
    return float(np.linalg.norm(analytic - numeric) / scale)


def numerical_gradient(f: Callable[[], float], array: np.ndarray, h: float = 1e-5,
                       indices=None) -> np.ndarray:
    """d f / d array by central differences, perturbing ``array`` in place.

    ``indices`` restricts the probe to some flat positions; the others stay 0.
    """
    grad = np.zeros_like(array, dtype=np.float64)
    flat, gflat = array.reshape(-1), grad.reshape(-1)
    probe = range(flat.size) if indices is None else indices
    for i in probe:
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        gflat[i] = (up - down) / (2 * h)
    return grad


def check_gradients(loss_fn: Callable[[], Tensor], tensors: dict[str, Tensor], h: float = 1e-5,
                    max_coords: int | None = None, rng: np.random.Generator | None = None) -> dict[str, float]:
    """Relative error per named tensor between backprop and central differences.

    ``loss_fn`` must rebuild the graph on every call.  With ``max_coords``
    only that many randomly chosen coordinates of each tensor are probed and
    compared.
    """
    for t in tensors.values():
        t.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = {name: np.array(t.grad if t.grad is not None else np.zeros_like(t.data)) for name, t in tensors.items()}

    def value() -> float:
        return float(loss_fn().data)

    errors = {}
    rng = rng or np.random.default_rng(0)
    for name, t in tensors.items():
        size = t.data.size
        if max_coords is not None and size > max_coords:
            idx = np.sort(rng.choice(size, size=max_coords, replace=False))
        else:
            idx = np.arange(size)
        numeric = numerical_gradient(value, t.data, h, idx)
        errors[name] = relative_error(analytic[name].reshape(-1)[idx], numeric.reshape(-1)[idx])
        t.grad = None
    return errors
