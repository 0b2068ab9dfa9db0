"""Shared test utilities: central finite differences and error norms."""

import numpy as np

FD_STEP = 1e-5


def numerical_grad(scalar_fn, array, h=FD_STEP):
    """Central-difference gradient of scalar_fn() w.r.t. an array it reads.

    Perturbs the array in place coordinate by coordinate; scalar_fn must
    re-run the forward pass from scratch on each call.
    """
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    grad_flat = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        up = scalar_fn()
        flat[i] = original - h
        down = scalar_fn()
        flat[i] = original
        grad_flat[i] = (up - down) / (2.0 * h)
    return grad


def rel_error(a, b):
    """Relative error between gradient vectors, by norm."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return np.linalg.norm(a - b) / denom


def assert_grad_matches(scalar_fn, tensors, tol):
    """Backward pass vs finite differences for every tensor in the list."""
    loss = scalar_fn()
    loss.backward()
    for tensor in tensors:
        assert tensor.grad is not None, f"no gradient reached {tensor!r}"
        numeric = numerical_grad(lambda: scalar_fn().item(), tensor.data)
        err = rel_error(tensor.grad, numeric)
        assert err < tol, f"gradient mismatch {err:.3e} (tol {tol:.0e}) for {tensor!r}"
