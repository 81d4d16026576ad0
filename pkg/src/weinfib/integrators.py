"""Classical RK4 for batched autonomous flows, optionally with the variational equation."""
import numpy as np


def rk4_step(f, x, h):
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def rk4_flow(f, x0, t, steps, jac=None):
    """Integrate ``x' = f(x)`` from ``x0`` (shape ``(M, n)``) for time ``t``.

    With ``jac`` (returning ``(M, n, n)``), the flow Jacobian is integrated
    alongside from the identity and returned as a second value.
    """
    x = np.array(x0, dtype=float)
    steps = max(int(steps), 1)
    h = t / steps
    if jac is None:
        for _ in range(steps):
            x = rk4_step(f, x, h)
        return x
    M, n = x.shape

    def g(z):
        y, D = z[:, :n], z[:, n:].reshape(M, n, n)
        return np.concatenate([f(y), (jac(y) @ D).reshape(M, n * n)], axis=1)

    z = np.concatenate([x, np.broadcast_to(np.eye(n), (M, n, n)).reshape(M, n * n)], axis=1)
    for _ in range(steps):
        z = rk4_step(g, z, h)
    return z[:, :n], z[:, n:].reshape(M, n, n)


def central_jacobian(func, x, h):
    """Central-difference Jacobian ``(M, m, n)`` of ``func: (M, n) -> (M, m)``."""
    x = np.asarray(x, dtype=float)
    M, n = x.shape
    offsets = h * np.eye(n)
    stacked = np.concatenate([x[None] + offsets[:, None], x[None] - offsets[:, None]]).reshape(2 * n * M, n)
    vals = np.asarray(func(stacked))
    vals = vals.reshape((2, n, M) + vals.shape[1:])
    diff = (vals[0] - vals[1]) / (2 * h)
    return np.moveaxis(diff, 0, -1)
