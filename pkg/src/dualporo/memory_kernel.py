"""Discrete half-order memory source via product-integration quadrature.

The matrix-fracture exchange reduces, for thin fissures, to

    Q_w(t) = -D * d/dt [ g * t**-1/2 ](t),   g(0) = 0,

with g the shifted matching-saturation history.  Because g(0) = 0 the
time derivative can be moved onto g, and the convolution of a piecewise
linear g with t**-1/2 has exact kernel moments per step:

    w_j = 2*(sqrt(j*dt) - sqrt((j-1)*dt)),

so the discrete operator is exact for any g that is linear on each step.
"""

import numpy as np

from .errors import DomainError


class KernelQuadrature:
    """Precomputed product-integration weights for a fixed step size."""

    def __init__(self, dt, n_steps):
        if dt <= 0.0:
            raise DomainError(f"dt must be positive, got {dt}")
        if n_steps < 1:
            raise DomainError(f"n_steps must be >= 1, got {n_steps}")
        self.dt = float(dt)
        self.n_steps = int(n_steps)
        j = np.arange(1, n_steps + 1, dtype=float)
        # exact square-root differences keep the telescoping sum exact
        self.weights = 2.0 * np.sqrt(self.dt) * (np.sqrt(j) - np.sqrt(j - 1.0))

    def weight_sum(self, n):
        return float(self.weights[:n].sum())


class HistoryBuffer:
    """Per-cell (or per-field) sequence of kernel-argument samples.

    The first entry is pinned to zero: the argument is the deviation of
    the matching saturation from its initial value.
    """

    def __init__(self, shape=()):
        self._entries = [np.zeros(shape)]

    @property
    def n_completed(self):
        return len(self._entries) - 1

    def append(self, g):
        self._entries.append(np.array(g, dtype=float, copy=True))

    def entry(self, j):
        return self._entries[j]

    def as_array(self):
        return np.stack(self._entries, axis=0)


def memory_source(quad, history, D, n):
    """Discrete memory source at step n from samples g^0..g^n.

    Returns -D * sum_j (g^{j+1}-g^j)/dt * w_{n-j}; exact whenever g is
    piecewise linear on the step grid.
    """
    if n < 1:
        raise DomainError("memory source needs at least one completed step")
    if history.n_completed < n:
        raise DomainError(
            f"history holds {history.n_completed} steps, step {n} requested"
        )
    g = history.as_array()[: n + 1]
    dg = np.diff(g, axis=0) / quad.dt
    w = quad.weights[:n][::-1]  # w_{n-j} for j = 0..n-1
    return -D * np.tensordot(w, dg, axes=(0, 0))


def split_implicit_coefficient(quad, history, D, n):
    """Split the step-n source into known history and the implicit term.

    Returns (history_part, current_coefficient) with

        memory_source = history_part + current_coefficient * g^n,

    where history_part depends on g^0..g^{n-1} only and the coefficient
    -2*D/sqrt(dt) multiplies the implicit sample g^n.
    """
    if n < 1:
        raise DomainError("split needs n >= 1")
    g = history.as_array()[:n]  # g^0..g^{n-1}
    coeff = -2.0 * D / np.sqrt(quad.dt)
    hist = np.zeros(g.shape[1:]) if g.ndim > 1 else 0.0
    if n >= 2:
        dg = np.diff(g, axis=0) / quad.dt
        w = quad.weights[1:n][::-1]  # w_{n-j} for j = 0..n-2
        hist = hist - D * np.tensordot(w, dg, axes=(0, 0))
    # the j = n-1 increment contributes w_1 * (g^n - g^{n-1})/dt
    hist = hist - coeff * g[-1]
    return hist, coeff


def kernel_amplitude(delta, phi_m, k_m, psi_m, d, sigma_d=None):
    """Kernel amplitudes (D_delta, C_m) for fissure thickness delta.

    C_m = sigma_d * sqrt(phi_m*k_m*psi_m) / sqrt(pi) with sigma_d = 2*d
    (the boundary-layer constant 6 at d = 3), and
    D_delta = delta * C_m / |Y_m|; the vanishing higher-order correction
    is dropped.  The limit-model amplitude is C_m / d.
    """
    if min(phi_m, k_m, psi_m) <= 0.0 or not (0.0 <= delta < 1.0):
        raise DomainError("kernel amplitude needs positive parameters, delta in [0,1)")
    if sigma_d is None:
        sigma_d = 2.0 * d
    c_m = sigma_d * np.sqrt(phi_m * k_m * psi_m) / np.sqrt(np.pi)
    ym = (1.0 - delta) ** d
    d_delta = delta * c_m / ym
    return float(d_delta), float(c_m)
