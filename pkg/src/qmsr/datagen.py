"""Snapshot generators for transport-dominated test problems.

* Vlasov transport with a fixed potential on ``[-1, 1)^2``,
* the acoustic wave equation in Hamiltonian form on ``[-4, 4)^2``,
* an exactly translating 1-D periodic Gaussian pulse.

The PDE generators use periodic second-order central differences on a
collocated grid and the classical fourth-order Runge-Kutta method. Grid point
``i`` of an ``N``-point axis over ``[a, b)`` sits at ``a + i (b - a) / N``.
2-D fields are flattened row-major over ``(i2, i1)``, so ``x1`` varies fastest.
"""

import math
from dataclasses import dataclass

import numpy as np

from qmsr.exceptions import QMSRError, ValidationError

CFL_FACTOR = 0.4


class InstabilityError(QMSRError, FloatingPointError):
    """Time stepping produced non-finite values."""

    def __init__(self, step):
        self.step = step
        super().__init__(f"non-finite state at time step {step}")


def vlasov_potential(x1):
    return 0.2 + 0.2 * np.cos(np.pi * x1**4) + 0.1 * np.sin(np.pi * x1)


def _grid(N, lo, hi):
    return lo + (hi - lo) * np.arange(N) / N


def _ddx(u, axis, h):
    return (np.roll(u, -1, axis=axis) - np.roll(u, 1, axis=axis)) / (2.0 * h)


def _rk4_step(rhs, u, dt):
    k1 = rhs(u)
    k2 = rhs(u + 0.5 * dt * k1)
    k3 = rhs(u + 0.5 * dt * k2)
    k4 = rhs(u + dt * k3)
    return u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _integrate(rhs, u0, dt, n_steps, stride, substeps):
    """Store ``u0`` and every `stride`-th of `n_steps` steps as columns."""
    k = n_steps // stride
    S = np.empty((u0.size, k), order="F")
    u = u0
    h = dt / substeps
    col = 0
    for step in range(n_steps):
        if step % stride == 0:
            S[:, col] = u.reshape(-1)
            col += 1
            if col == k:
                break
        for _ in range(substeps):
            u = _rk4_step(rhs, u, h)
        if not np.all(np.isfinite(u)):
            raise InstabilityError(step + 1)
    return S


@dataclass(frozen=True)
class VlasovConfig:
    """Vlasov transport ``u_t = -x2 u_x1 + phi(x1) u_x2``.

    ``final_time / dt`` steps are taken from ``t = 0``; the initial condition is
    the first snapshot and every `stride`-th state after it is stored, so the
    defaults give 2500 snapshots at times ``0, dt, ..., final_time - dt``.
    Set ``potential=False`` to drop the potential (pure shear in ``x1``).
    """

    N: int = 128
    dt: float = 2e-3
    final_time: float = 5.0
    stride: int = 1
    width: float = 10.0
    potential: bool = True

    def __post_init__(self):
        if self.N < 16:
            raise ValidationError("Vlasov grid needs N >= 16")
        if not self.dt > 0 or not self.final_time > 0 or self.stride < 1:
            raise ValidationError("dt, final_time and stride must be positive")

    @property
    def dx(self):
        return 2.0 / self.N

    @property
    def n_steps(self):
        return int(round(self.final_time / self.dt))

    @property
    def substeps(self):
        """RK4 substeps per stored step so that ``dt / substeps <= 0.4 dx``."""
        return max(1, math.ceil(self.dt / (CFL_FACTOR * self.dx) - 1e-12))

    @property
    def n_snapshots(self):
        return self.n_steps // self.stride


def gen_vlasov(cfg=None):
    """Snapshots of the Vlasov density, shape ``(N^2, n_snapshots)``."""
    cfg = cfg or VlasovConfig()
    x = _grid(cfg.N, -1.0, 1.0)
    X1, X2 = np.meshgrid(x, x)  # axis 0 is x2, axis 1 is x1
    phi = vlasov_potential(X1) if cfg.potential else np.zeros_like(X1)
    u0 = np.exp(-cfg.width**2 * (X1**2 + X2**2))
    h = cfg.dx

    def rhs(u):
        return -X2 * _ddx(u, 1, h) + phi * _ddx(u, 0, h)

    return _integrate(rhs, u0, cfg.dt, cfg.n_steps, cfg.stride, cfg.substeps)


@dataclass(frozen=True)
class AcousticConfig:
    """Acoustic wave ``rho_t = -div v``, ``v_t = -grad rho`` on ``[-4, 4)^2``.

    The state is ``[rho; v1; v2]`` (each flattened as described in the module
    docstring), so ``n = 3 N^2``.
    """

    N: int = 96
    dt: float = 5e-3
    final_time: float = 8.0
    stride: int = 1

    def __post_init__(self):
        if self.N < 16:
            raise ValidationError("acoustic grid needs N >= 16")
        if not self.dt > 0 or not self.final_time > 0 or self.stride < 1:
            raise ValidationError("dt, final_time and stride must be positive")

    @property
    def dx(self):
        return 8.0 / self.N

    @property
    def n_steps(self):
        return int(round(self.final_time / self.dt))

    @property
    def substeps(self):
        return max(1, math.ceil(self.dt / (CFL_FACTOR * self.dx) - 1e-12))

    @property
    def n_snapshots(self):
        return self.n_steps // self.stride


def acoustic_initial_state(cfg):
    x = _grid(cfg.N, -4.0, 4.0)
    X1, X2 = np.meshgrid(x, x)
    rho0 = np.exp(-((2 * np.pi) ** 2) * ((X1 - 2.0) ** 2 + (X2 - 2.0) ** 2))
    return np.stack([rho0, np.zeros_like(rho0), np.zeros_like(rho0)])


def gen_acoustic(cfg=None):
    """Snapshots of ``[rho; v1; v2]``, shape ``(3 N^2, n_snapshots)``."""
    cfg = cfg or AcousticConfig()
    h = cfg.dx

    def rhs(state):
        rho, v1, v2 = state
        return np.stack([
            -(_ddx(v1, 1, h) + _ddx(v2, 0, h)),
            -_ddx(rho, 1, h),
            -_ddx(rho, 0, h),
        ])

    return _integrate(rhs, acoustic_initial_state(cfg), cfg.dt, cfg.n_steps,
                      cfg.stride, cfg.substeps)


def gen_advection_pulse(n=256, k=200, speed=1.0, width=None, center=None):
    """Periodic Gaussian pulse translated by ``speed`` cells per snapshot.

    Column ``j`` is evaluated in closed form at the shift ``j * speed`` using
    the periodic distance, so integer speeds reproduce exact index shifts.

    Parameters
    ----------
    n : int
        Number of grid cells, at least 32.
    k : int
        Number of snapshots.
    speed : float
        Shift in cells between consecutive snapshots.
    width : float, optional
        Standard deviation of the pulse in cells; ``n / 64`` by default.
    center : float, optional
        Initial pulse position in cells; ``n / 4`` by default.
    """
    if n < 32:
        raise ValidationError("advection pulse needs n >= 32")
    if k < 1:
        raise ValidationError("k must be positive")
    width = n / 64 if width is None else float(width)
    center = n / 4 if center is None else float(center)
    cells = np.arange(n)[:, None]
    shifts = center + speed * np.arange(k)[None, :]
    d = np.mod(cells - shifts + n / 2, n) - n / 2
    return np.asfortranarray(np.exp(-0.5 * (d / width) ** 2))


def split_even_odd(S):
    """Even-indexed columns for training, odd-indexed columns for testing."""
    S = np.asarray(S)
    if S.ndim != 2 or S.shape[1] < 2:
        raise ValidationError("need at least two snapshots to split")
    return S[:, 0::2].copy(order="F"), S[:, 1::2].copy(order="F")


GENERATORS = ("vlasov", "acoustic", "advection")
