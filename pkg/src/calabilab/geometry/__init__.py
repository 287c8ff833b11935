"""Metric states on the two symmetric reductions and pointwise geometry.

Two backends share one operation surface:

``torus``
    Conformal potentials on the square torus, spectral differentiation.
``toric1d``
    Symplectic-potential corrections on [-1, 1], Chebyshev collocation.

States are immutable value objects; every operation is a pure function of
its inputs and safe to call concurrently.
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import NonKahler
from . import toric, torus

TORUS = "torus"
TORIC = "toric1d"
BACKENDS = (TORUS, TORIC)

POSITIVITY_FLOOR = 1e-8

_GAUGE_TOL = 1e-9


def _freeze(a):
    a = np.ascontiguousarray(np.asarray(a, dtype=float))
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TorusPotential:
    """Zero-mean Kahler potential on an N x N grid, N a power of two."""

    phi: np.ndarray

    def __post_init__(self):
        phi = _freeze(self.phi)
        object.__setattr__(self, "phi", phi)
        n = phi.shape[0]
        if phi.ndim != 2 or phi.shape != (n, n):
            raise ValueError("torus potential must be a square grid")
        if n < 8 or n > 4096 or (n & (n - 1)) != 0:
            raise ValueError(f"unsupported torus resolution {n}")
        if not np.all(np.isfinite(phi)):
            raise ValueError("potential contains non-finite values")
        mean = abs(float(phi.mean()))
        if mean > _GAUGE_TOL * (1.0 + float(np.max(np.abs(phi)))):
            raise ValueError(f"potential mean {mean:.3e} violates the gauge")

    @property
    def resolution(self):
        return self.phi.shape[0]


@dataclass(frozen=True)
class ToricPotential:
    """Smooth correction to the canonical potential on M Lobatto nodes."""

    v: np.ndarray

    def __post_init__(self):
        v = _freeze(self.v)
        object.__setattr__(self, "v", v)
        if v.ndim != 1:
            raise ValueError("toric potential must be a 1-d grid")
        if v.shape[0] < 8 or v.shape[0] > 2049:
            raise ValueError(f"unsupported toric resolution {v.shape[0]}")
        if not np.all(np.isfinite(v)):
            raise ValueError("potential contains non-finite values")

    @property
    def resolution(self):
        return self.v.shape[0]


@dataclass(frozen=True)
class MetricState:
    """A point of the flow: one backend potential plus the flow time."""

    potential: "TorusPotential | ToricPotential"
    t: float = 0.0

    @property
    def backend(self):
        return TORUS if isinstance(self.potential, TorusPotential) else TORIC

    @property
    def resolution(self):
        return self.potential.resolution

    def values(self):
        """The raw potential grid (read-only view)."""
        if isinstance(self.potential, TorusPotential):
            return self.potential.phi
        return self.potential.v

    def with_values(self, values, t=None):
        """New state of the same backend from raw potential values."""
        t_new = self.t if t is None else float(t)
        if isinstance(self.potential, TorusPotential):
            return MetricState(TorusPotential(values), t_new)
        return MetricState(ToricPotential(values), t_new)


@dataclass(frozen=True)
class ScalarField:
    """Real-valued samples on the owning backend's grid."""

    values: np.ndarray
    backend: str

    def __post_init__(self):
        vals = _freeze(self.values)
        object.__setattr__(self, "values", vals)
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("scalar field contains non-finite values")


def torus_state(phi, t=0.0):
    return MetricState(TorusPotential(phi), t)


def toric_state(v, t=0.0):
    return MetricState(ToricPotential(v), t)


def flat_state(n, t=0.0):
    return torus_state(np.zeros((n, n)), t)


def round_state(m, t=0.0):
    return toric_state(np.zeros(m), t)


def conformal_factor(p, eps_pos=POSITIVITY_FLOOR):
    """h = 1 + lap0(phi) for a torus potential; NonKahler below the floor."""
    if isinstance(p, MetricState):
        p = p.potential
    if not isinstance(p, TorusPotential):
        raise TypeError("conformal_factor is defined on the torus backend")
    return ScalarField(torus.conformal_density(p.phi, eps_pos), TORUS)


def _density(state, eps_pos):
    return torus.conformal_density(state.potential.phi, eps_pos)


def scalar_curvature(state, eps_pos=POSITIVITY_FLOOR):
    if state.backend == TORUS:
        vals = torus.scalar_from_density(_density(state, eps_pos))
    else:
        vals = toric.scalar_curvature(state.potential.v, eps_pos)
    return ScalarField(vals, state.backend)


def average_scalar(state):
    """Topological mean of S: 0 on the torus, 2 on the toric reduction."""
    if state.backend == TORUS:
        return 0.0
    return toric.average_scalar(state.potential.v)


def volume(state, eps_pos=POSITIVITY_FLOOR):
    if state.backend == TORUS:
        return torus.volume(_density(state, eps_pos))
    return toric.volume(state.resolution)


def calabi_energy(state, eps_pos=POSITIVITY_FLOOR):
    if state.backend == TORUS:
        return torus.calabi_energy_from_density(_density(state, eps_pos))
    return toric.calabi_energy(state.potential.v, eps_pos)


def laplacian_g(state, f, eps_pos=POSITIVITY_FLOOR):
    vals = f.values if isinstance(f, ScalarField) else np.asarray(f, float)
    if state.backend == TORUS:
        out = torus.laplacian_from_density(_density(state, eps_pos), vals)
    else:
        out = toric.laplacian(state.potential.v, vals, eps_pos)
    return ScalarField(out, state.backend)


def curvature_norms(state, eps_pos=POSITIVITY_FLOOR):
    """(sup |S|, sup |hess S|, sup |Rm|) with the package's conventions."""
    if state.backend == TORUS:
        return torus.norms_from_density(_density(state, eps_pos))
    return toric.norms(state.potential.v, eps_pos)


def scalar_probes(state, eps_pos=POSITIVITY_FLOOR):
    """Gradient and fourth-order sup norms of S used by smoothing probes."""
    if state.backend == TORUS:
        return torus.scalar_probes_from_density(_density(state, eps_pos))
    return toric.scalar_probes(state.potential.v, eps_pos)


def grid_integral(state, values, eps_pos=POSITIVITY_FLOOR):
    """Integral of nodal values against the metric volume form."""
    vals = values.values if isinstance(values, ScalarField) else values
    if state.backend == TORUS:
        return torus.integral(_density(state, eps_pos), vals)
    return toric.integral(state.potential.v, vals)
