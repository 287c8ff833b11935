"""Per-state and cross-step diagnostics recorded along flow trajectories.

Each sample stores the three sup-norm curvature envelopes (sup |S|,
sup |hess S|, sup |Rm|), the energy, volume and average scalar curvature,
two higher-derivative smoothing probes, and, when the extra inputs are
available, the discrete scalar-evolution residual, the Futaki pairing over
the backend's holomorphic basis fields, and an automorphism-minimized
Sobolev gap to a reference state.
"""

from dataclasses import dataclass, fields

import numpy as np

from . import geometry
from .errors import DomainError, SolverFailure
from .geometry import TORIC, TORUS, toric, torus

FUTAKI_TOL = 1e-10


@dataclass(frozen=True)
class DiagnosticsSample:
    """One timestamped diagnostics record; field order is the file schema."""

    t: float
    sup_scalar: float
    sup_hess_scalar: float
    sup_curv: float
    calabi_energy: float
    volume: float
    mean_scalar: float
    sup_grad_scalar: float
    sup_bihess_scalar: float
    evolution_residual: "float | None" = None
    futaki: "float | None" = None
    aut_gap: "float | None" = None


SAMPLE_SCHEMA = tuple(f.name for f in fields(DiagnosticsSample))


@dataclass(frozen=True)
class VectorFieldSpec:
    """Coefficients against the backend's fixed holomorphic field basis.

    Torus: two real constants (the translation fields).  Toric: one real
    constant scaling the circle-action generator, which acts trivially on
    invariant functions.
    """

    backend: str
    coefficients: tuple

    def __post_init__(self):
        want = 2 if self.backend == TORUS else 1
        coeffs = tuple(float(c) for c in self.coefficients)
        if len(coeffs) != want or not all(np.isfinite(coeffs)):
            raise ValueError("bad vector field coefficients")
        object.__setattr__(self, "coefficients", coeffs)


def basis_fields(backend):
    if backend == TORUS:
        return (
            VectorFieldSpec(TORUS, (1.0, 0.0)),
            VectorFieldSpec(TORUS, (0.0, 1.0)),
        )
    return (VectorFieldSpec(TORIC, (1.0,)),)


def futaki(state, v_spec, tol=FUTAKI_TOL):
    """Futaki pairing of the class with a holomorphic field.

    Solves lap_g f = S - S_bar (solvable: the data has zero mean by the
    conservation identity), shifts f so that int e^f dV equals the volume,
    and returns int V(f) dV.  The shift drops out of the pairing but is
    kept so the returned potential convention is canonical.
    """
    s = geometry.scalar_curvature(state).values
    sbar = geometry.average_scalar(state)
    if state.backend == TORUS:
        h = torus.conformal_density(state.potential.phi)
        f, resid = torus.poisson_solve(h, s - sbar, tol)
    else:
        f, resid = toric.poisson_solve(state.potential.v, s - sbar, tol)
    scale = max(1.0, float(np.max(np.abs(s - sbar))))
    if resid > tol * scale:
        raise SolverFailure(
            f"scalar potential solve residual {resid:.3e} exceeds {tol:.1e}"
        )
    vol = geometry.volume(state)
    f = f + np.log(vol / geometry.grid_integral(state, np.exp(f)))
    if state.backend == TORUS:
        a, b = v_spec.coefficients
        fx, fy = torus.grad0(f)
        return geometry.grid_integral(state, a * fx + b * fy)
    # The circle generator acts in the angular direction only; invariant
    # potentials are annihilated exactly.
    return 0.0 * v_spec.coefficients[0]


def evolution_residual(s_prev, s_next, dt):
    """Sup-norm defect of the scalar-curvature evolution identity.

    The time derivative is the centered quotient of the two curvatures;
    the spatial side is evaluated on the midpoint state (whose positivity
    is implied by the endpoints': the density is affine in the potential).
    The per-backend spatial reductions are frozen in the geometry modules
    and validated against finite-difference oracles in the tests.
    """
    if s_prev.backend != s_next.backend or dt <= 0:
        raise ValueError("need two same-backend states and dt > 0")
    s0 = geometry.scalar_curvature(s_prev).values
    s1 = geometry.scalar_curvature(s_next).values
    mid = s_prev.with_values(0.5 * (s_prev.values() + s_next.values()))
    if mid.backend == TORUS:
        h = torus.conformal_density(mid.potential.phi)
        spatial = torus.evolution_operator(h)
    else:
        spatial = toric.evolution_operator(mid.potential.v)
    return float(np.max(np.abs((s1 - s0) / dt + spatial)))


def automorphism_gap(state, reference):
    """Order-2 Sobolev gap minimized over the backend's automorphisms.

    Torus: exhaustive grid translations via one spectral correlation, then
    quadratic refinement.  Toric: identity and the reflection x -> -x.
    Gauge-fixed on both sides, so the value vanishes identically on pairs
    that differ by a pure gauge transformation.
    """
    if state.backend != reference.backend:
        raise ValueError("states live on different backends")
    if state.resolution != reference.resolution:
        raise ValueError("states have different resolutions")
    if state.backend == TORUS:
        return torus.sobolev_gap(state.potential.phi, reference.potential.phi)
    return toric.sobolev_gap(state.potential.v, reference.potential.v)


def sample(state, prev=None, dt=None, reference=None):
    """Assemble the full diagnostics record for one state.

    ``prev``/``dt`` fill the cross-step evolution residual; ``reference``
    fills the automorphism gap.  The futaki field stores the largest
    magnitude of the pairing over the backend's basis fields; it is left
    empty when the scalar-potential solve cannot certify its tolerance at
    the state's resolution (the field is optional, and a rough transient
    must not abort a recording run).
    """
    sup_s, sup_hess, sup_rm = geometry.curvature_norms(state)
    sup_grad, sup_bihess = geometry.scalar_probes(state)
    try:
        fut = max(
            (abs(futaki(state, v)) for v in basis_fields(state.backend)),
            default=0.0,
        )
    except SolverFailure:
        fut = None
    evo = None
    if prev is not None:
        if dt is None:
            dt = state.t - prev.t
        evo = evolution_residual(prev, state, dt)
    gap = None if reference is None else automorphism_gap(state, reference)
    return DiagnosticsSample(
        t=float(state.t),
        sup_scalar=sup_s,
        sup_hess_scalar=sup_hess,
        sup_curv=sup_rm,
        calabi_energy=geometry.calabi_energy(state),
        volume=geometry.volume(state),
        mean_scalar=geometry.average_scalar(state),
        sup_grad_scalar=sup_grad,
        sup_bihess_scalar=sup_bihess,
        evolution_residual=evo,
        futaki=fut,
        aut_gap=gap,
    )


@dataclass(frozen=True)
class SmoothingProbe:
    """Fitted smoothing constants and the companion interpolation ratio."""

    constants: dict
    interp_ratio_sup: float


def smoothing_probe(trace, bound, orders=(1, 2)):
    """Empirical constants in the derivative-smoothing envelope.

    For each derivative order l the probe returns the largest sampled value
    of sup |grad^l Rm|(t) divided by (bound + (t - t_start)^(-1/2))^(1+l/2);
    finiteness and stability of these constants under refinement is the
    testable content.  Numerators use |grad Rm| = |grad S|/2 and
    |grad^2 Rm| = |hess S|/2, the dimension-one reductions.  Raises
    DomainError when sup |Rm| exceeds the assumed bound anywhere, since the
    envelope's hypothesis fails there.  The interpolation ratio
    sup |hess S| / sup |S|^(1/2) is logged alongside.
    """
    samples = getattr(trace, "samples", trace)
    if len(samples) < 2:
        raise DomainError("smoothing probe needs at least two samples")
    t0 = samples[0].t
    worst = max(s.sup_curv for s in samples)
    if worst > bound * (1.0 + 1e-12):
        raise DomainError(
            f"curvature bound violated: sup |Rm| = {worst:.3e} > {bound:.3e}"
        )
    constants = {}
    for order in orders:
        best = 0.0
        for rec in samples:
            tau = rec.t - t0
            if tau <= 0.0:
                continue
            num = 0.5 * (
                rec.sup_grad_scalar if order == 1 else rec.sup_hess_scalar
            )
            best = max(best, num / (bound + tau ** -0.5) ** (1.0 + order / 2.0))
        constants[order] = best
    ratio = 0.0
    for rec in samples:
        if rec.sup_scalar > 1e-300:
            ratio = max(ratio, rec.sup_hess_scalar / rec.sup_scalar ** 0.5)
    return SmoothingProbe(constants=constants, interp_ratio_sup=ratio)
