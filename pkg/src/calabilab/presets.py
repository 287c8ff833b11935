"""Named initial conditions for runs and sweeps.

Random presets are seeded and normalized so that the named amplitude is
exactly the sup-norm of the quantity that controls metric positivity
(lap0 phi on the torus, (1-x^2) v'' on the interval).  Amplitude 1 is the
cone boundary, so admissible presets demand amplitude < 1; the refusal can
be overridden explicitly for left-cone experiments.
"""

import numpy as np

from .errors import BadParams
from .geometry import TORIC, TORUS, flat_state, round_state, toric, torus
from .geometry import toric_state, torus_state

PRESETS = ("flat", "round", "random", "rough")

AMPLITUDE_LIMIT = 1.0


def _normalize_torus(phi, amplitude):
    phi = phi - phi.mean()
    scale = np.max(np.abs(torus.lap0(phi)))
    if scale == 0.0:
        raise BadParams("degenerate random draw")
    return phi * (amplitude / scale)


def _random_torus(n, seed, amplitude, kmax):
    rng = np.random.default_rng(seed)
    kx = np.fft.fftfreq(n, d=1.0 / n)
    ky = np.arange(n // 2 + 1)
    spec = np.zeros((n, n // 2 + 1), dtype=complex)
    band = (np.abs(kx)[:, None] <= kmax) & (ky[None, :] <= kmax)
    band[0, 0] = False
    count = int(band.sum())
    spec[band] = rng.standard_normal(count) + 1j * rng.standard_normal(count)
    phi = np.fft.irfft2(spec, s=(n, n))
    return _normalize_torus(phi, amplitude)


def _rough_torus(n, seed, amplitude):
    rng = np.random.default_rng(seed)
    kx = np.fft.fftfreq(n, d=1.0 / n)
    ky = np.arange(n // 2 + 1)
    kk = np.sqrt(kx[:, None] ** 2 + ky[None, :] ** 2)
    band = (kk > 0) & (np.abs(kx)[:, None] <= n // 3) & (ky[None, :] <= n // 3)
    spec = np.zeros((n, n // 2 + 1), dtype=complex)
    count = int(band.sum())
    draw = rng.standard_normal(count) + 1j * rng.standard_normal(count)
    spec[band] = draw / kk[band]
    phi = np.fft.irfft2(spec, s=(n, n))
    return _normalize_torus(phi, amplitude)


def _chebyshev_sum(m, coeffs, start_degree):
    x = toric.ops(m).x
    v = np.zeros(m)
    for j, c in enumerate(coeffs):
        v += c * np.cos((start_degree + j) * np.arccos(np.clip(x, -1, 1)))
    return v


def _normalize_toric(v, amplitude):
    o = toric.ops(v.shape[0])
    scale = np.max(np.abs(o.q * (o.d2 @ v)))
    if scale == 0.0:
        raise BadParams("degenerate random draw")
    return toric.strip_affine(v * (amplitude / scale))


def _random_toric(m, seed, amplitude, jmax):
    rng = np.random.default_rng(seed)
    coeffs = rng.standard_normal(jmax - 1)
    return _normalize_toric(_chebyshev_sum(m, coeffs, 2), amplitude)


def _rough_toric(m, seed, amplitude):
    rng = np.random.default_rng(seed)
    top = max(4, m // 3)
    degrees = np.arange(2, top)
    coeffs = rng.standard_normal(degrees.size) / degrees
    return _normalize_toric(_chebyshev_sum(m, coeffs, 2), amplitude)


def build_initial(backend, resolution, spec):
    """Construct the initial state named by a manifest's ``initial`` block.

    ``spec`` keys: ``preset`` (flat | round | random | rough), ``seed``,
    ``amplitude``, optional ``kmax``, and ``allow_overamplitude`` to relax
    the cone-margin validation.
    """
    spec = dict(spec)
    preset = spec.pop("preset", None)
    if preset not in PRESETS:
        raise BadParams(f"unknown preset {preset!r}")
    if preset == "flat":
        _reject(spec)
        if backend != TORUS:
            raise BadParams("the flat preset lives on the torus backend")
        return flat_state(resolution)
    if preset == "round":
        _reject(spec)
        if backend != TORIC:
            raise BadParams("the round preset lives on the toric backend")
        return round_state(resolution)
    seed = int(spec.pop("seed", 0))
    amplitude = float(spec.pop("amplitude", 0.1))
    kmax = spec.pop("kmax", None)
    override = bool(spec.pop("allow_overamplitude", False))
    _reject(spec)
    if amplitude <= 0:
        raise BadParams("amplitude must be positive")
    if amplitude >= AMPLITUDE_LIMIT and not override:
        raise BadParams(
            f"amplitude {amplitude} reaches the cone boundary; pass "
            "allow_overamplitude to force it"
        )
    if backend == TORUS:
        if preset == "random":
            phi = _random_torus(resolution, seed, amplitude,
                                int(kmax) if kmax else 4)
        else:
            phi = _rough_torus(resolution, seed, amplitude)
        return torus_state(phi)
    if preset == "random":
        v = _random_toric(resolution, seed, amplitude,
                          int(kmax) if kmax else 6)
    else:
        v = _rough_toric(resolution, seed, amplitude)
    return toric_state(v)


def _reject(spec):
    if spec:
        raise BadParams(f"unknown initial-condition keys {sorted(spec)}")
