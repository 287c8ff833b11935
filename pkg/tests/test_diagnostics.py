"""Diagnostics: samples, evolution identity, Futaki pairing, gap distance."""

import numpy as np
import pytest

from calabilab import diagnostics, flow, geometry, presets
from calabilab.errors import DomainError
from calabilab.geometry import toric, torus


def torus_state(seed=2, n=32, amp=0.3, kmax=4):
    return presets.build_initial(
        "torus", n, {"preset": "random", "seed": seed, "amplitude": amp,
                     "kmax": kmax}
    )


class TestSample:
    def test_flat_torus_record(self):
        rec = diagnostics.sample(geometry.flat_state(32))
        assert rec.sup_scalar == rec.sup_hess_scalar == rec.sup_curv == 0.0
        assert rec.calabi_energy == 0.0
        assert rec.volume == pytest.approx((2 * np.pi) ** 2, rel=1e-14)
        assert rec.mean_scalar == 0.0
        assert rec.futaki == 0.0
        assert rec.evolution_residual is None and rec.aut_gap is None

    def test_round_toric_record(self):
        rec = diagnostics.sample(geometry.round_state(64))
        assert rec.sup_scalar == 2.0
        assert rec.sup_curv == 1.0
        assert rec.sup_hess_scalar < 1e-10
        assert rec.calabi_energy == 0.0
        assert rec.mean_scalar == 2.0

    def test_curvature_is_half_scalar_on_both_backends(self):
        for state in (torus_state(), geometry.round_state(32)):
            rec = diagnostics.sample(state)
            assert rec.sup_curv == 0.5 * rec.sup_scalar

    def test_cross_step_fields(self):
        state = torus_state()
        res = flow.step(state, 1e-5)
        rec = diagnostics.sample(res.new_state, prev=state, dt=1e-5,
                                 reference=geometry.flat_state(32))
        assert rec.evolution_residual is not None
        assert rec.aut_gap is not None and rec.aut_gap > 0


class TestEvolutionResidual:
    def test_fixed_point_is_machine_zero(self):
        flat = geometry.flat_state(32)
        for dt in (1e-6, 1e-2, 1.0):
            assert diagnostics.evolution_residual(flat, flat, dt) == 0.0
        rnd = geometry.round_state(64)
        assert diagnostics.evolution_residual(rnd, rnd, 0.1) < 1e-9

    def test_torus_identity_against_flow_derivative(self):
        # Finite difference of S along the flow direction versus the
        # frozen spatial reduction; the defect is far below either term.
        state = torus_state(amp=0.3, kmax=3)
        phi = state.potential.phi
        h = torus.conformal_density(phi)
        direction = torus.scalar_from_density(h)
        eps = 1e-7

        def s_of(p):
            p = p - p.mean()
            return torus.scalar_from_density(torus.conformal_density(p))

        ds = (s_of(phi + eps * direction) - s_of(phi - eps * direction)) \
            / (2 * eps)
        spatial = torus.evolution_operator(h)
        scale = np.max(np.abs(spatial))
        assert np.max(np.abs(ds + spatial)) < 1e-6 * scale

    def test_toric_identity_against_flow_derivative(self):
        state = presets.build_initial(
            "toric1d", 96, {"preset": "random", "seed": 1, "amplitude": 0.1}
        )
        v = state.potential.v
        s = toric.scalar_curvature(v)
        direction = flow.TORIC_FLOW_SIGN * (s - 2.0)
        eps = 1e-6
        ds = (toric.scalar_curvature(v + eps * direction)
              - toric.scalar_curvature(v - eps * direction)) / (2 * eps)
        spatial = toric.evolution_operator(v)
        scale = np.max(np.abs(spatial))
        assert np.max(np.abs(ds + spatial)) < 1e-5 * scale

    def test_flow_consecutive_states_have_small_residual(self):
        state = torus_state(amp=0.15, kmax=2)
        res = flow.step(state, 1e-5)
        along = diagnostics.evolution_residual(state, res.new_state, 1e-5)
        # Deliberately mismatched pair: same dt, unrelated endpoints.
        other = torus_state(seed=77, amp=0.15, kmax=2)
        mismatched = diagnostics.evolution_residual(state, other, 1e-5)
        assert mismatched > 100.0 * along


class TestFutaki:
    def test_flat_class_vanishes(self):
        for spec in diagnostics.basis_fields("torus"):
            val = diagnostics.futaki(geometry.flat_state(32), spec)
            assert abs(val) < 1e-12

    def test_round_circle_generator_vanishes(self):
        spec = diagnostics.basis_fields("toric1d")[0]
        assert diagnostics.futaki(geometry.round_state(64), spec) == 0.0

    def test_linearity_in_the_field(self):
        state = torus_state(n=64, kmax=4)
        v1, v2 = diagnostics.basis_fields("torus")
        f1 = diagnostics.futaki(state, v1)
        f2 = diagnostics.futaki(state, v2)
        for a, b in ((2.0, -1.5), (0.3, 0.7)):
            combo = diagnostics.VectorFieldSpec("torus", (a, b))
            val = diagnostics.futaki(state, combo)
            assert abs(val - (a * f1 + b * f2)) < 1e-9

    def test_bad_field_spec(self):
        with pytest.raises(ValueError):
            diagnostics.VectorFieldSpec("torus", (1.0,))
        with pytest.raises(ValueError):
            diagnostics.VectorFieldSpec("toric1d", (np.nan,))

    def test_uncertifiable_solve_raises(self):
        # Rough data at coarse interval resolution pushes the potential
        # solve's spectral truncation above the certified tolerance.
        from calabilab.errors import SolverFailure

        state = presets.build_initial(
            "toric1d", 64,
            {"preset": "random", "seed": 17, "amplitude": 0.45},
        )
        with pytest.raises(SolverFailure):
            diagnostics.futaki(state, diagnostics.basis_fields("toric1d")[0])
        # The sample record degrades instead of aborting.
        rec = diagnostics.sample(state)
        assert rec.futaki is None


class TestAutomorphismGap:
    def test_identity_pair_is_zero(self):
        state = torus_state()
        assert diagnostics.automorphism_gap(state, state) == 0.0

    def test_grid_translation_is_gauge(self):
        state = torus_state(n=32)
        rolled = geometry.torus_state(np.roll(state.potential.phi, (5, 11),
                                              axis=(0, 1)))
        gap = diagnostics.automorphism_gap(rolled, state)
        assert gap < 1e-10

    def test_reflection_is_gauge_on_the_interval(self):
        state = presets.build_initial(
            "toric1d", 33, {"preset": "random", "seed": 6, "amplitude": 0.3}
        )
        mirrored = geometry.toric_state(state.potential.v[::-1])
        assert diagnostics.automorphism_gap(mirrored, state) < 1e-12

    def test_infimum_property(self):
        a = torus_state(seed=1)
        b = torus_state(seed=2)
        gap = diagnostics.automorphism_gap(a, b)
        raw = np.sqrt(torus._weighted_power(
            (1.0 + torus._ops(32)[2]) ** 2,
            np.fft.rfft2(a.potential.phi) - np.fft.rfft2(b.potential.phi),
            32,
        ))
        assert gap <= raw + 1e-12

    def test_invariant_under_translating_either_argument(self):
        a = torus_state(seed=1)
        b = torus_state(seed=2)
        gap = diagnostics.automorphism_gap(a, b)
        moved = geometry.torus_state(np.roll(a.potential.phi, (3, 9),
                                             axis=(0, 1)))
        assert abs(diagnostics.automorphism_gap(moved, b) - gap) \
            < 1e-10 * max(gap, 1.0)

    def test_zero_gap_implies_equal_energy(self):
        state = torus_state(n=32)
        rolled = geometry.torus_state(np.roll(state.potential.phi, 7, axis=0))
        assert diagnostics.automorphism_gap(rolled, state) < 1e-10
        assert abs(geometry.calabi_energy(rolled)
                   - geometry.calabi_energy(state)) < 1e-10

    def test_backend_mismatch(self):
        with pytest.raises(ValueError):
            diagnostics.automorphism_gap(geometry.flat_state(16),
                                         geometry.round_state(16))


class TestSmoothingProbe:
    def test_fixed_point_constants_vanish(self):
        cfg = flow.FlowConfig(
            backend="torus", resolution=16, dt_init=1e-2, dt_min=1e-8,
            dt_max=0.5, t_end=1.0, sample_interval=0.1,
        )
        tr = flow.run(cfg, geometry.flat_state(16)).trace
        probe = diagnostics.smoothing_probe(tr, bound=1.0)
        assert probe.constants == {1: 0.0, 2: 0.0}
        assert probe.interp_ratio_sup == 0.0

    def test_bound_violation_raises(self):
        cfg = flow.FlowConfig(
            backend="toric1d", resolution=64, dt_init=1e-3, dt_min=1e-9,
            dt_max=0.1, t_end=0.5, sample_interval=0.1,
        )
        tr = flow.run(cfg, geometry.round_state(64)).trace
        with pytest.raises(DomainError):
            diagnostics.smoothing_probe(tr, bound=0.5)  # sup |Rm| = 1

    def test_rough_data_constants_stable_under_refinement(self):
        # One rough profile represented on two grids; the fitted envelope
        # constants are a property of the flow, not of the grid.
        from calabilab.verify import _spectral_prolong

        rough32 = presets.build_initial(
            "torus", 32, {"preset": "rough", "seed": 9, "amplitude": 0.3}
        ).values()
        states = {32: geometry.torus_state(rough32),
                  64: geometry.torus_state(_spectral_prolong(rough32, 64))}
        traces = {}
        for n, state in states.items():
            cfg = flow.FlowConfig(
                backend="torus", resolution=n, dt_init=2e-5, dt_min=1e-10,
                dt_max=2e-3, t_end=0.25, sample_interval=5e-3,
            )
            traces[n] = flow.run(cfg, state).trace
        bound = max(
            float(np.max(tr.series("sup_curv")[1])) for tr in traces.values()
        ) * (1 + 1e-9)
        consts = {n: diagnostics.smoothing_probe(tr, bound)
                  for n, tr in traces.items()}
        for order in (1, 2):
            c32 = consts[32].constants[order]
            c64 = consts[64].constants[order]
            assert c64 > 0
            assert abs(c32 - c64) <= 0.2 * max(c32, c64)
        assert np.isfinite(consts[64].interp_ratio_sup)
