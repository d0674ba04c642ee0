#!/usr/bin/env python3
"""
Tests for the split-operator stepper, boundary splitting and Volkov continuation
"""

import warnings

import numpy as np
import pytest

from lied_eigensolver import OrbitalSpec, RelaxSettings, relax
from lied_core import (
    ConfigurationError,
    LiedWarning,
    TimeResolutionError,
    TimeResolutionWarning,
    Wavefunction,
    make_grid,
    mirror_y,
    norm2,
    parity_component,
    to_momentum,
)
from lied_model import AtomSite, MolecularGeometry, MolecularModel, PotentialField, build_potential, make_pulse, model_potential
from lied_propagator import (
    BoundarySplitter,
    PropagationConfig,
    SlowFluxFilter,
    SplitStepper,
    VolkovAccumulator,
    check_layout,
    propagate,
    split_and_accumulate,
    step,
)


def _gaussian(grid, x0=0.0, y0=0.0, kx0=0.0, ky0=0.0, width=1.0):
    xx, yy = grid.mesh()
    values = np.exp(-((xx - x0) ** 2 + (yy - y0) ** 2) / (2 * width ** 2) + 1j * (kx0 * xx + ky0 * yy))
    return Wavefunction(grid, values).normalized()


def _free(grid):
    return PotentialField(grid, np.zeros(grid.shape))


def _atom(grid, charge=1.0, softening=0.8):
    return build_potential(None, [AtomSite((0.0, 0.0), charge, charge, 1.0, softening)], grid)


def _dense_ground_state(potential):
    """Lowest eigenpair of the spectral Hamiltonian assembled as a dense matrix"""
    grid = potential.grid

    def kinetic_1d(n, d):
        k = np.fft.fftfreq(n, d) * 2 * np.pi
        return np.real(np.fft.ifft(0.5 * k[:, np.newaxis] ** 2 * np.fft.fft(np.eye(n), axis=0), axis=0))

    h = (np.kron(np.eye(grid.ny), kinetic_1d(grid.nx, grid.dx)) + np.kron(kinetic_1d(grid.ny, grid.dy), np.eye(grid.nx))
         + np.diag(potential.values.ravel()))
    w, v = np.linalg.eigh(0.5 * (h + h.T))
    return float(w[0]), Wavefunction(grid, v[:, 0].reshape(grid.shape).astype(np.complex128)).normalized()


def _evolve(potential, psi, dt, total):
    stepper = SplitStepper(potential, dt)
    values = psi.values
    for _ in range(int(round(total / dt))):
        values = stepper.advance(values, 0.0)
    return values


class TestStepper:
    def test_norm_conserved_over_pulse(self):
        grid = make_grid(64, 64, 16.0, 16.0)
        potential = build_potential(None, [AtomSite((0.0, 0.0), 1.0, 1.0, 1.0, 0.8)], grid)
        pulse = make_pulse(omega=0.5, e0=0.05)
        stepper = SplitStepper(potential, 0.05)
        psi = _gaussian(grid)
        t = 0.0
        for _ in range(int(round(pulse.duration / 0.05))):
            psi = step(psi, t, stepper, pulse)
            t = psi.t
        assert abs(norm2(psi) - 1.0) < 1e-6

    def test_y_parity_conserved(self):
        grid = make_grid(64, 64, 16.0, 16.0)
        potential = model_potential(MolecularModel(MolecularGeometry(2.2)), grid)
        pulse = make_pulse(omega=0.5, e0=0.05)
        stepper = SplitStepper(potential, 0.05)
        xx, yy = grid.mesh()
        values = parity_component(yy * np.exp(-(xx ** 2 + yy ** 2) / 4), mirror_y, -1)
        t = 0.0
        for _ in range(200):
            values = stepper.advance(values, t, pulse)
            t += 0.05
        even = parity_component(values, mirror_y, 1)
        assert np.max(np.abs(even)) < 1e-10

    def test_free_evolution_is_exact(self):
        grid = make_grid(64, 64, 20.0, 20.0)
        psi = _gaussian(grid, kx0=0.5)
        stepper = SplitStepper(_free(grid), 0.1)
        for _ in range(10):
            psi = step(psi, psi.t, stepper)
        k2 = np.sum([k ** 2 for k in grid.momentum().mesh()], axis=0)
        expected = to_momentum(_gaussian(grid, kx0=0.5)).values * np.exp(-0.5j * k2 * 1.0)
        assert np.max(np.abs(to_momentum(psi).values - expected)) < 1e-10

    def test_eigenstate_only_gains_its_phase(self):
        potential = _atom(make_grid(32, 32, 8.0, 8.0))
        e0, phi = _dense_ground_state(potential)
        values = _evolve(potential, phi, 0.002, 1.0)
        overlap = phi.grid.cell * np.vdot(phi.values, values)
        assert abs(overlap) == pytest.approx(1.0, abs=1e-8)
        assert abs(np.angle(overlap * np.exp(1j * e0 * 1.0))) < 1e-3

    def test_second_order_in_dt(self):
        grid = make_grid(32, 32, 8.0, 8.0)
        xx, yy = grid.mesh()
        potential = PotentialField(grid, 0.5 * (xx ** 2 + yy ** 2), mirror_symmetric=True)
        psi = _gaussian(grid, x0=1.0)
        reference = _evolve(potential, psi, 0.0125, 1.0)
        coarse = np.linalg.norm(_evolve(potential, psi, 0.1, 1.0) - reference)
        fine = np.linalg.norm(_evolve(potential, psi, 0.05, 1.0) - reference)
        assert 3.5 <= coarse / fine <= 4.6

    def test_imaginary_step_decays(self):
        grid = make_grid(32, 32, 8.0, 8.0)
        stepper = SplitStepper.imaginary(_free(grid), 0.1)
        psi = _gaussian(grid, kx0=2.0)
        after = step(psi, 0.0, stepper)
        assert norm2(after) < norm2(psi)
        assert stepper.real_dt == 0.0

    def test_grid_mismatch(self):
        stepper = SplitStepper(_free(make_grid(16, 16, 4.0, 4.0)), 0.1)
        with pytest.raises(ConfigurationError):
            step(_gaussian(make_grid(32, 32, 4.0, 4.0)), 0.0, stepper)


class TestBoundary:
    def test_mask_profile(self):
        grid = make_grid(64, 64, 20.0, 20.0)
        splitter = BoundarySplitter(grid, 15.0, 5.0)
        r = grid.radius()
        assert np.all(splitter.mask[r <= 10.0] == 1.0)
        assert np.all(splitter.mask[r >= 15.0] == 0.0)
        ramp = splitter.mask[(r > 10.0) & (r < 15.0)]
        assert np.all((ramp > 0.0) & (ramp < 1.0))

    def test_split_sums_to_input(self):
        grid = make_grid(32, 32, 10.0, 10.0)
        splitter = BoundarySplitter(grid, 8.0, 3.0)
        psi = _gaussian(grid, width=4.0)
        inner, outer = splitter.split(psi.values)
        assert np.allclose(inner + outer, psi.values)

    def test_bound_state_leaves_nothing_outside(self):
        grid = make_grid(64, 64, 16.0, 16.0)
        potential = _atom(grid)
        orbital = relax(potential, OrbitalSpec("ground", 0.5), tol=1e-10)
        acc = VolkovAccumulator(grid, make_pulse(omega=0.2, e0=0.05))
        split_and_accumulate(orbital.wavefunction, acc, BoundarySplitter(grid, 14.0, 3.0), 1.0)
        assert acc.norm2() < 1e-10

    def test_slow_flux_filter_separates_drift_momenta(self):
        grid = make_grid(128, 128, 32.0, 32.0)
        slow = SlowFluxFilter(grid, 0.5)
        moving = _gaussian(grid, kx0=3.0, width=4.0)
        resting = _gaussian(grid, width=8.0)
        assert np.allclose(slow.fast(moving.values), moving.values, atol=1e-10)
        assert norm2(Wavefunction(grid, slow.fast(resting.values))) < 1e-2
        assert np.all(slow.weight[np.sqrt(grid.momentum().fft_order_k2()) <= 0.25] == 0.0)

    def test_slow_part_outside_the_boundary_is_handed_over(self):
        grid = make_grid(64, 64, 16.0, 16.0)
        splitter = BoundarySplitter(grid, 10.0, 4.0)
        acc = VolkovAccumulator(grid, make_pulse(omega=0.5, e0=0.05))
        resting = _gaussian(grid, x0=13.0, width=1.0)
        kept, _ = split_and_accumulate(resting, acc, splitter, acc.reference_time, 1.0, False, SlowFluxFilter(grid, 0.5))
        assert np.all(kept.values[splitter.mask == 0.0] == 0.0)
        assert acc.norm2() > 0.0

    @pytest.mark.parametrize("radius,width", [(30.0, 5.0), (8.0, 0.0), (5.0, 6.0)])
    def test_invalid(self, radius, width):
        with pytest.raises(ConfigurationError):
            BoundarySplitter(make_grid(32, 32, 10.0, 10.0), radius, width)

    def test_time_resolution_warning_and_strict(self):
        grid = make_grid(64, 64, 20.0, 20.0)
        pulse = make_pulse(omega=0.5, e0=0.05)
        splitter = BoundarySplitter(grid, 10.0, 4.0)
        psi = _gaussian(grid, x0=12.0)
        acc = VolkovAccumulator(grid, pulse)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            inner, _ = split_and_accumulate(psi, acc, splitter, 1.0)
        assert any(issubclass(w.category, TimeResolutionWarning) for w in caught)
        assert norm2(inner) < 0.05
        with pytest.raises(TimeResolutionError):
            split_and_accumulate(psi, VolkovAccumulator(grid, pulse), splitter, 1.0, strict=True)


class TestVolkov:
    def test_field_free_accumulation_is_transform(self):
        grid = make_grid(64, 64, 20.0, 20.0)
        pulse = make_pulse(omega=0.5, e0=0.05)
        acc = VolkovAccumulator(grid, pulse)
        psi = _gaussian(grid, kx0=1.0)
        acc.accumulate(psi.values, pulse.duration)
        assert acc.norm2() == pytest.approx(1.0, rel=1e-12)
        assert np.max(np.abs(acc.momentum_field().values - to_momentum(psi).values)) < 1e-12

    def test_advance_reference_keeps_norm(self):
        grid = make_grid(32, 32, 10.0, 10.0)
        acc = VolkovAccumulator(grid, make_pulse(omega=0.5, e0=0.05))
        acc.accumulate(_gaussian(grid).values, acc.reference_time)
        before = acc.density().copy()
        acc.advance_reference(25.0)
        assert np.allclose(acc.density(), before)
        assert acc.reference_time == pytest.approx(make_pulse(omega=0.5, e0=0.05).duration + 25.0)

    def test_field_integrals(self):
        grid = make_grid(16, 16, 4.0, 4.0)
        pulse = make_pulse(omega=0.5, e0=0.05)
        acc = VolkovAccumulator(grid, pulse)
        a, alpha, beta = acc.field_integrals(pulse.duration)
        assert abs(a) < 1e-12
        # ∫ sin²(πt/T) cos(2πt/T) dt over one cycle is -T/4
        assert alpha == pytest.approx(-pulse.amplitude * pulse.duration / 4, rel=1e-6)
        assert beta > 0.0

    def test_free_packet_oracle(self):
        # without a core the asymptotic momentum density equals the initial one for a zero-area pulse
        grid = make_grid(256, 256, 40.0, 40.0)
        pulse = make_pulse(omega=0.5, e0=0.05)
        psi0 = _gaussian(grid, kx0=2.5)
        config = PropagationConfig(dt=0.05, boundary_radius=35.0, mask_width=10.0, split_every=10,
                                   drain_time=200.0, core_radius=10.0, core_width=4.0, progress_every=0)
        result = propagate(psi0, _free(grid), pulse, config)
        got = result.momentum_field().density()
        expected = to_momentum(psi0).density()
        error = np.sqrt(np.sum((got - expected) ** 2) / np.sum(expected ** 2))
        assert error < 1e-3
        assert result.ionized_fraction == pytest.approx(1.0, abs=1e-3)
        assert result.conservation_error < 1e-3


class TestPropagate:
    def test_config_validation(self):
        with pytest.raises(ConfigurationError):
            PropagationConfig(dt=0.0)
        with pytest.raises(ConfigurationError):
            PropagationConfig(core_radius=80.0)
        with pytest.raises(ConfigurationError):
            PropagationConfig(split_every=0)
        with pytest.raises(ConfigurationError):
            PropagationConfig(slow_cutoff=-0.1)

    def test_snapshots_and_bound_state(self):
        grid = make_grid(64, 64, 24.0, 24.0)
        potential = build_potential(None, [AtomSite((0.0, 0.0), 1.0, 1.0, 1.0, 0.8)], grid)
        pulse = make_pulse(omega=0.2, e0=0.01)
        config = PropagationConfig(dt=0.05, boundary_radius=22.0, mask_width=6.0, split_every=10,
                                   drain_time=20.0, core_radius=10.0, core_width=4.0, progress_every=0)
        orbital = relax(potential, OrbitalSpec("ground", 0.5), tol=1e-9)
        result = propagate(orbital, potential, pulse, config)
        assert [s.phase for s in result.snapshots] == [0.25, 0.5, 0.75, 1.0]
        assert result.bound_population > 0.9
        assert result.ionized_fraction < 0.1
        assert result.conservation_error < 1e-3

    def test_no_field_no_ionization(self):
        grid = make_grid(64, 64, 16.0, 16.0)
        potential = _atom(grid, charge=2.0, softening=1.0)
        orbital = relax(potential, OrbitalSpec("ground", 1.0), settings=RelaxSettings(dtau=0.01, tol=1e-12))
        config = PropagationConfig(dt=0.01, boundary_radius=14.0, mask_width=3.0, split_every=5,
                                   drain_time=10.0, core_radius=8.0, core_width=2.0, progress_every=0)
        result = propagate(orbital, potential, make_pulse(omega=0.2, e0=0.0), config)
        assert result.ionized_fraction < 1e-8
        assert result.initial_population == pytest.approx(1.0, abs=1e-6)
        assert result.bound_population == pytest.approx(1.0, abs=1e-6)

    def test_layout_warnings(self):
        grid = make_grid(64, 64, 16.0, 16.0)
        config = PropagationConfig(dt=0.05, boundary_radius=14.0, mask_width=3.0, split_every=20,
                                   core_radius=8.0, core_width=2.0)
        with pytest.warns(LiedWarning) as caught:
            problems = check_layout(grid, make_pulse(omega=0.06, e0=0.15), config, 0.05)
        assert len(problems) == 2 and len(caught) == 2
        assert "quiver" in problems[0]
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            calm = PropagationConfig(dt=0.05, boundary_radius=14.0, mask_width=3.0, split_every=5,
                                     core_radius=8.0, core_width=2.0)
            assert check_layout(grid, make_pulse(omega=0.5, e0=0.05), calm, 0.05) == []

    def test_grid_mismatch(self):
        grid = make_grid(32, 32, 10.0, 10.0)
        other = make_grid(64, 64, 10.0, 10.0)
        with pytest.raises(ConfigurationError):
            propagate(_gaussian(other), _free(grid), make_pulse(omega=0.5, e0=0.05),
                      PropagationConfig(boundary_radius=9.0, mask_width=3.0, core_radius=4.0, core_width=2.0))
