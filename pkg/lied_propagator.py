#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# lied_propagator.py - split-operator TDSE stepping with masked Volkov continuation of the outgoing flux

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.fft
from scipy.integrate import cumulative_trapezoid

import lied_core
from lied_core import (
    ConfigurationError,
    LiedWarning,
    MomentumField,
    NumericalFailureError,
    TimeResolutionError,
    TimeResolutionWarning,
    Wavefunction,
    _debug_log,
    _origin_phase,
    _progress,
    fft_forward,
    inner,
    norm2,
)

LOG = logging.getLogger("lied.propagator")


# ============================================================================== Stepper ==============================================================================
class SplitStepper:
    """Symmetric V/2 · T · V/2 factorisation of exp(-i H dt).

    A complex `dt` is accepted: dt = -iτ turns the same code path into an
    imaginary-time relaxation step.
    """

    def __init__(self, potential, dt):
        self.grid = potential.grid
        self.potential = potential
        self.dt = complex(dt)
        k2 = self.grid.momentum().fft_order_k2()
        self.kinetic_phase = np.exp(-0.5j * self.dt * k2)
        self.static_half = np.exp(-0.5j * self.dt * potential.values)
        self._x = self.grid.x

    @classmethod
    def imaginary(cls, potential, dtau):
        return cls(potential, -1j * dtau)

    @property
    def real_dt(self):
        return self.dt.real

    def potential_half(self, field_x):
        if field_x == 0.0:
            return self.static_half
        return self.static_half * np.exp(-0.5j * self.dt * field_x * self._x)[np.newaxis, :]

    def advance(self, values, t, pulse=None):
        """Advance raw grid values from t to t + dt; the field is taken at mid-step"""
        field_x = 0.0 if pulse is None else float(pulse.field_x(t + 0.5 * self.dt.real))
        half = self.potential_half(field_x)
        values = values * half
        spectrum = scipy.fft.fft2(values, workers=lied_core.FFT_WORKERS, overwrite_x=True)
        spectrum *= self.kinetic_phase
        values = scipy.fft.ifft2(spectrum, workers=lied_core.FFT_WORKERS, overwrite_x=True)
        values *= half
        return values


def step(psi, t, stepper, pulse=None):
    """One split-operator step of a Wavefunction"""
    if psi.grid != stepper.grid:
        raise ConfigurationError("wavefunction grid does not match the stepper grid")
    return Wavefunction(psi.grid, stepper.advance(psi.values, t, pulse), t + stepper.real_dt)


# ============================================================================== Boundary ==============================================================================
class BoundarySplitter:
    """Radial mask M(r): 1 inside R_b - w, 0 beyond R_b, cos² ramp in between"""

    def __init__(self, grid, radius, width):
        if not width > 0 or not radius > width:
            raise ConfigurationError(f"mask needs 0 < width < radius, got radius={radius}, width={width}")
        if radius > min(grid.lx, grid.ly):
            raise ConfigurationError(
                f"boundary radius {radius} bohr exceeds the grid half-extent {min(grid.lx, grid.ly)} bohr")
        self.grid = grid
        self.radius = float(radius)
        self.width = float(width)
        r = grid.radius()
        ramp = np.clip((r - (self.radius - self.width)) / self.width, 0.0, 1.0)
        self.mask = np.where(ramp >= 1.0, 0.0, np.cos(0.5 * np.pi * ramp) ** 2)

    def split(self, values):
        return self.mask * values, (1.0 - self.mask) * values


class SlowFluxFilter:
    """Drift-momentum high-pass W(k): sin² ramp from cutoff/2 up to cutoff.

    Only meaningful once the field is off, when grid momentum is drift momentum.
    """

    def __init__(self, grid, cutoff):
        self.grid = grid
        self.cutoff = float(cutoff)
        k = np.sqrt(grid.momentum().fft_order_k2())
        ramp = np.clip((k - 0.5 * self.cutoff) / (0.5 * self.cutoff), 0.0, 1.0)
        self.weight = np.sin(0.5 * np.pi * ramp) ** 2

    def fast(self, values):
        spectrum = scipy.fft.fft2(values, workers=lied_core.FFT_WORKERS)
        return scipy.fft.ifft2(self.weight * spectrum, workers=lied_core.FFT_WORKERS)

    def retained(self, outer, region):
        """Slow part of `outer` restricted to `region` (boolean array), to stay on the grid"""
        return np.where(region, outer - self.fast(outer), 0.0)


# ============================================================================== Volkov accumulator ==============================================================================
class VolkovAccumulator:
    """Asymptotic momentum amplitude b(k) assembled from split-off outer parts.

    Each outer part split at t_s is projected on length-gauge Volkov states and
    carried to the common reference time (the end of the pulse):
        b(k) += φ̃(k + A(t_s)) · exp(-i/2 ∫_{t_s}^{T_ref} (k + A)² dt′)
    Amplitudes are stored in unshifted FFT order.
    """

    def __init__(self, grid, pulse, reference_time=None, table_step=None):
        self.grid = grid
        self.kgrid = grid.momentum()
        self.pulse = pulse
        self.reference_time = float(pulse.duration if reference_time is None else reference_time)
        self.amplitude = np.zeros(grid.shape, dtype=np.complex128)
        self.splits = 0
        self.collected = 0.0
        duration = pulse.duration
        table_step = table_step or 2.5e-3
        n = max(2, int(np.ceil(duration / table_step)))
        self.times = np.linspace(0.0, duration, n + 1)
        a = pulse.vector_potential(self.times)
        self.vector_potential_table = a
        self.alpha = cumulative_trapezoid(a, self.times, initial=0.0)
        self.beta = cumulative_trapezoid(a * a, self.times, initial=0.0)
        self._kx, self._ky = self.kgrid.fft_order_axes()
        self._k2 = self.kgrid.fft_order_k2()

    def field_integrals(self, t):
        """(A(t), ∫₀ᵗ A dt′, ∫₀ᵗ A² dt′) with A = 0 outside the pulse"""
        tc = min(max(float(t), 0.0), self.times[-1])
        return (float(self.pulse.vector_potential(t)),
                float(np.interp(tc, self.times, self.alpha)),
                float(np.interp(tc, self.times, self.beta)))

    def volkov_phase(self, t):
        _, alpha_s, beta_s = self.field_integrals(t)
        _, alpha_r, beta_r = self.field_integrals(self.reference_time)
        action = (self._k2 * (self.reference_time - t)
                  + 2.0 * self._kx[np.newaxis, :] * (alpha_r - alpha_s)
                  + (beta_r - beta_s))
        return np.exp(-0.5j * action)

    def accumulate(self, outer_values, t):
        a_s = float(self.pulse.vector_potential(t))
        shifted = outer_values
        if a_s != 0.0:
            # gauge bridge: canonical momentum on the grid is k + A(t_s)
            shifted = outer_values * np.exp(-1j * a_s * self.grid.x)[np.newaxis, :]
        self.amplitude += fft_forward(shifted, self.grid) * self.volkov_phase(t)
        self.splits += 1
        self.collected += float(self.grid.cell * np.vdot(outer_values, outer_values).real)

    def advance_reference(self, delta):
        """Free evolution of the asymptotic packet by `delta`; only phases change"""
        self.amplitude *= np.exp(-0.5j * self._k2 * delta)
        self.reference_time += delta

    def norm2(self):
        return float(self.kgrid.cell * np.vdot(self.amplitude, self.amplitude).real)

    def momentum_field(self):
        centred = scipy.fft.fftshift(self.amplitude) * _origin_phase(self.grid)
        return MomentumField(self.kgrid, centred, self.reference_time, self.grid)

    def density(self):
        return np.abs(scipy.fft.fftshift(self.amplitude)) ** 2


def split_and_accumulate(psi, acc, splitter, t, max_outer_fraction=0.2, strict=False, slow_filter=None):
    """Keep M·ψ on the grid and hand (1 - M)·ψ to the Volkov accumulator.

    With a `slow_filter` the slow part of (1 - M)·ψ inside the boundary radius stays on the grid.
    """
    kept, outer = splitter.split(psi.values)
    if slow_filter is not None:
        held = slow_filter.retained(outer, splitter.mask > 0.0)
        kept, outer = kept + held, outer - held
    outer_norm = float(psi.grid.cell * np.vdot(outer, outer).real)
    if outer_norm > 0.0:
        total = norm2(psi)
        if total > 0.0 and outer_norm > max_outer_fraction * total:
            message = (f"outer part holds {outer_norm / total:.3f} of the norm at t={t:.3f} a.u. "
                       f"(limit {max_outer_fraction}); split more often")
            if strict:
                raise TimeResolutionError(message)
            warnings.warn(message, TimeResolutionWarning)
        acc.accumulate(outer, t)
    return Wavefunction(psi.grid, kept, t), acc


# ============================================================================== Propagation ==============================================================================
@dataclass(frozen=True)
class PropagationConfig:
    dt: float = 0.02
    boundary_radius: float = 85.0
    mask_width: float = 15.0
    split_every: int = 20
    drain_time: float = 500.0
    drain_threshold: float = 1e-4
    core_radius: float = 30.0
    core_width: float = 10.0
    slow_cutoff: float = 0.5
    snapshot_phases: Tuple[float, ...] = (0.25, 0.5, 0.75, 1.0)
    conservation_tolerance: float = 1e-3
    max_outer_fraction: float = 0.2
    strict: bool = False
    progress_every: int = 2000

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError(f"time step must be > 0, got {self.dt}")
        if self.split_every < 1:
            raise ConfigurationError(f"split cadence must be >= 1, got {self.split_every}")
        if self.drain_time < 0:
            raise ConfigurationError(f"drain time must be >= 0, got {self.drain_time}")
        if self.slow_cutoff < 0:
            raise ConfigurationError(f"slow-flux cutoff must be >= 0 (0 disables it), got {self.slow_cutoff}")
        if self.core_radius >= self.boundary_radius - self.mask_width:
            raise ConfigurationError("core radius must lie inside the boundary mask plateau")


@dataclass
class Snapshot:
    phase: float
    t: float
    density: np.ndarray


@dataclass
class PropagationResult:
    accumulator: VolkovAccumulator
    inner: Wavefunction
    snapshots: List[Snapshot] = field(default_factory=list)
    initial_norm: float = 1.0
    steps: int = 0
    final_time: float = 0.0
    elapsed: float = 0.0
    initial_population: float = 1.0

    @property
    def ionized_fraction(self):
        return self.accumulator.norm2()

    @property
    def bound_population(self):
        return norm2(self.inner)

    @property
    def conservation_error(self):
        return abs(self.bound_population + self.ionized_fraction - self.initial_norm)

    def momentum_field(self):
        return self.accumulator.momentum_field()


def check_layout(grid, pulse, config, dt):
    """Warn when the boundary mask sits inside the quiver excursion or outgoing flux can reach the box edge"""
    problems = []
    plateau = config.boundary_radius - config.mask_width
    quiver = pulse.e0 / pulse.omega ** 2 if pulse.omega > 0 else 0.0
    if quiver > plateau:
        problems.append(f"quiver amplitude E0/ω² = {quiver:.1f} bohr exceeds the mask plateau {plateau:.1f} bohr; "
                        "returning electrons get split off early")
    half = min(grid.lx, grid.ly)
    kmax = np.pi / min(grid.dx, grid.dy)
    reach = config.boundary_radius + kmax * config.split_every * dt
    if reach >= half:
        problems.append(f"flux at the grid's largest momentum travels to r = {reach:.1f} bohr between splits, "
                        f"past the box half-extent {half:.1f}; enlarge the box or split more often")
    for message in problems:
        warnings.warn(message, LiedWarning)
    return problems


def propagate(orbital, potential, pulse, config=None, label="propagate"):
    """Run the pulse plus a field-free drain and return the asymptotic momentum amplitude.

    At the end the part of the wavefunction still overlapping the initial orbital stays
    bound; the rest is split at the core radius and the outer piece joins the accumulator.
    """
    config = config or PropagationConfig()
    psi = orbital.wavefunction if hasattr(orbital, "wavefunction") else orbital
    grid = potential.grid
    if psi.grid != grid:
        raise ConfigurationError(f"orbital grid {psi.grid.describe()} does not match the propagation grid {grid.describe()}")

    splitter = BoundarySplitter(grid, config.boundary_radius, config.mask_width)
    core = BoundarySplitter(grid, config.core_radius, config.core_width)
    slow = SlowFluxFilter(grid, config.slow_cutoff) if config.slow_cutoff > 0 else None
    n_pulse = max(1, int(round(pulse.duration / config.dt)))
    dt = pulse.duration / n_pulse
    check_layout(grid, pulse, config, dt)
    stepper = SplitStepper(potential, dt)
    acc = VolkovAccumulator(grid, pulse, table_step=dt / 8.0)

    snapshot_steps = {}
    for phase in config.snapshot_phases:
        n = int(round(phase * pulse.cycle / dt))
        if 0 <= n <= n_pulse:
            snapshot_steps.setdefault(n, phase)
    snapshots = []
    values = psi.values.copy()
    initial_norm = norm2(psi)
    started = time.time()

    def _split(values, t, slow_filter=None):
        kept, _ = split_and_accumulate(Wavefunction(grid, values, t), acc, splitter, t,
                                       config.max_outer_fraction, config.strict, slow_filter)
        return kept.values

    _progress(label, f"🚀 {n_pulse} pulse steps of {dt:.4g} a.u. on {grid.nx}x{grid.ny}, "
                     f"E0={pulse.e0:.4g}, omega={pulse.omega:.4g}, envelope={pulse.envelope}", LOG)
    if 0 in snapshot_steps:
        snapshots.append(Snapshot(snapshot_steps[0], 0.0, np.abs(values) ** 2))
    t = 0.0
    for n in range(1, n_pulse + 1):
        values = stepper.advance(values, t, pulse)
        t = n * dt
        if n % config.split_every == 0 or n == n_pulse:
            values = _split(values, t)
        if n in snapshot_steps:
            snapshots.append(Snapshot(snapshot_steps[n], t, np.abs(values) ** 2))
        if config.progress_every and n % config.progress_every == 0:
            _progress(label, f"step {n}/{n_pulse}, t={t:.2f} a.u., collected={acc.collected:.3e}, "
                             f"{time.time() - started:.1f}s", LOG)

    # field-free drain until the fast continuum has left the core region; A = 0 from here on
    n_drain = int(round(config.drain_time / dt))
    drained = 0
    for m in range(1, n_drain + 1):
        values = stepper.advance(values, t, None)
        t = (n_pulse + m) * dt
        drained = m
        if m % config.split_every == 0:
            values = _split(values, t, slow)
            outside = (1.0 - core.mask) * values
            if slow is not None:
                outside = slow.fast(outside)
            continuum = float(grid.cell * np.vdot(outside, outside).real)
            if continuum < config.drain_threshold:
                _debug_log(f"Drain stopped at t={t:.2f}: continuum norm {continuum:.3e}", LOG)
                break

    c0 = inner(psi, Wavefunction(grid, values, t)) / initial_norm if initial_norm > 0.0 else 0.0
    rest = values - c0 * psi.values
    bound, residual = core.split(rest)
    acc.accumulate(residual, t)
    result = PropagationResult(acc, Wavefunction(grid, c0 * psi.values + bound, t), snapshots, initial_norm,
                               n_pulse + drained, t, time.time() - started, abs(c0) ** 2 * initial_norm)
    _progress(label, f"✅ done in {result.elapsed:.1f}s: ionized={result.ionized_fraction:.4e}, "
                     f"bound={result.bound_population:.6f}, splits={acc.splits}", LOG)
    if result.conservation_error > config.conservation_tolerance:
        raise NumericalFailureError(
            f"probability conservation breached: bound {result.bound_population:.6f} + ionized "
            f"{result.ionized_fraction:.6f} differs from the initial norm {initial_norm:.6f} by "
            f"{result.conservation_error:.2e} (tolerance {config.conservation_tolerance:.1e})")
    return result
