#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# lied_eigensolver.py - imaginary-time relaxation of SAE orbitals and potential calibration

from __future__ import annotations

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.fft
from scipy.ndimage import map_coordinates
from scipy.optimize import minimize
from scipy.stats import qmc

import lied_core
from lied_core import (
    CalibrationError,
    ConfigurationError,
    ConvergenceError,
    Wavefunction,
    _debug_log,
    _progress,
    inner,
    mirror_x,
    mirror_y,
    parity_component,
)
from lied_model import model_potential
from lied_propagator import SplitStepper

LOG = logging.getLogger("lied.eigensolver")

SYMMETRIC = 1
ANTISYMMETRIC = -1


# ============================================================================== Orbital types ==============================================================================
@dataclass(frozen=True)
class OrbitalSpec:
    """Target orbital: ionization energy plus parities under y -> -y (σ_h) and x -> -x.

    A parity of None leaves that mirror unconstrained. `rank` counts the deeper
    states of the same parity sector that lie below the target (0 = lowest).
    """
    label: str
    ionization_energy: float
    y_parity: Optional[int] = None
    x_parity: Optional[int] = None
    rank: int = 0

    def __post_init__(self):
        if not self.ionization_energy > 0:
            raise ConfigurationError(f"{self.label}: target ionization energy must be > 0")
        for name, p in (("y", self.y_parity), ("x", self.x_parity)):
            if p not in (None, SYMMETRIC, ANTISYMMETRIC):
                raise ConfigurationError(f"{self.label}: {name} parity must be +1, -1 or None, got {p}")
        if not (isinstance(self.rank, (int, np.integer)) and self.rank >= 0):
            raise ConfigurationError(f"{self.label}: sector rank must be a non-negative integer, got {self.rank!r}")

    @property
    def target_energy(self):
        return -self.ionization_energy

    @property
    def sector(self):
        return (self.y_parity, self.x_parity)


# 2D reductions: π -> odd in x, g/u -> parity under the σ_h mirror through the carbon.
# The σ_u sector holds the O-2s-like 2σ_u below the valence 3σ_u, hence rank 1 for HOMO-2.
HOMO = OrbitalSpec("HOMO", 0.5063, ANTISYMMETRIC, ANTISYMMETRIC)
HOMO_1 = OrbitalSpec("HOMO-1", 0.6466, SYMMETRIC, ANTISYMMETRIC)
HOMO_2 = OrbitalSpec("HOMO-2", 0.6645, ANTISYMMETRIC, SYMMETRIC, rank=1)
DEFAULT_TARGETS = (HOMO, HOMO_1, HOMO_2)
ORBITAL_LABELS = {spec.label: spec for spec in DEFAULT_TARGETS}


@dataclass
class Orbital:
    spec: OrbitalSpec
    wavefunction: Wavefunction
    energy: float
    residual: float
    parities: Tuple[Optional[int], Optional[int]] = (None, None)
    steps: int = 0
    history: List[float] = field(default_factory=list, repr=False)

    @property
    def label(self):
        return self.spec.label


@dataclass(frozen=True)
class RelaxSettings:
    dtau: float = 0.05
    tol: float = 1e-8
    check_every: int = 100
    max_steps: int = 200000
    max_refinements: int = 10

    def __post_init__(self):
        if not self.dtau > 0 or not self.tol > 0:
            raise ConfigurationError("imaginary time step and tolerance must be > 0")
        if self.max_refinements < 0:
            raise ConfigurationError(f"max_refinements must be >= 0, got {self.max_refinements}")


# ============================================================================== Operators ==============================================================================
def apply_hamiltonian(potential, values):
    """H₀ψ with the spectral kinetic operator"""
    k2 = potential.grid.momentum().fft_order_k2()
    kinetic = scipy.fft.ifft2(0.5 * k2 * scipy.fft.fft2(values, workers=lied_core.FFT_WORKERS),
                              workers=lied_core.FFT_WORKERS)
    return kinetic + potential.values * values


def energy(potential, psi):
    """Rayleigh quotient ⟨ψ|H₀|ψ⟩/⟨ψ|ψ⟩"""
    h_psi = apply_hamiltonian(potential, psi.values)
    return float(np.vdot(psi.values, h_psi).real / np.vdot(psi.values, psi.values).real)


def residual(potential, psi, e=None):
    """‖(H₀ - E)ψ‖ / ‖ψ‖"""
    e = energy(potential, psi) if e is None else e
    r = apply_hamiltonian(potential, psi.values) - e * psi.values
    return float(np.sqrt(np.vdot(r, r).real / np.vdot(psi.values, psi.values).real))


def project_parity(values, y_parity=None, x_parity=None):
    if y_parity is not None:
        values = parity_component(values, mirror_y, y_parity)
    if x_parity is not None:
        values = parity_component(values, mirror_x, x_parity)
    return values


def parity_of(values, mirror, threshold=0.99):
    """Measured parity (+1/-1) under a mirror, or None when mixed"""
    total = np.vdot(values, values).real
    if total == 0.0:
        return None
    overlap = np.vdot(values, mirror(values)).real / total
    if overlap > threshold:
        return SYMMETRIC
    if overlap < -threshold:
        return ANTISYMMETRIC
    return None


def _initial_guess(potential, spec):
    grid = potential.grid
    xx, yy = grid.mesh()
    width = 1.5 + 0.5 * potential.extent
    values = np.exp(-(xx ** 2 + yy ** 2) / (2.0 * width ** 2)).astype(np.complex128)
    for site in potential.sites:
        values += np.exp(-((xx - site.position[0]) ** 2 + (yy - site.position[1]) ** 2) / 2.0)
    if spec.x_parity == ANTISYMMETRIC:
        values *= xx
    if spec.y_parity == ANTISYMMETRIC:
        values *= yy
    return project_parity(values, spec.y_parity, spec.x_parity)


def _orthonormalize(values, lower, cell):
    for phi in lower:
        values = values - (cell * np.vdot(phi, values)) * phi
    n = np.sqrt(cell * np.vdot(values, values).real)
    if n == 0.0:
        raise ConvergenceError("iterate vanished after projection; the parity sector and lower orbitals exclude it")
    return values / n


# ============================================================================== Relaxation ==============================================================================
def relax(potential, spec, lower_orbitals=(), tol=None, settings=None, initial=None, label=None):
    """Lowest state in the target's parity sector orthogonal to `lower_orbitals`.

    Every accepted check block lowers the energy. A block that raises it is redone
    from the saved iterate with half the imaginary time step; a rise below `tol`, or
    one at the smallest step, ends the relaxation on the saved iterate.
    """
    settings = settings or RelaxSettings()
    tol = settings.tol if tol is None else tol
    if not tol > 0:
        raise ConfigurationError(f"relaxation tolerance must be > 0, got {tol}")
    grid = potential.grid
    cell = grid.cell
    lower = [o.wavefunction.values if hasattr(o, "wavefunction") else o.values for o in lower_orbitals]
    dtau = settings.dtau
    floor = settings.dtau / 2 ** settings.max_refinements
    stepper = SplitStepper.imaginary(potential, dtau)

    values = initial.values.copy() if initial is not None else _initial_guess(potential, spec)
    values = project_parity(values, spec.y_parity, spec.x_parity)
    values = _orthonormalize(values, lower, cell)
    previous = energy(potential, Wavefunction(grid, values))
    history = [previous]
    steps = 0
    while True:
        saved = values
        for _ in range(settings.check_every):
            values = stepper.advance(values, 0.0)
            values = project_parity(values, spec.y_parity, spec.x_parity)
            values = _orthonormalize(values, lower, cell)
        steps += settings.check_every
        current = energy(potential, Wavefunction(grid, values))
        rise = current > previous
        if rise and (current - previous < tol or dtau <= floor):
            values, current = saved, previous
            break
        if not rise:
            history.append(current)
            if previous - current < tol:
                break
        if steps >= settings.max_steps:
            res = residual(potential, Wavefunction(grid, values), current)
            raise ConvergenceError(
                f"{spec.label}: no convergence after {steps} imaginary-time steps "
                f"(E={current:.8f}, dE={current - previous:.2e}, residual={res:.3e})", residual=res, energy=current)
        if rise:
            dtau *= 0.5
            stepper = SplitStepper.imaginary(potential, dtau)
            _debug_log(f"{label or spec.label}: energy rose by {current - previous:.2e}, dtau -> {dtau:.3e}", LOG)
            values = saved
        else:
            previous = current

    psi = Wavefunction(grid, values)
    res = residual(potential, psi, current)
    parities = (parity_of(values, mirror_y), parity_of(values, mirror_x))
    _debug_log(f"{label or spec.label}: E={current:.8f} after {steps} steps, residual={res:.2e}, parities={parities}", LOG)
    return Orbital(spec, psi, current, res, parities, steps, history)


def _relax_ranked(potential, spec, lower=(), settings=None, warm=None):
    """Relax `spec` above the deeper states its rank asks for; returns the chain deepest first.

    Same-sector orbitals in `lower` count towards the rank, missing ones are relaxed
    here as auxiliary states. `warm` is a previous chain used as starting iterates.
    """
    lower = [o for o in lower if _same_sector(o.spec, spec)]
    depth = max(0, spec.rank - len(lower))
    specs = [replace(spec, label=f"{spec.label}[{n}]", rank=0) for n in range(depth)] + [spec]
    warm = list(warm) if warm is not None and len(warm) == len(specs) else [None] * len(specs)
    chain = []
    for s, seed in zip(specs, warm):
        start = seed.wavefunction if seed is not None else None
        chain.append(relax(potential, s, lower + chain, None, settings, start))
    return chain


def solve_orbitals(potential, specs=DEFAULT_TARGETS, settings=None, threads=1):
    """Relax every target; distinct parity sectors are independent, others are orthogonalised in order"""
    specs = list(specs)
    sectors = [s.sector for s in specs]
    independent = len(set(sectors)) == len(sectors) and all(None not in sec for sec in sectors)
    if independent and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_relax_ranked, potential, s, (), settings) for s in specs]
            return [f.result()[-1] for f in futures]
    orbitals = []
    for s in specs:
        orbitals.append(_relax_ranked(potential, s, orbitals, settings)[-1])
    return orbitals


def _same_sector(a, b):
    clash_y = None not in (a.y_parity, b.y_parity) and a.y_parity != b.y_parity
    clash_x = None not in (a.x_parity, b.x_parity) and a.x_parity != b.x_parity
    return not (clash_y or clash_x)


def check_nodal_structure(orbital):
    """Measured parities must match the requested ones; returns a list of mismatches"""
    problems = []
    measured_y, measured_x = orbital.parities
    if orbital.spec.y_parity is not None and measured_y != orbital.spec.y_parity:
        problems.append(f"{orbital.label}: y parity {measured_y} != {orbital.spec.y_parity}")
    if orbital.spec.x_parity is not None and measured_x != orbital.spec.x_parity:
        problems.append(f"{orbital.label}: x parity {measured_x} != {orbital.spec.x_parity}")
    return problems


def gram_matrix(orbitals):
    n = len(orbitals)
    g = np.zeros((n, n), dtype=np.complex128)
    for i, a in enumerate(orbitals):
        for j, b in enumerate(orbitals):
            g[i, j] = inner(a.wavefunction, b.wavefunction)
    return g


def rotate_orbital(orbital, angle, grid=None):
    """Carry an orbital rigidly to a molecular axis tilted by `angle` (cubic-spline resampling)"""
    source = orbital.wavefunction if hasattr(orbital, "wavefunction") else orbital
    grid = grid or source.grid
    if angle == 0.0 and grid == source.grid:
        return orbital
    xx, yy = grid.mesh()
    c, s = np.cos(angle), np.sin(angle)
    # the axis moves from ŷ to (sin θ, cos θ): sample the source at the inverse-rotated point
    xs = c * xx - s * yy
    ys = s * xx + c * yy
    col = (xs - source.grid.x[0]) / source.grid.dx
    row = (ys - source.grid.y[0]) / source.grid.dy
    coords = np.array([row.ravel(), col.ravel()])
    re = map_coordinates(source.values.real, coords, order=3, mode="constant", cval=0.0)
    im = map_coordinates(source.values.imag, coords, order=3, mode="constant", cval=0.0)
    rotated = Wavefunction(grid, (re + 1j * im).reshape(grid.shape), source.t).normalized()
    if hasattr(orbital, "wavefunction"):
        return Orbital(orbital.spec, rotated, orbital.energy, orbital.residual, (None, None), orbital.steps)
    return rotated


# ============================================================================== Calibration ==============================================================================
# Site parameters the CO₂ calibration varies by default, with their search bounds
DEFAULT_FREE_PARAMS = {
    "oxygen.sigma": (0.2, 4.0),
    "carbon.sigma": (0.2, 4.0),
    "oxygen.softening": (0.3, 3.0),
    "carbon.softening": (0.3, 3.0),
    "zinf_split": (0.0, 1.0),
    "carbon.z0": (2.0, 6.0),
    "oxygen.z0": (4.0, 8.0),
}


@dataclass
class CalibrationResult:
    params: Dict[str, float]
    energies: Dict[str, float]
    residuals: Dict[str, float]
    iterations: int
    evaluations: int
    orbitals: List[Orbital] = field(default_factory=list)

    @property
    def max_residual(self):
        return max(abs(v) for v in self.residuals.values())


@dataclass(frozen=True)
class CalibrationSettings:
    """Nelder–Mead controls; `starts` low-discrepancy points are scanned before the simplex search,
    which is restarted from its own result up to `restarts` times"""
    energy_tol: float = 5e-3
    max_iterations: int = 200
    xatol: float = 1e-4
    fatol: float = 1e-10
    threads: int = 1
    starts: int = 4
    restarts: int = 1

    def __post_init__(self):
        if self.starts < 0 or self.restarts < 0:
            raise ConfigurationError(f"starts and restarts must be >= 0, got {self.starts}, {self.restarts}")


def calibrate(targets, free_params, initial, make_potential, settings=None, relax_settings=None):
    """Nelder–Mead fit of free potential parameters to target ionization energies.

    free_params maps parameter name -> (lower, upper) bounds, `initial` holds the
    starting value of every free parameter, and make_potential(params) builds the
    PotentialField for a trial parameter set.
    """
    targets = list(targets)
    if not targets:
        raise ConfigurationError("calibration needs at least one target orbital")
    settings = settings or CalibrationSettings()
    names = list(free_params)
    missing = [n for n in names if n not in initial]
    if missing:
        raise ConfigurationError(f"no initial value for calibration parameters {missing}")
    bounds = [tuple(map(float, free_params[n])) for n in names]
    for n, (lo, hi) in zip(names, bounds):
        if not lo < hi or not lo <= initial[n] <= hi:
            raise ConfigurationError(f"calibration parameter '{n}' = {initial[n]} outside bounds ({lo}, {hi})")

    cache: Dict[Tuple[float, ...], Tuple[float, Optional[List[List[Orbital]]]]] = {}
    evaluations = [0]
    lock = threading.Lock()
    best = {"cost": float("inf"), "chains": None}

    def _solve(vector):
        key = tuple(float(v) for v in vector)
        if key in cache:
            return cache[key]
        params = dict(initial)
        params.update(zip(names, key))
        potential = make_potential(params)
        with lock:
            seeds = best["chains"] or [None] * len(targets)

        def _one(i):
            return _relax_ranked(potential, targets[i], (), relax_settings, seeds[i])

        try:
            if settings.threads > 1 and len(targets) > 1:
                with ThreadPoolExecutor(max_workers=settings.threads) as pool:
                    chains = list(pool.map(_one, range(len(targets))))
            else:
                chains = [_one(i) for i in range(len(targets))]
        except ConvergenceError as e:
            _debug_log(f"calibration trial {dict(zip(names, key))} rejected: {e}", LOG)
            cache[key] = (float("inf"), None)
            return cache[key]
        cost = sum((c[-1].energy - s.target_energy) ** 2 for c, s in zip(chains, targets))
        cache[key] = (cost, chains)
        evaluations[0] += 1
        with lock:
            if cost < best["cost"]:
                best["cost"], best["chains"] = cost, chains
        _debug_log(f"calibration trial {evaluations[0]}: {dict(zip(names, key))} cost={cost:.3e}", LOG)
        return cache[key]

    def _report(vector, iterations):
        chains = _solve(vector)[1]
        if chains is None:
            raise CalibrationError(f"relaxation failed at {dict(zip(names, vector))}", {}, dict(initial))
        orbitals = [c[-1] for c in chains]
        params = dict(initial)
        params.update(zip(names, (float(v) for v in vector)))
        energies = {o.label: o.energy for o in orbitals}
        residuals = {o.label: o.energy - s.target_energy for o, s in zip(orbitals, targets)}
        return CalibrationResult(params, energies, residuals, iterations, evaluations[0], orbitals)

    x0 = np.array([initial[n] for n in names], dtype=float)
    start = _report(x0, 0)
    if start.max_residual < settings.energy_tol:
        _progress("calibrate", f"initial parameters already within {settings.energy_tol:.1e} hartree", LOG)
        return _verified(start)
    if not names:
        raise CalibrationError("no free parameters and the targets are not met", start.residuals, start.params)

    if settings.starts:
        # unscrambled Halton: deterministic, and its first point (the lower corner) is skipped
        sampler = qmc.Halton(d=len(names), scramble=False)
        sampler.fast_forward(1)
        lows, highs = zip(*bounds)
        for point in qmc.scale(sampler.random(settings.starts), lows, highs):
            if _solve(point)[0] < _solve(x0)[0]:
                x0 = point
        _progress("calibrate", f"best of {settings.starts + 1} starts: cost={_solve(x0)[0]:.3e}", LOG)

    _progress("calibrate", f"Nelder-Mead over {names}", LOG)
    iterations = 0
    for attempt in range(settings.restarts + 1):
        outcome = minimize(lambda v: _solve(v)[0], x0, method="Nelder-Mead", bounds=bounds,
                           options={"maxiter": settings.max_iterations, "xatol": settings.xatol,
                                    "fatol": settings.fatol, "adaptive": len(names) > 2})
        iterations += int(outcome.nit)
        x0 = outcome.x
        result = _report(x0, iterations)
        if result.max_residual < settings.energy_tol:
            break
        _debug_log(f"calibration pass {attempt + 1}: max residual {result.max_residual:.3e}", LOG)
    if result.max_residual >= settings.energy_tol:
        raise CalibrationError(
            f"calibration stopped after {result.iterations} iterations with residuals "
            + ", ".join(f"{k}={v:+.3e}" for k, v in result.residuals.items())
            + f" hartree (tolerance {settings.energy_tol:.1e})", result.residuals, result.params)
    _progress("calibrate", "✅ " + ", ".join(f"{k}: E={v:.5f}" for k, v in result.energies.items()), LOG)
    return _verified(result)


def _verified(result):
    problems = [p for o in result.orbitals for p in check_nodal_structure(o)]
    if problems:
        raise CalibrationError("nodal structure check failed: " + "; ".join(problems), result.residuals, result.params)
    return result


def calibrate_model(model, grid, targets=DEFAULT_TARGETS, free_params=None, settings=None, relax_settings=None):
    """Calibrate the CO₂ site parameters of a MolecularModel on `grid`"""
    free_params = free_params if free_params is not None else DEFAULT_FREE_PARAMS
    initial = model.params()
    result = calibrate(targets, free_params, initial,
                       lambda params: model_potential(model.with_params(params), grid), settings, relax_settings)
    return model.with_params({k: result.params[k] for k in free_params}), result
