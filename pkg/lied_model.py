#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# lied_model.py - triatomic geometry, soft-Coulomb effective-charge potential and laser pulses

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from lied_core import ConfigurationError, Grid2D, Units, _debug_log, mirror_x, mirror_y

LOG = logging.getLogger("lied.model")

SINGLE_CYCLE = "single-cycle"
SINE_SQUARE = "sine-square"
ENVELOPES = (SINGLE_CYCLE, SINE_SQUARE)

# FWHM of the sin⁴ intensity envelope as a fraction of its total support
SIN4_FWHM_FRACTION = 1.0 - 2.0 * np.arcsin(2.0 ** -0.25) / np.pi


# ============================================================================== Sites ==============================================================================
@dataclass(frozen=True)
class AtomSite:
    """One soft-Coulomb centre with an r-dependent effective charge"""
    position: Tuple[float, float]
    z0: float
    zinf: float
    sigma: float
    softening: float
    label: str = ""

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigurationError(f"site {self.label or self.position}: sigma must be > 0, got {self.sigma}")
        if not self.softening > 0:
            raise ConfigurationError(f"site {self.label or self.position}: softening must be > 0, got {self.softening}")
        if not (self.z0 >= self.zinf >= 0):
            raise ConfigurationError(
                f"site {self.label or self.position}: need Z0 >= Zinf >= 0, got Z0={self.z0}, Zinf={self.zinf}")


@dataclass(frozen=True)
class SiteParameters:
    """Per-element potential parameters (positions come from the geometry)"""
    z0: float
    zinf: float
    sigma: float = 1.0
    softening: float = 0.8

    def at(self, position, label=""):
        return AtomSite((float(position[0]), float(position[1])), self.z0, self.zinf, self.sigma, self.softening, label)


DEFAULT_CARBON = SiteParameters(z0=4.0, zinf=0.2, sigma=1.0, softening=0.8)
DEFAULT_OXYGEN = SiteParameters(z0=6.0, zinf=0.4, sigma=1.0, softening=0.8)


def effective_charge(site, x, y=None):
    """Z(r) = Z∞ + (Z⁰ - Z∞)·exp(-|r - ρ|²/σ²); accepts a 2-vector or coordinate arrays"""
    if y is None:
        x, y = x
    d2 = (np.asarray(x) - site.position[0]) ** 2 + (np.asarray(y) - site.position[1]) ** 2
    return site.zinf + (site.z0 - site.zinf) * np.exp(-d2 / site.sigma ** 2)


def site_potential(site, x, y):
    d2 = (x - site.position[0]) ** 2 + (y - site.position[1]) ** 2
    charge = site.zinf + (site.z0 - site.zinf) * np.exp(-d2 / site.sigma ** 2)
    return -charge / np.sqrt(d2 + site.softening ** 2)


# ============================================================================== Geometry ==============================================================================
@dataclass(frozen=True)
class MolecularGeometry:
    """Linear symmetric triatomic: carbon at the origin, oxygens at ±R along the axis.

    theta is the polar angle of the molecular axis measured from the laboratory y-axis.
    """
    bond_length: float
    theta: float = 0.0

    def __post_init__(self):
        if not self.bond_length > 0:
            raise ConfigurationError(f"bond length must be > 0, got {self.bond_length}")

    @property
    def axis(self):
        return np.array([np.sin(self.theta), np.cos(self.theta)])

    def positions(self):
        ox, oy = self.bond_length * np.sin(self.theta), self.bond_length * np.cos(self.theta)
        return [(0.0, 0.0), (ox, oy), (-ox, -oy)]

    @property
    def mirror_symmetric(self):
        return self.theta == 0.0


@dataclass(frozen=True)
class MolecularModel:
    geometry: MolecularGeometry
    carbon: SiteParameters = DEFAULT_CARBON
    oxygen: SiteParameters = DEFAULT_OXYGEN

    def sites(self):
        c, o1, o2 = self.geometry.positions()
        return [self.carbon.at(c, "C"), self.oxygen.at(o1, "O1"), self.oxygen.at(o2, "O2")]

    def params(self):
        """Flat parameter dictionary used by calibration"""
        return {
            "carbon.z0": self.carbon.z0, "carbon.sigma": self.carbon.sigma, "carbon.softening": self.carbon.softening,
            "oxygen.z0": self.oxygen.z0, "oxygen.sigma": self.oxygen.sigma, "oxygen.softening": self.oxygen.softening,
            "zinf_split": self.carbon.zinf,
        }

    def with_params(self, params):
        """Copy with calibration parameters applied; zinf_split is carbon's Z∞, oxygens share 1 - split"""
        carbon, oxygen = self.carbon, self.oxygen
        for name, value in params.items():
            value = float(value)
            if name == "zinf_split":
                carbon = replace(carbon, zinf=value)
                oxygen = replace(oxygen, zinf=0.5 * (1.0 - value))
                continue
            element, _, attr = name.partition(".")
            if element not in ("carbon", "oxygen") or attr not in ("z0", "zinf", "sigma", "softening"):
                raise ConfigurationError(f"unknown site parameter '{name}'")
            if element == "carbon":
                carbon = replace(carbon, **{attr: value})
            else:
                oxygen = replace(oxygen, **{attr: value})
        return replace(self, carbon=carbon, oxygen=oxygen)

    def with_geometry(self, geometry):
        return replace(self, geometry=geometry)


# ============================================================================== Potential ==============================================================================
@dataclass
class PotentialField:
    """Real potential on a Grid2D; `sites` records the centres it was built from"""
    grid: Grid2D
    values: np.ndarray
    sites: Tuple[AtomSite, ...] = field(default_factory=tuple)
    mirror_symmetric: bool = False

    @property
    def extent(self):
        if not self.sites:
            return 0.0
        return max(float(np.hypot(*s.position)) for s in self.sites)


def build_potential(geom, sites, grid, symmetrize=None):
    """Soft-Coulomb potential Σ -Z_α(r)/sqrt(|r - ρ_α|² + a_α²) sampled on the grid.

    `geom` may be None for arbitrary site lists. For a mirror-symmetric geometry the
    field is symmetrised over y -> -y and x -> -x so the invariance holds bit for bit.
    """
    sites = tuple(sites)
    if not sites:
        raise ConfigurationError("at least one site is required to build a potential")
    for site in sites:
        if not grid.contains(site.position):
            raise ConfigurationError(
                f"site {site.label or site.position} at {site.position} lies outside the grid "
                f"[-{grid.lx}, {grid.lx}) x [-{grid.ly}, {grid.ly})")
    xx, yy = grid.mesh()
    values = np.zeros(grid.shape)
    for site in sites:
        values += site_potential(site, xx, yy)
    if symmetrize is None:
        symmetrize = geom is not None and geom.mirror_symmetric
    if symmetrize:
        values = 0.5 * (values + mirror_y(values))
        values = 0.5 * (values + mirror_x(values))
    _debug_log(f"Potential on {grid.nx}x{grid.ny}: min={values.min():.6g}, sites={len(sites)}", LOG)
    return PotentialField(grid, values, sites, bool(symmetrize))


def model_potential(model, grid):
    return build_potential(model.geometry, model.sites(), grid)


# ============================================================================== Pulses ==============================================================================
@dataclass(frozen=True)
class PulseSpec:
    """x-polarised pulse built from A(t) = A₀ sin²(πt/T) cos(ω t + φ) on [0, T].

    E₀ is the peak |𝓔(t)|: the amplitude A₀ is scaled so that max_t |𝓔| = E₀.
    """
    omega: float
    e0: float
    envelope: str = SINGLE_CYCLE
    fwhm: Optional[float] = None
    cep: float = 0.0

    def __post_init__(self):
        if not self.omega > 0:
            raise ConfigurationError(f"carrier frequency must be > 0, got {self.omega}")
        if self.e0 < 0:
            raise ConfigurationError(f"peak field must be >= 0, got {self.e0}")
        if self.envelope not in ENVELOPES:
            raise ConfigurationError(f"envelope must be one of {ENVELOPES}, got '{self.envelope}'")
        if self.envelope == SINE_SQUARE and not (self.fwhm and self.fwhm > 0):
            raise ConfigurationError("a sine-square pulse needs a positive intensity FWHM")

    @property
    def duration(self):
        if self.envelope == SINGLE_CYCLE:
            return 2.0 * np.pi / self.omega
        return self.fwhm / SIN4_FWHM_FRACTION

    @property
    def cycle(self):
        return 2.0 * np.pi / self.omega

    @property
    def amplitude(self):
        """A₀ giving a peak field of exactly E₀"""
        if self.e0 == 0.0:
            return 0.0
        return self.e0 / _unit_peak_field(self.omega, self.duration, self.cep)

    def vector_potential(self, t):
        t = np.asarray(t, dtype=float)
        T = self.duration
        inside = (t >= 0.0) & (t <= T)
        a = self.amplitude * np.sin(np.pi * t / T) ** 2 * np.cos(self.omega * t + self.cep)
        return np.where(inside, a, 0.0)

    def field_x(self, t):
        t = np.asarray(t, dtype=float)
        e = self.amplitude * _unit_field(t, self.omega, self.duration, self.cep)
        return np.where((t >= 0.0) & (t <= self.duration), e, 0.0)

    def describe(self):
        return {"omega": self.omega, "e0": self.e0, "envelope": self.envelope, "fwhm": self.fwhm,
                "cep": self.cep, "duration": self.duration}


def _unit_field(t, omega, T, cep):
    # -dA/dt for A = sin²(πt/T)·cos(ωt + φ)
    phase = omega * t + cep
    return -((np.pi / T) * np.sin(2.0 * np.pi * t / T) * np.cos(phase)
             - omega * np.sin(np.pi * t / T) ** 2 * np.sin(phase))


_PEAK_CACHE: Dict[Tuple[float, float, float], float] = {}


def _unit_peak_field(omega, T, cep):
    key = (float(omega), float(T), float(cep))
    if key not in _PEAK_CACHE:
        samples = max(20001, int(200 * T * omega / (2 * np.pi)) + 1)
        t = np.linspace(0.0, T, samples)
        e = np.abs(_unit_field(t, omega, T, cep))
        i = int(np.argmax(e))
        h = T / (samples - 1)
        lo, hi = max(0.0, t[i] - h), min(T, t[i] + h)
        res = minimize_scalar(lambda s: -abs(_unit_field(s, omega, T, cep)), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        _PEAK_CACHE[key] = max(float(e[i]), float(-res.fun))
    return _PEAK_CACHE[key]


def field_at(pulse, t):
    """Field vector 𝓔(t); zero outside the pulse support"""
    return np.array([float(pulse.field_x(t)), 0.0])


def make_pulse(omega=None, e0=None, envelope=SINGLE_CYCLE, fwhm=None, cep=0.0, wavelength_nm=None, intensity_wcm2=None):
    """Build a PulseSpec from laboratory or atomic-unit inputs (exactly one of each pair)"""
    if (omega is None) == (wavelength_nm is None):
        raise ConfigurationError("give exactly one of omega or wavelength_nm")
    if (e0 is None) == (intensity_wcm2 is None):
        raise ConfigurationError("give exactly one of e0 or intensity_wcm2")
    if omega is None:
        omega = Units.wavelength_nm_to_omega(wavelength_nm)
    if e0 is None:
        e0 = Units.intensity_to_field(intensity_wcm2)
    return PulseSpec(float(omega), float(e0), envelope, fwhm, float(cep))


def hamiltonian_potential(potential, pulse, t):
    """Instantaneous V_C(r) + r·𝓔(t) on the grid (length gauge, x polarisation)"""
    xx, _ = potential.grid.mesh()
    return potential.values + xx * float(pulse.field_x(t))
