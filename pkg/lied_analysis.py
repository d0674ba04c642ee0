#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# lied_analysis.py - diffraction patterns, fringe models, bond-length inversion and ensemble averaging

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Tuple

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.ndimage import uniform_filter1d
from scipy.signal import find_peaks

from lied_core import (
    AmbiguousPatternError,
    ConfigurationError,
    EmptyResultError,
    InsufficientDataError,
    MemberFailureError,
    MomentumGrid,
    Units,
    _debug_log,
    _progress,
)

LOG = logging.getLogger("lied.analysis")

RADIAL = "radial"
AXIAL = "axial"
TWO_SOURCE = "two-source"
THREE_SOURCE = "three-source"
MINIMA = "minima"
MAXIMA = "maxima"


# ============================================================================== Maps and patterns ==============================================================================
@dataclass
class MomentumMap:
    """Photo-electron momentum density |Φ̃(k)|² on a centred MomentumGrid"""
    grid: MomentumGrid
    density: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.density = np.asarray(self.density, dtype=float)
        if self.density.shape != self.grid.shape:
            raise ConfigurationError(f"momentum map shape {self.density.shape} does not match grid {self.grid.shape}")
        if np.any(self.density < 0):
            raise ConfigurationError("momentum densities must be non-negative")

    @classmethod
    def from_field(cls, momentum_field):
        return cls(momentum_field.grid, momentum_field.density(), momentum_field.t)

    @classmethod
    def empty(cls, grid):
        return cls(grid, np.zeros(grid.shape))

    def total(self):
        """Integrated density, the ionized fraction"""
        return float(self.grid.cell * self.density.sum())

    def scaled(self, weight):
        return MomentumMap(self.grid, weight * self.density, self.t)


@dataclass(frozen=True)
class GammaSpec:
    """Integration domain: |k| > k_min (radial) or |k_x| > k_min (axial)"""
    mode: str = RADIAL
    k_min: float = 3.15

    def __post_init__(self):
        if self.mode not in (RADIAL, AXIAL):
            raise ConfigurationError(f"gamma mode must be '{RADIAL}' or '{AXIAL}', got '{self.mode}'")
        if not self.k_min > 0:
            raise ConfigurationError(f"gamma k_min must be > 0, got {self.k_min}")

    def mask(self, kgrid):
        kx, ky = kgrid.mesh()
        if self.mode == RADIAL:
            return np.hypot(kx, ky) > self.k_min
        return np.abs(kx) > self.k_min


@dataclass
class Pattern:
    ky: np.ndarray
    values: np.ndarray
    normalized: bool = False
    label: str = ""

    @property
    def dky(self):
        return float(self.ky[1] - self.ky[0]) if len(self.ky) > 1 else 0.0

    def normalize(self):
        """Copy scaled to max = 1; an all-zero pattern is returned unscaled"""
        peak = float(np.max(self.values)) if len(self.values) else 0.0
        if peak <= 0.0:
            return replace(self, values=self.values.copy())
        return replace(self, values=self.values / peak, normalized=True)

    def window(self, lo, hi):
        keep = (self.ky >= lo) & (self.ky <= hi)
        return self.ky[keep], self.values[keep]


def extract_pattern(momentum_map, gamma, normalize=False):
    """S(k_y) = ∫_Γ |Φ̃(k_x, k_y)|² dk_x as a Riemann sum over the k_x columns"""
    inside = gamma.mask(momentum_map.grid)
    if not inside.any():
        raise ConfigurationError(
            f"integration domain {gamma.mode} k > {gamma.k_min} is empty on this grid "
            f"(k_x max {momentum_map.grid.kx_max:.4g}, k_y max {momentum_map.grid.ky_max:.4g})")
    values = momentum_map.grid.dkx * np.sum(np.where(inside, momentum_map.density, 0.0), axis=1)
    pattern = Pattern(momentum_map.grid.ky, values)
    return pattern.normalize() if normalize else pattern


def integrated_signal(pattern):
    """∫ S dk_y"""
    return float(pattern.dky * np.sum(pattern.values))


# ============================================================================== Fringe models ==============================================================================
@dataclass(frozen=True)
class FringeModel:
    """Interference prefactor of two or three coherent sources times a smooth envelope.

    The envelope is an even polynomial Σ c_j k_y^{2j} clipped at zero.
    """
    symmetry: str
    bond_length: float
    envelope: Tuple[float, ...] = (1.0,)

    def __post_init__(self):
        if self.symmetry not in (TWO_SOURCE, THREE_SOURCE):
            raise ConfigurationError(f"symmetry must be '{TWO_SOURCE}' or '{THREE_SOURCE}', got '{self.symmetry}'")
        if not self.bond_length > 0:
            raise ConfigurationError(f"bond length must be > 0, got {self.bond_length}")

    def prefactor(self, ky):
        phase = self.bond_length * np.asarray(ky, dtype=float)
        if self.symmetry == TWO_SOURCE:
            return np.sin(phase) ** 2
        return (1.0 + 2.0 * np.cos(phase)) ** 2

    def envelope_at(self, ky):
        k2 = np.asarray(ky, dtype=float) ** 2
        env = np.zeros_like(k2)
        for c in reversed(self.envelope):
            env = env * k2 + c
        return np.clip(env, 0.0, None)

    @property
    def fringe_spacing(self):
        return np.pi / self.bond_length


def model_pattern(model, ky):
    ky = np.asarray(ky, dtype=float)
    return Pattern(ky, model.envelope_at(ky) * model.prefactor(ky), label=model.symmetry)


def fit_envelope(pattern, model, degree=2, window=None):
    """Least-squares even-polynomial envelope for `model` against a computed pattern"""
    ky, values = pattern.window(*window) if window else (pattern.ky, pattern.values)
    if len(ky) <= degree:
        raise InsufficientDataError(f"{len(ky)} samples cannot fix a degree-{degree} envelope")
    pref = model.prefactor(ky)
    design = np.stack([pref * ky ** (2 * j) for j in range(degree + 1)], axis=1)
    coeffs, *_ = np.linalg.lstsq(design, values, rcond=None)
    return replace(model, envelope=tuple(float(c) for c in coeffs))


# ============================================================================== Fringe detection ==============================================================================
@dataclass
class FringeSet:
    kind: str
    positions: np.ndarray
    values: np.ndarray

    def __len__(self):
        return len(self.positions)


def smooth(values, width=3):
    if width <= 1:
        return np.asarray(values, dtype=float)
    return uniform_filter1d(np.asarray(values, dtype=float), size=int(width), mode="nearest")


def find_fringes(pattern, window, kind=MINIMA, smoothing=3, prominence=0.0):
    """Sub-grid extrema of the smoothed pattern inside `window`, ordered by k_y.

    prominence is relative to the pattern's range inside the window.
    """
    if kind not in (MINIMA, MAXIMA):
        raise ConfigurationError(f"fringe kind must be '{MINIMA}' or '{MAXIMA}', got '{kind}'")
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise ConfigurationError(f"empty fringe window [{lo}, {hi}]")
    if lo < pattern.ky[0] or hi > pattern.ky[-1]:
        raise ConfigurationError(
            f"fringe window [{lo}, {hi}] exceeds the pattern axis [{pattern.ky[0]:.4g}, {pattern.ky[-1]:.4g}]")
    s = smooth(pattern.values, smoothing)
    signal = -s if kind == MINIMA else s
    inside = (pattern.ky >= lo) & (pattern.ky <= hi)
    spread = float(np.ptp(s[inside])) if inside.any() else 0.0
    if spread == 0.0:
        raise EmptyResultError(f"no {kind} in [{lo}, {hi}]: the pattern is flat there")
    peaks, _ = find_peaks(signal, prominence=prominence * spread if prominence > 0 else None)
    positions, values = [], []
    dk = pattern.dky
    for i in peaks:
        if i == 0 or i == len(s) - 1:
            continue
        # vertex of the parabola through the extremal triple
        y0, y1, y2 = s[i - 1], s[i], s[i + 1]
        curvature = y0 - 2.0 * y1 + y2
        offset = 0.5 * (y0 - y2) / curvature if curvature != 0.0 else 0.0
        k = pattern.ky[i] + offset * dk
        if lo <= k <= hi:
            positions.append(k)
            values.append(y1 - 0.25 * (y0 - y2) * offset)
    if not positions:
        raise EmptyResultError(f"no {kind} found in [{lo}, {hi}] a.u.")
    _debug_log(f"{len(positions)} {kind} in [{lo}, {hi}]: " + ", ".join(f"{k:.4f}" for k in positions), LOG)
    return FringeSet(kind, np.array(positions), np.array(values))


def fringe_period(positions):
    """Median spacing of consecutive fringe positions"""
    positions = np.sort(np.asarray(positions, dtype=float))
    if len(positions) < 2:
        raise InsufficientDataError("a fringe period needs at least two positions")
    return float(np.median(np.diff(positions)))


def fringe_contrast(pattern, window, smoothing=3):
    """Mean visibility (S_max - S_min)/(S_max + S_min) over minima bracketed by maxima"""
    minima = find_fringes(pattern, window, MINIMA, smoothing)
    maxima = find_fringes(pattern, window, MAXIMA, smoothing)
    visibilities = []
    for k, v in zip(minima.positions, minima.values):
        left = maxima.values[maxima.positions < k]
        right = maxima.values[maxima.positions > k]
        if len(left) and len(right):
            top = 0.5 * (left[-1] + right[0])
            if top + v > 0:
                visibilities.append((top - v) / (top + v))
    if not visibilities:
        raise EmptyResultError(f"no bracketed minima in [{window[0]}, {window[1]}] to measure contrast")
    return float(np.mean(visibilities))


@dataclass
class PhaseComparison:
    offsets: np.ndarray
    reference: np.ndarray

    @property
    def max_offset(self):
        return float(np.max(np.abs(self.offsets)))

    def coincide(self, tolerance):
        return self.max_offset <= tolerance


def compare_fringes(reference, other):
    """Offset of each reference position to the nearest position of `other`"""
    reference = np.asarray(reference, dtype=float)
    other = np.asarray(other, dtype=float)
    if not len(reference) or not len(other):
        raise InsufficientDataError("fringe comparison needs positions on both sides")
    nearest = other[np.argmin(np.abs(other[np.newaxis, :] - reference[:, np.newaxis]), axis=1)]
    return PhaseComparison(nearest - reference, reference)


# ============================================================================== Inversion ==============================================================================
@dataclass
class BondLengthEstimate:
    bond_length: float
    stderr: float
    positions: np.ndarray
    multiples: np.ndarray
    residuals: np.ndarray
    relative_residual: float

    @property
    def angstrom(self):
        return Units.bohr_to_angstrom(self.bond_length)

    @property
    def stderr_angstrom(self):
        return Units.bohr_to_angstrom(self.stderr)

    def deviation_from(self, reference_bohr):
        return (self.bond_length - reference_bohr) / reference_bohr


def _fringe_law(kind, symmetry, principal_only):
    # positions are (step·n + offset)·π/R
    if symmetry == TWO_SOURCE:
        return (1, 0.0) if kind == MINIMA else (1, 0.5)
    if kind == MINIMA:
        raise ConfigurationError("three-source minima do not form a single series; invert from maxima")
    return (2, 0.0) if principal_only else (1, 0.0)


def _fold_positions(positions, merge_fraction=0.25):
    """|k| of fringe positions with mirror pairs (+k, -k) merged into one entry"""
    k = np.sort(np.abs(np.asarray(positions, dtype=float)))
    k = k[k > 0]
    if len(k) < 2:
        return k
    gaps = np.diff(k)
    # a gap below a quarter of the widest one joins a mirror pair, not two fringes
    new_cluster = np.concatenate(([True], gaps > merge_fraction * gaps.max()))
    labels = np.cumsum(new_cluster) - 1
    return np.bincount(labels, weights=k) / np.bincount(labels)


def invert_bond_length(positions, kind=MINIMA, symmetry=TWO_SOURCE, principal_only=False,
                       max_index_deviation=0.3, max_relative_residual=0.2):
    """Fit fringe positions to the multiples of π/R through the origin; ±k mirror pairs count once"""
    k = _fold_positions(positions)
    if len(k) < 2:
        raise InsufficientDataError(f"bond-length inversion needs at least 2 fringe positions, got {len(k)}")
    step, offset = _fringe_law(kind, symmetry, principal_only)
    spacing = float(np.median(np.diff(k)))
    if not spacing > 0:
        raise AmbiguousPatternError("fringe positions have no positive spacing")
    unit = spacing / step

    for _ in range(20):
        index = (k / unit - offset) / step
        n = np.round(index)
        deviation = float(np.max(np.abs(index - n)))
        if deviation > max_index_deviation:
            raise AmbiguousPatternError(
                f"fringe positions deviate by {deviation:.2f} from the nearest multiple of π/R "
                f"(limit {max_index_deviation})")
        multiples = step * n + offset
        keep = multiples > 0
        if keep.sum() < 2:
            raise InsufficientDataError("fewer than 2 fringes remain after dropping the origin")
        slope = float(np.dot(multiples[keep], k[keep]) / np.dot(multiples[keep], multiples[keep]))
        if np.isclose(slope, unit, rtol=1e-14, atol=0.0):
            break
        unit = slope

    kk, mm = k[keep], multiples[keep]
    residuals = kk - mm * slope
    relative = float(np.max(np.abs(residuals)) / (step * slope))
    if relative > max_relative_residual:
        raise AmbiguousPatternError(
            f"inconsistent fringe spacing: worst residual is {relative:.0%} of a fringe (limit {max_relative_residual:.0%})")
    dof = len(kk) - 1
    slope_err = float(np.sqrt(np.dot(residuals, residuals) / dof / np.dot(mm, mm))) if dof > 0 else 0.0
    bond = np.pi / slope
    estimate = BondLengthEstimate(bond, np.pi * slope_err / slope ** 2, kk, mm, residuals, relative)
    _progress("invert", f"R = {bond:.4f} bohr = {estimate.angstrom:.4f} Å ± {estimate.stderr_angstrom:.4f} Å "
                        f"from {len(kk)} {kind}", LOG)
    return estimate


# ============================================================================== Ensembles ==============================================================================
@dataclass(frozen=True)
class EnsembleMember:
    index: int
    theta: float
    bond_length: float
    weight: float

    def describe(self):
        return (f"member {self.index} (theta={np.degrees(self.theta):.2f} deg, "
                f"R={Units.bohr_to_angstrom(self.bond_length):.4f} Å)")


@dataclass(frozen=True)
class EnsembleConfig:
    """Gaussian θ and R distributions (radians and bohr), Gauss–Hermite quadrature per variable"""
    bond_length: float
    theta_width: float = 0.0
    bond_width: float = 0.0
    theta_points: int = 9
    bond_points: int = 9
    theta_mean: float = 0.0

    def __post_init__(self):
        if self.theta_width < 0 or self.bond_width < 0:
            raise ConfigurationError("ensemble widths must be >= 0")
        if self.theta_points < 1 or self.bond_points < 1:
            raise ConfigurationError("ensemble sample counts must be >= 1")
        if not self.bond_length > 0:
            raise ConfigurationError(f"ensemble mean bond length must be > 0, got {self.bond_length}")

    def members(self):
        thetas = _gaussian_nodes(self.theta_mean, self.theta_width, self.theta_points)
        bonds = _gaussian_nodes(self.bond_length, self.bond_width, self.bond_points)
        out = []
        for theta, w_theta in thetas:
            for bond, w_bond in bonds:
                if not bond > 0:
                    raise ConfigurationError(f"bond-length quadrature node {bond:.4f} bohr is not positive; narrow the width")
                out.append(EnsembleMember(len(out), float(theta), float(bond), float(w_theta * w_bond)))
        return out


def _gaussian_nodes(mean, width, points):
    if width == 0.0 or points == 1:
        return [(mean, 1.0)]
    nodes, weights = hermegauss(points)
    weights = weights / weights.sum()
    return [(mean + width * x, w) for x, w in zip(nodes, weights)]


@dataclass
class EnsembleResult:
    pattern: Pattern
    momentum_map: MomentumMap
    members: List[EnsembleMember] = field(default_factory=list)


def ensemble_average(config, pipeline, gamma, normalize=True, threads=1):
    """Incoherent average: densities of all members weighted, summed in member order, then S(k_y)"""
    members = config.members()
    _progress("ensemble", f"{len(members)} members on {threads} worker(s)", LOG)

    def _run(member):
        try:
            return pipeline(member)
        except Exception as exc:
            raise MemberFailureError(f"{member.describe()} failed: {exc}", member) from exc

    if threads > 1 and len(members) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_run, m) for m in members]
            maps = [f.result() for f in futures]
    else:
        maps = [_run(m) for m in members]

    grid = maps[0].grid
    total = np.zeros(grid.shape)
    for member, m in zip(members, maps):
        if m.grid != grid:
            raise MemberFailureError(f"{member.describe()} returned a map on a different grid", member)
        total += member.weight * m.density
    averaged = MomentumMap(grid, total)
    return EnsembleResult(extract_pattern(averaged, gamma, normalize), averaged, members)
