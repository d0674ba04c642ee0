#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# lied_core.py - units, grids, wavefunctions, errors and logging shared by the LIED toolkit

from __future__ import annotations

import datetime
import logging
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.fft

# ============================================================================== Logging ==============================================================================
LOGGER = logging.getLogger("lied")
DEBUG_MODE = False
FFT_WORKERS = 1


class _StderrFormatter(logging.Formatter):
    """Format records as the `[LEVEL timestamp] message` lines written to stderr"""

    def format(self, record):
        timestamp = datetime.datetime.fromtimestamp(record.created).strftime("%Y-%m-%d %H:%M:%S.%f")[:-3]
        return f"[{record.levelname} {timestamp}] {record.getMessage()}"


def configure_logging(debug=False, stream=None):
    """Attach a single stderr handler to the `lied` logger hierarchy"""
    global DEBUG_MODE
    DEBUG_MODE = debug
    for handler in list(LOGGER.handlers):
        LOGGER.removeHandler(handler)
    handler = logging.StreamHandler(stream or sys.stderr)
    handler.setFormatter(_StderrFormatter())
    LOGGER.addHandler(handler)
    LOGGER.setLevel(logging.DEBUG if debug else logging.INFO)
    LOGGER.propagate = False
    warnings_logger = logging.getLogger("py.warnings")
    for old in list(warnings_logger.handlers):
        warnings_logger.removeHandler(old)
    warnings_logger.addHandler(handler)
    warnings_logger.propagate = False
    logging.captureWarnings(True)


def _debug_log(message, logger=LOGGER):
    """Write debug message to stderr if debug mode is enabled"""
    if DEBUG_MODE or logger.isEnabledFor(logging.DEBUG):
        logger.debug(message)


def _progress(stage, text, logger=LOGGER):
    """Line-oriented progress report on stderr"""
    logger.info(f"{stage}: {text}")


def set_fft_workers(workers):
    """Number of threads used inside a single 2D transform"""
    global FFT_WORKERS
    FFT_WORKERS = max(1, int(workers))


# ============================================================================== Errors ==============================================================================
class LiedError(Exception):
    """Base class for every error raised by the toolkit; `code` is the CLI exit status"""
    code = 1


class ConfigurationError(LiedError):
    code = 2

    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        if line is not None:
            message = f"{source or 'config'}:{line}: {message}"
        super().__init__(message)


class FormatError(LiedError):
    code = 3


class ConvergenceError(LiedError):
    code = 4

    def __init__(self, message, residual=None, energy=None):
        self.residual = residual
        self.energy = energy
        super().__init__(message)


class CalibrationError(LiedError):
    code = 5

    def __init__(self, message, residuals=None, params=None):
        self.residuals = residuals
        self.params = params
        super().__init__(message)


class NumericalFailureError(LiedError):
    code = 6


class TimeResolutionError(LiedError):
    code = 7


class EmptyResultError(LiedError):
    code = 8


class InsufficientDataError(LiedError):
    code = 9


class AmbiguousPatternError(LiedError):
    code = 10


class MemberFailureError(LiedError):
    code = 11

    def __init__(self, message, member=None):
        self.member = member
        super().__init__(message)


class LiedWarning(UserWarning):
    pass


class TimeResolutionWarning(LiedWarning):
    pass


class NoIonizationWarning(LiedWarning):
    pass


# ============================================================================== Units ==============================================================================
class Units:
    """Conversions between Hartree atomic units and laboratory units"""
    BOHR_ANGSTROM = 0.529177210903          # 1 bohr in Å
    HARTREE_EV = 27.211386245988            # 1 hartree in eV
    AU_TIME_FS = 0.024188843265857          # 1 a.u. of time in fs
    SPEED_OF_LIGHT = 137.035999084          # c in a.u.
    AU_INTENSITY_WCM2 = 3.50944506e16       # intensity for a field of 1 a.u., W/cm²

    @staticmethod
    def angstrom_to_bohr(value):
        return value / Units.BOHR_ANGSTROM

    @staticmethod
    def bohr_to_angstrom(value):
        return value * Units.BOHR_ANGSTROM

    @staticmethod
    def ev_to_hartree(value):
        return value / Units.HARTREE_EV

    @staticmethod
    def hartree_to_ev(value):
        return value * Units.HARTREE_EV

    @staticmethod
    def fs_to_au(value):
        return value / Units.AU_TIME_FS

    @staticmethod
    def au_to_fs(value):
        return value * Units.AU_TIME_FS

    @staticmethod
    def wavelength_nm_to_omega(wavelength_nm):
        wavelength_bohr = Units.angstrom_to_bohr(wavelength_nm * 10.0)
        return 2.0 * np.pi * Units.SPEED_OF_LIGHT / wavelength_bohr

    @staticmethod
    def omega_to_wavelength_nm(omega):
        return Units.bohr_to_angstrom(2.0 * np.pi * Units.SPEED_OF_LIGHT / omega) / 10.0

    @staticmethod
    def intensity_to_field(intensity_wcm2):
        return float(np.sqrt(intensity_wcm2 / Units.AU_INTENSITY_WCM2))

    @staticmethod
    def field_to_intensity(field_au):
        return field_au ** 2 * Units.AU_INTENSITY_WCM2


# ============================================================================== Grids ==============================================================================
def _is_power_of_two(n):
    return isinstance(n, (int, np.integer)) and n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid2D:
    """Uniform periodic Cartesian grid; arrays on it are indexed [iy, ix] (x fastest)"""
    nx: int
    ny: int
    lx: float
    ly: float

    @property
    def dx(self):
        return 2.0 * self.lx / self.nx

    @property
    def dy(self):
        return 2.0 * self.ly / self.ny

    @property
    def shape(self):
        return (self.ny, self.nx)

    @property
    def cell(self):
        return self.dx * self.dy

    @property
    def x(self):
        # (j - N/2)·dx equals -L + j·dx and mirrors exactly under j -> N - j
        return (np.arange(self.nx) - self.nx // 2) * self.dx

    @property
    def y(self):
        return (np.arange(self.ny) - self.ny // 2) * self.dy

    def mesh(self):
        return np.meshgrid(self.x, self.y, indexing="xy")

    def radius(self):
        xx, yy = self.mesh()
        return np.hypot(xx, yy)

    def momentum(self):
        return MomentumGrid.from_grid(self)

    def contains(self, point, margin=0.0):
        px, py = point
        return abs(px) <= self.lx - margin and abs(py) <= self.ly - margin

    def describe(self):
        return {"nx": int(self.nx), "ny": int(self.ny), "lx": float(self.lx), "ly": float(self.ly)}


@dataclass(frozen=True)
class MomentumGrid:
    """Conjugate spectral grid, centred ordering spanning [-π/dx, π/dx)"""
    nx: int
    ny: int
    dkx: float
    dky: float

    @classmethod
    def from_grid(cls, grid):
        return cls(grid.nx, grid.ny, 2.0 * np.pi / (grid.nx * grid.dx), 2.0 * np.pi / (grid.ny * grid.dy))

    @property
    def kx(self):
        return (np.arange(self.nx) - self.nx // 2) * self.dkx

    @property
    def ky(self):
        return (np.arange(self.ny) - self.ny // 2) * self.dky

    @property
    def kx_max(self):
        return self.nx // 2 * self.dkx

    @property
    def ky_max(self):
        return self.ny // 2 * self.dky

    @property
    def shape(self):
        return (self.ny, self.nx)

    @property
    def cell(self):
        return self.dkx * self.dky

    def mesh(self):
        return np.meshgrid(self.kx, self.ky, indexing="xy")

    def fft_order_k2(self):
        """|k|² laid out in unshifted FFT order"""
        kx = scipy.fft.ifftshift(self.kx)
        ky = scipy.fft.ifftshift(self.ky)
        return kx[np.newaxis, :] ** 2 + ky[:, np.newaxis] ** 2

    def fft_order_axes(self):
        return scipy.fft.ifftshift(self.kx), scipy.fft.ifftshift(self.ky)


def make_grid(nx, ny, lx, ly):
    """Build a Grid2D after validating point counts and extents"""
    for name, n in (("N_x", nx), ("N_y", ny)):
        if not _is_power_of_two(n) or n < 8:
            raise ConfigurationError(f"{name} must be a power of two >= 8, got {n!r}")
    for name, extent in (("L_x", lx), ("L_y", ly)):
        if not np.isfinite(extent) or extent <= 0:
            raise ConfigurationError(f"{name} must be a positive half-extent, got {extent!r}")
    grid = Grid2D(int(nx), int(ny), float(lx), float(ly))
    _debug_log(f"Grid {nx}x{ny}, dx={grid.dx:.6g}, dy={grid.dy:.6g}, k_max={grid.momentum().kx_max:.6g}")
    return grid


# ============================================================================== Wavefunctions ==============================================================================
@dataclass
class Wavefunction:
    """Complex amplitudes on a Grid2D at time t (a.u.)"""
    grid: Grid2D
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.shape != self.grid.shape:
            raise ConfigurationError(f"wavefunction shape {self.values.shape} does not match grid {self.grid.shape}")

    def copy(self):
        return Wavefunction(self.grid, self.values.copy(), self.t)

    def density(self):
        return np.abs(self.values) ** 2

    def normalized(self):
        n = norm2(self)
        if n == 0.0:
            return self.copy()
        return Wavefunction(self.grid, self.values / np.sqrt(n), self.t)


@dataclass
class MomentumField:
    """Complex amplitudes on a MomentumGrid in centred ordering"""
    grid: MomentumGrid
    values: np.ndarray
    t: float = 0.0
    space: Optional[Grid2D] = field(default=None, repr=False)

    def density(self):
        return np.abs(self.values) ** 2

    def norm2(self):
        return float(self.grid.cell * np.sum(np.abs(self.values) ** 2))


def norm2(psi):
    """Riemann-sum squared norm dx·dy·Σ|Φ|²"""
    return float(psi.grid.cell * np.vdot(psi.values, psi.values).real)


def inner(phi, psi):
    """⟨φ|ψ⟩ on the common grid"""
    return complex(phi.grid.cell * np.vdot(phi.values, psi.values))


def _spectral_scale(grid):
    # continuous Fourier convention (1/2π)∫e^{-ik·r}Φ dr on top of the orthonormal DFT
    return grid.cell * np.sqrt(grid.nx * grid.ny) / (2.0 * np.pi)


def _origin_phase(grid):
    # e^{ik·L} from the grid starting at -L: (-1)^m for signed index m
    mx = (np.arange(grid.nx) - grid.nx // 2) % 2
    my = (np.arange(grid.ny) - grid.ny // 2) % 2
    return np.where(mx[np.newaxis, :] ^ my[:, np.newaxis], -1.0, 1.0)


def fft_forward(values, grid):
    """Real-space array -> momentum amplitudes in unshifted FFT order"""
    scale = _spectral_scale(grid)
    return scipy.fft.fft2(values, norm="ortho", workers=FFT_WORKERS) * scale


def to_momentum(psi):
    """Unitary transform of a Wavefunction to centred momentum amplitudes"""
    spectrum = scipy.fft.fftshift(fft_forward(psi.values, psi.grid)) * _origin_phase(psi.grid)
    return MomentumField(psi.grid.momentum(), spectrum, psi.t, psi.grid)


def from_momentum(phi, grid=None):
    """Inverse of to_momentum"""
    grid = grid or phi.space
    if grid is None:
        raise ConfigurationError("a real-space grid is required to invert a momentum field")
    unshifted = scipy.fft.ifftshift(phi.values * _origin_phase(grid))
    values = scipy.fft.ifft2(unshifted, norm="ortho", workers=FFT_WORKERS) / _spectral_scale(grid)
    return Wavefunction(grid, values, phi.t)


# ============================================================================== Symmetry ==============================================================================
def mirror_y(values):
    """Reflect y -> -y on the periodic grid (row j -> N - j)"""
    return np.roll(values[::-1, :], 1, axis=0)


def mirror_x(values):
    """Reflect x -> -x on the periodic grid (column j -> N - j)"""
    return np.roll(values[:, ::-1], 1, axis=1)


def parity_component(values, mirror, sign):
    """Part of `values` with eigenvalue `sign` under the given mirror"""
    return 0.5 * (values + sign * mirror(values))
