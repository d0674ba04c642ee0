#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# lied_config.py - versioned run configuration: loading, validation, unit conversion and hashing

from __future__ import annotations

import copy
import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import yaml
from Crypto.Hash import SHA256

from lied_analysis import AXIAL, MAXIMA, MINIMA, RADIAL, THREE_SOURCE, TWO_SOURCE, EnsembleConfig, GammaSpec
from lied_core import ConfigurationError, Units, _debug_log, make_grid
from lied_eigensolver import ANTISYMMETRIC, DEFAULT_FREE_PARAMS, ORBITAL_LABELS, CalibrationSettings, RelaxSettings
from lied_model import (
    SINGLE_CYCLE,
    MolecularGeometry,
    MolecularModel,
    SiteParameters,
    make_pulse,
)
from lied_propagator import PropagationConfig

SCHEMA_VERSION = 1


# ============================================================================== Sections ==============================================================================
@dataclass(frozen=True)
class GridSection:
    nx: int = 256
    ny: int = 256
    lx: float = 100.0
    ly: float = 100.0

    def build(self):
        return make_grid(self.nx, self.ny, self.lx, self.ly)


@dataclass(frozen=True)
class SiteSection:
    z0: float
    zinf: float
    sigma: float = 1.0
    softening: float = 0.8

    def build(self):
        return SiteParameters(float(self.z0), float(self.zinf), float(self.sigma), float(self.softening))


def _carbon():
    return SiteSection(4.0, 0.2)


def _oxygen():
    return SiteSection(6.0, 0.4)


@dataclass(frozen=True)
class MoleculeSection:
    """Geometry in Å and degrees; site parameters in atomic units"""
    bond_length_angstrom: float = 1.16
    theta_degrees: float = 0.0
    carbon: SiteSection = field(default_factory=_carbon)
    oxygen: SiteSection = field(default_factory=_oxygen)

    def __post_init__(self):
        if not self.bond_length_angstrom > 0:
            raise ConfigurationError(f"bond_length_angstrom must be > 0, got {self.bond_length_angstrom}")

    @property
    def bond_length(self):
        return Units.angstrom_to_bohr(self.bond_length_angstrom)

    @property
    def theta(self):
        return float(np.radians(self.theta_degrees))

    def model(self, bond_length=None, theta=None):
        geometry = MolecularGeometry(self.bond_length if bond_length is None else bond_length,
                                     self.theta if theta is None else theta)
        return MolecularModel(geometry, self.carbon.build(), self.oxygen.build())


def _free_params():
    return dict(DEFAULT_FREE_PARAMS)


@dataclass(frozen=True)
class CalibrationSection:
    enabled: bool = False
    required: bool = True
    orbitals: Tuple[str, ...] = ("HOMO", "HOMO-1", "HOMO-2")
    targets_ev: Dict[str, float] = field(default_factory=dict)
    free_params: Dict[str, Tuple[float, float]] = field(default_factory=_free_params)
    bond_length_angstrom: Optional[float] = None
    energy_tol: float = 5e-3
    max_iterations: int = 200
    starts: int = 4
    restarts: int = 1

    def __post_init__(self):
        _check_labels(self.orbitals)
        _check_labels(self.targets_ev)
        for name, bounds in self.free_params.items():
            if len(bounds) != 2:
                raise ConfigurationError(f"free parameter '{name}' needs [lower, upper] bounds")

    def settings(self, threads=1):
        return CalibrationSettings(energy_tol=self.energy_tol, max_iterations=self.max_iterations, threads=threads,
                                   starts=self.starts, restarts=self.restarts)


@dataclass(frozen=True)
class EigensolverSection:
    dtau: float = 0.05
    tol: float = 1e-8
    check_every: int = 100
    max_steps: int = 200000
    grid: Optional[GridSection] = None

    def settings(self):
        return RelaxSettings(self.dtau, self.tol, self.check_every, self.max_steps)


@dataclass(frozen=True)
class PulseSection:
    """Give one of omega / wavelength_nm and one of e0 / intensity_wcm2"""
    omega: Optional[float] = None
    wavelength_nm: Optional[float] = None
    e0: Optional[float] = None
    intensity_wcm2: Optional[float] = None
    envelope: str = SINGLE_CYCLE
    fwhm_fs: Optional[float] = None
    cep: float = 0.0

    def build(self):
        fwhm = Units.fs_to_au(self.fwhm_fs) if self.fwhm_fs is not None else None
        return make_pulse(omega=self.omega, e0=self.e0, envelope=self.envelope, fwhm=fwhm, cep=self.cep,
                          wavelength_nm=self.wavelength_nm, intensity_wcm2=self.intensity_wcm2)


@dataclass(frozen=True)
class AnalysisSection:
    gamma_mode: str = RADIAL
    k_min: float = 3.15
    window: Tuple[float, float] = (0.3, 2.5)
    kind: Optional[str] = None
    symmetry: Optional[str] = None
    smoothing: int = 3
    prominence: float = 0.02
    principal_only: bool = False

    def __post_init__(self):
        if self.gamma_mode not in (RADIAL, AXIAL):
            raise ConfigurationError(f"gamma_mode must be '{RADIAL}' or '{AXIAL}', got '{self.gamma_mode}'")
        if self.kind not in (None, MINIMA, MAXIMA):
            raise ConfigurationError(f"kind must be '{MINIMA}' or '{MAXIMA}', got '{self.kind}'")
        if self.symmetry not in (None, TWO_SOURCE, THREE_SOURCE):
            raise ConfigurationError(f"symmetry must be '{TWO_SOURCE}' or '{THREE_SOURCE}', got '{self.symmetry}'")
        if len(self.window) != 2 or not self.window[0] < self.window[1]:
            raise ConfigurationError(f"window must be [lo, hi] with lo < hi, got {list(self.window)}")
        if self.smoothing < 1:
            raise ConfigurationError(f"smoothing width must be >= 1, got {self.smoothing}")

    def gamma(self):
        return GammaSpec(self.gamma_mode, self.k_min)

    def fringe_law(self, spec):
        """(symmetry, kind) for an orbital: σ_h-odd orbitals give two sources, σ_h-even three"""
        symmetry = self.symmetry or (TWO_SOURCE if spec.y_parity == ANTISYMMETRIC else THREE_SOURCE)
        kind = self.kind or (MINIMA if symmetry == TWO_SOURCE else MAXIMA)
        return symmetry, kind


@dataclass(frozen=True)
class EnsembleSection:
    theta_width_degrees: float = 0.0
    bond_width_angstrom: float = 0.0
    theta_points: int = 9
    bond_points: int = 9

    @property
    def active(self):
        return self.theta_width_degrees > 0 or self.bond_width_angstrom > 0

    def build(self, molecule):
        return EnsembleConfig(bond_length=molecule.bond_length,
                              theta_width=float(np.radians(self.theta_width_degrees)),
                              bond_width=Units.angstrom_to_bohr(self.bond_width_angstrom),
                              theta_points=self.theta_points, bond_points=self.bond_points,
                              theta_mean=molecule.theta)


@dataclass(frozen=True)
class RunConfig:
    schema_version: int = SCHEMA_VERSION
    name: str = "run"
    orbitals: Tuple[str, ...] = ("HOMO",)
    output_directory: str = "lied_out"
    grid: GridSection = field(default_factory=GridSection)
    molecule: MoleculeSection = field(default_factory=MoleculeSection)
    calibration: CalibrationSection = field(default_factory=CalibrationSection)
    eigensolver: EigensolverSection = field(default_factory=EigensolverSection)
    pulse: PulseSection = field(default_factory=lambda: PulseSection(omega=0.06, e0=0.15))
    propagation: PropagationConfig = field(default_factory=PropagationConfig)
    analysis: AnalysisSection = field(default_factory=AnalysisSection)
    ensemble: EnsembleSection = field(default_factory=EnsembleSection)

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigurationError(f"unsupported schema_version {self.schema_version} (expected {SCHEMA_VERSION})")
        if not self.orbitals:
            raise ConfigurationError("at least one orbital label is required")
        _check_labels(self.orbitals)

    def orbital_specs(self):
        specs = []
        for label in self.orbitals:
            spec = ORBITAL_LABELS[label]
            if label in self.calibration.targets_ev:
                spec = dataclasses.replace(spec, ionization_energy=Units.ev_to_hartree(self.calibration.targets_ev[label]))
            specs.append(spec)
        return specs

    def calibration_specs(self):
        return [dataclasses.replace(ORBITAL_LABELS[label],
                                    ionization_energy=Units.ev_to_hartree(self.calibration.targets_ev[label]))
                if label in self.calibration.targets_ev else ORBITAL_LABELS[label]
                for label in self.calibration.orbitals]

    def relax_grid(self):
        return (self.eigensolver.grid or self.grid).build()

    def to_dict(self):
        return dataclasses.asdict(self)

    def canonical_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def sha256(self):
        """Hash of the canonical resolved configuration"""
        return SHA256.new(self.canonical_json().encode("utf-8")).hexdigest()


def _check_labels(labels):
    unknown = [label for label in labels if label not in ORBITAL_LABELS]
    if unknown:
        raise ConfigurationError(f"unknown orbital label(s) {unknown}; expected one of {sorted(ORBITAL_LABELS)}")


# ============================================================================== Loading ==============================================================================
def _key_lines(text):
    """Map key paths to 1-based source lines (JSON parses as YAML for this purpose)"""
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return {}
    lines = {}

    def _walk(node, path):
        if isinstance(node, yaml.MappingNode):
            lines.setdefault(path, node.start_mark.line + 1)
            for key, value in node.value:
                lines[path + (str(key.value),)] = key.start_mark.line + 1
                _walk(value, path + (str(key.value),))
    if root is not None:
        _walk(root, ())
    return lines


def load_document(path):
    """Parse a JSON (or YAML) document; returns (data, key lines, source name)"""
    path = Path(path)
    source = path.name
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"cannot read configuration '{path}': {e}") from e
    if path.suffix.lower() in (".yaml", ".yml"):
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            raise ConfigurationError(f"invalid YAML: {getattr(e, 'problem', e)}",
                                     mark.line + 1 if mark else None, source) from e
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"invalid JSON: {e.msg}", e.lineno, source) from e
    if not isinstance(data, dict):
        raise ConfigurationError("top level must be a mapping", 1, source)
    _debug_log(f"Loaded {source}: sections {sorted(data)}")
    return data, _key_lines(text), source


def _section_type(hint):
    if dataclasses.is_dataclass(hint):
        return hint
    for arg in typing.get_args(hint):
        if dataclasses.is_dataclass(arg):
            return arg
    return None


def _freeze(value):
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    if isinstance(value, dict):
        return {k: _freeze(v) for k, v in value.items()}
    return value


def _build(cls, data, path, lines, source):
    section = ".".join(path) or "top level"
    if not isinstance(data, dict):
        raise ConfigurationError(f"section '{section}' must be a mapping", lines.get(path), source)
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigurationError(f"unknown key '{key}' in section '{section}'", lines.get(path + (key,)), source)
        nested = _section_type(hints[key])
        if nested is not None and value is not None:
            value = _build(nested, value, path + (key,), lines, source)
        else:
            value = _freeze(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except ConfigurationError as e:
        raise ConfigurationError(str(e), lines.get(path), source) from e
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"invalid section '{section}': {e}", lines.get(path), source) from e


def parse_config(data, lines=None, source="config"):
    return _build(RunConfig, data, (), lines or {}, source)


def load_config(path):
    data, lines, source = load_document(path)
    return parse_config(data, lines, source)


def deep_merge(base, overrides):
    merged = copy.deepcopy(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_preset(path):
    """Preset document: a base config plus optional `variants` (name -> overrides) merged over it"""
    data, lines, source = load_document(path)
    variants = data.pop("variants", None)
    if variants is None:
        return [(data.get("name", Path(path).stem), parse_config(data, lines, source))]
    if not isinstance(variants, dict) or not variants:
        raise ConfigurationError("'variants' must be a non-empty mapping", lines.get(("variants",)), source)
    runs = []
    for name, overrides in variants.items():
        merged = deep_merge(data, overrides or {})
        merged["name"] = name
        # unknown keys inside a variant are reported at the variant's own lines
        variant_lines = dict(lines)
        for key_path, line in lines.items():
            if key_path[:2] == ("variants", name):
                variant_lines[key_path[2:]] = line
        runs.append((name, parse_config(merged, variant_lines, source)))
    return runs


def preset_path(name):
    """presets/<name>.yaml next to this module"""
    path = Path(__file__).resolve().parent / "presets" / f"{name}.yaml"
    if not path.is_file():
        raise ConfigurationError(f"unknown preset '{name}' (no {path})")
    return path
