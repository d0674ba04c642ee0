#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# lied_cli.py - command-line driver: calibrate -> relax -> propagate -> pattern -> invert, ensembles and figure presets

from __future__ import annotations

import argparse
import dataclasses
import sys
import threading
import time
import traceback
import warnings
from pathlib import Path

import numpy as np

from lied_analysis import (
    MAXIMA,
    MINIMA,
    FringeModel,
    MomentumMap,
    compare_fringes,
    ensemble_average,
    extract_pattern,
    find_fringes,
    fringe_contrast,
    fringe_period,
    integrated_signal,
    invert_bond_length,
    model_pattern,
)
from lied_config import RunConfig, load_config, load_document, load_preset, preset_path
from lied_core import (
    CalibrationError,
    ConfigurationError,
    EmptyResultError,
    LiedError,
    LiedWarning,
    NoIonizationWarning,
    Units,
    _debug_log,
    _progress,
    configure_logging,
    set_fft_workers,
)
from lied_eigensolver import ORBITAL_LABELS, Orbital, calibrate_model, gram_matrix, rotate_orbital, solve_orbitals
from lied_io import (
    density_file,
    momentum_map_file,
    read_field,
    read_pattern,
    wavefunction_file,
    write_field,
    write_json,
    write_pattern,
    write_report,
)
from lied_model import MolecularGeometry, model_potential
from lied_propagator import propagate

TOOLKIT = {"name": "lied2d", "version": "1.0.0"}


# ============================================================================== Pipeline ==============================================================================
class Pipeline:
    """One resolved RunConfig bound to an output directory; caches calibrations and orbitals per bond length"""

    def __init__(self, config, out=None, threads=1, strict=False):
        self.config = config
        self.out = Path(out or config.output_directory)
        self.threads = max(1, int(threads))
        self.strict = strict
        self.config_hash = config.sha256()
        self.grid = config.grid.build()
        self.relax_grid = config.relax_grid()
        self.propagation = dataclasses.replace(config.propagation, strict=strict or config.propagation.strict)
        self._models = {}
        self._orbitals = {}
        self._lock = threading.RLock()

    def write_run_config(self):
        return write_json(self.out / "run_config.json",
                          {"toolkit": TOOLKIT, "config_sha256": self.config_hash, "config": self.config.to_dict()})

    # ------------------------------------------------------------------ calibration and orbitals
    def calibrated_model(self, bond_length=None, force=False):
        """(model at θ = 0, CalibrationResult or None) for a bond length in bohr.

        Calibration runs once, at the calibration bond length or else the configured
        equilibrium one; every other bond length reuses the fitted site parameters.
        """
        cal = self.config.calibration
        molecule = self.config.molecule
        bond_length = molecule.bond_length if bond_length is None else bond_length
        at = Units.angstrom_to_bohr(cal.bond_length_angstrom) if cal.bond_length_angstrom else molecule.bond_length
        key = (round(at, 12), force)
        with self._lock:
            if key not in self._models:
                model = molecule.model(bond_length=at, theta=0.0)
                result = None
                if cal.enabled or force:
                    model, result = self._calibrate(model)
                self._models[key] = (model, result)
        model, result = self._models[key]
        return model.with_geometry(MolecularGeometry(bond_length, 0.0)), result

    def _calibrate(self, model):
        cal = self.config.calibration
        _progress("calibrate", f"targets {list(cal.orbitals)} at R={model.geometry.bond_length:.4f} bohr")
        try:
            return calibrate_model(model, self.relax_grid, self.config.calibration_specs(), dict(cal.free_params),
                                   cal.settings(self.threads), self.config.eigensolver.settings())
        except CalibrationError as e:
            if cal.required or not e.params:
                raise
            warnings.warn(f"calibration not converged, continuing with best parameters: {e}", LiedWarning)
            best = model.with_params({k: e.params[k] for k in cal.free_params})
            return best, None

    def orbitals(self, bond_length=None):
        """Configured orbitals relaxed at θ = 0 on the relaxation grid"""
        bond_length = self.config.molecule.bond_length if bond_length is None else bond_length
        key = round(bond_length, 12)
        with self._lock:
            if key not in self._orbitals:
                model, _ = self.calibrated_model(bond_length)
                potential = model_potential(model, self.relax_grid)
                self._orbitals[key] = solve_orbitals(potential, self.config.orbital_specs(),
                                                     self.config.eigensolver.settings(), self.threads)
        return self._orbitals[key]

    def orbital(self, label, bond_length=None):
        for orbital in self.orbitals(bond_length):
            if orbital.label == label:
                return orbital
        raise ConfigurationError(f"orbital '{label}' is not among the configured orbitals {list(self.config.orbitals)}")

    # ------------------------------------------------------------------ propagation and patterns
    def propagate(self, orbital, bond_length=None, theta=None, label=None):
        """PropagationResult, or None when the pulse carries no field"""
        molecule = self.config.molecule
        bond_length = molecule.bond_length if bond_length is None else bond_length
        theta = molecule.theta if theta is None else theta
        pulse = self.config.pulse.build()
        if pulse.e0 == 0.0:
            warnings.warn("no ionization: the pulse has E0 = 0, writing an empty momentum map", NoIonizationWarning)
            return None
        model, _ = self.calibrated_model(bond_length)
        potential = model_potential(model.with_geometry(MolecularGeometry(bond_length, theta)), self.grid)
        start = rotate_orbital(orbital, theta, self.grid)
        return propagate(start, potential, pulse, self.propagation, label or f"propagate {orbital.label}")

    def momentum_map(self, result):
        if result is None:
            return MomentumMap.empty(self.grid.momentum())
        return MomentumMap.from_field(result.momentum_field())

    def pattern(self, momentum_map, label):
        raw = extract_pattern(momentum_map, self.config.analysis.gamma())
        pattern = dataclasses.replace(raw.normalize(), label=label)
        return pattern, integrated_signal(raw)

    def write_pattern(self, name, pattern, signal):
        return write_pattern(self.out / f"pattern_{name}.txt", pattern, self.config_hash,
                             {"integrated_signal": f"{signal:.12e}",
                              "gamma": f"{self.config.analysis.gamma_mode} k_min={self.config.analysis.k_min}"})

    def invert(self, pattern, spec, reference_bohr=None):
        analysis = self.config.analysis
        symmetry, kind = analysis.fringe_law(spec)
        fringes = find_fringes(pattern, analysis.window, kind, analysis.smoothing, analysis.prominence)
        estimate = invert_bond_length(fringes.positions, kind, symmetry, analysis.principal_only)
        return fringes, estimate, inversion_report(pattern.label, symmetry, kind, analysis.window, fringes, estimate,
                                                   reference_bohr or self.config.molecule.bond_length, pattern.dky)


def inversion_report(label, symmetry, kind, window, fringes, estimate, reference_bohr, dk):
    return {
        "label": label,
        "symmetry": symmetry,
        "kind": kind,
        "window_au": [float(window[0]), float(window[1])],
        "positions_au": [float(k) for k in fringes.positions],
        "assigned_multiples_of_pi_over_R": [float(m) for m in estimate.multiples],
        "bond_length": {"bohr": estimate.bond_length, "angstrom": estimate.angstrom,
                        "stderr_bohr": estimate.stderr, "stderr_angstrom": estimate.stderr_angstrom},
        "reference_bond_length": {"bohr": reference_bohr, "angstrom": Units.bohr_to_angstrom(reference_bohr)},
        "relative_deviation": estimate.deviation_from(reference_bohr),
        "relative_residual": estimate.relative_residual,
        "k_grid_spacing_au": dk,
    }


def _orbital_report(orbital):
    return {"energy_hartree": orbital.energy, "energy_ev": Units.hartree_to_ev(orbital.energy),
            "target_ionization_ev": Units.hartree_to_ev(orbital.spec.ionization_energy),
            "residual": orbital.residual, "parities_y_x": list(orbital.parities), "steps": orbital.steps}


def _propagation_report(result):
    if result is None:
        return {"ionized_fraction": 0.0, "note": "no ionization (E0 = 0)"}
    return {"ionized_fraction": result.ionized_fraction, "bound_population": result.bound_population,
            "initial_population": result.initial_population,
            "conservation_error": result.conservation_error, "steps": result.steps,
            "final_time_au": result.final_time, "final_time_fs": Units.au_to_fs(result.final_time),
            "splits": result.accumulator.splits, "elapsed_s": round(result.elapsed, 3)}


def _say(text):
    sys.stdout.write(text + "\n")
    sys.stdout.flush()


# ============================================================================== Subcommands ==============================================================================
def cmd_calibrate(pipe, args):
    model, result = pipe.calibrated_model(force=True)
    report = {"config_sha256": pipe.config_hash, "params": dict(model.params())}
    if result is not None:
        report.update({
            "energies": {k: {"hartree": v, "ev": Units.hartree_to_ev(v)} for k, v in result.energies.items()},
            "residuals_hartree": result.residuals, "iterations": result.iterations, "evaluations": result.evaluations})
    write_report(pipe.out / "calibration.yaml", report)
    _say("✅ calibration: " + ", ".join(f"{k}={v:.4f}" for k, v in report["params"].items()))
    return report


def cmd_relax(pipe, args):
    orbitals = pipe.orbitals()
    g = gram_matrix(orbitals)
    report = {"config_sha256": pipe.config_hash, "grid": pipe.relax_grid.describe(),
              "orbitals": {o.label: _orbital_report(o) for o in orbitals},
              "gram_max_deviation": float(np.max(np.abs(g - np.eye(len(orbitals)))))}
    for o in orbitals:
        write_field(pipe.out / f"orbital_{o.label}.lied2d",
                    wavefunction_file(o.wavefunction, label=o.label, energy=o.energy, residual=o.residual))
    write_report(pipe.out / "orbitals.yaml", report)
    for o in orbitals:
        _say(f"✅ {o.label}: E = {o.energy:.6f} hartree ({Units.hartree_to_ev(o.energy):.3f} eV)")
    return report


def _input_orbitals(pipe, args):
    if not args.input:
        return pipe.orbitals()
    loaded = []
    for path in args.input:
        ff = read_field(path)
        label = ff.meta.get("label", pipe.config.orbitals[0])
        if label not in ORBITAL_LABELS:
            raise ConfigurationError(f"{path}: unknown orbital label '{label}'")
        loaded.append(Orbital(ORBITAL_LABELS[label], ff.to_wavefunction().normalized(),
                              float(ff.meta.get("energy", 0.0)), float(ff.meta.get("residual", 0.0))))
    return loaded


def _run_propagations(pipe, orbitals):
    runs = {}
    for orbital in orbitals:
        result = pipe.propagate(orbital)
        momentum_map = pipe.momentum_map(result)
        write_field(pipe.out / f"momentum_{orbital.label}.lied2d",
                    momentum_map_file(momentum_map, pipe.grid, label=orbital.label))
        if result is not None:
            for snap in result.snapshots:
                write_field(pipe.out / f"snapshot_{orbital.label}_{snap.phase:.2f}.lied2d",
                            density_file(pipe.grid, snap.density, snap.t, label=orbital.label, phase=snap.phase))
        runs[orbital.label] = (orbital, result, momentum_map)
    return runs


def cmd_propagate(pipe, args):
    runs = _run_propagations(pipe, _input_orbitals(pipe, args))
    report = {"config_sha256": pipe.config_hash, "pulse": pipe.config.pulse.build().describe(),
              "runs": {label: _propagation_report(result) for label, (_, result, _) in runs.items()}}
    write_report(pipe.out / "propagation.yaml", report)
    for label, (_, result, _) in runs.items():
        _say(f"✅ {label}: ionized fraction {0.0 if result is None else result.ionized_fraction:.4e}")
    return report


def _patterns(pipe, args):
    """label -> (spec, pattern, integrated signal) from --input maps or a fresh propagation"""
    out = {}
    if args.input:
        for path in args.input:
            ff = read_field(path)
            label = ff.meta.get("label", pipe.config.orbitals[0])
            if label not in ORBITAL_LABELS:
                raise ConfigurationError(f"{path}: unknown orbital label '{label}'")
            pattern, signal = pipe.pattern(ff.to_momentum_map(), label)
            out[label] = (ORBITAL_LABELS[label], pattern, signal)
        return out
    for label, (orbital, _, momentum_map) in _run_propagations(pipe, pipe.orbitals()).items():
        pattern, signal = pipe.pattern(momentum_map, label)
        out[label] = (orbital.spec, pattern, signal)
    return out


def cmd_pattern(pipe, args):
    patterns = _patterns(pipe, args)
    for label, (_, pattern, signal) in patterns.items():
        pipe.write_pattern(label, pattern, signal)
        _say(f"✅ pattern_{label}.txt: {len(pattern.ky)} points, integrated signal {signal:.4e}")
    return {label: signal for label, (_, _, signal) in patterns.items()}


def _fixture_pattern(path):
    """Analytic fringe model described by a YAML fixture"""
    data, _, source = load_document(path)
    allowed = {"symmetry", "bond_length_angstrom", "envelope", "k_min", "k_max", "points", "label", "window",
               "kind", "principal_only"}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigurationError(f"unknown fixture key(s) {unknown}", None, source)
    model = FringeModel(data["symmetry"], Units.angstrom_to_bohr(float(data["bond_length_angstrom"])),
                        tuple(float(c) for c in data.get("envelope", (1.0,))))
    ky = np.linspace(float(data.get("k_min", -4.0)), float(data.get("k_max", 4.0)), int(data.get("points", 4001)))
    pattern = dataclasses.replace(model_pattern(model, ky).normalize(), label=data.get("label", model.symmetry))
    return pattern, model, data


def cmd_invert(pipe, args):
    analysis = pipe.config.analysis
    reports = {}
    if args.input:
        for path in args.input:
            if Path(path).suffix.lower() in (".yaml", ".yml"):
                pattern, model, data = _fixture_pattern(path)
                kind = data.get("kind", MINIMA if model.symmetry == "two-source" else MAXIMA)
                window = tuple(data.get("window", analysis.window))
                fringes = find_fringes(pattern, window, kind, analysis.smoothing, analysis.prominence)
                estimate = invert_bond_length(fringes.positions, kind, model.symmetry,
                                              bool(data.get("principal_only", False)))
                reports[pattern.label] = inversion_report(pattern.label, model.symmetry, kind, window, fringes,
                                                          estimate, model.bond_length, pattern.dky)
            else:
                pattern, _ = read_pattern(path)
                label = pattern.label or pipe.config.orbitals[0]
                _, _, reports[label] = pipe.invert(pattern, ORBITAL_LABELS.get(label, ORBITAL_LABELS["HOMO"]))
    else:
        for label, (spec, pattern, signal) in _patterns(pipe, args).items():
            pipe.write_pattern(label, pattern, signal)
            _, _, reports[label] = pipe.invert(pattern, spec)
    write_report(pipe.out / "inversion.yaml", {"config_sha256": pipe.config_hash, "inversions": reports})
    for label, report in reports.items():
        bl = report["bond_length"]
        _say(f"✅ {label}: R = {bl['angstrom']:.2f} Å ± {bl['stderr_angstrom']:.2f} "
             f"({bl['bohr']:.4f} bohr), deviation {100 * report['relative_deviation']:+.2f}%")
    return reports


def run_ensemble(pipe, spec, name=None):
    """Incoherent θ/R-averaged pattern for one orbital; writes pattern_<name>.txt"""
    ensemble = pipe.config.ensemble.build(pipe.config.molecule)

    def _member_map(member):
        orbital = pipe.orbital(spec.label, member.bond_length)
        result = pipe.propagate(orbital, member.bond_length, member.theta, f"{spec.label} {member.describe()}")
        return pipe.momentum_map(result)

    if pipe.threads > 1:
        set_fft_workers(1)
    result = ensemble_average(ensemble, _member_map, pipe.config.analysis.gamma(), normalize=False,
                              threads=pipe.threads)
    pattern = dataclasses.replace(result.pattern.normalize(), label=spec.label)
    signal = integrated_signal(result.pattern)
    pipe.write_pattern(name or f"{spec.label}_ensemble", pattern, signal)
    return pattern, signal, len(result.members)


def cmd_ensemble(pipe, args):
    reports = {}
    for spec in pipe.config.orbital_specs():
        pattern, signal, members = run_ensemble(pipe, spec)
        report = {"members": members, "integrated_signal": signal}
        try:
            _, _, report["inversion"] = pipe.invert(pattern, spec)
        except EmptyResultError as e:
            report["inversion_error"] = str(e)
        reports[spec.label] = report
    write_report(pipe.out / "ensemble.yaml", {"config_sha256": pipe.config_hash, "ensembles": reports})
    for label, report in reports.items():
        _say(f"✅ {label}: {report['members']} members, integrated signal {report['integrated_signal']:.4e}")
    return reports


# ============================================================================== Figures ==============================================================================
def _single_run(pipe):
    """Propagate, extract, write and invert every configured orbital (or its ensemble)"""
    rows = {}
    if pipe.config.ensemble.active:
        for spec in pipe.config.orbital_specs():
            pattern, signal, _ = run_ensemble(pipe, spec, spec.label)
            rows[spec.label] = (spec, pattern, signal, None)
    else:
        for label, (orbital, result, momentum_map) in _run_propagations(pipe, pipe.orbitals()).items():
            pattern, signal = pipe.pattern(momentum_map, label)
            pipe.write_pattern(label, pattern, signal)
            rows[label] = (orbital.spec, pattern, signal, result)
    summary = {}
    for label, (spec, pattern, signal, result) in rows.items():
        entry = {"integrated_signal": signal, "k_grid_spacing_au": pattern.dky}
        if result is not None:
            entry["propagation"] = _propagation_report(result)
        try:
            fringes, _, entry["inversion"] = pipe.invert(pattern, spec)
            entry["fringes"] = fringes.positions
            entry["period_au"] = fringe_period(fringes.positions)
        except LiedError as e:
            entry["inversion_error"] = f"{type(e).__name__}: {e}"
        try:
            entry["minima"] = find_fringes(pattern, pipe.config.analysis.window, MINIMA,
                                           pipe.config.analysis.smoothing, pipe.config.analysis.prominence).positions
            entry["maxima"] = find_fringes(pattern, pipe.config.analysis.window, MAXIMA,
                                           pipe.config.analysis.smoothing, pipe.config.analysis.prominence).positions
            entry["contrast"] = fringe_contrast(pattern, pipe.config.analysis.window, pipe.config.analysis.smoothing)
        except LiedError as e:
            entry["fringe_error"] = str(e)
        summary[label] = entry
    return summary


def _predicted(bond_length, window):
    n = np.arange(1, int(window[1] * bond_length / np.pi) + 1)
    k = n * np.pi / bond_length
    return k[(k >= window[0]) & (k <= window[1])]


def _figure1(pipe, summary):
    homo = summary.get("HOMO", {})
    predicted = _predicted(pipe.config.molecule.bond_length, pipe.config.analysis.window)
    report = {"predicted_minima_au": predicted}
    if "minima" in homo and len(predicted):
        comparison = compare_fringes(predicted, homo["minima"])
        report["minima_offsets_au"] = comparison.offsets
        report["minima_relative_offsets"] = comparison.offsets / predicted
    return report


def _figure2(pipe, summary):
    report = {}
    dk = next(iter(summary.values()))["k_grid_spacing_au"]
    homo = summary.get("HOMO", {})
    if "minima" in homo and "maxima" in summary.get("HOMO-1", {}):
        c = compare_fringes(homo["minima"], summary["HOMO-1"]["maxima"])
        report["homo_minima_vs_homo1_maxima"] = {"offsets_au": c.offsets, "max_offset_in_dk": c.max_offset / dk,
                                                 "out_of_phase": c.coincide(dk)}
    if "minima" in homo and "minima" in summary.get("HOMO-2", {}):
        c = compare_fringes(homo["minima"], summary["HOMO-2"]["minima"])
        report["homo2_minima_vs_homo_minima"] = {"offsets_au": c.offsets, "max_offset_in_dk": c.max_offset / dk,
                                                 "coincide": c.coincide(dk)}
    return report


def _figure3(variants):
    report = {}

    def first(name):
        entry = variants.get(name, {})
        return next(iter(entry.values())) if entry else {}

    r48, r12 = first("r4.8_reference"), first("r1.2_reference")
    if "period_au" in r48 and "period_au" in r12:
        report["period_ratio_1.2_over_4.8"] = r12["period_au"] / r48["period_au"]
    for row in ("r1.2", "r4.8"):
        ref, pulse = first(f"{row}_reference"), first(f"{row}_long")
        if ref.get("integrated_signal") and "integrated_signal" in pulse:
            report[f"{row}_long_over_single_cycle_signal"] = pulse["integrated_signal"] / ref["integrated_signal"]
        for column in ("theta", "bond", "long"):
            entry = first(f"{row}_{column}")
            if "minima" in ref and "minima" in entry:
                c = compare_fringes(ref["minima"], entry["minima"])
                report[f"{row}_{column}_minima_shift_in_dk"] = c.max_offset / ref["k_grid_spacing_au"]
            if "contrast" in ref and "contrast" in entry:
                report[f"{row}_{column}_contrast_vs_reference"] = [entry["contrast"], ref["contrast"]]
    return report


def cmd_figure(args, threads, strict, out_root):
    runs = load_preset(preset_path(f"figure{args.number}"))
    out_root = Path(out_root or f"figure{args.number}")
    variants = {}
    for name, config in runs:
        out = out_root if len(runs) == 1 else out_root / name
        _progress("figure", f"🚀 figure {args.number}: {name} -> {out}")
        pipe = Pipeline(config, out, threads, strict)
        pipe.write_run_config()
        variants[name] = _single_run(pipe)
        last = pipe
    report = {"figure": args.number, "variants": variants}
    if args.number == 1:
        report["comparison"] = _figure1(last, variants[runs[0][0]])
    elif args.number == 2:
        report["comparison"] = _figure2(last, variants[runs[0][0]])
    else:
        report["comparison"] = _figure3(variants)
    write_report(out_root / f"figure{args.number}.yaml", report)
    _say(f"✅ figure {args.number}: report {out_root / f'figure{args.number}.yaml'}")
    return report


HANDLERS = {
    "calibrate": cmd_calibrate,
    "relax": cmd_relax,
    "propagate": cmd_propagate,
    "pattern": cmd_pattern,
    "invert": cmd_invert,
    "ensemble": cmd_ensemble,
}


# ============================================================================== CLI ==============================================================================
def build_parser():
    parser = argparse.ArgumentParser(prog="lied_cli.py",
                                     description="Laser-induced electron diffraction in a 2D single-active-electron CO2 model")
    parser.add_argument("--config", "-c", help="JSON (or YAML) run configuration")
    parser.add_argument("--preset", "-p", help="Named preset from presets/ (figure1, figure2, figure3, desk)")
    parser.add_argument("--out", "-o", help="Output directory (overrides output_directory)")
    parser.add_argument("--threads", "-t", type=int, default=1, help="Worker threads for ensembles, calibration and FFTs")
    parser.add_argument("--strict", action="store_true", help="Treat time-resolution warnings as errors")
    parser.add_argument("--debug", "-d", action="store_true", help="Enable debug logging to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in HANDLERS:
        p = sub.add_parser(name)
        if name in ("propagate", "pattern", "invert"):
            p.add_argument("--input", "-i", action="append",
                           help="Input artifact (orbital / momentum map field file, pattern text or fixture YAML)")
    fig = sub.add_parser("figure")
    fig.add_argument("number", type=int, choices=(1, 2, 3))
    return parser


def resolve_config(args):
    if args.config and args.preset:
        raise ConfigurationError("give either --config or --preset, not both")
    if args.preset:
        runs = load_preset(preset_path(args.preset))
        if len(runs) != 1:
            raise ConfigurationError(f"preset '{args.preset}' defines {len(runs)} variants; run it with `figure`")
        return runs[0][1]
    if args.config:
        return load_config(args.config)
    return RunConfig()


def run(argv=None):
    """Parse arguments, run one subcommand and return the exit status"""
    args = build_parser().parse_args(argv)
    configure_logging(args.debug)
    _debug_log(f"🚀 {TOOLKIT['name']} {TOOLKIT['version']}: {args.command}")
    started = time.time()
    try:
        if args.threads < 1:
            raise ConfigurationError(f"--threads must be >= 1, got {args.threads}")
        set_fft_workers(args.threads)
        if args.command == "figure":
            cmd_figure(args, args.threads, args.strict, args.out)
        else:
            pipe = Pipeline(resolve_config(args), args.out, args.threads, args.strict)
            pipe.write_run_config()
            HANDLERS[args.command](pipe, args)
    except LiedError as e:
        sys.stderr.write(f"❌ {e}\n")
        sys.stderr.flush()
        return e.code
    except KeyboardInterrupt:
        sys.stderr.write("❌ Interrupted by user\n")
        return 130
    except Exception as e:
        sys.stderr.write(f"❌ Unexpected error: {e}\n")
        _debug_log(f"Exception traceback: {traceback.format_exc()}")
        return 1
    _debug_log(f"Finished {args.command} in {time.time() - started:.1f}s")
    return 0


def main():
    return run()


if __name__ == "__main__":
    sys.exit(main())
