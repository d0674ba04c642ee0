#!/usr/bin/env python3
"""
Tests for imaginary-time relaxation, calibration and orbital rotation
"""

import numpy as np
import pytest

from lied_core import (
    CalibrationError,
    ConfigurationError,
    ConvergenceError,
    Units,
    Wavefunction,
    make_grid,
    mirror_y,
    parity_component,
)
from lied_eigensolver import (
    ANTISYMMETRIC,
    DEFAULT_FREE_PARAMS,
    DEFAULT_TARGETS,
    HOMO,
    HOMO_2,
    SYMMETRIC,
    CalibrationSettings,
    OrbitalSpec,
    RelaxSettings,
    calibrate,
    calibrate_model,
    check_nodal_structure,
    energy,
    gram_matrix,
    relax,
    residual,
    rotate_orbital,
    solve_orbitals,
)
from lied_model import AtomSite, MolecularGeometry, MolecularModel, PotentialField, build_potential, model_potential


def _harmonic(n=64, extent=8.0, omega=1.0):
    grid = make_grid(n, n, extent, extent)
    xx, yy = grid.mesh()
    return PotentialField(grid, 0.5 * omega ** 2 * (xx ** 2 + yy ** 2), mirror_symmetric=True)


def _soft_coulomb(n=32, extent=8.0, softening=0.8):
    grid = make_grid(n, n, extent, extent)
    return build_potential(None, [AtomSite((0.0, 0.0), 1.0, 1.0, 1.0, softening)], grid)


def _dense_ground_energy(potential):
    """Lowest eigenvalue of the same spectral Hamiltonian as a dense matrix"""
    grid = potential.grid

    def kinetic_1d(n, d):
        k = np.fft.fftfreq(n, d) * 2 * np.pi
        eye = np.eye(n)
        return np.real(np.fft.ifft(0.5 * k[:, np.newaxis] ** 2 * np.fft.fft(eye, axis=0), axis=0))

    tx = kinetic_1d(grid.nx, grid.dx)
    ty = kinetic_1d(grid.ny, grid.dy)
    h = np.kron(np.eye(grid.ny), tx) + np.kron(ty, np.eye(grid.nx)) + np.diag(potential.values.ravel())
    return float(np.linalg.eigvalsh(0.5 * (h + h.T))[0])


ANY = OrbitalSpec("ground", 1.0)
Y_ODD = OrbitalSpec("y-odd", 1.0, ANTISYMMETRIC, None)
# y-odd, x-even: (n_x, n_y) = (0, 1) at 2, then (2, 1) and (0, 3) at 4
Y_ODD_SECOND = OrbitalSpec("y-odd second", 1.0, ANTISYMMETRIC, SYMMETRIC, rank=1)


class TestRelax:
    def test_harmonic_ground_state(self):
        orbital = relax(_harmonic(), ANY, tol=1e-10)
        assert orbital.energy == pytest.approx(1.0, abs=1e-4)
        assert orbital.residual < 1e-3

    def test_harmonic_first_excited_sector(self):
        orbital = relax(_harmonic(), Y_ODD, tol=1e-10)
        assert orbital.energy == pytest.approx(2.0, abs=1e-4)
        assert orbital.parities[0] == ANTISYMMETRIC

    def test_orthogonal_to_lower(self):
        potential = _harmonic()
        ground = relax(potential, ANY, tol=1e-10)
        rng = np.random.default_rng(3)
        start = Wavefunction(potential.grid, rng.normal(size=potential.grid.shape))
        excited = relax(potential, ANY, lower_orbitals=[ground], tol=1e-10, initial=start)
        assert excited.energy == pytest.approx(2.0, abs=1e-4)
        assert abs(potential.grid.cell * np.vdot(ground.wavefunction.values, excited.wavefunction.values)) < 1e-10

    def test_matches_dense_diagonalization(self):
        potential = _soft_coulomb()
        orbital = relax(potential, ANY, tol=1e-11, settings=RelaxSettings(dtau=0.01, check_every=100))
        assert orbital.energy == pytest.approx(_dense_ground_energy(potential), abs=1e-4)

    def test_normalized_and_consistent(self):
        potential = _soft_coulomb()
        orbital = relax(potential, ANY, tol=1e-9)
        psi = orbital.wavefunction
        assert psi.grid.cell * np.vdot(psi.values, psi.values).real == pytest.approx(1.0, abs=1e-10)
        assert energy(potential, psi) == pytest.approx(orbital.energy)
        assert residual(potential, psi) == pytest.approx(orbital.residual)

    def test_parity_sector_is_kept(self):
        orbital = relax(_harmonic(), Y_ODD, tol=1e-9)
        wrong = parity_component(orbital.wavefunction.values, mirror_y, SYMMETRIC)
        assert np.max(np.abs(wrong)) < 1e-12

    def test_energy_history_non_increasing(self):
        orbital = relax(_harmonic(), ANY, tol=1e-10)
        steps = np.diff(orbital.history)
        assert np.all(steps <= 1e-10)

    def test_energy_never_rises_with_a_coarse_step(self):
        potential = _soft_coulomb()
        orbital = relax(potential, ANY, tol=1e-10, settings=RelaxSettings(dtau=0.5, check_every=5))
        assert np.all(np.diff(orbital.history) <= 0.0)
        assert orbital.energy == orbital.history[-1]
        assert energy(potential, orbital.wavefunction) == pytest.approx(orbital.energy, abs=1e-12)

    def test_rank_skips_deeper_states_of_the_sector(self):
        orbital = solve_orbitals(_harmonic(), [Y_ODD_SECOND], RelaxSettings(tol=1e-10))[0]
        assert orbital.energy == pytest.approx(4.0, abs=1e-3)
        assert orbital.parities == (ANTISYMMETRIC, SYMMETRIC)

    def test_rank_counts_lower_orbitals_already_solved(self):
        first_of_sector = OrbitalSpec("y-odd first", 1.0, ANTISYMMETRIC, SYMMETRIC)
        first, second = solve_orbitals(_harmonic(), [first_of_sector, Y_ODD_SECOND], RelaxSettings(tol=1e-10))
        assert first.energy == pytest.approx(2.0, abs=1e-3)
        assert second.energy == pytest.approx(4.0, abs=1e-3)

    def test_budget_exhausted(self):
        settings = RelaxSettings(check_every=10, max_steps=20)
        with pytest.raises(ConvergenceError) as info:
            relax(_soft_coulomb(), ANY, tol=1e-14, settings=settings)
        assert info.value.residual is not None

    def test_rejects_bad_tolerance(self):
        with pytest.raises(ConfigurationError):
            relax(_harmonic(), ANY, tol=0.0)

    def test_spec_validation(self):
        with pytest.raises(ConfigurationError):
            OrbitalSpec("bad", -0.5)
        with pytest.raises(ConfigurationError):
            OrbitalSpec("bad", 0.5, 2)
        with pytest.raises(ConfigurationError):
            OrbitalSpec("bad", 0.5, rank=-1)


@pytest.fixture(scope="module")
def co2_potential():
    return model_potential(MolecularModel(MolecularGeometry(2.2)), make_grid(64, 64, 16.0, 16.0))


@pytest.fixture(scope="module")
def orbitals(co2_potential):
    return solve_orbitals(co2_potential, DEFAULT_TARGETS, RelaxSettings(tol=1e-7))


class TestCO2Orbitals:
    def test_orthonormal(self, orbitals):
        g = gram_matrix(orbitals)
        assert np.max(np.abs(g - np.eye(3))) < 1e-8

    def test_nodal_structure(self, orbitals):
        for orbital in orbitals:
            assert check_nodal_structure(orbital) == []
        homo = orbitals[0]
        assert homo.parities == (ANTISYMMETRIC, ANTISYMMETRIC)
        assert orbitals[1].parities == (SYMMETRIC, ANTISYMMETRIC)

    def test_homo_sign_change_across_mirror_plane(self, orbitals):
        homo = orbitals[0].wavefunction
        grid = homo.grid
        column = np.argmin(np.abs(grid.x - 1.0))
        above = np.argmin(np.abs(grid.y - 2.2))
        below = np.argmin(np.abs(grid.y + 2.2))
        assert np.sign(homo.values[above, column].real) == -np.sign(homo.values[below, column].real)

    def test_energies_are_bound(self, orbitals):
        assert all(o.energy < 0 for o in orbitals)

    def test_homo2_lies_above_the_deepest_sigma_u(self, co2_potential, orbitals):
        deepest = relax(co2_potential, OrbitalSpec("2σu", HOMO_2.ionization_energy, ANTISYMMETRIC, SYMMETRIC),
                        settings=RelaxSettings(tol=1e-7))
        homo2 = orbitals[2]
        assert homo2.energy > deepest.energy + 1e-3
        overlap = co2_potential.grid.cell * np.vdot(deepest.wavefunction.values, homo2.wavefunction.values)
        assert abs(overlap) < 1e-6
        assert homo2.parities == (ANTISYMMETRIC, SYMMETRIC)


class TestCalibrate:
    @staticmethod
    def _site_potential(grid):
        def make(params):
            return build_potential(None, [AtomSite((0.0, 0.0), 1.0, 1.0, 1.0, params["a"])], grid)
        return make

    def test_already_converged(self):
        grid = make_grid(32, 32, 10.0, 10.0)
        make = self._site_potential(grid)
        settings = RelaxSettings(tol=1e-10)
        e = relax(make({"a": 1.0}), ANY, settings=settings).energy
        target = OrbitalSpec("ground", -e)
        result = calibrate([target], {"a": (0.3, 5.0)}, {"a": 1.0}, make, relax_settings=settings)
        assert result.iterations == 0
        assert result.params == {"a": 1.0}

    def test_one_parameter_fit(self):
        grid = make_grid(32, 32, 10.0, 10.0)
        make = self._site_potential(grid)
        target = OrbitalSpec("ground", 0.5)
        result = calibrate([target], {"a": (0.3, 5.0)}, {"a": 1.0}, make,
                           CalibrationSettings(energy_tol=1e-3), RelaxSettings(tol=1e-9))
        assert result.energies["ground"] == pytest.approx(-0.5, abs=1e-3)
        assert result.params["a"] != 1.0
        assert 0.3 <= result.params["a"] <= 5.0

    def test_unreachable_target(self):
        grid = make_grid(32, 32, 10.0, 10.0)
        make = self._site_potential(grid)
        with pytest.raises(CalibrationError) as info:
            calibrate([OrbitalSpec("ground", 50.0)], {"a": (0.5, 1.0)}, {"a": 0.8}, make,
                      CalibrationSettings(energy_tol=1e-3, max_iterations=5), RelaxSettings(tol=1e-7))
        assert "ground" in info.value.residuals

    def test_default_free_params_start_inside_bounds(self):
        initial = MolecularModel(MolecularGeometry(2.2)).params()
        for name, (lo, hi) in DEFAULT_FREE_PARAMS.items():
            assert lo < initial[name] < hi

    def test_multistart_is_deterministic(self):
        grid = make_grid(32, 32, 10.0, 10.0)
        make = self._site_potential(grid)
        target = OrbitalSpec("ground", 0.5)
        settings = CalibrationSettings(energy_tol=1e-3, starts=3, restarts=0)
        runs = [calibrate([target], {"a": (0.3, 5.0)}, {"a": 1.0}, make, settings, RelaxSettings(tol=1e-9))
                for _ in range(2)]
        assert runs[0].params == runs[1].params
        assert runs[0].energies["ground"] == pytest.approx(-0.5, abs=1e-3)

    @pytest.mark.slow
    def test_co2_three_targets_at_equilibrium(self):
        grid = make_grid(128, 128, 25.0, 25.0)
        model = MolecularModel(MolecularGeometry(Units.angstrom_to_bohr(1.16)))
        _, result = calibrate_model(model, grid, DEFAULT_TARGETS, relax_settings=RelaxSettings(tol=1e-8))
        assert set(result.residuals) == {"HOMO", "HOMO-1", "HOMO-2"}
        assert all(abs(r) < 5e-3 for r in result.residuals.values())

    def test_bounds_checked(self):
        grid = make_grid(32, 32, 10.0, 10.0)
        with pytest.raises(ConfigurationError):
            calibrate([HOMO], {"a": (0.3, 5.0)}, {"a": 9.0}, self._site_potential(grid))
        with pytest.raises(ConfigurationError):
            calibrate([], {"a": (0.3, 5.0)}, {"a": 1.0}, self._site_potential(grid))


class TestRotate:
    def test_quarter_turn_moves_node(self):
        grid = make_grid(64, 64, 10.0, 10.0)
        xx, yy = grid.mesh()
        g = np.exp(-(xx ** 2 + yy ** 2) / 2)
        source = Wavefunction(grid, yy * g).normalized()
        rotated = rotate_orbital(source, np.pi / 2)
        expected = Wavefunction(grid, xx * g).normalized()
        overlap = abs(grid.cell * np.vdot(expected.values, rotated.values))
        assert overlap > 0.999

    def test_zero_angle_is_identity(self):
        grid = make_grid(32, 32, 8.0, 8.0)
        xx, yy = grid.mesh()
        psi = Wavefunction(grid, np.exp(-(xx ** 2 + yy ** 2))).normalized()
        assert rotate_orbital(psi, 0.0) is psi

    def test_resample_onto_larger_grid(self):
        small = make_grid(32, 32, 8.0, 8.0)
        large = make_grid(64, 64, 16.0, 16.0)
        xx, yy = small.mesh()
        psi = Wavefunction(small, np.exp(-(xx ** 2 + yy ** 2) / 2)).normalized()
        moved = rotate_orbital(psi, 0.0, large)
        assert moved.grid == large
        lx, ly = large.mesh()
        expected = Wavefunction(large, np.exp(-(lx ** 2 + ly ** 2) / 2)).normalized()
        assert np.max(np.abs(moved.values - expected.values)) < 1e-6
