"""
Integration tests for benchmark problems, convergence studies and the
method comparison harness.
"""
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from smtrt import bench
from smtrt.bench import (
    BUILTIN_SPECS,
    Reference,
    compare_methods,
    convergence_study,
    equilibrium_spec,
    estimate_order,
    front_position,
    larsen_spec,
    make_reference,
    marshak_spec,
)
from smtrt.driver import SolverConfig, TimeSchedule, run
from smtrt.errors import ConvergenceError
from smtrt.fem1d import DGField, Mesh1D


class TestProblemSpecs:
    """Test the built-in problem definitions."""

    def test_marshak_constants(self):
        """Test the gray Marshak wave setup."""
        spec = marshak_spec()
        assert spec.domain == (0.0, 0.05)
        assert spec.t_final == 2.5
        assert spec.T_left == 1000.0
        assert spec.T_initial == 1.0
        assert spec.groups.n_groups == 1
        assert spec.materials[0].cv == 3e12
        assert spec.sn == 6

    def test_larsen_constants(self):
        """Test the thin-thick-thin multigroup setup."""
        spec = larsen_spec()
        assert spec.domain == (0.0, 4.0)
        assert spec.groups.n_groups == 33
        assert spec.T_right == 1000.0
        assert spec.T_left == 1.0
        assert len(spec.materials) == 2
        assert spec.materials[1].cv == 8.1e10

    def test_larsen_regions(self):
        """Test that element midpoints in [1, 3) get the thick material."""
        problem = larsen_spec().build(n_elements=8, sn=2)
        assert problem.mesh.material_ids.tolist() == [0, 0, 1, 1, 1, 1, 0, 0]

    def test_larsen_region_override(self):
        """Test that the thick interval is configurable."""
        problem = larsen_spec(thick=(2.0, 3.0)).build(n_elements=4, sn=2)
        assert problem.mesh.material_ids.tolist() == [0, 0, 1, 0]

    def test_larsen_region_must_be_inside(self):
        """Test that a thick region touching the boundary is rejected."""
        with pytest.raises(ValueError):
            larsen_spec(thick=(0.0, 3.0))

    def test_build_needs_one_mesh_description(self):
        """Test that exactly one of n_elements and nodes is accepted."""
        spec = equilibrium_spec()
        with pytest.raises(ValueError):
            spec.build()
        with pytest.raises(ValueError):
            spec.build(n_elements=4, nodes=[0.0, 0.05])

    def test_graded_nodes(self):
        """Test a nonuniform mesh spanning the domain."""
        problem = marshak_spec().build(nodes=[0.0, 0.001, 0.005, 0.02, 0.05], sn=2)
        assert problem.mesh.n_elements == 4
        assert problem.quad.n_directions == 2

    def test_builtin_registry(self):
        """Test that every registered builder produces a buildable spec."""
        for name, builder in BUILTIN_SPECS.items():
            problem = builder().build(n_elements=4, sn=2)
            assert problem.mesh.n_elements == 4, name


class TestEstimateOrder:
    """Test log-log slope estimation."""

    def test_second_order(self):
        """Test that e = h^2 gives slope 2."""
        sizes = [0.4, 0.2, 0.1, 0.05]
        order, exact = estimate_order(sizes, [3.0 * h**2 for h in sizes])
        assert order == pytest.approx(2.0)
        assert not exact

    def test_round_off_errors_are_exact(self):
        """Test that errors at round-off level report exact with no slope."""
        assert estimate_order([0.1, 0.05], [1e-15, 3e-16]) == (None, True)

    def test_too_few_points(self):
        """Test that a single usable error gives no slope."""
        assert estimate_order([0.1, 0.05], [1e-3, 0.0]) == (None, False)


class TestFrontPosition:
    """Test wave front detection."""

    def test_leftmost_cold_element(self):
        """Test that the front is the left node of the first element below threshold."""
        mesh = Mesh1D(np.array([0.0, 1.0, 2.0, 3.0, 4.0]))
        T = DGField(mesh, np.repeat([1000.0, 800.0, 400.0, 100.0], 2))
        assert front_position(T) == 2.0

    def test_fully_heated(self):
        """Test that a slab hotter than the threshold everywhere reports the right end."""
        mesh = Mesh1D(np.array([0.0, 1.0, 2.0]))
        assert front_position(DGField(mesh, np.full(4, 900.0))) == 2.0


class TestConvergenceStudy:
    """Test the study harness on problems with known answers."""

    @pytest.fixture
    def equilibrium(self):
        return equilibrium_spec(T=100.0, t_final=0.008)

    @pytest.mark.timeout(120)
    def test_equilibrium_is_exact(self, equilibrium):
        """Test that a constant solution gives round-off errors and exact orders."""
        cfg = SolverConfig()
        ref = make_reference(equilibrium, 16, 1e-3, cfg)
        assert ref.t_final == pytest.approx(0.008)
        study = convergence_study(equilibrium, [2, 4], [4e-3, 2e-3], cfg, ref)
        assert len(study.errors) == 4
        assert max(study.errors.values()) < 1e-12
        assert study.space_exact and study.time_exact
        assert study.space_order is None
        table = study.table()
        assert list(table.columns) == ["method", "elements", "dt", "l2_error"]
        assert len(table) == 4

    @pytest.mark.timeout(120)
    def test_threads_do_not_change_results(self, equilibrium):
        """Test that a threaded study reproduces the sequential one."""
        cfg = SolverConfig(method="independent")
        ref = make_reference(equilibrium, 8, 1e-3, cfg)
        serial = convergence_study(equilibrium, [2, 4], [4e-3, 2e-3], cfg, ref)
        threaded = convergence_study(equilibrium, [2, 4], [4e-3, 2e-3], cfg, ref, threads=2)
        assert serial.errors == threaded.errors

    def test_reference_must_be_finer(self, equilibrium):
        """Test that a coarse reference is rejected."""
        ref = Reference("equilibrium", "consistent", 4e-3, 0.008, np.linspace(0.0, 0.05, 5),
                        np.full(8, 100.0), np.ones(8), np.zeros(8))
        with pytest.raises(ValueError, match="finer"):
            convergence_study(equilibrium, [4, 8], [4e-3], SolverConfig(), ref)

    @pytest.mark.timeout(120)
    def test_failed_member_is_excluded(self, equilibrium, mocker):
        """Test that a member whose run fails is logged and left out."""
        cfg = SolverConfig()
        ref = make_reference(equilibrium, 8, 1e-3, cfg)
        real_simulate = bench._simulate

        def flaky(spec, n, dt, run_cfg, t_final=None):
            if n == 2 and dt == 4e-3:
                raise ConvergenceError("outer iteration did not converge")
            return real_simulate(spec, n, dt, run_cfg, t_final)

        mocker.patch("smtrt.bench._simulate", side_effect=flaky)
        study = convergence_study(equilibrium, [2, 4], [4e-3, 2e-3], cfg, ref)
        assert (2, 4e-3) in study.excluded
        assert len(study.errors) == 3


class TestCompareMethods:
    """Test the sweep comparison table."""

    @pytest.mark.timeout(120)
    def test_equilibrium_ratio_is_one(self):
        """Test that every method needs one sweep per step at equilibrium."""
        spec = equilibrium_spec(T=100.0, t_final=0.008)
        table = compare_methods(spec, 4, [4e-3], SolverConfig())
        assert isinstance(table, pd.DataFrame)
        assert sorted(table["method"]) == ["consistent", "independent", "unaccelerated"]
        assert table["sweeps"].tolist() == [2, 2, 2]
        assert table["sweep_ratio"].tolist() == pytest.approx([1.0, 1.0, 1.0])

    def test_needs_unaccelerated_baseline(self):
        """Test that the baseline method is required."""
        with pytest.raises(ValueError, match="unaccelerated"):
            compare_methods(equilibrium_spec(), 4, [4e-3], SolverConfig(), methods=("consistent",))

    @pytest.mark.timeout(120)
    def test_failed_member_is_excluded(self, mocker):
        """Test that a failing method stays in the table as not converged with NaN counts."""
        spec = equilibrium_spec(T=100.0, t_final=0.008)
        real_simulate = bench._simulate

        def flaky(spec, n, dt, run_cfg, t_final=None):
            if run_cfg.method == "independent":
                raise ConvergenceError("outer iteration did not converge")
            return real_simulate(spec, n, dt, run_cfg, t_final)

        mocker.patch("smtrt.bench._simulate", side_effect=flaky)
        table = compare_methods(spec, 4, [4e-3], SolverConfig()).set_index("method")
        assert not table.loc["independent", "converged"]
        assert np.isnan(table.loc["independent", "sweeps"])
        assert np.isnan(table.loc["independent", "sweep_ratio"])
        assert table.loc["consistent", "converged"]
        assert table.loc["consistent", "sweep_ratio"] == pytest.approx(1.0)

    @pytest.mark.timeout(120)
    def test_failed_baseline_gives_nan_ratios(self, mocker):
        """Test that ratios against an unaccelerated run that failed are NaN."""
        spec = equilibrium_spec(T=100.0, t_final=0.008)
        real_simulate = bench._simulate

        def flaky(spec, n, dt, run_cfg, t_final=None):
            if run_cfg.method == "unaccelerated":
                raise ConvergenceError("unaccelerated iteration did not converge")
            return real_simulate(spec, n, dt, run_cfg, t_final)

        mocker.patch("smtrt.bench._simulate", side_effect=flaky)
        table = compare_methods(spec, 4, [4e-3], SolverConfig())
        assert table["sweep_ratio"].isna().all()
        assert table["converged"].tolist() == [True, True, False]

    @pytest.mark.timeout(900)
    def test_coarse_larsen_large_step_acceleration(self):
        """Test that SM converges at dt = 4e-2 and the unaccelerated scheme needs twice the sweeps or more."""
        spec = larsen_spec()
        cfg = SolverConfig(max_outer_unaccelerated=2000)
        table = compare_methods(spec, 32, [4e-2], cfg, methods=("consistent", "unaccelerated"),
                                t_final=4e-2).set_index("method")
        assert table.loc["consistent", "converged"]
        assert table.loc["consistent", "sweeps"] <= cfg.max_outer
        unacc = table.loc["unaccelerated"]
        assert (not unacc["converged"]) or (unacc["sweep_ratio"] >= 2.0)


@pytest.mark.slow
class TestDeskScaleBenchmarks:
    """Desk-scale acceptance runs (tens of minutes single-threaded)."""

    @pytest.mark.timeout(3600)
    @pytest.mark.parametrize("method", ["consistent", "independent"])
    def test_marshak_first_order(self, method):
        """Test first-order convergence in space and time against a finer reference."""
        spec = marshak_spec()
        cfg = SolverConfig(method=method)
        ref = make_reference(spec, 1024, 2.5e-4, cfg)
        study = convergence_study(spec, [32, 64, 128, 256], [4e-3, 2e-3, 1e-3, 5e-4], cfg, ref,
                                  threads=4)
        assert 0.7 <= study.space_order <= 1.3
        assert 0.7 <= study.time_order <= 1.3

    @pytest.mark.timeout(1800)
    def test_marshak_front_position(self):
        """Test that the 32-element front lies within 20% of a resolved run's front."""
        spec = marshak_spec()
        cfg = SolverConfig()
        coarse = run(spec.build(n_elements=32), cfg, TimeSchedule(4e-3, spec.t_final))
        fine = run(spec.build(n_elements=256), cfg, TimeSchedule(1e-3, spec.t_final))
        x_coarse = front_position(coarse.final.T)
        x_fine = front_position(fine.final.T)
        assert abs(x_coarse - x_fine) <= 0.2 * x_fine

    @pytest.mark.timeout(1800)
    def test_marshak_consistent_averages_monotone(self):
        """Test that consistent element averages stay monotone across the front."""
        spec = marshak_spec()
        traj = run(spec.build(n_elements=32), SolverConfig(), TimeSchedule(4e-3, 1.0))
        averages = traj.final.T.element_averages()
        assert np.all(np.diff(averages) <= 1e-10 * averages.max())

    @pytest.mark.timeout(3600)
    def test_larsen_thick_region_heats_first(self):
        """Test that at 1 ns the thick region's surface is hotter than the thin region minimum."""
        spec = larsen_spec()
        problem = spec.build(n_elements=512)
        traj = run(problem, SolverConfig(), TimeSchedule(4e-2, 1.0))
        T = traj.final.T
        averages = T.element_averages()
        ids = problem.mesh.material_ids
        thick_surface = averages[np.flatnonzero(ids == 1)[-1]]
        thin_minimum = averages[ids == 0].min()
        assert thick_surface > thin_minimum

    @pytest.mark.timeout(7200)
    def test_larsen_sweep_ratios(self):
        """Test at least 2x fewer sweeps at large dt and no more sweeps at small dt."""
        spec = larsen_spec()
        table = compare_methods(spec, 512, [4e-2], SolverConfig(), t_final=0.4, threads=3)
        accelerated = table[table["method"] != "unaccelerated"]
        assert accelerated["converged"].all()
        baseline = table[table["method"] == "unaccelerated"]
        if baseline["converged"].all():
            assert (accelerated["sweep_ratio"] >= 2.0).all()
        table = compare_methods(spec, 512, [2.5e-3], SolverConfig(), t_final=0.025, threads=3)
        assert (table.loc[table["method"] != "unaccelerated", "sweep_ratio"] >= 1.0).all()
