import math

import numpy as np
import pytest

from nlslab.errors import HypothesisError, MeshError, NonConvergenceError, RegimeError
from nlslab.exponents import ProblemParams, compute_exponents
from nlslab.grid import Field, Gaussian, GridSpec, sample_datum
from nlslab.mild import (
    NormMode,
    TimeMesh,
    Trajectory,
    default_grading,
    duhamel_all,
    duhamel_integral,
    linear_trajectory,
    load_trajectory,
    measure_constants,
    picard_solve,
    product_ratio,
    residual,
    save_trajectory,
    weighted_norm,
)
from nlslab.propagator import free_evolve

CUBIC_1D = ProblemParams(1, 1.0)
QUARTIC_1D = ProblemParams(1, 3.0)


def _const_traj(c, mesh, grid, exps):
    return Trajectory(mesh, grid, np.full((mesh.M,) + grid.shape, c, dtype=complex), exps)


def test_mesh_validation_and_nodes():
    for bad in [dict(T=0.0, M=4), dict(T=math.inf, M=4), dict(T=1.0, M=0), dict(T=1.0, M=4, grading=0.5)]:
        with pytest.raises(MeshError):
            TimeMesh(**bad)
    m = TimeMesh(2.0, 8, 2.0)
    assert m.nodes[-1] == 2.0
    np.testing.assert_allclose(m.nodes, 2.0 * (np.arange(1, 9) / 8) ** 2)
    assert m.steps.sum() == pytest.approx(2.0)
    assert m.index_of(m.nodes[3]) == 3
    with pytest.raises(MeshError):
        m.index_of(0.123)
    assert m.scaled(4.0).nodes[2] == pytest.approx(4.0 * m.nodes[2])


def test_default_grading():
    assert default_grading(compute_exponents(CUBIC_1D)) == 2.0
    local = compute_exponents(ProblemParams(2, 1.0))
    assert default_grading(local) == pytest.approx(max(2.0, 1 / local.delta))


def test_trajectory_shape_and_readonly():
    g = GridSpec(1, 2.0, 16)
    mesh = TimeMesh(1.0, 3)
    exps = compute_exponents(CUBIC_1D)
    with pytest.raises(ValueError):
        Trajectory(mesh, g, np.zeros((2, 16)), exps)
    tr = _const_traj(1.0, mesh, g, exps)
    with pytest.raises(ValueError):
        tr.values[0, 0] = 2.0
    assert len(tr.fields) == 3


def test_weighted_norm_zero_and_single_node():
    g = GridSpec(1, 4.0, 64)
    exps = compute_exponents(CUBIC_1D)
    assert weighted_norm(_const_traj(0.0, TimeMesh(1.0, 5), g, exps), NormMode.LOCAL_AB) == 0.0
    phi = sample_datum(Gaussian(1.0, 1.0), g)
    mesh = TimeMesh(0.5, 1)
    lin = linear_trajectory(phi, mesh, exps)
    expect = 0.5**exps.local_weight * lin.node_norms[0]
    assert weighted_norm(lin, "LocalAB") == pytest.approx(expect, rel=1e-15)


def test_linear_trajectory_matches_free_evolution():
    g = GridSpec(2, 4.0, 32)
    phi = sample_datum(Gaussian(1.0, 1.0), g)
    mesh = TimeMesh(1.0, 4)
    lin = linear_trajectory(phi, mesh, compute_exponents(ProblemParams(2, 0.5)))
    for j, t in enumerate(mesh.nodes):
        np.testing.assert_allclose(lin.field(j).values, free_evolve(phi, t).values, atol=1e-14)


def test_duhamel_vanishes_without_coupling():
    g = GridSpec(1, 4.0, 64)
    exps = compute_exponents(CUBIC_1D)
    lin = linear_trajectory(sample_datum(Gaussian(1.0, 1.0), g), TimeMesh(1.0, 8), exps)
    assert np.all(duhamel_all(lin, 0.0, 1.0).values == 0)


@pytest.mark.parametrize("rho,lam", [(1.0, 1.0), (2.0, -0.5 + 0.3j), (3.0, 2.0)])
def test_duhamel_of_constant_trajectory(rho, lam):
    # spatially constant integrand: only the zero frequency, where the rule is exact
    g = GridSpec(1, 3.0, 32)
    mesh = TimeMesh(1.5, 10, 2.0)
    c = 0.4 - 0.2j
    tr = _const_traj(c, mesh, g, compute_exponents(ProblemParams(1, rho)))
    out = duhamel_all(tr, lam, rho)
    for j, t in enumerate(mesh.nodes):
        assert np.max(np.abs(out.values[j] + 1j * lam * abs(c) ** rho * c * t)) < 1e-8
    mid = duhamel_integral(tr, mesh.nodes[4], lam, rho)
    np.testing.assert_allclose(mid.values, out.values[4], atol=1e-15)
    with pytest.raises(MeshError):
        duhamel_integral(tr, 0.777, lam, rho)


def test_picard_without_coupling_returns_linear_flow():
    g = GridSpec(1, 16.0, 256)
    phi = sample_datum(Gaussian(0.5, 1.0), g)
    mesh = TimeMesh(1.0, 8)
    traj, rep = picard_solve(phi, ProblemParams(1, 1.0, 0.0), mesh, NormMode.LOCAL_AB)
    assert rep.iterates == 1 and rep.converged
    np.testing.assert_array_equal(traj.values, linear_trajectory(phi, mesh, traj.exps).values)
    assert rep.residual == 0.0


def test_residual_detects_a_node_perturbation():
    g = GridSpec(1, 32.0, 512)
    phi = sample_datum(Gaussian(0.1, 1.0), g)
    mesh = TimeMesh(0.5, 16)
    traj, rep = picard_solve(phi, CUBIC_1D, mesh, NormMode.LOCAL_AB, tol=1e-13)
    assert rep.residual < 1e-12
    vals = np.array(traj.values)
    vals[-1] += 1e-3 * sample_datum(Gaussian(1.0, 1.0), g).values
    assert residual(traj.with_values(vals), phi, CUBIC_1D, NormMode.LOCAL_AB) > 1e-5
    # the linear flow alone is not a solution
    lin = linear_trajectory(phi, mesh, traj.exps)
    assert residual(lin, phi, CUBIC_1D, "LocalAB") > 1e3 * rep.residual


def test_zero_and_linear_seeds_agree():
    g = GridSpec(1, 32.0, 512)
    phi = sample_datum(Gaussian(0.1, 1.0), g)
    mesh = TimeMesh(0.5, 16)
    a, _ = picard_solve(phi, CUBIC_1D, mesh, "LocalAB", tol=1e-12)
    b, _ = picard_solve(phi, CUBIC_1D, mesh, "LocalAB", tol=1e-12, initial="zero")
    assert weighted_norm(a - b, "LocalAB") < 1e-11
    with pytest.raises(ValueError):
        picard_solve(phi, CUBIC_1D, mesh, "LocalAB", initial="random")


def test_nonconvergence_carries_report():
    g = GridSpec(1, 32.0, 512)
    phi = sample_datum(Gaussian(0.1, 1.0), g)
    with pytest.raises(NonConvergenceError) as err:
        picard_solve(phi, CUBIC_1D, TimeMesh(0.5, 16), "LocalAB", tol=1e-14, max_iter=1)
    rep = err.value.report
    assert rep.iterates == 1 and not rep.converged and len(rep.diffs) == 1
    assert "iterates" in rep.to_json()


def test_global_mode_rejects_large_data():
    g = GridSpec(1, 64.0, 1024)
    phi = sample_datum(Gaussian(2.0, 4.0), g)
    with pytest.raises(HypothesisError):
        picard_solve(phi, QUARTIC_1D, TimeMesh(10.0, 20), NormMode.GLOBAL_A)


def test_regime_mismatch():
    g = GridSpec(1, 8.0, 64)
    phi = sample_datum(Gaussian(0.1, 1.0), g)
    with pytest.raises(RegimeError):
        picard_solve(phi, QUARTIC_1D, TimeMesh(1.0, 4), NormMode.LOCAL_AB)
    with pytest.raises(RegimeError):
        picard_solve(phi, CUBIC_1D, TimeMesh(1.0, 4), NormMode.GLOBAL_A)


def test_product_ratio_basic():
    g = GridSpec(1, 8.0, 128)
    u = sample_datum(Gaussian(1.0, 1.0), g)
    assert product_ratio(u, u, 2.0) == 0.0
    r = product_ratio(u, u * 0.0, 2.0)
    assert 0 < r < 10


def test_measure_constants_are_positive():
    g = GridSpec(1, 32.0, 512)
    phi = sample_datum(Gaussian(0.1, 1.0), g)
    exps = compute_exponents(CUBIC_1D)
    c = measure_constants(phi, exps, TimeMesh(0.5, 16), T=0.5)
    assert c.dispersive_c > 0 and c.product_c > 0
    assert c.radius_r == pytest.approx((4 * c.k_combined * 0.5**exps.delta) ** -1.0)


def test_checkpoint_round_trip(tmp_path):
    g = GridSpec(2, 2.0, 16, staggered=True)
    rng = np.random.default_rng(0)
    mesh = TimeMesh(0.7, 3, 1.5)
    exps = compute_exponents(ProblemParams(2, 0.5))
    tr = Trajectory(mesh, g, rng.normal(size=(3, 16, 16)) + 1j * rng.normal(size=(3, 16, 16)), exps)
    save_trajectory(tr, tmp_path / "t.bin")
    back = load_trajectory(tmp_path / "t.bin")
    assert back.mesh == mesh and back.grid == g and back.exps == exps
    assert np.array_equal(back.values, tr.values)
    (tmp_path / "junk.bin").write_bytes(b"nope")
    with pytest.raises(ValueError):
        load_trajectory(tmp_path / "junk.bin")


def test_field_difference_helper():
    g = GridSpec(1, 2.0, 16)
    exps = compute_exponents(CUBIC_1D)
    a = _const_traj(1.0, TimeMesh(1.0, 2), g, exps)
    b = _const_traj(0.25, TimeMesh(1.0, 2), g, exps)
    assert np.all((a - b).values == 0.75)
    assert isinstance(a.at(1.0), Field)
