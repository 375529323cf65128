from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from surfafem.afem import (
    AfemConfig, AfemError, ConvergenceRecord, RECORD_COLUMNS, adapt_pde, adapt_surf, afem_run, dorfler_mark,
    experiment_config, loglog_slope, read_records, write_records,
)
from surfafem.discrete_surface import interpolate_geometry
from surfafem.estimators import geometric_indicators
from surfafem.fem import ProblemData
from surfafem.mesh import build_initial_mesh
from surfafem.problems import flat_sine

# ---------------------------------------------------------------- Dörfler marking


def test_dorfler_examples():
    assert list(dorfler_mark([4, 3, 2, 1], 0.5)) == [0]
    assert list(dorfler_mark([0, 2, 0, 1], 1.0)) == [1, 3]
    assert len(dorfler_mark(np.ones(10), 0.3)) == 3
    assert len(dorfler_mark(np.zeros(5), 0.5)) == 0
    with pytest.raises(ValueError):
        dorfler_mark([1.0], 0.0)
    with pytest.raises(ValueError):
        dorfler_mark([1.0], 1.5)


@given(
    st.lists(st.floats(0, 10, allow_nan=False, allow_infinity=False), min_size=1, max_size=12),
    st.floats(0.01, 1.0),
)
def test_dorfler_minimal_against_brute_force(values, theta):
    eta = np.array(values)
    sq = eta**2
    goal = theta * sq.sum()
    marked = dorfler_mark(eta, theta)
    assert len(set(marked.tolist())) == len(marked)
    if sq.sum() == 0:
        assert len(marked) == 0
        return
    assert sq[marked].sum() >= goal * (1 - 1e-12)
    best = next(
        size for size in range(1, len(eta) + 1)
        if any(sq[list(c)].sum() >= goal * (1 - 1e-12) for c in combinations(range(len(eta)), size))
    )
    if theta < 1:
        assert len(marked) == best


# ---------------------------------------------------------------- ADAPTSURF


def test_adapt_surf_flat_unchanged():
    mesh = build_initial_mesh("flat_patch")
    out, loops = adapt_surf(mesh, mesh.surface, AfemConfig(k=2), 1e-9)
    assert loops == 0 and out is mesh


def test_adapt_surf_octahedron_coarse_tolerance():
    mesh = build_initial_mesh("sphere")
    ds = interpolate_geometry(mesh, k=1)
    _, _, mu = geometric_indicators(mesh, mesh.surface, ds)
    # mu on the octahedron is 1.089, just above one
    assert np.allclose(mu, 1.0893163974770408, rtol=1e-12)
    out, loops = adapt_surf(mesh, mesh.surface, AfemConfig(k=1), 1.1)
    assert loops == 0 and out.n_elements == 8
    out, loops = adapt_surf(mesh, mesh.surface, AfemConfig(k=1), 1.0)
    assert loops >= 1


def test_adapt_surf_symmetric_refinement():
    mesh = build_initial_mesh("sphere")
    cfg = AfemConfig(k=1, indicator="mu")
    out, loops = adapt_surf(mesh, mesh.surface, cfg, 1e-3)
    _, _, mu = geometric_indicators(out, out.surface, interpolate_geometry(out, k=1))
    assert mu.max() <= 1e-3
    assert out.level.max() - out.level.min() <= 1


def test_adapt_surf_cap_carries_partial_mesh():
    mesh = build_initial_mesh("sphere")
    with pytest.raises(AfemError) as exc:
        adapt_surf(mesh, mesh.surface, AfemConfig(k=1, max_surf_loops=2), 1e-6)
    assert exc.value.mesh is not None and exc.value.mesh.n_elements > mesh.n_elements
    with pytest.raises(ValueError):
        adapt_surf(mesh, mesh.surface, AfemConfig(), 0.0)


# ---------------------------------------------------------------- ADAPTPDE


def test_adapt_pde_zero_data_single_solve():
    mesh = build_initial_mesh("flat_patch")
    zero = ProblemData(f=lambda x: np.zeros(x.shape[:-1]), dirichlet=lambda x: np.zeros(x.shape[:-1]))
    res = adapt_pde(mesh, zero, AfemConfig(r=1, k=1), 1e-8, "dirichlet")
    assert res.loops == 0 and res.mesh is mesh
    assert np.all(res.solution.U == 0) and np.all(res.eta == 0)


def test_adapt_pde_p1_rate_on_flat_square():
    mesh = build_initial_mesh("flat_patch")
    cfg = AfemConfig(r=1, k=1)
    dof, eta = [], []
    tol = 2.0
    while tol > 0.1:
        res = adapt_pde(mesh, flat_sine(), cfg, tol, "dirichlet")
        mesh = res.mesh
        dof.append(res.solution.space.N)
        eta.append(np.sqrt(np.sum(res.eta**2)))
        assert eta[-1] <= tol
        tol /= 2
    assert loglog_slope(dof, eta, 5) == pytest.approx(-0.5, abs=0.1)


def test_adapt_pde_cap():
    mesh = build_initial_mesh("flat_patch")
    with pytest.raises(AfemError):
        adapt_pde(mesh, flat_sine(), AfemConfig(r=1, k=1, max_pde_loops=1), 1e-6, "dirichlet")


# ---------------------------------------------------------------- outer loop


def test_schedule_and_estimator_bound():
    cfg = experiment_config("sphere_manufactured", eps0=0.9, rho=0.3, final_eps=0.2)
    records, _ = afem_run(cfg, "sphere_manufactured")
    eps = cfg.eps0
    for k, rec in enumerate(records):
        assert rec.iter == k
        assert rec.eps == eps  # repeated multiplication, bit for bit
        assert rec.eta <= rec.eps
        eps = eps * cfg.rho
    assert eps < cfg.final_eps <= records[-1].eps
    assert all(a.dof <= b.dof for a, b in zip(records, records[1:]))


def test_flat_reference_run_exact():
    records, _ = afem_run(experiment_config("flat_reference"), "flat_reference")
    assert all(r.h1_error <= 1e-10 for r in records)
    assert all(r.surf_loops == 0 and r.lam < 1e-12 and r.mu < 1e-12 for r in records)


def test_uniform_strategy():
    cfg = experiment_config("sphere_manufactured", strategy="uniform", levels=3)
    records, mesh = afem_run(cfg, "sphere_manufactured")
    assert [r.iter for r in records] == [0, 1, 2]
    assert mesh.n_elements == 8 * 4**2
    assert all(r.surf_loops == 0 and r.pde_loops == 0 for r in records)


def test_unknown_experiment():
    with pytest.raises(ValueError):
        afem_run(AfemConfig(), "torus")


def test_pole_concentration(half_sphere_mu):
    records, mesh, _ = half_sphere_mu
    assert records[-1].eps == pytest.approx(3 / 2**8)
    pole = np.argmin(np.linalg.norm(mesh.points - [0, 0, 1], axis=1))
    assert np.linalg.norm(mesh.points[pole] - [0, 0, 1]) < 1e-12
    adjacent = np.any(mesh.elements == pole, axis=1)
    assert mesh.level[adjacent].max() - np.median(mesh.level) >= 3


# ---------------------------------------------------------------- config and records


@pytest.mark.parametrize(
    "bad",
    [
        {"eps0": 0}, {"rho": 1.0}, {"rho": 0.0}, {"omega": -1}, {"indicator": "beta"}, {"theta": 0},
        {"theta": 1.2}, {"r": 0}, {"k": 0}, {"final_eps": 0}, {"solver_tol": 0}, {"m": 0}, {"mprime": -1},
        {"strategy": "random"}, {"levels": 0},
    ],
)
def test_config_validation(bad):
    with pytest.raises(ValueError):
        AfemConfig(**bad).validate()


def test_records_roundtrip(tmp_path):
    recs = [
        ConvergenceRecord(0, 1.0, 10, 0.5, 0.1, 0.2, 0.01, 0.05, float("nan"), 1, 2, 0.25),
        ConvergenceRecord(1, 0.5, 40, 0.25, 0.05, 0.1, 0.002, 0.012, 0.3, 0, 3, 0.5),
    ]
    path = tmp_path / "c.csv"
    write_records(path, recs, timing=False)
    header = path.read_text().splitlines()[0].split(",")
    assert tuple(header) == RECORD_COLUMNS
    data = read_records(path)
    assert list(data["dof"]) == [10, 40]
    assert np.isnan(data["h1_error"][0]) and data["h1_error"][1] == 0.3
    assert list(data["seconds"]) == [0, 0]


def test_loglog_slope_examples():
    n = np.array([10.0, 40, 160, 640])
    assert loglog_slope(n, 3 / n) == pytest.approx(-1.0, abs=1e-12)
    assert loglog_slope(n, 2 * n**-1.5) == pytest.approx(-1.5, abs=1e-12)
    assert loglog_slope(n, np.r_[5.0, 3 / n[1:]], window=3) == pytest.approx(-1.0, abs=1e-12)
    with pytest.raises(ValueError):
        loglog_slope(n, -n)
    with pytest.raises(ValueError):
        loglog_slope(n[:1], n[:1])
    with pytest.raises(ValueError):
        loglog_slope([5, 5, 5], [1.0, 0.5, 0.25])
