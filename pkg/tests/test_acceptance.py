"""Acceptance suite: one group of tests per acceptance criterion.

Each test carries ``@pytest.mark.criterion(number, title)``; the conftest
hook prints one PASS or FAIL line per criterion at the end of the run.
The full-length design runs (2D toys, aberrator, 3D smoke) are computed
once per session and shared between criteria.
"""
import functools
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from holodesign.config import DATA_DIR, build_scenario, config_hash, dump_config, load_config, parse_config
from holodesign.grid import AmplitudeImage, Medium, PlaneField, disc_source, make_grid
from holodesign.helmholtz import HelmholtzSettings, solve_helmholtz
from holodesign.io import (decode_field, decode_voxels, encode_field, encode_voxels, read_checkpoints,
                           write_checkpoints)
from holodesign.material import MaterialPair, binarization_fraction, binarize, mixture, sigmoid
from holodesign.objective import LossConfig, TargetSpec, cnr, correlation, default_lambda, loss
from holodesign.optim import AdamConfig, OptimState, adam_step, loss_and_gradient, optimize
from holodesign.oracles import dense_direct_solve, swept_fd_gradient
from holodesign.propagation import ASPlan, angular_spectrum, angular_spectrum_adjoint
from holodesign.workflows import evaluate_patch, run_design, thin_element_iasa, thin_element_phase_conjugate

from conftest import C0, F0, WAVELENGTH, small_scenario
from test_helmholtz import green_error, plane_wave_phase_error

criterion = pytest.mark.criterion


# -- shared full-length runs --------------------------------------------------------

@functools.lru_cache(maxsize=None)
def design_run(name):
    """Design the shipped scenario ``name`` for its configured iterations
    and score the continuous and binarized lenses with full-wave solves."""
    cfg = load_config(DATA_DIR / f"{name}.toml")
    scenario = build_scenario(cfg)
    start = time.perf_counter()
    result = run_design(cfg, scenario)
    cont = evaluate_patch(scenario, mixture(result.design))
    binary = evaluate_patch(scenario, binarize(result.design))
    return cfg, scenario, result, cont, binary, time.perf_counter() - start


@functools.lru_cache(maxsize=None)
def thin_element_run(name, method):
    cfg = load_config(DATA_DIR / f"{name}.toml")
    scenario = build_scenario(cfg)
    te = thin_element_iasa(cfg, scenario) if method == "iasa" else thin_element_phase_conjugate(cfg, scenario)
    return evaluate_patch(scenario, te.patch)


# -- 1 -------------------------------------------------------------------------------

C1 = (1, "solver correctness against closed forms and the dense oracle")


@criterion(*C1)
def test_c1_plane_wave_phase():
    per_lambda, _ = plane_wave_phase_error(12.0)
    print(f"plane-wave phase error {per_lambda:.3f} deg per wavelength")
    assert per_lambda < 1.0


@criterion(*C1)
def test_c1_green_function():
    err = green_error(12.0)
    print(f"Green's function relative L2 error {err:.4f}")
    assert err < 0.02


@criterion(*C1)
@settings(max_examples=4)
@given(st.integers(0, 2**31), st.integers(24, 40), st.sampled_from(["direct", "born", "gmres"]))
def test_c1_dense_oracle_agreement(seed, n, method):
    rng = np.random.default_rng(seed)
    grid = make_grid((n, n), WAVELENGTH / 8, 6)
    medium = Medium(grid, C0 + 400 * rng.random(grid.shape), 1000 + 300 * rng.random(grid.shape),
                    30 * rng.random(grid.shape))
    src = disc_source(grid, 9, 1.5e-3, F0)
    s = HelmholtzSettings(method=method)
    field = solve_helmholtz(medium, src, s).values
    ref = dense_direct_solve(medium, src).values
    assert np.linalg.norm(field - ref) / np.linalg.norm(ref) <= 10 * s.tolerance


# -- 2 -------------------------------------------------------------------------------

C2 = (2, "angular spectrum operator identities")
AS_PLAN = ASPlan((64, 64), WAVELENGTH / 4, C0, F0)


@criterion(*C2)
def test_c2_plane_wave_phase_shift():
    k = 2 * np.pi / WAVELENGTH
    kx = 2 * np.pi * 3 / (64 * AS_PLAN.dx)
    x = np.arange(64) * AS_PLAN.dx
    wave = np.exp(1j * kx * x)[:, None] * np.ones(64)
    out = angular_spectrum(AS_PLAN, PlaneField((64, 64), AS_PLAN.dx, wave), 4e-3).values
    expected = wave * np.exp(1j * np.sqrt(k * k - kx * kx) * 4e-3)
    assert np.max(np.abs(out - expected)) < 1e-12


@criterion(*C2)
@given(st.floats(1e-4, 5e-3), st.floats(1e-4, 5e-3), st.integers(0, 2**31))
def test_c2_composition(d1, d2, seed):
    rng = np.random.default_rng(seed)
    q = PlaneField((64, 64), AS_PLAN.dx, rng.standard_normal((64, 64)) + 1j * rng.standard_normal((64, 64)))
    two = angular_spectrum(AS_PLAN, angular_spectrum(AS_PLAN, q, d1), d2).values
    one = angular_spectrum(AS_PLAN, q, d1 + d2).values
    assert np.max(np.abs(two - one)) <= 1e-10 * np.max(np.abs(one))


@criterion(*C2)
@given(st.floats(-5e-3, 5e-3), st.integers(0, 2**31))
def test_c2_adjoint_dot_product(d, seed):
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal((2, 64, 64)) + 1j * rng.standard_normal((2, 64, 64))
    lhs = np.vdot(v, angular_spectrum(AS_PLAN, PlaneField((64, 64), AS_PLAN.dx, u), d).values)
    rhs = np.vdot(angular_spectrum_adjoint(AS_PLAN, PlaneField((64, 64), AS_PLAN.dx, v), d).values, u)
    assert abs(lhs - rhs) <= 1e-8 * abs(lhs)


# -- 3 -------------------------------------------------------------------------------

@criterion(3, "adjoint gradient matches central finite differences")
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_c3_gradient_fidelity(seed):
    scenario = small_scenario(48, 48, seed=seed)
    design = scenario.initial_design(seed)
    cfg = LossConfig(lam=default_lambda(scenario.target.q0.values))
    _, grad = loss_and_gradient(design, scenario, cfg)
    rng = np.random.default_rng(100 + seed)
    flat = rng.choice(grad.size, size=5, replace=False)
    probes = [tuple(int(i) for i in np.unravel_index(f, grad.shape)) for f in flat]
    fd, steps = swept_fd_gradient(design, scenario, cfg, probes)
    adjoint = np.array([grad[p] for p in probes])
    rel = np.abs(fd - adjoint) / np.abs(adjoint)
    print(f"seed {seed}: max relative error {rel.max():.2e}, steps {steps}")
    assert np.all(rel < 1e-3)


# -- 4 -------------------------------------------------------------------------------

C4 = (4, "binarization grows during design and costs little at convergence")


@criterion(*C4)
@pytest.mark.parametrize("name", ["toy2d_spots", "toy2d_glyph"])
def test_c4_binarization(name):
    cfg, scenario, result, cont, binary, seconds = design_run(name)
    by_iteration = {cp.iteration: cp.gamma for cp in result.checkpoints}
    early, late = binarization_fraction(by_iteration[10]), binarization_fraction(by_iteration[300])
    error = abs(cont.correlation - binary.correlation)
    print(f"{name}: fraction {early:.3f} at 10 -> {late:.3f} at 300, binarization error {error:.4f}, "
          f"{seconds:.0f} s")
    assert late > early
    assert error < 0.05


@criterion(*C4)
def test_c4_design_converges_on_two_spots():
    """Final correlation above 0.9 and the loss falling across each
    50-iteration window."""
    _, _, result, cont, _, _ = design_run("toy2d_spots")
    history = np.array(result.loss_history)
    windows = history[::50]
    assert cont.correlation > 0.9
    assert np.all(np.diff(windows) < 0)


@criterion(*C4)
def test_c4_saturation_grows_by_window():
    _, _, result, _, _, _ = design_run("toy2d_spots")
    fractions = [binarization_fraction(cp.gamma) for cp in result.checkpoints if cp.iteration % 50 == 0]
    assert np.all(np.diff(fractions) >= 0)


# -- 5 -------------------------------------------------------------------------------

C5 = (5, "physics-based design beats the thin element in correlation and CNR")


@criterion(*C5)
@pytest.mark.parametrize("binary_lens", [False, True], ids=["continuous", "binary"])
def test_c5_2d(binary_lens):
    _, _, _, cont, binary, _ = design_run("toy2d_spots")
    designed = binary if binary_lens else cont
    thin = thin_element_run("toy2d_spots", "iasa")
    print(f"2D design corr {designed.correlation:.3f} CNR {designed.cnr:.2f}; "
          f"thin element corr {thin.correlation:.3f} CNR {thin.cnr:.2f}")
    assert designed.correlation > thin.correlation
    assert designed.cnr > thin.cnr


@criterion(*C5)
def test_c5_3d_smoke():
    _, scenario, _, cont, binary, seconds = design_run("smoke3d")
    thin = thin_element_run("smoke3d", "iasa")
    print(f"3D {scenario.grid.shape}: design corr {cont.correlation:.3f} CNR {cont.cnr:.2f}, binarized "
          f"corr {binary.correlation:.3f} CNR {binary.cnr:.2f}; thin element corr {thin.correlation:.3f} "
          f"CNR {thin.cnr:.2f}; design {seconds:.0f} s")
    assert scenario.grid.shape == (64, 64, 64)
    assert cont.correlation > thin.correlation and cont.cnr > thin.cnr
    assert binary.correlation > thin.correlation and binary.cnr > thin.cnr


# -- 6 -------------------------------------------------------------------------------

@criterion(6, "through an aberrator the design beats phase conjugation")
def test_c6_aberrator():
    cfg, scenario, _, cont, binary, seconds = design_run("aberrator2d")
    assert cfg["aberrator"]["file"]
    conj = thin_element_run("aberrator2d", "conjugate")
    print(f"aberrator: design corr {cont.correlation:.3f} (binarized {binary.correlation:.3f}); "
          f"phase conjugation corr {conj.correlation:.3f}; {seconds:.0f} s")
    assert cont.correlation > conj.correlation
    assert binary.correlation > conj.correlation


# -- 7 -------------------------------------------------------------------------------

C7 = (7, "determinism and bit-exact formats")


@criterion(*C7)
def test_c7_checkpoints_byte_identical(tmp_path):
    scenario = small_scenario(seed=2)
    for run in ("a", "b"):
        result = optimize(scenario, AdamConfig(n_iterations=6), checkpoint_every=2, seed=5)
        write_checkpoints(tmp_path / run, result.checkpoints, scenario.grid.dx, "0f" * 32)
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    _, back = read_checkpoints(tmp_path / "a")
    assert [cp.iteration for cp in back] == [2, 4, 6]


@criterion(*C7)
@given(st.integers(0, 2**31), st.sampled_from([(7,), (5, 6), (3, 4, 5)]))
def test_c7_format_round_trips(seed, shape):
    rng = np.random.default_rng(seed)
    values = rng.standard_normal(shape) * 10.0 ** rng.integers(-300, 300, shape) + 1j * rng.standard_normal(shape)
    back = decode_field(encode_field(values, 1.25e-4, "ab" * 32))
    assert back.values.tobytes() == values.astype(np.complex128).tobytes()
    idx = rng.integers(0, 2, shape).astype(np.uint8)
    pair = MaterialPair((2035.0, 1128.0, 20.0), (2473.0, 1181.0, 5.0))
    vox = decode_voxels(encode_voxels(idx, 1.25e-4, pair))
    assert np.array_equal(vox.indices, idx) and vox.pair == pair


@criterion(*C7)
@pytest.mark.parametrize("name", ["toy2d_spots", "toy2d_glyph", "aberrator2d", "smoke3d"])
def test_c7_config_round_trip(name):
    cfg = load_config(DATA_DIR / f"{name}.toml")
    again = parse_config(dump_config(cfg), cfg.base_dir)
    assert again == cfg
    assert dump_config(again) == dump_config(cfg) and config_hash(again) == config_hash(cfg)


# -- 8 -------------------------------------------------------------------------------

C8 = (8, "closed-form unit checks")


@criterion(*C8)
def test_c8_closed_forms():
    q0 = np.random.default_rng(0).random((9, 9)) + 0.1
    mask = np.zeros(q0.shape, bool)
    mask[4, 4] = True
    target = TargetSpec(AmplitudeImage.from_array(q0, 1e-4), mask, 1e-2)
    assert loss(q0, target, LossConfig(lam=0.0)) == -1.0
    assert sigmoid(0.0) == 0.5
    scenario = small_scenario()
    patch = mixture(scenario.design(np.zeros(scenario.lens_shape)))
    pair = scenario.pair
    assert np.all(patch.c == (pair.material0.c + pair.material1.c) / 2)
    adam = AdamConfig(learning_rate=0.4, beta1=0.9, beta2=0.9, epsilon=1e-8)
    g = np.array([-3.0, 0.5, 2.0])
    state = adam_step(OptimState.start(np.zeros(3)), g, adam)
    assert np.allclose(state.gamma, -0.4 * g / (np.abs(g) + 1e-8), rtol=1e-14, atol=0)


@criterion(*C8)
@given(st.floats(1e-3, 1e3))
def test_c8_correlation_scale_invariance(a):
    rng = np.random.default_rng(7)
    q, q0 = rng.random((2, 12, 12)) + 0.05
    assert correlation(a * q, q0) == pytest.approx(correlation(q, q0), rel=1e-14)
    assert cnr(a * q, q0 > 0.5) == pytest.approx(cnr(q, q0 > 0.5), rel=1e-12)
