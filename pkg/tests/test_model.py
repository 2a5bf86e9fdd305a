import math

import numpy as np
import pytest

from sino.model import (
    ModelConfig,
    config_for_grid,
    count_params,
    dump_features,
    exact_burgers_params,
    freq2vec_eval,
    init_params,
    model_step,
    param_names,
    pi_block,
    rhs_eval,
    rollout,
    slb_apply,
)
from sino.solvers import PDESpec, SolverConfig, integrate, make_rhs, rk4_step
from sino.spectral import (
    GridSpec,
    forward_transform,
    freq_grid,
    grf_sample,
    inverse_transform,
    spectral_resample,
    two_thirds_mask,
)

TWO_PI = 2.0 * math.pi


def grid2(n=16, length=TWO_PI):
    return GridSpec(points=(n, n), length=(length, length))


def bandlimited(grid, seed, cutoff, channels=1):
    rng = np.random.default_rng(seed)
    f = rng.standard_normal((channels,) + grid.points)
    fg = freq_grid(grid)
    keep = (np.max(np.abs(fg.index), axis=0) <= cutoff).astype(float)
    return inverse_transform(forward_transform(f, grid) * keep, grid)


def small_cfg(grid, **kw):
    defaults = dict(c_in=1, K=3, C=4, dt_model=0.01, mlp_hidden=(8, 8))
    defaults.update(kw)
    return config_for_grid(grid, **defaults)


class TestParams:
    def test_init_deterministic(self):
        cfg = small_cfg(grid2())
        a, b = init_params(cfg, 7), init_params(cfg, 7)
        assert set(a) == set(b)
        assert all(np.array_equal(a[k], b[k]) for k in a)
        c = init_params(cfg, 8)
        assert any(not np.array_equal(a[k], c[k]) for k in a)

    def test_count_matches_shape_algebra(self):
        # independent shape count: MLP 2->64->64->16, three 1x1 maps, out map
        cfg = ModelConfig(c_in=1, K=8, C=64, dt_model=0.01, freq_norm=(8, 8),
                          mlp_hidden=(64, 64))
        mlp = (2 * 64 + 64) + (64 * 64 + 64) + (64 * 16 + 16)
        maps = 2 * (64 * 8 + 64) + (64 * 8 + 64) + (1 * 128 + 1)
        assert count_params(cfg) == mlp + maps
        got = init_params(cfg, 0)
        assert sum(v.size for v in got.values()) == count_params(cfg)

    def test_count_monotone_in_C_and_K(self):
        base = dict(c_in=2, dt_model=0.01, freq_norm=(8, 8))
        for a, b in (((4, 16), (4, 32)), ((4, 16), (8, 16))):
            lo = ModelConfig(K=a[0], C=a[1], **base)
            hi = ModelConfig(K=b[0], C=b[1], **base)
            assert count_params(hi) > count_params(lo)

    def test_ablations_change_param_set(self):
        g = grid2()
        assert "linear.w" not in param_names(small_cfg(g, no_linear=True))
        assert "pi.1.w" not in param_names(small_cfg(g, no_pi=True, P=2))
        assert "freq2vec.table" in param_names(small_cfg(g, no_freq2vec=True))
        assert "freq2vec.w0" not in param_names(small_cfg(g, no_freq2vec=True))


class TestFreq2Vec:
    def test_zero_weight_mlp_constant_table(self):
        g = grid2()
        cfg = small_cfg(g)
        params = {k: np.zeros_like(v) for k, v in init_params(cfg, 0).items()}
        n_layers = len(cfg.mlp_hidden)
        params[f"freq2vec.b{n_layers}"][:] = np.r_[1.0, 2.0, 3.0, 0.0, 0.0, 0.0]
        table = freq2vec_eval(params, cfg, g)
        for j, val in enumerate((1.0, 2.0, 3.0)):
            assert np.allclose(table[j], val)

    def test_symmetrized_table_gives_real_output(self):
        g = grid2()
        cfg = small_cfg(g)
        params = init_params(cfg, 3)
        table = freq2vec_eval(params, cfg, g)
        mirrored = np.roll(np.flip(table, axis=(1, 2)), shift=(1, 1), axis=(1, 2))
        assert np.max(np.abs(table - np.conj(mirrored))) < 1e-12
        u = bandlimited(g, 0, cutoff=7)
        out = slb_apply(u, table, cfg, g)  # raises HermitianViolation if not real
        assert out.shape == (cfg.slb_channels,) + g.points

    def test_free_table_resolution_bound(self):
        g = grid2(16)
        cfg = small_cfg(g, no_freq2vec=True)
        params = init_params(cfg, 1)
        from sino.errors import IncompatibleDomain
        with pytest.raises(IncompatibleDomain):
            freq2vec_eval(params, cfg, grid2(32))


class TestSlbApply:
    def test_unit_table_repeats_input(self):
        g = grid2()
        cfg = small_cfg(g)
        table = np.ones((cfg.K,) + g.points, dtype=complex)
        u = bandlimited(g, 1, cutoff=7)
        out = slb_apply(u, table, cfg, g)
        for j in range(cfg.K):
            assert np.max(np.abs(out[j] - u[0])) < 1e-12

    def test_derivative_multiplier_row(self):
        g = grid2(32)
        cfg = small_cfg(g, K=1)
        fg = freq_grid(g)
        table = fg.derivative_multiplier((1, 0))[np.newaxis]
        x = g.coords()
        out = slb_apply(np.sin(x[0])[np.newaxis], table, cfg, g)
        assert np.max(np.abs(out[0] - np.cos(x[0]))) < 1e-12

    def test_channel_order_input_major(self):
        g = grid2()
        cfg = small_cfg(g, c_in=2, K=2)
        table = np.stack([np.ones(g.points), 2.0 * np.ones(g.points)]).astype(complex)
        u = np.stack([bandlimited(g, 2, 7)[0], bandlimited(g, 3, 7)[0]])
        out = slb_apply(u, table, cfg, g)
        assert np.allclose(out[0], u[0]) and np.allclose(out[1], 2 * u[0])
        assert np.allclose(out[2], u[1]) and np.allclose(out[3], 2 * u[1])


class TestPiBlock:
    def test_convection_wiring(self):
        # W1 selects u, W2 selects du/dx: output is u * du/dx
        g = grid2(32)
        cfg = small_cfg(g, c_in=1, K=2, C=1, P=2)
        fg = freq_grid(g)
        table = np.stack([np.ones(g.points, complex), fg.derivative_multiplier((1, 0))])
        u = bandlimited(g, 4, cutoff=5)
        d = slb_apply(u, table, cfg, g)
        params = {
            "pi.0.w": np.array([[1.0, 0.0]]), "pi.0.b": np.zeros(1),
            "pi.1.w": np.array([[0.0, 1.0]]), "pi.1.b": np.zeros(1),
        }
        out = pi_block(d, params, cfg, g)
        mask = two_thirds_mask(g)
        expected = inverse_transform(forward_transform(d[0:1] * d[1:2], g) * mask, g)
        assert np.max(np.abs(out - expected)) < 1e-12

    def test_degenerate_factor_gives_affine(self):
        g = grid2()
        cfg = small_cfg(g, K=2, C=3, P=2, no_filter=True)
        rng = np.random.default_rng(5)
        d = rng.standard_normal((cfg.slb_channels,) + g.points)
        w1 = rng.standard_normal((3, cfg.slb_channels))
        b1 = rng.standard_normal(3)
        params = {"pi.0.w": w1, "pi.0.b": b1,
                  "pi.1.w": np.zeros((3, cfg.slb_channels)), "pi.1.b": np.ones(3)}
        out = pi_block(d, params, cfg, g)
        affine = np.tensordot(w1, d, axes=(1, 0)) + b1[:, None, None]
        assert np.max(np.abs(out - affine)) < 1e-12

    def test_post_filter_band_is_empty(self):
        g = grid2(32)
        cfg = small_cfg(g, K=2, C=2, P=2)
        params = init_params(cfg, 6)
        d = bandlimited(g, 7, cutoff=10, channels=cfg.slb_channels)
        out = pi_block(d, {k: v for k, v in params.items() if k.startswith("pi.")}, cfg, g)
        mask = two_thirds_mask(g)
        spec = forward_transform(out, g)
        assert np.max(np.abs(spec * (1.0 - mask))) < 1e-9


class TestRhsEval:
    def test_zero_params_zero_rhs(self):
        g = grid2()
        cfg = small_cfg(g)
        params = {k: np.zeros_like(v) for k, v in init_params(cfg, 0).items()}
        u = bandlimited(g, 8, cutoff=7)
        assert np.max(np.abs(rhs_eval(u, params, cfg, g))) == 0.0

    def test_exact_burgers_construction(self):
        g = grid2(32)
        cfg, params = exact_burgers_params(g, nu=0.01, dt_model=5e-3)
        u = bandlimited(g, 9, cutoff=10, channels=2)
        from sino.solvers import burgers_rhs
        assert np.max(np.abs(rhs_eval(u, params, cfg, g) - burgers_rhs(u, g, 0.01))) < 1e-10

    def test_shift_equivariance(self):
        g = grid2()
        cfg = small_cfg(g, c_in=2, K=3, C=4)
        params = init_params(cfg, 10)
        u = bandlimited(g, 11, cutoff=7, channels=2)
        for axis in (1, 2):
            shifted = np.roll(u, 1, axis=axis)
            lhs = rhs_eval(shifted, params, cfg, g)
            rhs = np.roll(rhs_eval(u, params, cfg, g), 1, axis=axis)
            assert np.max(np.abs(lhs - rhs)) < 1e-10

    def test_realness_residue(self):
        # symmetrization keeps outputs real for arbitrary parameters
        g = grid2()
        cfg = small_cfg(g, activation="tanh")
        params = init_params(cfg, 12)
        u = np.random.default_rng(13).standard_normal((1,) + g.points)
        out = rhs_eval(u, params, cfg, g)
        assert np.isrealobj(out)

    def test_resolution_transfer(self):
        # same Freq2Vec parameters on a 2x grid, bandlimited input: results
        # agree after spectral upsampling
        coarse = grid2(16)
        fine = grid2(32)
        cfg = small_cfg(coarse, c_in=1, K=3, C=4)
        params = init_params(cfg, 14)
        cutoff = (2 * 8) // 3 // 2  # half the coarse dealias cutoff
        u = bandlimited(coarse, 15, cutoff=cutoff)
        out_coarse = rhs_eval(u, params, cfg, coarse)
        out_fine = rhs_eval(spectral_resample(u, coarse, fine), params, cfg, fine)
        up = spectral_resample(out_coarse, coarse, fine)
        assert np.max(np.abs(out_fine - up)) < 1e-8

    def test_no_pi_output_affine_in_features(self):
        g = grid2()
        cfg = small_cfg(g, no_pi=True)
        params = init_params(cfg, 16)
        ua = bandlimited(g, 17, cutoff=7)
        ub = bandlimited(g, 18, cutoff=7)
        f = lambda u: rhs_eval(u, params, cfg, g)
        zero = np.zeros_like(ua)
        lhs = f(ua) + f(ub) - f(zero)
        assert np.max(np.abs(lhs - f(ua + ub))) < 1e-10

    def test_no_filter_only_removes_mask(self):
        g = grid2()
        cfg_f = small_cfg(g)
        cfg_nf = small_cfg(g, no_filter=True)
        params = init_params(cfg_f, 19)
        u = bandlimited(g, 20, cutoff=2)  # products reach mode 4 < cutoff 5
        # with input narrow enough that products stay under the cutoff,
        # the mask is a no-op and the two graphs agree
        a = rhs_eval(u, params, cfg_f, g)
        b = rhs_eval(u, params, cfg_nf, g)
        assert np.max(np.abs(a - b)) < 1e-11
        # with broadband input they differ
        u2 = bandlimited(g, 21, cutoff=8)
        assert np.max(np.abs(rhs_eval(u2, params, cfg_f, g) - rhs_eval(u2, params, cfg_nf, g))) > 1e-12


class TestStepAndRollout:
    def test_zero_params_identity_step(self):
        g = grid2()
        cfg = small_cfg(g)
        params = {k: np.zeros_like(v) for k, v in init_params(cfg, 0).items()}
        u = bandlimited(g, 22, cutoff=7)
        assert np.array_equal(model_step(u, params, cfg, g), u)

    def test_rollout_zero_steps(self):
        g = grid2()
        cfg = small_cfg(g)
        params = init_params(cfg, 23)
        u = bandlimited(g, 24, cutoff=7)
        snaps = rollout(u, params, cfg, g, 0)
        assert len(snaps) == 1 and np.array_equal(snaps[0], u)

    def test_rollout_deterministic(self):
        g = grid2()
        cfg = small_cfg(g)
        params = init_params(cfg, 25)
        u = 0.1 * bandlimited(g, 26, cutoff=7)
        a = rollout(u, params, cfg, g, 5)
        b = rollout(u, params, cfg, g, 5)
        assert all(x.tobytes() == y.tobytes() for x, y in zip(a, b))

    def test_exact_burgers_rollout_matches_reference(self):
        g = grid2(32)
        dt = 5e-3
        cfg, params = exact_burgers_params(g, nu=0.01, dt_model=dt)
        u0 = bandlimited(g, 27, cutoff=10, channels=2)
        pde = PDESpec(kind="burgers", nu=0.01)
        # 10 steps to 1e-8
        ours = rollout(u0, params, cfg, g, 10)[-1]
        ref = integrate(pde, SolverConfig(dt=dt, t_end=10 * dt, save_dt=10 * dt), g, u0)[-1]
        assert np.max(np.abs(ours - ref)) < 1e-8
        # 100 steps to 1e-6
        ours = rollout(u0, params, cfg, g, 100)[-1]
        ref = integrate(pde, SolverConfig(dt=dt, t_end=100 * dt, save_dt=100 * dt), g, u0)[-1]
        assert np.max(np.abs(ours - ref)) < 1e-6

    def test_euler_flag_reduces_order(self):
        g = grid2(32)
        dt = 2e-2
        cfg_rk, params = exact_burgers_params(g, nu=0.01, dt_model=dt)
        from dataclasses import replace
        cfg_eu = replace(cfg_rk, euler_time=True)
        u0 = bandlimited(g, 28, cutoff=8, channels=2)
        pde = PDESpec(kind="burgers", nu=0.01)
        fine = integrate(pde, SolverConfig(dt=1e-4, t_end=0.1, save_dt=0.1), g, u0)[-1]
        err_rk = np.linalg.norm(rollout(u0, params, cfg_rk, g, 5)[-1] - fine)
        err_eu = np.linalg.norm(rollout(u0, params, cfg_eu, g, 5)[-1] - fine)
        assert err_eu > 10.0 * err_rk


class TestDumpFeatures:
    def test_zero_params_zero_features(self):
        g = grid2()
        cfg = small_cfg(g)
        params = {k: np.zeros_like(v) for k, v in init_params(cfg, 0).items()}
        feats = dump_features(bandlimited(g, 29, 7), params, cfg, g)
        assert all(np.all(v == 0.0) for v in feats.values())

    def test_channel_count(self):
        g = grid2()
        cfg = small_cfg(g, c_in=2, K=3, C=5)
        feats = dump_features(bandlimited(g, 30, 7, channels=2), init_params(cfg, 31), cfg, g)
        assert len(feats) == cfg.c_in * cfg.K + 2 * cfg.C

    def test_burgers_slb_channel_is_x_derivative(self):
        g = grid2(32)
        cfg, params = exact_burgers_params(g, nu=0.01, dt_model=5e-3)
        u = bandlimited(g, 32, cutoff=10, channels=2)
        feats = dump_features(u, params, cfg, g)
        dx = inverse_transform(
            forward_transform(u[:1], g) * freq_grid(g).derivative_multiplier((1, 0)), g
        )
        assert np.max(np.abs(feats["slb.c0.k1"] - dx[0])) < 1e-10
