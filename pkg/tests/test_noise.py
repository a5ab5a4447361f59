import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rydscramble.experiment import EchoExperiment, run_otoc
from rydscramble.lattice import ChainGeometry, StateVector, build_basis, product_state
from rydscramble.noise import (
    DiscardedTrajectory,
    JumpKind,
    NoiseModel,
    PreparationMixture,
    apply_jump,
    noisy_otoc,
    run_noisy_echo,
    sample_trajectory_params,
)

SMALL = dict(n_sites=5, operator_site=3, model="rydberg", basis="blockaded", t_stop_us=0.6, t_step_us=0.1)


def test_zero_noise_schedule():
    tp = sample_trajectory_params(NoiseModel.noiseless(), ChainGeometry.regular(13), 0)
    assert tp.jumps == []
    assert not tp.offsets_um.any() and not tp.site_shift_mhz.any()
    np.testing.assert_array_equal(tp.positions_um, ChainGeometry.regular(13).positions)


@given(st.integers(0, 2 ** 31), st.integers(0, 10 ** 6))
def test_same_seed_same_sample(seed, index):
    m = NoiseModel(master_seed=seed)
    a = sample_trajectory_params(m, ChainGeometry.regular(13), index)
    b = sample_trajectory_params(m, ChainGeometry.regular(13), index)
    np.testing.assert_array_equal(a.offsets_um, b.offsets_um)
    assert a.jumps == b.jumps and a.prep_draw == b.prep_draw


def test_position_sigma():
    m = NoiseModel(depolarization_khz=0, dephasing_khz=0)
    off = np.concatenate([sample_trajectory_params(m, ChainGeometry.regular(13), k).offsets_um
                          for k in range(400)])
    assert off.std() == pytest.approx(0.3, rel=0.05)
    pos = sample_trajectory_params(m, ChainGeometry.regular(13), 1).positions_um
    assert np.all(np.diff(pos) > 0)


def test_jump_rate():
    m = NoiseModel(0, 0, 0, 400.0)
    n = [len(sample_trajectory_params(m, ChainGeometry.regular(10), k, 2.0).jumps) for k in range(300)]
    # 10 atoms * 0.4 /us * 2 us = 8 jumps expected
    assert np.mean(n) == pytest.approx(8.0, rel=0.05)


def test_dephase_is_global_phase_on_product_state():
    b = build_basis(5, "blockaded")
    psi = product_state(b, "rgrgg")
    out = StateVector(b, apply_jump(b, psi.amplitudes, JumpKind.DEPHASE, 2, 0.5))
    assert out.fidelity(psi) == pytest.approx(1.0)


def test_depolarize_z_branch_matches_dephase():
    b = build_basis(6)
    rng = np.random.default_rng(0)
    v = rng.normal(size=b.dim) + 1j * rng.normal(size=b.dim)
    v /= np.linalg.norm(v)
    np.testing.assert_allclose(apply_jump(b, v, "depolarize", 3, 0.9), apply_jump(b, v, "dephase", 3, 0.1))


def test_blockade_violating_flip_discards():
    b = build_basis(3, "blockaded")
    psi = product_state(b, "grg")
    with pytest.raises(DiscardedTrajectory):
        apply_jump(b, psi.amplitudes, "depolarize", 1, 0.1)  # sigma_x on site 1 -> rrg


def test_mixture_validation():
    with pytest.raises(ValueError):
        PreparationMixture((("ggggg", 0.7), ("rgggg", 0.5)))
    with pytest.raises(ValueError):
        PreparationMixture((("ggggg", -0.1),))
    mix = PreparationMixture((("rgggg", 0.25),))
    assert mix.residual() == pytest.approx(0.75)
    target = product_state(build_basis(5), "ggggg")
    assert str(mix.draw(target, 0.1)) == "rgggg"
    assert mix.draw(target, 0.9) is target


def test_zero_noise_equals_pure():
    exp = EchoExperiment(**SMALL)
    pure = run_otoc(replace_initial(exp, "g"))
    noisy = run_noisy_echo(exp, NoiseModel.noiseless(1))
    assert np.abs(noisy.c_values - pure.c_values).max() <= 1e-12
    assert noisy.discard_rate == 0.0


def replace_initial(exp, init):
    from dataclasses import replace

    return replace(exp, initial=init, combine_neel=False)


def test_determinism():
    exp = EchoExperiment(**SMALL)
    m = NoiseModel(n_trajectories=8, dephasing_khz=400, master_seed=11)
    a, b = run_noisy_echo(exp, m), run_noisy_echo(exp, m)
    np.testing.assert_array_equal(a.c_values, b.c_values)
    np.testing.assert_array_equal(a.c_stderr, b.c_stderr)


def test_stderr_scaling():
    exp = EchoExperiment(**SMALL)
    se = []
    for m in (150, 600):
        r = run_noisy_echo(exp, NoiseModel(n_trajectories=m, dephasing_khz=400, depolarization_khz=200))
        se.append(r.c_stderr[:, 1:].mean())
    assert se[0] / se[1] == pytest.approx(2.0, rel=0.2)


def test_contrast_monotone_in_dephasing():
    exp = EchoExperiment(**SMALL)
    contrast = []
    for rate in (0.0, 40.0, 400.0):
        r = run_noisy_echo(exp, NoiseModel(0, 0, 0, rate, n_trajectories=300))
        # contrast of F = 1 - 2C; noise drives C towards the uninformative 1/2
        contrast.append(np.abs(1 - 2 * r.c_values[2, 1:]).mean())
    assert contrast[0] >= contrast[1] >= contrast[2]


def test_discard_rate_in_metadata():
    exp = EchoExperiment(**{**SMALL, "initial": "Z2"})
    g = noisy_otoc(exp, NoiseModel(n_trajectories=6, depolarization_khz=2000))
    assert "discard_rate" in g.meta
    assert 0.0 <= g.meta["discard_rate"] <= 1.0
    assert g.stderr is not None


def test_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(dephasing_khz=-1)
    with pytest.raises(ValueError):
        NoiseModel(n_trajectories=0)
    with pytest.raises(ValueError):
        NoiseModel(depolarization_kind="amplitude")
