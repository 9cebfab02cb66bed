import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agcl.gridworld import OBS_SIZE, Action, make_env_factory
from agcl.learner import (
    MAGIC, ArchitectureMismatchError, GsrsShaper, Hyper, QParams,
    WeightSumError, adam_step, dump_params, epsilon, evaluate,
    gradient_check, gsrs_shaper, load_params, parse_params, rollout,
    save_params, train, transfer_sequence, transfer_weighted
)
from agcl.oomdp import OomdpState, make_task

from conftest import TINY_HYPER


class HandPolicy:
    """Turn until a tree is straight ahead, then break it."""
    def act(self, obs):
        return np.where(obs[:, 0] < 1, Action.BREAK, Action.RIGHT)


def _params(*values):
    return QParams((1, 1), np.array(values, dtype=float))


def test_transfer_sequence_copies():
    src = QParams.init((4, 3, 2), seed=1)
    dst = transfer_sequence(src)
    assert np.array_equal(dst.data, src.data)
    dst.data[0] += 1
    assert dst.data[0] != src.data[0]


def test_transfer_sequence_chain():
    src = QParams.init((4, 3, 2), seed=1)
    out = src
    for _ in range(3):
        out = transfer_sequence(out, (4, 3, 2))
    assert np.array_equal(out.data, src.data)


def test_transfer_weighted_combines():
    out = transfer_weighted([(_params(1, 3), 0.2), (_params(3, 5), 0.8)])
    assert out.data == pytest.approx([2.6, 4.6])


def test_transfer_weighted_identical_sources():
    src = QParams.init((5, 4, 3), seed=2)
    copies = [(transfer_sequence(src), beta) for beta in (0.1, 0.3, 0.6)]
    assert np.array_equal(transfer_weighted(copies).data, src.data)


@pytest.mark.parametrize('betas', [(0.5, 0.6), (1.2, -0.2), (0.3, 0.3)])
def test_transfer_weighted_rejects_weights(betas):
    with pytest.raises(WeightSumError):
        transfer_weighted([(_params(0, 0), b) for b in betas])


def test_transfer_weighted_rejects_architectures():
    with pytest.raises(ArchitectureMismatchError):
        transfer_weighted([(QParams.init((2, 2), 0), 0.5),
                           (QParams.init((2, 3, 2), 0), 0.5)])


def test_transfer_sequence_rejects_architecture():
    with pytest.raises(ArchitectureMismatchError):
        transfer_sequence(QParams.init((2, 2), 0), (3, 2))


def test_params_must_fit_layers():
    with pytest.raises(ArchitectureMismatchError):
        QParams((2, 2), np.zeros(5))


def test_codec_round_trip():
    src = QParams.init((42, 8, 5), seed=123)
    out = parse_params(dump_params(src))
    assert out.layers == src.layers
    assert out.seed == src.seed
    assert np.array_equal(out.data, src.data)


def test_codec_rejects_corruption():
    blob = bytearray(dump_params(QParams.init((3, 2), seed=0)))
    blob[-1] ^= 0xFF
    with pytest.raises(ValueError):
        parse_params(bytes(blob))


@pytest.mark.parametrize('cut', [2, 10, 30, -1])
def test_codec_rejects_truncation(cut):
    blob = dump_params(QParams.init((3, 2), seed=0))
    with pytest.raises(ValueError):
        parse_params(blob[:cut])


def test_codec_rejects_magic():
    blob = dump_params(QParams.init((3, 2), seed=0))
    assert blob.startswith(MAGIC)
    with pytest.raises(ValueError):
        parse_params(b'NOPE' + blob[4:])


def test_save_and_load(tmp_path):
    src = QParams.init((6, 4, 2), seed=9)
    path = tmp_path / 'params.bin'
    save_params(src, path)
    assert np.array_equal(load_params(path).data, src.data)


def test_gsrs_bonus(tree_rock_dfa, pogo_dfa):
    assert gsrs_shaper(tree_rock_dfa, 1, 3, c=2.0) == 2.0
    assert gsrs_shaper(tree_rock_dfa, 0, 0, c=3.0) == pytest.approx(1.0)
    trap = pogo_dfa.run([{'pogo'}])
    assert gsrs_shaper(pogo_dfa, pogo_dfa.initial, trap) == 0.0


def test_gsrs_shaper_follows_the_episode(tree_rock_dfa):
    shaper = GsrsShaper(tree_rock_dfa, c=6.0)
    assert shaper(frozenset()) == pytest.approx(2.0)
    assert shaper(frozenset({'tree'})) == pytest.approx(3.0)
    assert shaper(frozenset({'rock'})) == pytest.approx(6.0)
    shaper.reset()
    assert shaper.node == tree_rock_dfa.initial


def test_epsilon_anneals():
    hyper = Hyper(eps_start=1.0, eps_end=0.1, eps_fraction=0.5)
    assert epsilon(0, 100, hyper) == 1.0
    assert epsilon(25, 100, hyper) == pytest.approx(0.55)
    assert epsilon(50, 100, hyper) == pytest.approx(0.1)
    assert epsilon(100, 100, hyper) == pytest.approx(0.1)


def test_gradient_check():
    assert gradient_check() <= 1e-4


def test_train_rejects_empty_budget(trivial_task):
    init = QParams.init(TINY_HYPER.layers(OBS_SIZE, len(Action)), 0)
    with pytest.raises(ValueError):
        train(make_env_factory(trivial_task), init, 0, TINY_HYPER)


def test_train_rejects_architecture(trivial_task):
    with pytest.raises(ArchitectureMismatchError):
        train(make_env_factory(trivial_task), QParams.init((3, 5), 0), 10,
              TINY_HYPER)


def test_train_is_deterministic(trivial_task):
    factory = make_env_factory(trivial_task)
    init = QParams.init(TINY_HYPER.layers(OBS_SIZE, len(Action)), 4)
    a = train(factory, init, 250, TINY_HYPER, seed=3)
    b = train(factory, init, 250, TINY_HYPER, seed=3)

    assert np.array_equal(a.params.data, b.params.data)
    assert a.checkpoints == b.checkpoints
    assert a.returns == b.returns
    assert a.steps == 250 and not a.early_stopped
    assert [t for t, _ in a.checkpoints] == [100, 200, 250]
    assert not np.array_equal(a.params.data, init.data)


def test_train_reports_episodes(trivial_task):
    factory = make_env_factory(trivial_task)
    init = QParams.init(TINY_HYPER.layers(OBS_SIZE, len(Action)), 0)
    report = train(factory, init, 200, TINY_HYPER)
    assert len(report.returns) == len(report.successes) \
        == len(report.episode_ends)
    assert report.episode_ends == sorted(report.episode_ends)
    starts = [0, *report.episode_ends[:-1]]
    for ret, won, start, end in zip(report.returns, report.successes, starts,
                                    report.episode_ends):
        # Each step costs one, except a winning step which pays 1000.
        assert ret == 1000 * won - (end - start - won)


def test_hand_policy_solves_the_trivial_task(trivial_task):
    rate, steps = rollout(HandPolicy(), make_env_factory(trivial_task), 10)
    assert rate == 1.0
    assert steps <= 10 * 4


def test_rollout_needs_episodes(trivial_task):
    with pytest.raises(ValueError):
        rollout(HandPolicy(), make_env_factory(trivial_task), 0)


def test_random_params_fail_the_target(pogo_dfa, pogo_config):
    factory = make_env_factory(pogo_config.target, pogo_config.oomdp,
                               pogo_dfa, step_cap=100)
    params = QParams.init(Hyper().layers(OBS_SIZE, len(Action)), seed=0)
    assert evaluate(params, factory, 20) <= 0.1


@pytest.mark.slow
def test_learns_a_small_source():
    s0 = OomdpState.of({'width': 3, 'height': 3, 'trees_env': 1,
                        'trees_inv': 0})
    task = make_task(s0, s0.replace(trees_env=0, trees_inv=1), seed=0)
    hyper = dataclasses.replace(
        TINY_HYPER, hidden=(32,), replay_capacity=20_000, batch_size=32,
        learning_starts=500, target_sync=500, eval_every=1000,
        eval_episodes=20, eps_fraction=0.3, learning_rate=1e-3)
    init = QParams.init(hyper.layers(OBS_SIZE, len(Action)), 0)
    report = train(make_env_factory(task, step_cap=50), init, 20_000, hyper,
                   threshold=0.95)
    assert report.final_success >= 0.95


def test_initial_q_values_start_near_zero(trivial_task):
    obs = make_env_factory(trivial_task)().reset(0)
    params = QParams.init(Hyper().layers(OBS_SIZE, len(Action)), seed=0)
    assert np.abs(params.q(obs)).max() < 0.1


def test_adam_first_step_has_learning_rate_size():
    hyper = Hyper(learning_rate=0.01)
    m1, m2 = np.zeros(3), np.zeros(3)
    theta = adam_step(np.zeros(3), np.array([2.0, -0.5, 0.0]), m1, m2, 0,
                      hyper)
    assert theta == pytest.approx([-0.01, 0.01, 0.0], rel=1e-6)
    assert m1 == pytest.approx([0.2, -0.05, 0.0])


def test_zero_learning_rate_keeps_parameters(trivial_task):
    hyper = dataclasses.replace(TINY_HYPER, learning_rate=0.0)
    init = QParams.init(hyper.layers(OBS_SIZE, len(Action)), 2)
    report = train(make_env_factory(trivial_task), init, 250, hyper, seed=1)
    assert np.array_equal(report.params.data, init.data)


@given(st.floats(0, 1),
       st.lists(st.floats(-10, 10), min_size=2, max_size=2),
       st.lists(st.floats(-10, 10), min_size=2, max_size=2))
@settings(deadline=None)
def test_transfer_weighted_is_linear(beta, a, b):
    out = transfer_weighted([(_params(*a), beta), (_params(*b), 1 - beta)])
    expected = beta * np.array(a) + (1 - beta) * np.array(b)
    assert np.allclose(out.data, expected, rtol=1e-12, atol=1e-12)


def test_default_hyper_learns_the_trivial_task(trivial_task):
    hyper = Hyper()
    factory = make_env_factory(trivial_task, step_cap=50)
    init = QParams.init(hyper.layers(OBS_SIZE, len(Action)), 0)
    report = train(factory, init, 20_000, hyper, threshold=0.95)

    assert report.early_stopped
    assert report.final_success >= 0.95
    # Winning pays 1 after scaling, so no action is worth much more.
    obs = factory().reset(0)
    assert report.params.q(obs).max() < 1.1
