"""
A small deep Q-learner written against numpy, and the two ways of
handing its parameters from one task to the next.

Parameters live in one flat float64 vector so transfer is plain vector
arithmetic: copying for a single predecessor, a convex combination for
several.
"""
import io
import logging
import math
import struct
import zlib
from dataclasses import dataclass, field, fields

import numpy as np

from . import utils
from .automaton import accept_distance, advance_monitor
from .constants import (
    ADAM_BETA1, ADAM_BETA2, ADAM_EPS, BATCH_SIZE, EPS_END, EPS_FRACTION,
    EPS_START, EVAL_EPISODES, EVAL_EVERY, GAMMA, GRAD_CLIP,
    GRADCHECK_TOLERANCE, GSRS_SCALE, HIDDEN, HUBER_DELTA, LEARNING_RATE,
    LEARNING_STARTS, OUTPUT_GAIN, REPLAY_CAPACITY, REWARD_SCALE,
    SOURCE_THRESHOLD, TARGET_SYNC, WEIGHT_TOLERANCE
)
from .gridworld import Action


class ArchitectureMismatchError(ValueError):
    pass


class WeightSumError(ValueError):
    pass


class NonFiniteLossError(FloatingPointError):
    pass


@dataclass(frozen=True)
class Hyper:
    hidden: tuple = HIDDEN
    replay_capacity: int = REPLAY_CAPACITY
    batch_size: int = BATCH_SIZE
    gamma: float = GAMMA
    learning_rate: float = LEARNING_RATE
    adam_beta1: float = ADAM_BETA1
    adam_beta2: float = ADAM_BETA2
    adam_eps: float = ADAM_EPS
    eps_start: float = EPS_START
    eps_end: float = EPS_END
    eps_fraction: float = EPS_FRACTION
    target_sync: int = TARGET_SYNC
    eval_every: int = EVAL_EVERY
    eval_episodes: int = EVAL_EPISODES
    source_threshold: float = SOURCE_THRESHOLD
    huber_delta: float = HUBER_DELTA
    grad_clip: float = GRAD_CLIP
    reward_scale: float = REWARD_SCALE
    learning_starts: int = LEARNING_STARTS
    gsrs_scale: float = GSRS_SCALE

    def to_dict(self):
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data['hidden'] = list(self.hidden)
        return data

    def layers(self, n_inputs, n_actions):
        return (n_inputs, *self.hidden, n_actions)


# Network

def n_params(layers):
    return sum((a + 1) * b for a, b in zip(layers, layers[1:]))


def _views(data, layers):
    out = []
    i = 0
    for a, b in zip(layers, layers[1:]):
        w = data[i:i + a * b].reshape(a, b)
        i += a * b
        out.append((w, data[i:i + b]))
        i += b
    return out


def forward(data, layers, x):
    """
    Q-values of a batch of observations, shape ``(batch, actions)``.
    """
    h = np.atleast_2d(x)
    views = _views(data, layers)
    for k, (w, b) in enumerate(views):
        h = h @ w + b
        if k < len(views) - 1:
            h = np.maximum(h, 0.0)
    return h


def loss_and_grad(data, layers, x, actions, targets, delta=HUBER_DELTA):
    """
    Mean Huber loss of ``Q(x, actions)`` against ``targets`` and its
    gradient with respect to every parameter.
    """
    views = _views(data, layers)
    hs = [np.atleast_2d(x)]
    for k, (w, b) in enumerate(views):
        z = hs[-1] @ w + b
        hs.append(np.maximum(z, 0.0) if k < len(views) - 1 else z)

    n = len(actions)
    rows = np.arange(n)
    err = hs[-1][rows, actions] - targets
    small = np.abs(err) <= delta
    loss = np.where(small, 0.5 * err ** 2,
                    delta * (np.abs(err) - 0.5 * delta)).mean()

    dz = np.zeros_like(hs[-1])
    dz[rows, actions] = np.clip(err, -delta, delta) / n

    grads = []
    for k in range(len(views) - 1, -1, -1):
        w, _ = views[k]
        grads.append((hs[k].T @ dz, dz.sum(axis=0)))
        if k:
            dz = (dz @ w.T) * (hs[k] > 0)

    flat = np.concatenate([g.ravel() for pair in reversed(grads) for g in pair])
    return float(loss), flat


@dataclass(eq=False)
class QParams:
    layers: tuple
    data: np.ndarray
    seed: int = 0

    def __post_init__(self):
        self.layers = tuple(int(n) for n in self.layers)
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.shape != (n_params(self.layers),):
            raise ArchitectureMismatchError(
                f'{self.data.size} parameters do not fit layers {self.layers}')

    @classmethod
    def init(cls, layers, seed, output_gain=OUTPUT_GAIN):
        """
        He-normal weights and zero biases, the output weights scaled by
        ``output_gain``.

        Unscaled, the outputs start with a spread near 1.4, above any
        scaled return. The max in the bootstrap target turns that into
        optimism the target network drains only slowly.
        """
        rng = np.random.default_rng(seed)
        parts = []
        pairs = list(zip(layers, layers[1:]))
        for k, (a, b) in enumerate(pairs):
            std = math.sqrt(2.0 / a)
            if k == len(pairs) - 1:
                std *= output_gain
            parts.append(rng.normal(0.0, std, size=a * b))
            parts.append(np.zeros(b))
        return cls(tuple(layers), np.concatenate(parts), seed)

    def act(self, obs):
        return np.argmax(forward(self.data, self.layers, obs), axis=1)

    def q(self, obs):
        return forward(self.data, self.layers, obs)


def _check_architecture(params, layers):
    if tuple(params.layers) != tuple(layers):
        raise ArchitectureMismatchError(
            f'layers {tuple(params.layers)} differ from {tuple(layers)}')


def transfer_sequence(src, layers=None):
    if layers is not None:
        _check_architecture(src, layers)
    return QParams(src.layers, src.data.copy(), src.seed)


def transfer_weighted(sources):
    """
    The convex combination ``sum(beta_i * params_i)`` of ``(params, beta)``
    pairs, all of the same architecture.
    """
    if not sources:
        raise ValueError('nothing to transfer from')
    first = sources[0][0]
    for params, beta in sources:
        _check_architecture(params, first.layers)
        if beta < 0:
            raise WeightSumError(f'negative weight {beta}')
    total = math.fsum(beta for _, beta in sources)
    if abs(total - 1) > WEIGHT_TOLERANCE:
        raise WeightSumError(f'weights sum to {total}')

    # Written as first + sum(beta * (params - first)), equal to the plain
    # weighted sum, exact whenever the sources agree.
    out = first.data.copy()
    for params, beta in sources[1:]:
        out += beta * (params.data - first.data)
    return QParams(first.layers, out, first.seed)


# Serialization

MAGIC = b'AGQP'
FORMAT_VERSION = 1


def dump_params(params):
    """
    Little-endian layout: magic, format version, layer count, the layer
    sizes, seed, parameter count, CRC-32 of the data, then the data as
    float64.
    """
    data = params.data.astype('<f8').tobytes()
    n = len(params.layers)
    return b''.join((
        MAGIC,
        struct.pack('<HH', FORMAT_VERSION, n),
        struct.pack(f'<{n}I', *params.layers),
        struct.pack('<QQI', params.seed & (2 ** 64 - 1), params.data.size,
                    zlib.crc32(data)),
        data,
    ))


def parse_params(blob):
    try:
        return _parse_params(io.BytesIO(blob))
    except struct.error:
        raise ValueError('parameter header is truncated') from None


def _parse_params(f):
    if f.read(4) != MAGIC:
        raise ValueError('not a parameter file')
    version, n = struct.unpack('<HH', f.read(4))
    if version != FORMAT_VERSION:
        raise ValueError(f'unsupported parameter format {version}')
    layers = struct.unpack(f'<{n}I', f.read(4 * n))
    seed, size, crc = struct.unpack('<QQI', f.read(20))
    data = f.read(8 * size)
    if len(data) != 8 * size or zlib.crc32(data) != crc:
        raise ValueError('parameter data is truncated or corrupt')
    return QParams(layers, np.frombuffer(data, dtype='<f8').copy(), seed)


def save_params(params, path):
    with open(path, 'wb') as fd:
        fd.write(dump_params(params))


def load_params(path):
    with open(path, 'rb') as fd:
        return parse_params(fd.read())


# Reward shaping

def gsrs_shaper(d, before, after, c=GSRS_SCALE):
    """
    Bonus ``c / (1 + distance)`` for the node the monitor moved to; no
    bonus once acceptance is out of reach.
    """
    dist = accept_distance(d, after)
    return 0.0 if dist == math.inf else c / (1 + dist)


class GsrsShaper:
    """Runs the automaton alongside the episode and pays the bonus."""
    def __init__(self, d, c=GSRS_SCALE):
        self.dfa = d
        self.c = c
        self.node = d.initial

    def reset(self):
        self.node = self.dfa.initial

    def __call__(self, labels):
        before = self.node
        self.node, _ = advance_monitor(self.dfa, before, labels)
        return gsrs_shaper(self.dfa, before, self.node, self.c)


# Training

class Replay:
    def __init__(self, capacity, n_inputs):
        self.obs = np.zeros((capacity, n_inputs))
        self.next_obs = np.zeros((capacity, n_inputs))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.terminal = np.zeros(capacity, dtype=bool)
        self.capacity = capacity
        self.size = 0
        self._next = 0

    def add(self, obs, action, reward, next_obs, terminal):
        i = self._next
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.terminal[i] = terminal
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng, n):
        idx = rng.integers(self.size, size=n)
        return (self.obs[idx], self.actions[idx], self.rewards[idx],
                self.next_obs[idx], self.terminal[idx])


@dataclass
class TrainReport:
    params: QParams
    steps: int = 0
    eval_steps: int = 0
    returns: list = field(default_factory=list)
    successes: list = field(default_factory=list)
    episode_ends: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)
    early_stopped: bool = False

    @property
    def exhausted(self):
        return not self.early_stopped

    @property
    def final_success(self):
        return self.checkpoints[-1][1] if self.checkpoints else 0.0


def epsilon(t, budget, hyper):
    span = max(1, int(hyper.eps_fraction * budget))
    frac = min(1.0, t / span)
    return hyper.eps_start + frac * (hyper.eps_end - hyper.eps_start)


def adam_step(theta, grad, m1, m2, t, hyper):
    """
    One bias-corrected Adam step, ``t`` counting the steps before it.
    The moment vectors ``m1`` and ``m2`` are updated in place.
    """
    b1, b2 = hyper.adam_beta1, hyper.adam_beta2
    m1 *= b1
    m1 += (1 - b1) * grad
    m2 *= b2
    m2 += (1 - b2) * grad ** 2
    m1_hat = m1 / (1 - b1 ** (t + 1))
    m2_hat = m2 / (1 - b2 ** (t + 1))
    return theta - hyper.learning_rate * m1_hat / (np.sqrt(m2_hat)
                                                   + hyper.adam_eps)


def rollout(policy, env_factory, episodes, seed=0):
    """
    Run ``episodes`` greedy episodes side by side, one batched forward
    pass per step. Returns the success rate and the steps taken.
    """
    if episodes < 1:
        raise ValueError('need at least one episode')
    envs = [env_factory() for _ in range(episodes)]
    obs = np.stack([env.reset(utils.derive_seed(seed, 'eval', i))
                    for i, env in enumerate(envs)])
    active = np.ones(episodes, dtype=bool)
    steps = 0
    while active.any():
        idx = np.flatnonzero(active)
        actions = policy.act(obs[idx])
        for i, a in zip(idx, actions):
            obs[i], _, done, _ = envs[i].step(int(a))
            steps += 1
            if done:
                active[i] = False

    wins = sum(env.success for env in envs)
    return wins / episodes, steps


def evaluate(params, env_factory, episodes, seed=0):
    return rollout(params, env_factory, episodes, seed)[0]


def train(env_factory, init, budget, hyper=None, shaper=None, seed=0,
          threshold=None):
    """
    Epsilon-greedy Q-learning with replay and a target network.

    Every environment step counts against ``budget``; evaluation steps
    are reported apart. With a ``threshold`` training stops at the first
    evaluation whose success rate reaches it. ``shaper`` maps the labels
    of each step to a bonus added to the learning reward only.
    """
    hyper = hyper or Hyper()
    if budget < 1:
        raise ValueError(f'budget must be at least one step, not {budget}')

    env = env_factory()
    rng = np.random.default_rng(utils.derive_seed(seed, 'train'))
    episode = 0
    obs = env.reset(utils.derive_seed(seed, 'episode', episode))
    layers = hyper.layers(obs.size, len(Action))
    _check_architecture(init, layers)

    theta = init.data.copy()
    frozen = theta.copy()
    m1 = np.zeros_like(theta)
    m2 = np.zeros_like(theta)
    updates = 0
    replay = Replay(min(hyper.replay_capacity, budget), obs.size)
    starts = min(max(hyper.batch_size, hyper.learning_starts),
                 max(1, budget // 10))
    n_actions = layers[-1]

    report = TrainReport(params=None)
    ep_return = 0.0
    if shaper is not None:
        shaper.reset()

    for t in range(1, budget + 1):
        if rng.random() < epsilon(t, budget, hyper):
            action = int(rng.integers(n_actions))
        else:
            action = int(np.argmax(forward(theta, layers, obs)[0]))

        next_obs, reward, done, labels = env.step(action)
        ep_return += reward
        if shaper is not None:
            reward += shaper(labels)
        truncated = done and not env.success and env.steps >= env.step_cap
        replay.add(obs, action, reward * hyper.reward_scale, next_obs,
                   done and not truncated)
        obs = next_obs

        if t >= starts:
            x, a, r, x2, term = replay.sample(rng, hyper.batch_size)
            q_next = forward(frozen, layers, x2).max(axis=1)
            targets = r + hyper.gamma * q_next * ~term
            loss, grad = loss_and_grad(theta, layers, x, a, targets,
                                       hyper.huber_delta)
            if not math.isfinite(loss):
                raise NonFiniteLossError(
                    f'loss became {loss} at step {t} (episode {episode}, '
                    f'|theta|={np.linalg.norm(theta):.3g})')
            norm = np.linalg.norm(grad)
            if norm > hyper.grad_clip:
                grad *= hyper.grad_clip / norm
            theta = adam_step(theta, grad, m1, m2, updates, hyper)
            updates += 1

        if t % hyper.target_sync == 0:
            frozen = theta.copy()

        if done:
            report.returns.append(ep_return)
            report.successes.append(bool(env.success))
            report.episode_ends.append(t)
            episode += 1
            ep_return = 0.0
            obs = env.reset(utils.derive_seed(seed, 'episode', episode))
            if shaper is not None:
                shaper.reset()

        if t % hyper.eval_every == 0 or t == budget:
            policy = QParams(layers, theta, init.seed)
            rate, used = rollout(policy, env_factory, hyper.eval_episodes,
                                 seed)
            report.checkpoints.append((t, rate))
            report.eval_steps += used
            logging.debug('step %d: success %.2f over %d episodes', t, rate,
                          hyper.eval_episodes)
            if threshold is not None and rate >= threshold:
                report.early_stopped = True
                report.steps = t
                break
        report.steps = t

    report.params = QParams(layers, theta, init.seed)
    if report.early_stopped:
        logging.info('reached %.2f success after %s steps',
                     report.final_success, utils.spell_count(report.steps))
    else:
        logging.info('budget of %s steps used up at %.2f success',
                     utils.spell_count(report.steps), report.final_success)
    return report


def gradient_check(layers=(6, 8, 7, 3), seed=0, batch=16, h=1e-5):
    """
    Relative error between analytic and central-difference gradients on a
    random net, in both the quadratic and the linear part of the loss.
    """
    rng = np.random.default_rng(seed)
    params = QParams.init(layers, seed)
    x = rng.normal(size=(batch, layers[0]))
    actions = rng.integers(layers[-1], size=batch)

    worst = 0.0
    for delta, spread in ((1e6, 1.0), (0.05, 10.0)):
        targets = rng.normal(0.0, spread, size=batch)
        _, analytic = loss_and_grad(params.data, layers, x, actions, targets,
                                    delta)
        numeric = np.empty_like(analytic)
        for i in range(analytic.size):
            bumped = params.data.copy()
            bumped[i] += h
            up, _ = loss_and_grad(bumped, layers, x, actions, targets, delta)
            bumped[i] -= 2 * h
            down, _ = loss_and_grad(bumped, layers, x, actions, targets, delta)
            numeric[i] = (up - down) / (2 * h)

        err = np.linalg.norm(analytic - numeric) / max(
            np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)
        worst = max(worst, float(err))

    if worst > GRADCHECK_TOLERANCE:
        logging.warning('gradient check failed: relative error %.3g', worst)
    return worst
