"""
The crafting gridworld: break trees and rocks, then craft at the table.

The agent sees its surroundings through eight beams at steps of half a
right angle, starting at the one it faces and going clockwise. Each
beam reports, per object type, the distance to the closest instance
over the grid diagonal (1 when there is none), plus how many trees and
rocks the agent carries.
"""
import enum
import logging
import math

import numpy as np

from .automaton import accept_distance, advance_monitor
from .constants import STEP_CAP, STEP_REWARD, SUCCESS_REWARD
from .oomdp import map_w


class PlacementError(ValueError):
    pass


class Action(enum.IntEnum):
    FORWARD = 0
    LEFT = 1
    RIGHT = 2
    BREAK = 3
    CRAFT = 4


EMPTY = 0
TREE = 1
ROCK = 2
TABLE = 3
DISTRACTOR = 4

CLASSES = {
    TREE: 'trees',
    ROCK: 'rocks',
    TABLE: 'crafting_table',
    DISTRACTOR: 'distractor',
}
COLLECTABLE = (TREE, ROCK, DISTRACTOR)

# Which proposition an event emits. Breaking a distractor emits nothing.
DEFAULT_LABELS = {
    'trees': 'tree',
    'rocks': 'rock',
    'craft': 'pogo',
}

# The objective of the pogo-stick task: gather two trees and a rock, one
# event at a time, then craft.
POGO_FORMULA = (
    'G((tree -> !rock & !pogo) & (rock -> !tree & !pogo) '
    '& (pogo -> !rock & !tree)) '
    '& (!pogo U (tree & X(!pogo U tree))) & (!pogo U rock) & F pogo'
)
POGO_AP = ('pogo', 'rock', 'tree')

# What a craft costs.
RECIPE = {'trees': 2, 'rocks': 1}

# Headings N, E, S, W with y growing downwards.
HEADINGS = ((0, -1), (1, 0), (0, 1), (-1, 0))
BEAMS = ((0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1))

CHANNELS = (TREE, ROCK, TABLE, DISTRACTOR)
WALL = len(CHANNELS)
N_CHANNELS = len(CHANNELS) + 1
OBS_SIZE = len(BEAMS) * N_CHANNELS + 2

_GLYPHS = {EMPTY: '.', TREE: 'T', ROCK: 'R', TABLE: 'C', DISTRACTOR: 'D'}
_AGENT = '^>v<'


def _count(state, name):
    value = state.get(name, 0)
    if value != int(value):
        raise PlacementError(f'{name}={value} is not a whole number')
    return int(value)


class GridWorld:
    """
    One task of the gridworld, instantiated from its ``TaskConfig``.

    Source tasks succeed once the agent carries what the task's goal
    state holds. The target succeeds when ``dfa`` accepts the events of
    the episode, or, without an automaton, when something is crafted.
    """
    def __init__(self, task, dfa=None, labels=None, step_cap=STEP_CAP,
                 inv_scale=None):
        self.task = task
        self.dfa = dfa
        self.labels = dict(DEFAULT_LABELS if labels is None else labels)
        self.step_cap = step_cap

        s0 = task.s0
        self.width = _count(s0, 'width')
        self.height = _count(s0, 'height')
        if self.width < 1 or self.height < 1:
            raise PlacementError(f'a {self.width}x{self.height} grid has '
                                 f'no cells')
        self._objects = {t: _count(s0, f'{c}_env') for t, c in CLASSES.items()}
        self._carried = {CLASSES[t]: _count(s0, f'{CLASSES[t]}_inv')
                         for t in COLLECTABLE}

        n = sum(self._objects.values()) + 1
        if n > self.width * self.height:
            raise PlacementError(
                f'{n - 1} objects and the agent do not fit on a '
                f'{self.width}x{self.height} grid')

        if inv_scale is None:
            inv_scale = {
                c: max(1, self._objects[t] + self._carried[c])
                for t, c in ((TREE, 'trees'), (ROCK, 'rocks'))
            }
        self.inv_scale = inv_scale
        self._diagonal = math.hypot(self.width, self.height)

        self.grid = None
        self.inventory = None
        self.pos = None
        self.facing = 0
        self.steps = 0
        self.done = True
        self.success = False
        self.node = None

    # OOMDP view, read by map_w

    def env_counts(self):
        counts = np.bincount(self.grid.ravel(), minlength=len(_GLYPHS))
        return {c: int(counts[t]) for t, c in CLASSES.items()}

    def oomdp_state(self, spec=None):
        return map_w(self, spec)

    # Episodes

    def reset(self, seed=None):
        """
        Lay out a fresh episode; the same seed gives the same layout.
        """
        rng = np.random.default_rng(self.task.seed if seed is None else seed)
        n_cells = self.width * self.height
        kinds = [t for t, n in self._objects.items() for _ in range(n)]
        cells = rng.choice(n_cells, size=len(kinds) + 1, replace=False)

        self.grid = np.zeros((self.height, self.width), dtype=np.int8)
        for kind, cell in zip(kinds, cells[1:]):
            self.grid[divmod(int(cell), self.width)] = kind

        y, x = divmod(int(cells[0]), self.width)
        self.pos = (x, y)
        self.facing = int(rng.integers(len(HEADINGS)))
        self.inventory = dict(self._carried)
        self.steps = 0
        self.done = False
        self.success = False
        self.node = self.dfa.initial if self.dfa is not None else None
        return self.observe()

    def _ahead(self):
        dx, dy = HEADINGS[self.facing]
        x, y = self.pos[0] + dx, self.pos[1] + dy
        if 0 <= x < self.width and 0 <= y < self.height:
            return x, y
        return None

    def step(self, action):
        if self.done:
            raise RuntimeError('the episode is over, reset first')

        action = Action(action)
        self.steps += 1
        events = set()
        crafted = False

        if action == Action.FORWARD:
            cell = self._ahead()
            if cell and self.grid[cell[1], cell[0]] == EMPTY:
                self.pos = cell
        elif action == Action.LEFT:
            self.facing = (self.facing - 1) % len(HEADINGS)
        elif action == Action.RIGHT:
            self.facing = (self.facing + 1) % len(HEADINGS)
        elif action == Action.BREAK:
            cell = self._ahead()
            if cell:
                kind = int(self.grid[cell[1], cell[0]])
                if kind in COLLECTABLE:
                    self.grid[cell[1], cell[0]] = EMPTY
                    name = CLASSES[kind]
                    self.inventory[name] += 1
                    if name in self.labels:
                        events.add(self.labels[name])
        elif action == Action.CRAFT:
            cell = self._ahead()
            if (cell and self.grid[cell[1], cell[0]] == TABLE
                    and all(self.inventory[c] >= n for c, n in RECIPE.items())):
                for c, n in RECIPE.items():
                    self.inventory[c] -= n
                crafted = True
                if 'craft' in self.labels:
                    events.add(self.labels['craft'])

        labels = frozenset(events)
        self.success = self._succeeded(labels, crafted)
        trapped = (self.node is not None
                   and accept_distance(self.dfa, self.node) == math.inf)
        self.done = (self.success or crafted or trapped
                     or self.steps >= self.step_cap)
        reward = SUCCESS_REWARD if self.success else STEP_REWARD
        return self.observe(), reward, self.done, labels

    def _succeeded(self, labels, crafted):
        if not self.task.is_target:
            return source_goal_check(self.task, self)
        if self.dfa is None:
            return crafted
        self.node, accepted = advance_monitor(self.dfa, self.node, labels)
        return accepted

    def observe(self):
        obs = np.ones(OBS_SIZE)
        x0, y0 = self.pos
        for k in range(len(BEAMS)):
            dx, dy = BEAMS[(2 * self.facing + k) % len(BEAMS)]
            unit = math.hypot(dx, dy) / self._diagonal
            base = k * N_CHANNELS
            seen = set()
            t = 1
            while True:
                x, y = x0 + t * dx, y0 + t * dy
                if not (0 <= x < self.width and 0 <= y < self.height):
                    obs[base + WALL] = min(1.0, t * unit)
                    break
                kind = int(self.grid[y, x])
                if kind != EMPTY and kind not in seen:
                    seen.add(kind)
                    obs[base + CHANNELS.index(kind)] = min(1.0, t * unit)
                t += 1

        tail = len(BEAMS) * N_CHANNELS
        obs[tail] = min(1.0, self.inventory['trees'] / self.inv_scale['trees'])
        obs[tail + 1] = min(1.0, self.inventory['rocks']
                            / self.inv_scale['rocks'])
        return obs

    def render(self):
        rows = [[_GLYPHS[int(k)] for k in row] for row in self.grid]
        x, y = self.pos
        rows[y][x] = _AGENT[self.facing]
        return '\n'.join(''.join(row) for row in rows)


def source_goal_check(task, env):
    """
    Whether the agent carries at least what the goal state of ``task``
    holds, for every inventory parameter.
    """
    state = map_w(env)
    return all(state.get(name, 0) >= value
               for name, value in task.sf.items if name.endswith('_inv'))


def labels_from_bindings(spec):
    """
    Event labels for an environment whose objective is bound by ``spec``.

    Consuming bindings label breaking their class; a terminal binding
    labels crafting.
    """
    labels = {}
    for b in spec.bindings:
        if b.terminal:
            labels['craft'] = b.prop
        else:
            labels[b.consumes or b.env[:-len('_env')]] = b.prop
    logging.debug('event labels: %s', labels)
    return labels


def inventory_scale(spec):
    scale = {}
    for c in ('trees', 'rocks'):
        try:
            scale[c] = max(1, spec.param(f'{c}_inv').hi)
        except ValueError:
            scale[c] = 1
    return scale


def make_env_factory(task, spec=None, dfa=None, step_cap=STEP_CAP):
    """
    A zero-argument constructor of fresh environments for ``task``.
    """
    labels = labels_from_bindings(spec) if spec is not None else None
    scale = inventory_scale(spec) if spec is not None else None

    def factory():
        return GridWorld(task, dfa=dfa if task.is_target else None,
                         labels=labels, step_cap=step_cap, inv_scale=scale)

    return factory
