import dataclasses
import pathlib

import pytest

from agcl.config import load_config
from agcl.gridworld import POGO_AP, POGO_FORMULA
from agcl.learner import Hyper
from agcl.ltlf import compile_dfa, parse_ltlf
from agcl.oomdp import OomdpState, make_task

CONFIGS = pathlib.Path(__file__).resolve().parent.parent / 'configs'

# Small enough to train in well under a second per phase.
TINY_HYPER = Hyper(
    hidden=(8,),
    replay_capacity=512,
    batch_size=8,
    learning_starts=8,
    target_sync=50,
    eval_every=100,
    eval_episodes=2,
)


def config_path(name):
    return CONFIGS / name


@pytest.fixture(scope='session')
def tree_rock_dfa():
    return compile_dfa(parse_ltlf('F(tree) & F(rock)', ('rock', 'tree')),
                       ('rock', 'tree'))


@pytest.fixture(scope='session')
def pogo_dfa():
    return compile_dfa(parse_ltlf(POGO_FORMULA, POGO_AP), POGO_AP)


@pytest.fixture
def tree_rock_config():
    return load_config(config_path('tree-rock.json'), environ={})


@pytest.fixture
def pogo_config():
    return load_config(config_path('pogo.json'), environ={})


@pytest.fixture
def tiny_config(tree_rock_config):
    """The two-event task with a budget a test can afford."""
    return tree_rock_config.replace(
        learner=TINY_HYPER,
        budget=dataclasses.replace(tree_rock_config.budget, total=300,
                                   step_cap=20),
        seeds=dataclasses.replace(tree_rock_config.seeds, replicates=2),
    )


@pytest.fixture
def trivial_task():
    # Two cells: the agent and a lone tree, so one turn and a break win.
    s0 = OomdpState.of({'width': 2, 'height': 1, 'trees_env': 1,
                        'trees_inv': 0})
    sf = OomdpState.of({'width': 2, 'height': 1, 'trees_env': 0,
                        'trees_inv': 1})
    return make_task(s0, sf, seed=0)
