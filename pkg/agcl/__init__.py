__version__ = '0.1.0'

from .automaton import Dfa, get_trace_paths
from .config import Config, load_config
from .curriculum import CurriculumDag, agcg
from .database import Database
from .ltlf import compile_dfa, parse_ltlf
