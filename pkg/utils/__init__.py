# Utils package
from .errors import PiVaeError
from .rng import make_rng, derive_seed
from .helpers import save_json, load_json, parse_grid

__all__ = ['PiVaeError', 'make_rng', 'derive_seed', 'save_json', 'load_json', 'parse_grid']
