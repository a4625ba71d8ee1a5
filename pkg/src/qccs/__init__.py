"""qCCS: a quantum process calculus interpreter and bisimilarity checker."""

from .bisim import equality_check, strong_bisim, weak_bisim
from .context import QContext, make_context
from .frontend import elaborate, parse, parse_process, pretty_print
from .lts import Configuration, InputPolicy, build_lts, run_trace, transitions

__version__ = "0.1.0"

__all__ = [
    "Configuration", "InputPolicy", "QContext", "build_lts", "elaborate",
    "equality_check", "make_context", "parse", "parse_process",
    "pretty_print", "run_trace", "strong_bisim", "transitions", "weak_bisim",
]
