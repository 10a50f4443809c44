"""Joint charging-network siting/sizing and electric-truck fleet planning.

A leader (charging service provider) decides where to build stations, how
many ports to install and how much transformer capacity to add; a follower
(fleet operator) buys trucks and routes them through customers and charging
slots.  The bilevel program is solved by column-and-constraint generation
over follower scenarios, with set-partitioning masters solved by column
generation and a resource-constrained shortest-path pricer on a partial
time-expanded network.
"""

__version__ = "0.1.0"

from .instance import Instance, load_instance, load_bundled, with_overrides  # noqa: F401
from .pten import expand  # noqa: F401
from .ccg import run_ccg  # noqa: F401
