"""Asymptotically optimal kinodynamic planning with optimal fixed-final-state connections.

Modules
-------
dynamics    linear systems, controllability, nilpotency, matrix exponentials
steer       optimal connections (closed form and rk4 backends)
world       bounds, box obstacles, collision checks
nonlinear   nonlinear systems and their linearization (car-like robot)
planner     kinodynamic RRT*
scenarios   benchmark systems and the TOML scenario format
cli         command-line front end
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"
