"""Adaptive disturbance observer built on a canonical nonlinear internal model.

Modules
-------
matkit          small dense linear algebra (Sylvester, Lyapunov, eigenvalues)
exosystem       trigonometric-polynomial disturbances and their realizations
internal_model  internal model and exosystem-state estimate
observer        adaptive observer and disturbance estimate
deriv_chain     estimates of disturbance derivatives
freq_id         sliding-window frequency identification
plant           flexible-joint manipulator and tracking controller
sim             closed-loop simulation, traces and convergence metrics
config, cli     JSON scenarios and the command-line front end
"""
from .errors import *  # noqa: F401,F403
from .exosystem import ChannelSpec, DisturbanceSpec, ExoBlocks, Mode, ModelOrder, build_exo_blocks
from .observer import ObserverGains
from .plant import ControllerGains
from .sim import Scenario, analyze, run_scenario

__version__ = "0.1.0"
