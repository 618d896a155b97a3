"""Composable security of two-party quantum protocols, measured at desk scale.

Modules, bottom up: :mod:`~qcompose.cq` (classical-quantum states),
:mod:`~qcompose.functionality` (ideal functionalities),
:mod:`~qcompose.protocol` (protocol channels and execution),
:mod:`~qcompose.verify` (security definitions and witnesses),
:mod:`~qcompose.hybrid` (hybrid protocols and composition) and
:mod:`~qcompose.scenario` / :mod:`~qcompose.suite` / :mod:`~qcompose.cli`
(scenario files, suites and the command line).
"""

__version__ = "0.1.0"

from .cq import CQState, Register, make_cq_state, trace_distance  # noqa: E402
from .errors import QComposeError  # noqa: E402
from .functionality import Functionality, get_builtin  # noqa: E402
from .protocol import execute_protocol, ideal_protocol, make_noisy_ideal  # noqa: E402
from .scenario import load_scenario  # noqa: E402
from .suite import ReportBundle, emit_report, run_suite  # noqa: E402
from .verify import SecurityReport, Witness, check_security_witness, search_security_witness  # noqa: E402

__all__ = [
    "CQState",
    "Functionality",
    "QComposeError",
    "Register",
    "ReportBundle",
    "SecurityReport",
    "Witness",
    "check_security_witness",
    "emit_report",
    "execute_protocol",
    "get_builtin",
    "ideal_protocol",
    "load_scenario",
    "make_cq_state",
    "make_noisy_ideal",
    "run_suite",
    "search_security_witness",
    "trace_distance",
]
