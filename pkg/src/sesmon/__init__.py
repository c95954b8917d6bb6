"""Executable workbench for a multiparty session calculus with security
levels: standard and monitored small-step semantics, plus bounded
security (L-bisimulation) and safety checkers."""

from .lattice import Lattice, validate_lattice
from .parser import parse_program, parse_process_text, Program
from .runtime import initial_config, run_standard, step_standard
from .monitor import initial_mconfig, run_monitored, step_monitored
from .analysis import (CheckVerdict, build_universe, check_no_runtime_error,
                       check_safe, check_secure, check_secure_all)

__all__ = [
    "Lattice", "validate_lattice", "parse_program", "parse_process_text",
    "Program", "initial_config", "run_standard", "step_standard",
    "initial_mconfig", "run_monitored", "step_monitored", "CheckVerdict",
    "build_universe", "check_no_runtime_error", "check_safe",
    "check_secure", "check_secure_all",
]
