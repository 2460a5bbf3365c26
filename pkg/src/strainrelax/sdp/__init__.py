"""Linear-matrix-inequality SDP solver: programs, HSDE interior-point method,
certification, and the sparse text format."""

from .backend import BACKEND
from .certify import Certificate, certify
from .program import (ConicProgram, PSDBlock, Solution, SolverOptions,
                      program_from_text, program_to_text, read_program,
                      write_program)
from .solver import solve

__all__ = [
    "BACKEND", "Certificate", "certify", "ConicProgram", "PSDBlock",
    "Solution", "SolverOptions", "solve", "read_program", "write_program",
    "program_to_text", "program_from_text",
]
