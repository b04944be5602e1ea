"""
CAPA Harness

Command-line front end and artifact plumbing.

Components:
- cli: argument parsing, logging setup, exit codes
- commands: one function per command plus the manifest-driven pipeline
- artifacts: model, token stream, alpha and run-output files
"""

__version__ = "0.1.0"

from .cli import build_parser, main

__all__ = ['build_parser', 'main']
