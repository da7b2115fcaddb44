"""forgeci: a self-contained continuous-integration orchestrator.

A master service ingests repository webhooks, expands each event into a
build matrix across platform-bound agents, streams live build logs, and
aggregates per-commit statuses into badges. Offline tools cover coverage,
code grading, linting, and docstring-based documentation.
"""

__version__ = "0.1.0"
