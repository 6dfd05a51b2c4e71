"""Metro line planning and timetabling toolkit.

Builds per-line mixed-integer models with time-dependent demand, solves
them with an embedded simplex / branch-and-bound engine, coordinates
interacting lines with a block-iteration heuristic and verifies plans by
replaying passenger flows independently of the optimizer.
"""

__version__ = "0.1.0"
