"""Benchmark harness for opaque NLU worker programs.

Workers read JSON-lines task records on stdin and write JSON-lines
predictions on stdout. The harness scores task quality, measures
inference throughput and peak memory, and combines the three into a
single fitness figure used for leaderboards and comparison plots.
"""

__version__ = "0.1.0"

from nlubench.errors import HarnessError

__all__ = ["HarnessError", "__version__"]
