"""Latency sensitivity analysis of message-passing programs.

Schedules or traces become execution graphs; the graphs become linear
programs whose optimum is the predicted runtime and whose reduced costs and
ranging information give latency and bandwidth sensitivities.
"""

__version__ = "0.1.0"
