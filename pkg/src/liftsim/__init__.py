"""Single-elevator discrete-event simulator with naive, tabular and deep Q-learning controllers."""

__version__ = "0.1.0"
