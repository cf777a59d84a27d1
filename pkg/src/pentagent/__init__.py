"""Semi-autonomous penetration-testing agent engine.

Plans an engagement as a task tree, routes every proposed command through
an approval gate, executes against a simulated (or explicitly unlocked
live) target, and keeps summaries grounded in raw tool output.
"""

__version__ = "0.1.0"
