"""Feedback-conditioned fine-tuning data engine.

Samples candidate programs from a pluggable generator, executes them against
test suites in a sandboxed interpreter, turns execution feedback into
reward-token-conditioned training sequences, and drives the iterative
improvement loop.
"""

__version__ = "0.1.0"
