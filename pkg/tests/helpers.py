"""Gradient-check helpers shared by the test modules."""

from xinggan.gradcheck import end_to_end_error, grad_check, weighted_sum  # noqa: F401
