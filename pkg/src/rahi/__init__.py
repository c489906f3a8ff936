"""Reliability-aware machine-crowd hybrid fake news detection.

A dropout classifier supplies a Gaussian assessment of each news item, an
IRT-weighted crowd supplies a Beta assessment, and a small encoder fuses the
two into one distribution whose mean is the veracity score.
"""

__version__ = "0.1.0"
