"""Impossibility bounds for adversarial robustness under concentration of
measure, with exact and Monte-Carlo checks on Gaussian, spherical, toy and
MNIST data."""
from .bounds import (BelowThresholdError, VacuousBoundError, adv_acc_bound_geodesic, adv_acc_bound_lq,
                     critical_epsilon, critical_epsilon_q, distance_bound_geodesic, distance_bound_lq)
from .scalar import DomainError, LqExponent

__version__ = "0.1.0"
