"""Haar predictive for zero-mean normal prediction and the Dutch book against invariant competitors."""

from .densities import ImproperPosteriorError, ModelParams, ObservationMatrix
from .dutchbook import epsilon0, haar_identity_check, model_expectation, simulate_betting, si_verdict, ticket_price
from .ltgroup import NotPositiveDefiniteError, TriMatrix, modular_delta, psi_p, tau
from .montecarlo import Estimate
from .predictive import log_predictive, make_kernel, sample_predictive, variation_distance
from .sampling import RngStream

__all__ = [
    "Estimate",
    "ImproperPosteriorError",
    "ModelParams",
    "NotPositiveDefiniteError",
    "ObservationMatrix",
    "RngStream",
    "TriMatrix",
    "epsilon0",
    "haar_identity_check",
    "log_predictive",
    "make_kernel",
    "model_expectation",
    "modular_delta",
    "psi_p",
    "sample_predictive",
    "si_verdict",
    "simulate_betting",
    "tau",
    "ticket_price",
    "variation_distance",
]
