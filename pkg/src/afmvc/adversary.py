"""Sensitive-attribute discriminator, fairness loss and the reversal-coefficient ramp."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BoundsError, StructuralError
from .nn import DenseNetwork, cross_entropy_loss, forward


@dataclass
class AdversarySchedule:
    beta: float
    total_iters: int
    current_iter: int = 0

    def __post_init__(self):
        if not self.beta > 0:
            raise BoundsError(f"beta must be positive, got {self.beta}")
        if self.total_iters < 1:
            raise BoundsError(f"total_iters must be >= 1, got {self.total_iters}")
        if not 0 <= self.current_iter <= self.total_iters:
            raise BoundsError(f"current_iter {self.current_iter} outside [0, {self.total_iters}]")

    @property
    def coeff(self) -> float:
        return grl_coeff(self)


def grl_coeff(schedule: AdversarySchedule) -> float:
    """Sigmoid ramp 2 / (1 + exp(-beta * iter / n)) - 1, rising from 0 towards 1."""
    progress = schedule.current_iter / schedule.total_iters
    # tanh(x/2) == 2/(1+e^-x) - 1, without cancellation near zero
    return math.tanh(schedule.beta * progress / 2.0)


def discriminate(disc: DenseNetwork, z: np.ndarray):
    """Group probabilities for fused latents; returns ``(probs, tape)``."""
    if z.shape[1] != disc.in_dim:
        raise StructuralError(f"discriminator expects width {disc.in_dim}, got {z.shape[1]}")
    return forward(disc, z)


def fairness_loss(probs: np.ndarray, sensitive: np.ndarray):
    return cross_entropy_loss(probs, sensitive)


def adversarial_split(logit_grads: np.ndarray, coeff: float, lambda_f: float):
    """Split the fairness logit gradient between the two players.

    The discriminator minimizes ``lambda_f * L_F`` and gets ``lambda_f * g``.
    The encoder side sees the same signal through the reversal layer, i.e.
    ``-lambda_f * coeff * g``; backpropagating it through the (frozen)
    discriminator yields the gradient for the fused representation.
    """
    if coeff < 0 or lambda_f < 0:
        raise BoundsError("coeff and lambda_f must be non-negative")
    return lambda_f * logit_grads, -lambda_f * coeff * logit_grads
