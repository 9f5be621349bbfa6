"""Adam optimizer over learning-rate parameter groups."""

import logging
import math
from collections.abc import Sequence

import numpy as np

from .numerics import Param
from .types import ParamGroup

logger = logging.getLogger(__name__)


class ParamGroupEntry:
    """Parameters sharing one learning rate."""

    def __init__(self, group: ParamGroup, lr: float, params: Sequence[Param]):
        """Initialize a parameter group.

        Args:
            group: Group tag.
            lr: Learning rate applied to every parameter of the group.
            params: Parameters of the group.
        """
        self.group = group
        self.lr = lr
        self.params = list(params)

    def __repr__(self) -> str:
        return f"ParamGroupEntry(group={self.group.value}, lr={self.lr}, params={len(self.params)})"


class Adam:
    """Adam with bias correction, optional global-norm clipping and decoupled weight decay."""

    def __init__(
        self,
        groups: Sequence[ParamGroupEntry],
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.0,
        max_grad_norm: float | None = None,
    ):
        """Initialize the optimizer.

        Args:
            groups: Parameter groups with their learning rates.
            beta1: Decay of the first-moment estimate.
            beta2: Decay of the second-moment estimate.
            eps: Denominator guard.
            weight_decay: Decoupled weight decay factor; 0 disables it.
            max_grad_norm: Clip the global gradient norm to this value; None disables it.
        """
        self.groups = list(groups)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.max_grad_norm = max_grad_norm
        self.steps = 0
        self._first: dict[int, np.ndarray] = {}
        self._second: dict[int, np.ndarray] = {}

    def params(self) -> list[Param]:
        return [p for group in self.groups for p in group.params]

    def zero_grad(self) -> None:
        for param in self.params():
            param.zero_grad()

    def grad_norm(self) -> float:
        """Global L2 norm of the current gradients of trainable parameters."""
        total = 0.0
        for param in self.params():
            if param.grad is not None and not param.frozen:
                total += float((param.grad * param.grad).sum())
        return math.sqrt(total)

    def step(self) -> None:
        """Apply one update; frozen parameters and parameters without gradient are skipped."""
        self.steps += 1
        scale = 1.0
        if self.max_grad_norm is not None:
            norm = self.grad_norm()
            if norm > self.max_grad_norm:
                scale = self.max_grad_norm / (norm + 1e-12)
                logger.debug(f"clipping gradient norm {norm:.4f} to {self.max_grad_norm}")

        correction1 = 1.0 - self.beta1**self.steps
        correction2 = 1.0 - self.beta2**self.steps
        for group in self.groups:
            for param in group.params:
                if param.frozen or param.grad is None:
                    continue
                grad = param.grad * scale if scale != 1.0 else param.grad
                key = id(param)
                first = self._first.get(key)
                second = self._second.get(key)
                if first is None or second is None:
                    first = np.zeros_like(param.data)
                    second = np.zeros_like(param.data)
                first = self.beta1 * first + (1.0 - self.beta1) * grad
                second = self.beta2 * second + (1.0 - self.beta2) * grad * grad
                self._first[key] = first
                self._second[key] = second
                update = (first / correction1) / (np.sqrt(second / correction2) + self.eps)
                if self.weight_decay:
                    param.data -= group.lr * self.weight_decay * param.data
                param.data -= group.lr * update
