"""Linear-chain CRF head with explicit START and STOP states.

The transition matrix has ``labels + 2`` rows and columns; index ``labels``
is START and ``labels + 1`` is STOP. Transitions into START and out of STOP
hold ``MASK_VALUE`` and never enter a score.
"""

import logging
from collections.abc import Sequence

import numpy as np

from .errors import ShapeError, VocabularyError
from .numerics import (
    MASK_VALUE,
    Component,
    Tensor,
    as_tensor,
    logsumexp,
    take,
    truncated_normal,
)
from .types import ParamGroup

logger = logging.getLogger(__name__)


def allowed_transitions(labels: Sequence[str]) -> np.ndarray:
    """BIOES-valid transitions over ``labels + [START, STOP]``.

    Returns:
        Boolean matrix ``[(L+2), (L+2)]``; ``[i, j]`` is True when label j may follow label i.
    """
    count = len(labels)
    start, stop = count, count + 1
    parts = []
    for label in labels:
        prefix, _, kind = label.partition("-")
        parts.append((prefix.upper() if label != "O" else "O", kind))

    def may_follow(prev: tuple[str, str] | None, cur: tuple[str, str] | None) -> bool:
        # None stands for START (as prev) or STOP (as cur)
        prev_open = prev is not None and prev[0] in ("B", "I", "M")
        if cur is None:
            return not prev_open
        if cur[0] in ("I", "M", "E"):
            return prev_open and prev is not None and prev[1] == cur[1]
        return not prev_open

    allowed = np.zeros((count + 2, count + 2), dtype=bool)
    for j, cur in enumerate(parts):
        allowed[start, j] = may_follow(None, cur)
        for i, prev in enumerate(parts):
            allowed[i, j] = may_follow(prev, cur)
    for i, prev in enumerate(parts):
        allowed[i, stop] = may_follow(prev, None)
    allowed[start, stop] = False
    return allowed


class CRF(Component):
    """Emission projection plus transition scores."""

    def __init__(
        self,
        labels: Sequence[str],
        hidden_size: int,
        rng: np.random.Generator,
        std: float = 0.02,
        constrain: bool = False,
    ):
        """Initialize the CRF.

        Args:
            labels: Label inventory in id order.
            hidden_size: Width of the encoder output.
            rng: Generator for the emission weights.
            std: Initializer standard deviation.
            constrain: Forbid BIOES-invalid transitions.
        """
        super().__init__()
        self.labels = list(labels)
        count = len(self.labels)
        if count < 1:
            raise ValueError("CRF needs at least one label")
        self.num_labels = count
        self.start = count
        self.stop = count + 1
        group = ParamGroup.ADAPTER
        self.weight = self.add_param("weight", truncated_normal(rng, (hidden_size, count), std), group)
        self.bias = self.add_param("bias", np.zeros(count), group)
        transitions = np.zeros((count + 2, count + 2))
        transitions[:, self.start] = MASK_VALUE
        transitions[self.stop, :] = MASK_VALUE
        self.transitions = self.add_param("transitions", transitions, group)
        self.constrain = constrain
        self._penalty = np.zeros((count + 2, count + 2))
        if constrain:
            self._penalty[~allowed_transitions(self.labels)] = MASK_VALUE
            self._penalty[:, self.start] = 0.0
            self._penalty[self.stop, :] = 0.0

    def _scores(self) -> Tensor:
        if self.constrain:
            return self.transitions + self._penalty
        return self.transitions

    def emissions(self, h: Tensor) -> Tensor:
        """O = H W_o + b_o, shape ``[n, labels]``."""
        return h @ self.weight + self.bias

    def _check(self, emissions: Tensor) -> None:
        if emissions.ndim != 2 or emissions.shape[1] != self.num_labels or emissions.shape[0] < 1:
            raise ShapeError(
                f"emissions must be [n>=1, {self.num_labels}], got {emissions.shape}"
            )

    def path_score(self, emissions: Tensor, labels: Sequence[int]) -> Tensor:
        """Unnormalized score of one label sequence, boundary transitions included."""
        self._check(emissions)
        tags = np.asarray(labels, dtype=np.int64)
        n = emissions.shape[0]
        if tags.shape != (n,):
            raise ShapeError(f"{len(tags)} labels for {n} positions")
        if tags.min() < 0 or tags.max() >= self.num_labels:
            raise VocabularyError(f"label id outside [0, {self.num_labels})")
        emitted = take(emissions, (np.arange(n), tags)).sum()
        sources = np.concatenate([[self.start], tags])
        targets = np.concatenate([tags, [self.stop]])
        moved = take(self._scores(), (sources, targets)).sum()
        return emitted + moved

    def log_partition(self, emissions: Tensor) -> Tensor:
        """Log-sum-exp over all label sequences (forward algorithm)."""
        self._check(emissions)
        count = self.num_labels
        scores = self._scores()
        inner = scores[:count, :count]
        alpha = scores[self.start, :count] + emissions[0]
        for t in range(1, emissions.shape[0]):
            alpha = logsumexp(alpha.reshape((count, 1)) + inner, axis=0) + emissions[t]
        return logsumexp(alpha + scores[:count, self.stop], axis=0)

    def log_likelihood(self, emissions: Tensor, labels: Sequence[int]) -> Tensor:
        """log p(y | s) = score(y) - log Z."""
        return self.path_score(emissions, labels) - self.log_partition(emissions)

    def nll_loss(self, batch: Sequence[tuple[Tensor, Sequence[int]]]) -> Tensor:
        """Negative sum of log-likelihoods over a batch of (emissions, labels)."""
        if not batch:
            raise ValueError("nll_loss needs at least one example")
        total: Tensor | None = None
        for emissions, labels in batch:
            ll = self.log_likelihood(emissions, labels)
            total = ll if total is None else total + ll
        assert total is not None
        return -total

    def viterbi(self, emissions: Tensor | np.ndarray) -> tuple[list[int], float]:
        """Best label sequence and its unnormalized score.

        Among equally scored sequences the lexicographically smallest wins:
        suffix maxima come from a backward pass, then labels are fixed left
        to right, each time the lowest id that still reaches the maximum.
        """
        scores_in = as_tensor(emissions)
        self._check(scores_in)
        obs = scores_in.data
        n = obs.shape[0]
        count = self.num_labels
        trans = self._scores().data
        inner = trans[:count, :count]

        # suffix[t, j]: best score after position t given label j at t, STOP included
        suffix = np.empty((n, count))
        suffix[-1] = trans[:count, self.stop]
        for t in range(n - 2, -1, -1):
            suffix[t] = (inner + obs[t + 1] + suffix[t + 1]).max(axis=1)

        path: list[int] = []
        incoming = trans[self.start, :count]
        best = 0.0
        for t in range(n):
            values = incoming + obs[t] + suffix[t]
            label = int(values.argmax())
            if t == 0:
                best = float(values[label])
            path.append(label)
            incoming = inner[label]
        return path, best
