"""Shared domain types: decision vectors, messages, cohorts and seeded streams."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

DecisionVector = np.ndarray


class DimensionError(ValueError):
    """Raised when vectors of different dimension are mixed."""


def as_vector(values, dim: int | None = None) -> DecisionVector:
    """Return ``values`` as a finite, read-only 1-D float64 array."""
    vec = np.array(values, dtype=np.float64, ndmin=1)
    if vec.ndim != 1:
        raise DimensionError(f"expected a 1-D vector, got shape {vec.shape}")
    if dim is not None and vec.shape[0] != dim:
        raise DimensionError(f"expected dimension {dim}, got {vec.shape[0]}")
    if not np.all(np.isfinite(vec)):
        raise ValueError("decision vectors must be finite")
    vec.setflags(write=False)
    return vec


@dataclass(frozen=True)
class Message:
    """A participant's transmission to the server at one step."""

    sender: int
    payload: DecisionVector

    def __post_init__(self):
        if self.sender < 1:
            raise ValueError(f"participant indices are 1-based, got {self.sender}")
        object.__setattr__(self, "payload", as_vector(self.payload))

    @property
    def dim(self) -> int:
        return self.payload.shape[0]


@dataclass(frozen=True)
class Cohort:
    """Participants ``1..n`` of which ``byzantine_ids`` are Byzantine."""

    n: int
    byzantine_ids: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        ids = frozenset(int(j) for j in self.byzantine_ids)
        object.__setattr__(self, "byzantine_ids", ids)
        if self.n < 1:
            raise ValueError("a cohort needs at least one participant")
        bad = [j for j in ids if not 1 <= j <= self.n]
        if bad:
            raise ValueError(f"byzantine ids {sorted(bad)} outside [1, {self.n}]")
        if 2 * len(ids) >= self.n:
            raise ValueError(
                f"byzantine fraction {len(ids)}/{self.n} must be below 1/2"
            )

    @property
    def b(self) -> int:
        return len(self.byzantine_ids)

    @property
    def h(self) -> int:
        return self.n - self.b

    @property
    def alpha(self) -> float:
        return self.b / self.n

    @property
    def honest_ids(self) -> tuple[int, ...]:
        return tuple(j for j in range(1, self.n + 1) if j not in self.byzantine_ids)

    @property
    def sorted_byzantine_ids(self) -> tuple[int, ...]:
        return tuple(sorted(self.byzantine_ids))

    def is_byzantine(self, j: int) -> bool:
        return j in self.byzantine_ids

    def honest_mask(self) -> np.ndarray:
        """Boolean mask over rows ``0..n-1`` (participant ``j`` is row ``j-1``)."""
        mask = np.ones(self.n, dtype=bool)
        for j in self.byzantine_ids:
            mask[j - 1] = False
        return mask


@dataclass(frozen=True)
class RandomStream:
    """Counter-keyed random stream.

    The same ``(root_seed, path)`` always produces the same draws, whatever
    order streams are created or consumed in, so trials may run in parallel.
    """

    root_seed: int
    path: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= self.root_seed < 2**64:
            raise ValueError("root_seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "path", tuple(int(k) for k in self.path))

    def child(self, *keys: int) -> "RandomStream":
        return RandomStream(self.root_seed, self.path + tuple(keys))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.root_seed, spawn_key=self.path)
        return np.random.Generator(np.random.PCG64(seq))


MessageLike = Union[Sequence[Message], np.ndarray]


def stack_messages(messages: MessageLike, n: int | None = None) -> np.ndarray:
    """Stack payloads into an ``(n, d)`` array ordered by sender.

    Arrays are passed through (row ``k`` is participant ``k + 1``).
    """
    if isinstance(messages, np.ndarray):
        arr = np.asarray(messages, dtype=np.float64)
        if arr.ndim != 2:
            raise DimensionError(f"expected an (n, d) array, got shape {arr.shape}")
        if n is not None and arr.shape[0] != n:
            raise ValueError(f"expected {n} messages, got {arr.shape[0]}")
        return arr
    msgs = sorted(messages, key=lambda m: m.sender)
    if not msgs:
        raise ValueError("no messages to aggregate")
    senders = [m.sender for m in msgs]
    expected = list(range(1, len(msgs) + 1)) if n is None else list(range(1, n + 1))
    if senders != expected:
        raise ValueError(f"need exactly one message per participant 1..{len(expected)}")
    dims = {m.dim for m in msgs}
    if len(dims) != 1:
        raise DimensionError(f"messages have mixed dimensions {sorted(dims)}")
    return np.stack([m.payload for m in msgs])


def messages_from_array(payloads: np.ndarray) -> list[Message]:
    return [Message(j + 1, row) for j, row in enumerate(np.asarray(payloads))]


def _honest_rows(messages: MessageLike, cohort: Cohort) -> np.ndarray:
    z = stack_messages(messages, cohort.n)
    honest = z[cohort.honest_mask()]
    if honest.shape[0] == 0:
        raise ValueError("empty honest set")
    return honest


def honest_mean(messages: MessageLike, cohort: Cohort) -> DecisionVector:
    """Coordinate-wise average of the honest payloads only.

    An analysis aid: the server never sees honesty, so the decision path does
    not use this.
    """
    return as_vector(_honest_rows(messages, cohort).mean(axis=0))


def max_honest_deviation(messages: MessageLike, cohort: Cohort) -> float:
    """Largest squared distance from an honest payload to the honest mean."""
    honest = _honest_rows(messages, cohort)
    center = honest.mean(axis=0)
    return float(np.max(np.sum((honest - center) ** 2, axis=1)))


def sq_norm(v: Iterable[float]) -> float:
    v = np.asarray(v, dtype=np.float64)
    return float(v @ v)
