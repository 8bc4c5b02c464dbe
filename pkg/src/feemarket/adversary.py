"""Block assembly under the adversarial-inclusion contract.

A block builder receives the eligible transactions and the posted capacity
and must return a maximal-by-inclusion subset: after selection, no eligible
unscheduled transaction fits in the residual capacity.  Within that contract
the builder is adversarial; the policies here cover tip-ordered, value-ordered
and seeded-random inclusion orders.

Randomness comes from a named, versioned PRNG (splitmix64-v1, 64-bit,
re-derived per block index) so adversarial choices replay identically across
platforms and runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

from .core import Transaction

__all__ = [
    "PRNG_NAME",
    "SplitMix64",
    "block_rng",
    "TipPriority",
    "ValueAscending",
    "ValueDescending",
    "SeededRandom",
    "InclusionPolicy",
    "select_block",
    "policy_to_config",
    "policy_from_config",
]

PRNG_NAME = "splitmix64-v1"

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


class SplitMix64:
    """splitmix64-v1: tiny 64-bit generator with a splittable seed."""

    __slots__ = ("state",)

    def __init__(self, seed: int) -> None:
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK
        return _mix(self.state)

    def next_below(self, n: int) -> int:
        """Uniform integer in [0, n), unbiased via rejection."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n

    def shuffle(self, xs: list) -> None:
        for i in range(len(xs) - 1, 0, -1):
            j = self.next_below(i + 1)
            xs[i], xs[j] = xs[j], xs[i]


def block_rng(seed: int, block_index: int) -> SplitMix64:
    """Per-block stream: split the run seed by block index."""
    return SplitMix64(_mix(seed & _MASK) ^ _mix((block_index + 0x1F123BB5) & _MASK))


# ---------------------------------------------------------------------------
# Inclusion policies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TipPriority:
    """Order by adversary-assigned tips, highest first (missing tip = 0)."""

    tips: Mapping[int, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ValueAscending:
    """Lowest per-unit value first (the cheapest-first adversary)."""


@dataclass(frozen=True)
class ValueDescending:
    """Highest per-unit value first (the benevolent order)."""


@dataclass(frozen=True)
class SeededRandom:
    """Uniformly random order from the per-block splitmix64-v1 stream."""


InclusionPolicy = Union[TipPriority, ValueAscending, ValueDescending, SeededRandom]


def _ordered(
    eligible: Sequence[Transaction],
    policy: InclusionPolicy,
    rng: SplitMix64 | None,
) -> list[Transaction]:
    if isinstance(policy, ValueAscending):
        return sorted(eligible, key=lambda t: (t.unit_value, t.id))
    if isinstance(policy, ValueDescending):
        return sorted(eligible, key=lambda t: (-t.unit_value, t.id))
    if isinstance(policy, TipPriority):
        tips = policy.tips
        return sorted(eligible, key=lambda t: (-tips.get(t.id, 0.0), t.id))
    if isinstance(policy, SeededRandom):
        if rng is None:
            raise ValueError("SeededRandom policy requires a block RNG")
        xs = sorted(eligible, key=lambda t: t.id)
        rng.shuffle(xs)
        return xs
    raise TypeError(f"unknown inclusion policy {policy!r}")


def select_block(
    eligible: Sequence[Transaction],
    capacity: Sequence[float],
    policy: InclusionPolicy,
    rng: SplitMix64 | None = None,
    *,
    min_size_hint: float = 1.0,
) -> list[int]:
    """Choose a maximal-by-inclusion subset within the capacity vector.

    Greedy pass in policy order admitting every transaction that still fits,
    then a completion pass over the remainder in the same order.  Transactions
    larger than the full capacity are skipped silently (they stay pending).
    Returns admitted ids in admission order.

    ``min_size_hint`` is a lower bound on any transaction's positive size
    component; once every residual drops below it the block is provably full
    and scanning stops early.
    """
    order = _ordered(eligible, policy, rng)
    residual = [float(c) for c in capacity]
    m = len(residual)
    chosen: list[int] = []
    remaining: list[Transaction] = []
    for pass_no in (0, 1):
        if max(residual) < min_size_hint:
            break
        scan = order if pass_no == 0 else remaining
        leftover: list[Transaction] = []
        for t in scan:
            size = t.size
            if len(size) != m:
                raise ValueError(
                    f"tx {t.id} has {len(size)} resources, capacity has {m}"
                )
            if all(size[j] <= residual[j] + 1e-9 for j in range(m)):
                for j in range(m):
                    residual[j] -= size[j]
                chosen.append(t.id)
            else:
                leftover.append(t)
            if max(residual) < min_size_hint:
                if pass_no == 0:
                    break  # nothing further can fit; maximality already holds
                break
        if pass_no == 0:
            remaining = leftover
    return chosen


# ---------------------------------------------------------------------------
# Policy config plumbing
# ---------------------------------------------------------------------------

_POLICY_NAMES = {
    TipPriority: "tip",
    ValueAscending: "value_asc",
    ValueDescending: "value_desc",
    SeededRandom: "random",
}


def policy_to_config(policy: InclusionPolicy) -> dict:
    name = _POLICY_NAMES[type(policy)]
    out: dict = {"policy": name}
    if isinstance(policy, TipPriority):
        out["tips"] = {str(k): v for k, v in policy.tips.items()}
    return out


def policy_from_config(obj: Mapping) -> InclusionPolicy:
    name = obj.get("policy")
    if name == "tip":
        tips = {int(k): float(v) for k, v in obj.get("tips", {}).items()}
        return TipPriority(tips=tips)
    if name == "value_asc":
        return ValueAscending()
    if name == "value_desc":
        return ValueDescending()
    if name == "random":
        return SeededRandom()
    raise ValueError(f"unknown policy name {name!r}")
