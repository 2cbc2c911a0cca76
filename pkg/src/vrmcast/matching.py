"""Slot-level assignment of cells to user clusters via deferred acceptance.

Rates depend on who else transmits (interference), which would couple every
pairing decision to the whole assignment.  Each user therefore carries a
learned interference estimate; utilities built on the estimate are free of
externalities, so proposer/acceptor rounds converge to a stable matching.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .channel import multicast_rate


@dataclass
class InterferenceEstimator:
    """Blend of the last measured sample and a short moving average, in watts."""

    nu1: float = 0.5
    window: int = 10
    last_sample: float | None = None
    samples: deque = field(default_factory=deque)

    def observe(self, interference_w: float) -> None:
        self.last_sample = interference_w
        self.samples.append(interference_w)
        while len(self.samples) > self.window:
            self.samples.popleft()

    def estimate(self) -> float:
        if self.last_sample is None:
            return 0.0
        mean = sum(self.samples) / len(self.samples)
        return self.nu1 * self.last_sample + (1.0 - self.nu1) * mean


def estimate_interference(last_w: float, window_samples: list[float], nu1: float) -> float:
    """Stateless form of the estimator blend for a given history."""
    if not window_samples:
        return nu1 * last_w
    return nu1 * last_w + (1.0 - nu1) * (sum(window_samples) / len(window_samples))


@dataclass(frozen=True)
class Matching:
    """One-to-one pairing for the slot; unmatched players simply idle."""

    pairs: tuple[tuple[int, int], ...]  # (sbs, cluster)
    proposals: int = 0

    def sbs_of(self, cluster: int) -> int | None:
        for b, c in self.pairs:
            if c == cluster:
                return b
        return None

    def cluster_of(self, sbs: int) -> int | None:
        for b, c in self.pairs:
            if b == sbs:
                return c
        return None


def deferred_acceptance(
    util_sbs: np.ndarray,
    util_cluster: np.ndarray,
    rng: np.random.Generator | None = None,
) -> Matching:
    """Proposer/acceptor rounds between cells (rows) and clusters (columns).

    ``util_sbs[b, c]`` is how much cell ``b`` values cluster ``c``;
    ``util_cluster[c, b]`` the reverse.  NaN marks an ineligible pairing.
    Unmatched cells propose to their best remaining eligible cluster; a
    cluster swaps its match only for a strictly better proposer.  Eligibility
    shrinks on every rejection, so at most ``B*K`` proposals happen.
    """
    n_sbs, n_clusters = util_sbs.shape
    eligible = [
        {c for c in range(n_clusters) if np.isfinite(util_sbs[b, c])}
        for b in range(n_sbs)
    ]
    match_of_cluster: dict[int, int] = {}
    match_of_sbs: dict[int, int] = {}
    unmatched = list(range(n_sbs))
    if rng is not None:
        perm = rng.permutation(n_sbs)
        unmatched = [int(b) for b in perm]
    proposals = 0

    while True:
        proposer = None
        for b in unmatched:
            if eligible[b]:
                proposer = b
                break
        if proposer is None:
            break
        # Best eligible cluster; ties go to the lower cluster index.
        best = max(sorted(eligible[proposer]), key=lambda c: util_sbs[proposer, c])
        proposals += 1
        incumbent = match_of_cluster.get(best)
        if incumbent is None:
            match_of_cluster[best] = proposer
            match_of_sbs[proposer] = best
            unmatched.remove(proposer)
        elif util_cluster[best, proposer] > util_cluster[best, incumbent]:
            eligible[incumbent].discard(best)
            del match_of_sbs[incumbent]
            unmatched.append(incumbent)
            match_of_cluster[best] = proposer
            match_of_sbs[proposer] = best
            unmatched.remove(proposer)
        else:
            eligible[proposer].discard(best)

    pairs = tuple(sorted((b, c) for b, c in match_of_sbs.items()))
    return Matching(pairs=pairs, proposals=proposals)


@dataclass
class PoolChunk:
    """One cluster-level request: a chunk and the members still missing bits of it."""

    frame: int
    tile: int
    urgency: float
    residual_bits: dict[int, float]  # user -> bits outstanding


def settle_slot(
    matching: Matching,
    pools: dict[int, "list[PoolChunk] | object"],
    member_rates: dict[int, dict[int, float]],
    slot_seconds: float,
) -> dict[int, list[tuple[PoolChunk, dict[int, float]]]]:
    """Serve each matched cluster's pool, most urgent first, within the slot.

    A chunk transmits at the slowest requesting member's rate until the slot
    budget or the slowest residual runs out; every requester drains at that
    shared rate, capped by its own residual.  Returns per-cluster lists of
    (chunk, bits delivered per member).  Pools are ordered by the caller.
    """
    served: dict[int, list[tuple[PoolChunk, dict[int, float]]]] = {}
    for sbs, cluster in matching.pairs:
        time_left = slot_seconds
        rates = member_rates[cluster]
        deliveries: list[tuple[PoolChunk, dict[int, float]]] = []
        for chunk in pools.get(cluster, ()):
            if time_left <= 0.0:
                break
            if chunk.urgency <= 0.0:
                break  # serving negative-weight requests lowers the objective
            requesters = [u for u, r in chunk.residual_bits.items() if r > 0.0]
            if not requesters:
                continue
            rate = multicast_rate([rates[u] for u in requesters])
            if rate <= 0.0:
                continue
            slowest = max(chunk.residual_bits[u] for u in requesters)
            tx_time = min(time_left, slowest / rate)
            sent = rate * tx_time
            got = {
                u: min(chunk.residual_bits[u], sent)
                for u in requesters
            }
            deliveries.append((chunk, got))
            time_left -= tx_time
        served[cluster] = deliveries
    return served


def is_stable(
    matching: Matching, util_sbs: np.ndarray, util_cluster: np.ndarray
) -> bool:
    """No pair may mutually strictly prefer each other over their assignments.

    Idle players sit at utility zero, so an all-zero instance has nothing to
    gain and every matching of it is stable.
    """
    n_sbs, n_clusters = util_sbs.shape
    sbs_util = np.zeros(n_sbs)
    cluster_util = np.zeros(n_clusters)
    for b, c in matching.pairs:
        sbs_util[b] = util_sbs[b, c]
        cluster_util[c] = util_cluster[c, b]
    for b in range(n_sbs):
        for c in range(n_clusters):
            if (b, c) in matching.pairs or not np.isfinite(util_sbs[b, c]):
                continue
            if util_sbs[b, c] > sbs_util[b] and util_cluster[c, b] > cluster_util[c]:
                return False
    return True
