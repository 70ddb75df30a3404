"""Rank/size communicator with deterministic tree collectives.

Two backends share one interface: `solo` (size 1, collectives are copies)
and `in-process-ranks` (one thread per rank, queue-based point-to-point
channels). Reductions run over a fixed binary tree in rank order followed
by a broadcast of the root result, so repeated runs with the same size are
bitwise identical. The custom reduce operator is treated as non-commutative
everywhere: combine(lower-rank subtree, higher-rank subtree), always.

Every collective starts with a header-agreement phase: all ranks report
(kind, shapes, operator) for the call to rank 0, which aborts the whole
group on any disagreement. A failing rank posts a poison message to every
peer before raising, so errors surface on all ranks instead of deadlocking.
"""

import queue
import threading
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dense import ShapeError, as_matrix

DEFAULT_TIMEOUT = 120.0


class CollectiveError(RuntimeError):
    """A collective failed somewhere in the rank group."""


class CollectiveContractError(CollectiveError):
    """Ranks disagreed on which collective to run or on payload shape."""


class RankFailures(RuntimeError):
    """One or more rank contexts raised; `failures` maps rank -> exception."""

    def __init__(self, failures):
        self.failures = dict(failures)
        ranks = ", ".join(str(r) for r in sorted(self.failures))
        first = self.failures[min(self.failures)]
        super().__init__(f"rank(s) {ranks} failed; rank {min(self.failures)}: {first!r}")


@dataclass(frozen=True)
class ReduceOperator:
    """Deterministic binary combine over fixed-shape matrix payloads.

    combine(lower, higher) must return a matrix of the same shape; the
    first operand always comes from the lower-rank subtree.
    """

    name: str
    rows: int
    cols: int
    dtype: np.dtype
    combine: Callable[[np.ndarray, np.ndarray], np.ndarray]

    @property
    def shape(self):
        return (self.rows, self.cols)


def sum_operator(rows, cols, dtype):
    return ReduceOperator("sum", rows, cols, np.dtype(dtype), lambda lo, hi: lo + hi)


class Communicator:
    """Rank identity plus collectives; one handle per rank context."""

    rank = 0
    size = 1
    backend = "solo"

    def __init__(self):
        self._seq = 0

    @property
    def collective_count(self):
        """Number of collectives entered on this handle (sequence counter)."""
        return self._seq

    def allreduce_sum(self, local):
        """Elementwise sum of identically shaped matrices over all ranks."""
        local = as_matrix(local, "local")
        op = sum_operator(local.shape[0], local.shape[1], local.dtype)
        return self._allreduce(local, op, header=("allreduce_sum",) + self._payload_sig(local))

    def allreduce_custom(self, local, op):
        """Tree fold of op.combine in rank order; every rank gets the result."""
        local = as_matrix(local, "local")
        if local.shape != op.shape or local.dtype != np.dtype(op.dtype):
            raise ShapeError(
                f"allreduce_custom payload {local.shape}/{local.dtype} does not "
                f"match operator {op.shape}/{np.dtype(op.dtype)}"
            )
        return self._allreduce(
            local, op, header=("allreduce_custom", op.name) + self._payload_sig(local)
        )

    def broadcast(self, payload, root=0):
        """Copy root's payload to every rank. Non-roots may pass None."""
        if not 0 <= root < self.size:
            raise CollectiveContractError(
                f"broadcast root {root} out of range for size {self.size}"
            )
        if self.rank == root:
            payload = as_matrix(payload, "payload")
        return self._broadcast(payload, root, header=("broadcast", root))

    def barrier(self):
        """Block until every rank arrives (plumbing; a 1x1 allreduce)."""
        self.allreduce_sum(np.zeros((1, 1)))

    @staticmethod
    def _payload_sig(local):
        return (local.shape, str(local.dtype))

    def _allreduce(self, local, op, header):
        raise NotImplementedError

    def _broadcast(self, payload, root, header):
        raise NotImplementedError


class SoloComm(Communicator):
    """Single-rank backend; collectives validate and return copies."""

    backend = "solo"

    def _allreduce(self, local, op, header):
        self._seq += 1
        return local.copy()

    def _broadcast(self, payload, root, header):
        self._seq += 1
        return payload.copy()


def solo_communicator():
    return SoloComm()


class _Poison:
    """Posted to every peer by a failing rank so nobody blocks forever."""

    def __init__(self, src, text):
        self.src = src
        self.text = text


class _World:
    """Shared mailbox state for one in-process rank group."""

    def __init__(self, size, timeout=DEFAULT_TIMEOUT):
        self.size = size
        self.timeout = timeout
        self.inboxes = [queue.SimpleQueue() for _ in range(size)]


class ThreadComm(Communicator):
    """One rank of an in-process group; owned by exactly one thread."""

    backend = "in-process-ranks"

    def __init__(self, world, rank):
        super().__init__()
        if not 0 <= rank < world.size:
            raise ValueError(f"rank {rank} out of range for size {world.size}")
        self._world = world
        self.rank = rank
        self.size = world.size
        self._pending = []

    # -- point-to-point plumbing ------------------------------------------

    def _send(self, dst, seq, kind, payload):
        self._world.inboxes[dst].put((seq, kind, self.rank, payload))

    def _poison_peers(self, text):
        for dst in range(self.size):
            if dst != self.rank:
                self._world.inboxes[dst].put(_Poison(self.rank, text))

    def _fail(self, exc):
        self._poison_peers(str(exc))
        raise exc

    def _recv(self, seq, kind, src):
        for idx, msg in enumerate(self._pending):
            if msg[:3] == (seq, kind, src):
                return self._pending.pop(idx)[3]
        deadline = time.monotonic() + self._world.timeout
        inbox = self._world.inboxes[self.rank]
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                self._fail(
                    CollectiveError(
                        f"rank {self.rank} timed out after {self._world.timeout}s "
                        f"waiting for ({kind}, seq {seq}) from rank {src}"
                    )
                )
            try:
                msg = inbox.get(timeout=remaining)
            except queue.Empty:
                continue
            if isinstance(msg, _Poison):
                raise CollectiveError(
                    f"collective aborted by rank {msg.src}: {msg.text}"
                )
            if msg[:3] == (seq, kind, src):
                payload = msg[3]
                return payload
            self._pending.append(msg)

    # -- header agreement --------------------------------------------------

    def _agree(self, seq, header):
        # Two-way: rank 0 collects every header, then acks. Each rank blocks
        # on the ack, so a disagreement (or an absent rank) surfaces inside
        # the collective on every rank instead of only at the detector.
        if self.rank == 0:
            seen = {0: header}
            for src in range(1, self.size):
                seen[src] = self._recv(seq, "hdr", src)
            if any(h != header for h in seen.values()):
                detail = "; ".join(f"rank {r}: {seen[r]!r}" for r in sorted(seen))
                self._fail(
                    CollectiveContractError(
                        f"collective sequence mismatch at seq {seq}: {detail}"
                    )
                )
            for dst in range(1, self.size):
                self._send(dst, seq, "ok", None)
        else:
            self._send(0, seq, "hdr", header)
            self._recv(seq, "ok", 0)

    # -- collectives --------------------------------------------------------

    def _allreduce(self, local, op, header):
        seq = self._seq
        self._seq += 1
        self._agree(seq, header)
        acc = local.copy()
        stride = 1
        while stride < self.size:
            group = stride * 2
            if self.rank % group == stride:
                self._send(self.rank - stride, seq, "red", acc)
                break
            if self.rank % group == 0 and self.rank + stride < self.size:
                other = np.array(self._recv(seq, "red", self.rank + stride), copy=True)
                try:
                    acc = op.combine(acc, other)
                except Exception as exc:
                    self._fail(
                        CollectiveError(
                            f"reduce operator {op.name!r} failed on rank "
                            f"{self.rank}: {exc}"
                        )
                    )
                if acc.shape != op.shape:
                    self._fail(
                        CollectiveContractError(
                            f"reduce operator {op.name!r} emitted shape "
                            f"{acc.shape}, expected {op.shape}"
                        )
                    )
            stride = group
        if self.rank == 0:
            for dst in range(1, self.size):
                self._send(dst, seq, "bc", acc)
            return acc
        return np.array(self._recv(seq, "bc", 0), copy=True)

    def _broadcast(self, payload, root, header):
        seq = self._seq
        self._seq += 1
        self._agree(seq, header)
        if self.rank == root:
            for dst in range(self.size):
                if dst != root:
                    self._send(dst, seq, "bc", payload)
            return payload.copy()
        return np.array(self._recv(seq, "bc", root), copy=True)


def run_ranks(size, target, *args, timeout=DEFAULT_TIMEOUT, **kwargs):
    """Run target(comm, *args, **kwargs) on `size` in-process ranks.

    Returns the per-rank return values in rank order. If any rank raises,
    the surviving results are discarded and RankFailures carries every
    rank's exception.
    """
    if size < 1:
        raise ValueError(f"size must be >= 1, got {size}")
    world = _World(size, timeout=timeout)
    results = [None] * size
    failures = {}

    def body(rank):
        comm = ThreadComm(world, rank)
        try:
            results[rank] = target(comm, *args, **kwargs)
        except BaseException as exc:  # noqa: BLE001 - reported via RankFailures
            failures[rank] = exc

    threads = [
        threading.Thread(target=body, args=(r,), daemon=True, name=f"rank-{r}")
        for r in range(size)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if failures:
        raise RankFailures(failures)
    return results
