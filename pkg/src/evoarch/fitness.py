"""Fitness evaluation: surrogates, the genotype-keyed cache, and workers.

External evaluation speaks newline-delimited JSON over a worker's
standard streams.  One request per line in::

    {"version": 1, "request_id": 7, "genome": "0101...",
     "arch_ir": {...}, "eval_config": {...}}

one response per line out::

    {"version": 1, "request_id": 7, "status": "ok",
     "fitness": 0.83, "metrics": {"F1": 0.83}}
    {"version": 1, "request_id": 7, "status": "error", "error": "..."}

``arch_ir`` is the exported IR document for the genome.  ``request_id``
is a monotonically increasing integer per engine run; responses may
arrive in any order and are matched by id.  A worker exits 0 after
reading ``{"version": 1, "shutdown": true}`` (or end-of-input).
"""

from __future__ import annotations

import hashlib
import json
import queue
import shlex
import subprocess
import threading
from collections import deque
from pathlib import Path
from typing import Protocol, Sequence

from .archspace import decode_genotype, ir_to_document
from .genome import Genotype, SearchSpaceConfig, normalized_hamming, parse_genotype

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT = 24 * 3600.0  # generous enough for a full training job


class EvaluationError(RuntimeError):
    """An individual could not be evaluated after the allowed retries."""


class Evaluator(Protocol):
    """Anything that can score genotypes, batch at a time."""

    spec: str
    identity: str
    dispatch_count: int

    def evaluate_many(self, genotypes: Sequence[Genotype],
                      parallelism: int = 1) -> list[float]: ...


def onemax_surrogate(target: Genotype):
    """Fitness = 1 - normalized Hamming distance to ``target``."""
    def score(genotype: Genotype) -> float:
        return 1.0 - normalized_hamming(genotype, target)
    return score


def arch_proxy_surrogate(genotype: Genotype, space: SearchSpaceConfig,
                         w_nodes: float = 0.5, w_op: float = 0.5) -> float:
    """Deterministic architecture-aware score that exercises decoding.

    Rewards dense blocks (fraction of possible intermediate nodes that
    survive pruning) and blocks using operation id 11, the empirically
    strongest sequence.
    """
    ir = decode_genotype(genotype, space)
    total_nodes = sum(len(b.active_nodes) for b in ir.blocks.values())
    node_fraction = total_nodes / (space.num_blocks * space.max_nodes)
    op11_fraction = sum(
        1 for b in ir.blocks.values() if b.op.op_id == 11
    ) / space.num_blocks
    return w_nodes * node_fraction + w_op * op11_fraction


class OneMaxEvaluator:
    """Desk-scale surrogate: distance to a fixed target genome."""

    options: dict = {}

    def __init__(self, target: Genotype, spec: str | None = None):
        self.target = target
        self.spec = spec or f"onemax:{target.to_text()}"
        digest = hashlib.sha1(target.to_text().encode()).hexdigest()[:12]
        self.identity = f"onemax:{digest}"
        self.dispatch_count = 0
        self._score = onemax_surrogate(target)

    def evaluate_many(self, genotypes: Sequence[Genotype],
                      parallelism: int = 1) -> list[float]:
        self.dispatch_count += len(genotypes)
        return [self._score(g) for g in genotypes]


class ArchProxyEvaluator:
    """Surrogate that routes every evaluation through genotype decoding."""

    spec = "arch-proxy"
    identity = "arch-proxy:v1"
    options: dict = {}

    def __init__(self, space: SearchSpaceConfig):
        self.space = space
        self.dispatch_count = 0

    def evaluate_many(self, genotypes: Sequence[Genotype],
                      parallelism: int = 1) -> list[float]:
        self.dispatch_count += len(genotypes)
        return [arch_proxy_surrogate(g, self.space) for g in genotypes]


class FitnessCache:
    """Genome+evaluator keyed store, persisted as appendable JSONL."""

    def __init__(self, path: str | Path | None = None):
        self._store: dict[tuple[str, str], float] = {}
        self._lock = threading.Lock()
        self.path = Path(path) if path is not None else None
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        for line in self.path.read_text().splitlines():
            if not line.strip():
                continue
            entry = json.loads(line)
            self._store[(entry["evaluator"], entry["genome"])] = entry["fitness"]

    def get(self, evaluator_identity: str, genome_text: str) -> float | None:
        return self._store.get((evaluator_identity, genome_text))

    def put(self, evaluator_identity: str, genome_text: str,
            fitness: float) -> None:
        key = (evaluator_identity, genome_text)
        with self._lock:
            if key in self._store:
                return
            self._store[key] = fitness
            if self.path is not None:
                entry = json.dumps(
                    {"evaluator": evaluator_identity, "genome": genome_text,
                     "fitness": fitness},
                    sort_keys=True, separators=(",", ":"),
                )
                with open(self.path, "a", encoding="utf-8") as handle:
                    handle.write(entry + "\n")
                    handle.flush()

    def __len__(self) -> int:
        return len(self._store)


def evaluate_population(pop: Sequence, evaluator: Evaluator,
                        cache: FitnessCache | None = None,
                        parallelism: int = 1) -> Sequence:
    """Fill in every missing fitness, consulting the cache first.

    Duplicate genomes are dispatched once; results are merged back by
    genome text, so the outcome does not depend on completion order.
    """
    cache = cache if cache is not None else FitnessCache()
    todo: list[Genotype] = []
    seen: set[str] = set()
    for ind in pop:
        if ind.fitness is not None:
            continue
        text = ind.genotype.to_text()
        if text in seen or cache.get(evaluator.identity, text) is not None:
            continue
        seen.add(text)
        todo.append(ind.genotype)
    if todo:
        values = evaluator.evaluate_many(todo, parallelism=parallelism)
        if len(values) != len(todo):
            raise EvaluationError(
                f"evaluator returned {len(values)} results for {len(todo)} requests"
            )
        for genotype, value in zip(todo, values):
            cache.put(evaluator.identity, genotype.to_text(), value)
    for ind in pop:
        if ind.fitness is None:
            value = cache.get(evaluator.identity, ind.genotype.to_text())
            if value is None:
                raise EvaluationError(
                    f"no fitness for individual {ind.uid} after evaluation"
                )
            ind.set_fitness(value)
    return pop


class _ProtocolError(RuntimeError):
    pass


_EOF = object()


class _Worker:
    """One spawned worker process with a line-reader thread."""

    def __init__(self, argv: list[str]):
        try:
            self.proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise EvaluationError(f"cannot spawn worker {argv[0]!r}: {exc}") from exc
        self.lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self) -> None:
        for line in self.proc.stdout:
            self.lines.put(line)
        self.lines.put(_EOF)

    def send(self, payload: dict) -> None:
        try:
            self.proc.stdin.write(
                json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"
            )
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError, ValueError) as exc:
            raise _ProtocolError(f"worker stdin closed: {exc}") from exc

    def get_line(self, timeout: float) -> str:
        try:
            item = self.lines.get(timeout=timeout)
        except queue.Empty:
            raise TimeoutError(f"no worker response within {timeout}s")
        if item is _EOF:
            raise _ProtocolError("worker closed its output stream")
        return item

    def shutdown(self, grace: float = 5.0) -> int | None:
        try:
            self.send({"version": PROTOCOL_VERSION, "shutdown": True})
            self.proc.stdin.close()
        except (_ProtocolError, OSError):
            pass
        try:
            return self.proc.wait(timeout=grace)
        except subprocess.TimeoutExpired:
            self.kill()
            return self.proc.returncode

    def kill(self) -> None:
        if self.proc.poll() is None:
            self.proc.kill()
            self.proc.wait()


class ExternalEvaluator:
    """Dispatches fitness requests to spawned worker processes.

    ``workers`` processes are kept alive across batches; a batch is split
    round-robin and each worker pipeline carries up to
    ``max(1, parallelism // workers)`` requests in flight.  A request that
    hits a crash, timeout, or malformed response is retried once on a
    fresh worker; a second failure (or a well-formed error response)
    marks the individual failed and aborts the batch.
    """

    def __init__(
        self,
        command: str,
        space: SearchSpaceConfig,
        workers: int = 1,
        timeout: float = DEFAULT_TIMEOUT,
        eval_config: dict | None = None,
        in_channels: int = 3,
    ):
        if workers < 1:
            raise ValueError("workers must be >= 1")
        self.command = command
        self.argv = shlex.split(command)
        if not self.argv:
            raise ValueError("external evaluator command is empty")
        self.space = space
        self.workers = workers
        self.timeout = timeout
        self.eval_config = eval_config or {}
        self.in_channels = in_channels
        self.spec = f"external:{command}"
        self.identity = self._build_identity()
        self.options = {
            "eval_config": self.eval_config,
            "in_channels": in_channels,
        }
        self.dispatch_count = 0
        self._slots: list[_Worker | None] = [None] * workers
        self._next_request_id = 0

    def _build_identity(self) -> str:
        identity = f"external:{self.command}"
        if self.eval_config:
            blob = json.dumps(self.eval_config, sort_keys=True)
            identity += "#" + hashlib.sha1(blob.encode()).hexdigest()[:8]
        return identity

    def _ensure_worker(self, slot: int) -> _Worker:
        worker = self._slots[slot]
        if worker is None or worker.proc.poll() is not None:
            worker = _Worker(self.argv)
            self._slots[slot] = worker
        return worker

    def _restart_worker(self, slot: int) -> None:
        worker = self._slots[slot]
        if worker is not None:
            worker.kill()
        self._slots[slot] = None

    def _build_request(self, genotype: Genotype) -> tuple[int, dict]:
        request_id = self._next_request_id
        self._next_request_id += 1
        document = ir_to_document(
            decode_genotype(genotype, self.space, self.in_channels)
        )
        payload = {
            "version": PROTOCOL_VERSION,
            "request_id": request_id,
            "genome": genotype.to_text(),
            "arch_ir": document,
            "eval_config": self.eval_config,
        }
        return request_id, payload

    def evaluate_many(self, genotypes: Sequence[Genotype],
                      parallelism: int = 1) -> list[float]:
        requests = [self._build_request(g) for g in genotypes]
        self.dispatch_count += len(requests)
        window = max(1, parallelism // self.workers)
        per_slot = [requests[slot::self.workers] for slot in range(self.workers)]
        results: dict[int, dict] = {}
        failures: dict[int, str] = {}

        if self.workers == 1:
            self._serve_slot(0, per_slot[0], window, results, failures)
        else:
            threads = [
                threading.Thread(
                    target=self._serve_slot,
                    args=(slot, per_slot[slot], window, results, failures),
                )
                for slot in range(self.workers)
                if per_slot[slot]
            ]
            for thread in threads:
                thread.start()
            for thread in threads:
                thread.join()

        fitnesses: list[float] = []
        problems: list[str] = []
        for request_id, _ in requests:
            if request_id in failures:
                problems.append(f"request {request_id}: {failures[request_id]}")
                continue
            response = results[request_id]
            if response.get("status") == "error":
                problems.append(
                    f"request {request_id}: worker error: "
                    f"{response.get('error', 'unspecified')}"
                )
                continue
            fitnesses.append(float(response["fitness"]))
        if problems:
            raise EvaluationError("; ".join(problems))
        return fitnesses

    def _serve_slot(self, slot: int, assigned: list[tuple[int, dict]],
                    window: int, results: dict[int, dict],
                    failures: dict[int, str]) -> None:
        pending = deque(assigned)
        attempts = {request_id: 0 for request_id, _ in assigned}
        in_flight: dict[int, dict] = {}

        def fail_in_flight(reason: str) -> None:
            self._restart_worker(slot)
            for request_id, payload in list(in_flight.items()):
                if attempts[request_id] >= 2:
                    failures[request_id] = reason
                else:
                    pending.append((request_id, payload))
            in_flight.clear()

        while pending or in_flight:
            worker = self._ensure_worker(slot)
            try:
                while pending and len(in_flight) < window:
                    request_id, payload = pending.popleft()
                    attempts[request_id] += 1
                    worker.send(payload)
                    in_flight[request_id] = payload
                if not in_flight:
                    break
                line = worker.get_line(self.timeout)
                response = self._parse_response(line)
                request_id = response["request_id"]
                if request_id in in_flight:
                    del in_flight[request_id]
                    results[request_id] = response
                elif request_id not in results:
                    raise _ProtocolError(
                        f"response for unknown request {request_id}"
                    )
            except (_ProtocolError, TimeoutError) as exc:
                fail_in_flight(str(exc))

    @staticmethod
    def _parse_response(line: str) -> dict:
        try:
            response = json.loads(line)
        except json.JSONDecodeError as exc:
            raise _ProtocolError(f"malformed response line: {exc}") from exc
        if not isinstance(response, dict) or "request_id" not in response:
            raise _ProtocolError("response missing request_id")
        status = response.get("status")
        if status == "ok":
            fitness = response.get("fitness")
            if not isinstance(fitness, (int, float)) or not 0.0 <= fitness <= 1.0:
                raise _ProtocolError(
                    f"fitness must be a number in [0, 1], got {fitness!r}"
                )
        elif status != "error":
            raise _ProtocolError(f"unknown response status {status!r}")
        return response

    def shutdown(self) -> None:
        for slot, worker in enumerate(self._slots):
            if worker is not None:
                worker.shutdown()
                self._slots[slot] = None

    def __enter__(self) -> "ExternalEvaluator":
        return self

    def __exit__(self, *exc_info) -> None:
        self.shutdown()


def build_evaluator(spec: str, space: SearchSpaceConfig, *,
                    workers: int = 1, timeout: float = DEFAULT_TIMEOUT,
                    eval_config: dict | None = None,
                    in_channels: int = 3) -> Evaluator:
    """Construct an evaluator from its textual spec.

    ``onemax`` targets the all-ones genome; ``onemax:<bits>`` a custom
    one.  ``arch-proxy`` scores decoded architectures.  ``external:<cmd>``
    spawns worker processes speaking the JSONL protocol.
    """
    if spec == "onemax":
        ones = parse_genotype("1" * space.genome_length, space)
        return OneMaxEvaluator(ones, spec=spec)
    if spec.startswith("onemax:"):
        target = parse_genotype(spec.split(":", 1)[1], space)
        return OneMaxEvaluator(target)
    if spec == "arch-proxy":
        return ArchProxyEvaluator(space)
    if spec.startswith("external:"):
        command = spec.split(":", 1)[1]
        return ExternalEvaluator(
            command, space, workers=workers, timeout=timeout,
            eval_config=eval_config, in_channels=in_channels,
        )
    raise ValueError(f"unknown evaluator spec {spec!r}")
