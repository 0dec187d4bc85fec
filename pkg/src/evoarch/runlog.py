"""Run directories: append-only JSONL logs, config snapshots, artifacts.

A run directory is self-contained: the log carries the config, the
search-space geometry, the evaluator spec, every generation's population
with provenance, per-generation operator statistics, and the generator
state at each generation boundary, which together allow a byte-identical
resume.  Records never include timestamps or host paths, so two runs of
the same seed produce the same bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

LOG_VERSION = 1
LOG_FILENAME = "run.jsonl"
CACHE_FILENAME = "cache.jsonl"
CONFIG_FILENAME = "config.json"
BEST_GENOMES_FILENAME = "best_genomes.txt"
BEST_FILENAME = "best.json"


class RunLogError(ValueError):
    """A run log is missing, incomplete, or corrupted."""


def _dump(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


@dataclass
class GenerationRecord:
    """Everything logged at one generation boundary."""

    generation: int
    population: list[dict]
    offspring: list[dict]
    crossover: list[dict]
    best: dict
    next_uid: int
    rng_state: dict

    def to_line(self) -> str:
        return _dump({
            "type": "generation",
            "generation": self.generation,
            "population": self.population,
            "offspring": self.offspring,
            "crossover": self.crossover,
            "best": self.best,
            "next_uid": self.next_uid,
            "rng_state": self.rng_state,
        })

    @classmethod
    def from_record(cls, data: dict) -> "GenerationRecord":
        try:
            return cls(
                generation=data["generation"],
                population=data["population"],
                offspring=data["offspring"],
                crossover=data["crossover"],
                best=data["best"],
                next_uid=data["next_uid"],
                rng_state=data["rng_state"],
            )
        except KeyError as exc:
            raise RunLogError(f"generation record missing field {exc}") from exc


@dataclass
class RunLog:
    """In-memory view of a run, mirrored to ``run.jsonl`` when persisted."""

    config: dict
    space: dict
    evaluator_spec: str
    evaluator_identity: str
    evaluator_options: dict = field(default_factory=dict)
    records: list[GenerationRecord] = field(default_factory=list)
    run_dir: Path | None = None

    @property
    def log_path(self) -> Path | None:
        return self.run_dir / LOG_FILENAME if self.run_dir else None

    @property
    def cache_path(self) -> Path | None:
        return self.run_dir / CACHE_FILENAME if self.run_dir else None

    def meta_line(self) -> str:
        return _dump({
            "type": "meta",
            "version": LOG_VERSION,
            "config": self.config,
            "space": self.space,
            "evaluator_spec": self.evaluator_spec,
            "evaluator_identity": self.evaluator_identity,
            "evaluator_options": self.evaluator_options,
        })

    @classmethod
    def create(
        cls,
        run_dir: str | Path | None,
        config: dict,
        space: dict,
        evaluator_spec: str,
        evaluator_identity: str,
        evaluator_options: dict | None = None,
    ) -> "RunLog":
        log = cls(
            config=config,
            space=space,
            evaluator_spec=evaluator_spec,
            evaluator_identity=evaluator_identity,
            evaluator_options=evaluator_options or {},
            run_dir=Path(run_dir) if run_dir is not None else None,
        )
        if log.run_dir is not None:
            log.run_dir.mkdir(parents=True, exist_ok=True)
            if log.log_path.exists():
                raise RunLogError(
                    f"{log.log_path} already exists; resume the run instead"
                )
            log._append_line(log.meta_line())
            snapshot = {
                "evolution": config,
                "space": space,
                "evaluator": evaluator_spec,
            }
            (log.run_dir / CONFIG_FILENAME).write_text(
                json.dumps(snapshot, indent=2, sort_keys=True) + "\n"
            )
        return log

    def _append_line(self, line: str) -> None:
        with open(self.log_path, "a", encoding="utf-8") as handle:
            handle.write(line + "\n")
            handle.flush()

    def append_generation(self, record: GenerationRecord) -> None:
        self.records.append(record)
        if self.run_dir is not None:
            self._append_line(record.to_line())

    def finalize(self, top_k: int = 5) -> None:
        """Export the top genomes of the final generation."""
        if self.run_dir is None or not self.records:
            return
        final = self.records[-1].population
        ranked = sorted(
            range(len(final)), key=lambda i: (-final[i]["fitness"], i)
        )
        top = [final[i] for i in ranked[:top_k]]
        lines = [member["genome"] for member in top]
        (self.run_dir / BEST_GENOMES_FILENAME).write_text(
            "\n".join(lines) + "\n"
        )
        best = self.records[-1].best
        (self.run_dir / BEST_FILENAME).write_text(
            json.dumps(
                {"genome": best["genome"], "fitness": best["fitness"]},
                indent=2, sort_keys=True,
            ) + "\n"
        )

    @classmethod
    def load(cls, run_dir: str | Path) -> "RunLog":
        run_dir = Path(run_dir)
        path = run_dir / LOG_FILENAME
        if not path.exists():
            raise RunLogError(f"no run log at {path}")
        log: RunLog | None = None
        for lineno, line in enumerate(path.read_text().splitlines(), start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RunLogError(
                    f"{path}:{lineno}: corrupted record: {exc}"
                ) from exc
            kind = data.get("type")
            if kind == "meta":
                if log is not None:
                    raise RunLogError(f"{path}:{lineno}: duplicate meta record")
                if data.get("version") != LOG_VERSION:
                    raise RunLogError(
                        f"{path}: unsupported log version {data.get('version')!r}"
                    )
                log = cls(
                    config=data["config"],
                    space=data["space"],
                    evaluator_spec=data["evaluator_spec"],
                    evaluator_identity=data["evaluator_identity"],
                    evaluator_options=data.get("evaluator_options", {}),
                    run_dir=run_dir,
                )
            elif kind == "generation":
                if log is None:
                    raise RunLogError(
                        f"{path}:{lineno}: generation before meta record"
                    )
                record = GenerationRecord.from_record(data)
                if record.generation != len(log.records):
                    raise RunLogError(
                        f"{path}:{lineno}: generation {record.generation} out "
                        f"of order (expected {len(log.records)})"
                    )
                log.records.append(record)
            else:
                raise RunLogError(f"{path}:{lineno}: unknown record type {kind!r}")
        if log is None:
            raise RunLogError(f"{path}: no meta record")
        return log

    def best_fitness_trajectory(self) -> list[float]:
        return [record.best["fitness"] for record in self.records]

    def final_best(self) -> dict:
        if not self.records:
            raise RunLogError("run log holds no generations")
        return self.records[-1].best

    def top_genomes(self, top_k: int = 5) -> list[dict]:
        """Top individuals of the final generation, fittest first."""
        if not self.records:
            raise RunLogError("run log holds no generations")
        final = self.records[-1].population
        ranked = sorted(
            range(len(final)), key=lambda i: (-final[i]["fitness"], i)
        )
        return [final[i] for i in ranked[:top_k]]

    def total_evaluations(self) -> int:
        """Fitness values recorded across initialization and all offspring."""
        if not self.records:
            return 0
        return len(self.records[0].population) + sum(
            len(record.offspring) for record in self.records
        )
