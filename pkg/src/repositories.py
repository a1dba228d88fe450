from __future__ import annotations
import json
from abc import ABC, abstractmethod
from dataclasses import asdict
from typing import Dict, List, Optional, Tuple

from sqlalchemy import func, select

from extensions import Database
from helpers import now_utc
from models import ChunkResult, StreamRun
from streaming import ChunkRecord, StreamConfig, StreamReport


def _build_run(name: str, report: StreamReport, cfg: StreamConfig) -> StreamRun:
    run = StreamRun(
        name=name,
        adapt=cfg.adapt,
        chunk_size=cfg.chunk_size,
        n_chunks=cfg.n_chunks,
        ustm_capacity=cfg.ustm_capacity,
        seed=cfg.seed,
        average_accuracy=report.average_accuracy,
        config_json=json.dumps(asdict(cfg), sort_keys=True),
        created_at=now_utc(),
    )
    run.chunks = [
        ChunkResult(chunk_index=r.chunk_index, n_samples=r.n_samples, accuracy=r.accuracy,
                    retrain_seconds=r.retrain_seconds, inference_seconds=r.inference_seconds)
        for r in report.records
    ]
    return run


def _report_from_rows(rows) -> StreamReport:
    return StreamReport([
        ChunkRecord(c.chunk_index, c.n_samples, c.accuracy, c.retrain_seconds, c.inference_seconds)
        for c in sorted(rows, key=lambda c: c.chunk_index)
    ])


# ---------- Repository interface ----------
class RunRepository(ABC):
    @abstractmethod
    def save_run(self, name: str, report: StreamReport, cfg: StreamConfig) -> int: ...
    @abstractmethod
    def get_report(self, run_id: int) -> Optional[StreamReport]: ...
    @abstractmethod
    def list_runs(self, *, adapt: Optional[bool], limit: int, offset: int) -> Tuple[List[StreamRun], int]: ...


# ---------- In-memory implementation (tests/dev) ----------
class InMemoryRunRepository(RunRepository):
    def __init__(self):
        self.runs: Dict[int, StreamRun] = {}
        self._next_id = 1

    def save_run(self, name: str, report: StreamReport, cfg: StreamConfig) -> int:
        run = _build_run(name, report, cfg)
        run.id = self._next_id
        self.runs[run.id] = run
        self._next_id += 1
        return run.id

    def get_report(self, run_id: int) -> Optional[StreamReport]:
        run = self.runs.get(run_id)
        if run is None:
            return None
        return _report_from_rows(run.chunks)

    def list_runs(self, *, adapt: Optional[bool], limit: int, offset: int) -> Tuple[List[StreamRun], int]:
        rows = [r for r in self.runs.values() if adapt is None or r.adapt is adapt]
        rows.sort(key=lambda r: r.id, reverse=True)
        return rows[offset:offset + limit], len(rows)


# ---------- SQLAlchemy implementation ----------
class SQLAlchemyRunRepository(RunRepository):
    def __init__(self, database: Database):
        self.db = database

    def save_run(self, name: str, report: StreamReport, cfg: StreamConfig) -> int:
        run = _build_run(name, report, cfg)
        with self.db.session() as session:
            session.add(run)
            session.commit()
            return run.id

    def get_report(self, run_id: int) -> Optional[StreamReport]:
        with self.db.session() as session:
            run = session.get(StreamRun, run_id)
            if run is None:
                return None
            return _report_from_rows(run.chunks)

    def list_runs(self, *, adapt: Optional[bool], limit: int, offset: int) -> Tuple[List[StreamRun], int]:
        q = select(StreamRun)
        if adapt is not None:
            q = q.where(StreamRun.adapt.is_(adapt))
        with self.db.session() as session:
            total = session.scalar(select(func.count()).select_from(q.subquery()))
            rows = session.scalars(q.order_by(StreamRun.id.desc()).offset(offset).limit(limit)).all()
            return list(rows), int(total or 0)
