from datetime import datetime, timezone
from sqlalchemy import Boolean, Column, DateTime, Float, ForeignKey, Integer, String, Text, UniqueConstraint
from sqlalchemy.orm import relationship
from extensions import Base


class StreamRun(Base):
    __tablename__ = "stream_runs"

    id = Column(Integer, primary_key=True)
    name = Column(String(255), nullable=False, index=True)
    adapt = Column(Boolean, nullable=False)

    chunk_size = Column(Integer, nullable=False)
    n_chunks = Column(Integer, nullable=False)
    ustm_capacity = Column(Integer, nullable=False)
    seed = Column(Integer, nullable=False, default=0)

    average_accuracy = Column(Float, nullable=False)
    config_json = Column(Text, nullable=False, default="{}")  # StreamConfig echo
    created_at = Column(DateTime(timezone=True), nullable=False,
                        default=lambda: datetime.now(timezone.utc))

    chunks = relationship("ChunkResult", back_populates="run", order_by="ChunkResult.chunk_index",
                          cascade="all, delete-orphan")


class ChunkResult(Base):
    __tablename__ = "chunk_results"

    id = Column(Integer, primary_key=True)
    run_id = Column(Integer, ForeignKey("stream_runs.id"), nullable=False, index=True)
    chunk_index = Column(Integer, nullable=False)   # 1-based
    n_samples = Column(Integer, nullable=False)
    accuracy = Column(Float, nullable=False)
    retrain_seconds = Column(Float, nullable=False, default=0.0)
    inference_seconds = Column(Float, nullable=False, default=0.0)

    run = relationship("StreamRun", back_populates="chunks")

    __table_args__ = (UniqueConstraint("run_id", "chunk_index", name="uq_run_chunk"),)
