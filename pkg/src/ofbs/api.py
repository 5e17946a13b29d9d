"""HTTP service wrapping the run pipelines.

Run with `uvicorn ofbs.api:app`.  Requests carry the same experiment
description as the CLI config files; responses return covariance blocks and
verification reports inline, and simulation can optionally persist its
ensemble server-side when `out_dir` is given.
"""

from typing import Literal, Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .config import (
    DEFAULT_FDD_POINTS,
    DEFAULT_POINTS,
    DEFAULT_SELFSIM_POINTS,
    DEFAULT_TOLERANCES,
    SimConfig,
    config_hash,
)
from .errors import ConfigError, DomainError, NumericError
from .runs import run_cov, run_simulate, run_verify

Point = tuple[float, float]


class ConfigModel(BaseModel):
    """Experiment description; mirrors the CLI config keys."""

    d: int = 1
    exponent: list[list[float]]
    n: int = 32
    grid_m: int = 16
    replicates: int = 1000
    seed: int = 0
    generator: Literal["rademacher", "product_sign"] = "rademacher"
    quad_order: int = 16
    epsilon: float = 0.1
    c_list: list[float] = Field(default_factory=lambda: [0.5, 2.0])
    points: Optional[list[Point]] = None
    selfsim_points: Optional[list[Point]] = None
    n_ladder: list[int] = Field(default_factory=lambda: [8, 16, 32, 64])
    fdd_points: Optional[list[Point]] = None
    fdd_a: Optional[list[float]] = None
    fdd_b: Optional[list[float]] = None
    qv_point_k: Point = (1.0, 1.0)
    qv_point_l: Point = (0.5, 0.75)
    qv_q: int = 1
    qv_m: int = 1
    tolerances: dict[str, float] = Field(default_factory=dict)

    def to_simconfig(self):
        import numpy as np

        tolerances = dict(DEFAULT_TOLERANCES)
        tolerances.update(self.tolerances)
        cfg = SimConfig(
            d=self.d,
            D=np.asarray(self.exponent, dtype=float),
            n=self.n,
            grid_m=self.grid_m,
            replicates=self.replicates,
            seed=self.seed,
            generator=self.generator,
            quad_order=self.quad_order,
            epsilon=self.epsilon,
            c_list=tuple(self.c_list),
            points=tuple(map(tuple, self.points)) if self.points is not None else DEFAULT_POINTS,
            selfsim_points=tuple(map(tuple, self.selfsim_points))
            if self.selfsim_points is not None
            else DEFAULT_SELFSIM_POINTS,
            n_ladder=tuple(self.n_ladder),
            fdd_points=tuple(map(tuple, self.fdd_points))
            if self.fdd_points is not None
            else DEFAULT_FDD_POINTS,
            fdd_a=tuple(self.fdd_a) if self.fdd_a is not None else None,
            fdd_b=tuple(self.fdd_b) if self.fdd_b is not None else None,
            qv_point_k=tuple(self.qv_point_k),
            qv_point_l=tuple(self.qv_point_l),
            qv_q=self.qv_q,
            qv_m=self.qv_m,
            tolerances=tolerances,
        )
        cfg.validate()
        return cfg


class HealthResponse(BaseModel):
    status: str
    version: str


class CovarianceBlock(BaseModel):
    k: int
    l: int
    point_k: Point
    point_l: Point
    entries: list[list[float]]


class CovarianceRequest(BaseModel):
    config: ConfigModel


class CovarianceResponse(BaseModel):
    config_hash: str
    provenance: str
    quad_order: int
    points: list[Point]
    blocks: list[CovarianceBlock]


class SimulateRequest(BaseModel):
    config: ConfigModel
    out_dir: Optional[str] = None
    jobs: int = 1


class SimulateResponse(BaseModel):
    config_hash: str
    files: list[str]
    summary: dict[str, float]


class VerifyRequest(BaseModel):
    config: ConfigModel
    jobs: int = 1


class ReportRowModel(BaseModel):
    n: Optional[int]
    metric: str
    value: float
    tolerance: float
    passed: bool


class VerifyResponse(BaseModel):
    config_hash: str
    passed: bool
    rows: list[ReportRowModel]
    meta: dict[str, str]


app = FastAPI(
    title="ofbs",
    version=__version__,
    description="Operator fractional Brownian sheet: simulation and convergence diagnostics.",
)


@app.exception_handler(ConfigError)
@app.exception_handler(DomainError)
async def _validation_error(request: Request, exc: Exception):
    return JSONResponse(status_code=422, content={"detail": str(exc)})


@app.exception_handler(NumericError)
async def _numeric_error(request: Request, exc: Exception):
    return JSONResponse(status_code=500, content={"detail": str(exc)})


@app.get("/health", response_model=HealthResponse)
def health():
    return HealthResponse(status="ok", version=__version__)


@app.post("/covariance", response_model=CovarianceResponse)
def covariance(request: CovarianceRequest):
    cfg = request.config.to_simconfig()
    tensor = run_cov(cfg)
    blocks = []
    points = []
    if tensor is not None:
        points = [tuple(p) for p in tensor.points]
        for k in range(tensor.Q):
            for l in range(tensor.Q):
                blocks.append(
                    CovarianceBlock(
                        k=k,
                        l=l,
                        point_k=points[k],
                        point_l=points[l],
                        entries=tensor.blocks[k, l].tolist(),
                    )
                )
    return CovarianceResponse(
        config_hash=config_hash(cfg),
        provenance="quadrature",
        quad_order=cfg.quad_order,
        points=points,
        blocks=blocks,
    )


@app.post("/simulate", response_model=SimulateResponse)
def simulate(request: SimulateRequest):
    cfg = request.config.to_simconfig()
    result = run_simulate(cfg, out_dir=request.out_dir, jobs=request.jobs)
    return SimulateResponse(
        config_hash=result.config_hash,
        files=result.files,
        summary={k: float(v) for k, v in result.summary.items()},
    )


@app.post("/verify", response_model=VerifyResponse)
def verify(request: VerifyRequest):
    cfg = request.config.to_simconfig()
    report = run_verify(cfg, jobs=request.jobs)
    return VerifyResponse(
        config_hash=config_hash(cfg),
        passed=report.passed,
        rows=[
            ReportRowModel(
                n=row.n,
                metric=row.metric,
                value=row.value,
                tolerance=row.tolerance,
                passed=row.passed,
            )
            for row in report.rows
        ],
        meta={k: str(v) for k, v in report.meta.items()},
    )
