"""FastAPI application exposing the engine."""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import InfrastructureError, ValidationError
from . import core, schemas


def create_app() -> FastAPI:
    app = FastAPI(
        title="leti-engine",
        version=__version__,
        description=(
            "Feedback-conditioned fine-tuning data service: sampling, sandboxed "
            "evaluation, dataset assembly, metrics, and the improvement loop."
        ),
    )

    @app.exception_handler(ValidationError)
    async def validation_handler(request: Request, exc: ValidationError):
        return JSONResponse(
            status_code=400, content={"detail": str(exc), "kind": "validation"}
        )

    @app.exception_handler(InfrastructureError)
    async def infrastructure_handler(request: Request, exc: InfrastructureError):
        return JSONResponse(
            status_code=503, content={"detail": str(exc), "kind": "infrastructure"}
        )

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/metrics/pass-at-k", response_model=schemas.PassAtKResponse)
    def pass_at_k(request: schemas.PassAtKRequest):
        return core.compute_pass_at_k(request.n, request.c, request.k)

    @app.post("/metrics/improvement", response_model=schemas.ImprovementResponse)
    def improvement(request: schemas.ImprovementRequest):
        return core.compute_improvement(request.series)

    @app.post("/fcft/render", response_model=schemas.RenderFeedbackResponse)
    def render_feedback(request: schemas.RenderFeedbackRequest):
        return core.render_feedback_op(request.f_binary, request.f_text)

    @app.post("/fcft/parse", response_model=schemas.ParseSequenceResponse)
    def parse_sequence(request: schemas.ParseSequenceRequest):
        return core.parse_sequence_op(request.sequence)

    @app.post("/sample", response_model=schemas.SampleResponse)
    def sample(request: schemas.SampleRequest):
        return core.sample_candidates(
            request.config,
            iteration=request.iteration,
            out_path=request.out_path,
            limit_problems=request.limit_problems,
        )

    @app.post("/evaluate", response_model=schemas.EvaluateResponse)
    def evaluate(request: schemas.EvaluateRequest):
        return core.evaluate_samples(
            request.config,
            samples_path=request.samples_path,
            samples=request.samples,
            out_path=request.out_path,
        )

    @app.post("/fcft/build", response_model=schemas.BuildFcftResponse)
    def build_fcft(request: schemas.BuildFcftRequest):
        return core.build_fcft(
            request.config,
            samples_path=request.samples_path,
            feedback_path=request.feedback_path,
            iteration=request.iteration,
            out_path=request.out_path,
        )

    @app.post("/loop", response_model=schemas.LoopResponse)
    def loop(request: schemas.LoopRequest):
        return core.run_loop_service(request.config, request.resume_run_dir)

    @app.post("/report", response_model=schemas.ReportResponse)
    def report(request: schemas.ReportRequest):
        return core.report(request.run_dir)

    @app.post("/eae/evaluate", response_model=schemas.EaeEvaluateResponse)
    def eae_evaluate(request: schemas.EaeEvaluateRequest):
        return core.eae_evaluate_op(
            ontology=request.ontology.model_dump(),
            gold=request.gold.model_dump(),
            prediction=request.prediction.model_dump() if request.prediction else None,
            code=request.code,
        )

    @app.post("/eae/score", response_model=schemas.EaeScoreResponse)
    def eae_score(request: schemas.EaeScoreRequest):
        return core.eae_score_op(
            [p.model_dump() for p in request.predictions],
            [g.model_dump() for g in request.golds],
        )

    return app


app = create_app()
