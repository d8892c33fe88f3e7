"""FastAPI service wrapping the pipeline; the CLI is a thin client of these handlers."""

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__
from ..datagen import (
    GenConfig,
    generate_dataset,
    parse_dataset,
    serialize_dataset,
    split_easy_hard,
)
from ..errors import RenderError, WheelgraphError
from ..matcher import parse_predictions, serialize_predictions
from ..priors import collect_pair_stats, fit_gmm, parse_priors, serialize_priors, PriorModel
from ..relgraph import parse_model, serialize_model
from ..svgrender import render_svg
from ..training import TrainConfig, evaluate, metrics_table, predict_scene, train
from .schemas import (
    EvaluateRequest,
    EvaluateResponse,
    FitPriorsRequest,
    FitPriorsResponse,
    GenerateRequest,
    GenerateResponse,
    HealthResponse,
    MetricRow,
    PredictRequest,
    PredictResponse,
    RenderRequest,
    RenderResponse,
    TrainRequest,
    TrainResponse,
)


def health():
    return HealthResponse(status="ok", version=__version__)


def generate(req: GenerateRequest) -> GenerateResponse:
    config = GenConfig(
        scenes=req.scenes,
        width=req.width,
        height=req.height,
        min_vehicles=req.min_vehicles,
        max_vehicles=req.max_vehicles,
        wheels_per_vehicle=req.wheels_per_vehicle,
        ambiguity=req.ambiguity,
        jitter=req.jitter,
        seed=req.seed,
    )
    scenes = generate_dataset(config)
    return GenerateResponse(
        dataset=serialize_dataset(scenes),
        scene_count=len(scenes),
        wheel_vehicle_pairs=sum(len(s.gt_wheel_vehicle) for s in scenes),
        wheel_wheel_pairs=sum(len(s.gt_wheel_wheel) for s in scenes),
    )


def fit_priors_handler(req: FitPriorsRequest) -> FitPriorsResponse:
    scenes = parse_dataset(req.dataset)
    wv_samples, ww_samples = collect_pair_stats(scenes)
    priors = PriorModel(
        wv=fit_gmm(wv_samples, k=req.components, tol=req.tol, max_iter=req.max_iter, seed=req.seed),
        ww=fit_gmm(ww_samples, k=req.components, tol=req.tol, max_iter=req.max_iter, seed=req.seed),
    )
    return FitPriorsResponse(
        priors=serialize_priors(priors),
        wheel_vehicle_samples=len(wv_samples),
        wheel_wheel_samples=len(ww_samples),
    )


def train_handler(req: TrainRequest) -> TrainResponse:
    scenes = parse_dataset(req.dataset)
    priors = parse_priors(req.priors)
    config = TrainConfig(
        epochs=req.epochs,
        learning_rate=req.learning_rate,
        momentum=req.momentum,
        neg_weight=req.neg_weight,
        neg_keep=req.neg_keep,
        batch_size=req.batch_size,
        seed=req.seed,
        feature_dim=req.feature_dim,
        gcn_depth=req.gcn_depth,
        gat_hidden=req.gat_hidden,
        extractor_hidden=tuple(req.extractor_hidden),
        small_object_mask=req.small_object_mask,
    )
    model, history = train(scenes, priors, config)
    return TrainResponse(checkpoint=serialize_model(model), loss_history=history)


def predict_handler(req: PredictRequest) -> PredictResponse:
    scenes = parse_dataset(req.dataset)
    priors = parse_priors(req.priors)
    model = parse_model(req.checkpoint)
    per_scene = []
    total = 0
    for scene in scenes:
        retained = predict_scene(
            scene, priors, model,
            threshold=req.threshold,
            small_object_mask=req.small_object_mask,
        )
        per_scene.append((scene.scene_id, retained))
        total += len(retained)
    return PredictResponse(predictions=serialize_predictions(per_scene), retained_pairs=total)


def evaluate_handler(req: EvaluateRequest) -> EvaluateResponse:
    scenes = parse_dataset(req.dataset)
    priors = parse_priors(req.priors)
    model = parse_model(req.checkpoint)
    easy, hard, mixed = split_easy_hard(scenes, req.split_seed)
    rows = evaluate(
        model, priors, {"easy": easy, "hard": hard, "mixed": mixed},
        threshold=req.threshold,
        include_baseline=req.baseline,
        small_object_mask=req.small_object_mask,
    )
    return EvaluateResponse(table=metrics_table(rows), rows=[MetricRow(**r) for r in rows])


def render_handler(req: RenderRequest) -> RenderResponse:
    scenes = {s.scene_id: s for s in parse_dataset(req.dataset)}
    if req.scene_id not in scenes:
        raise RenderError(f"dataset has no scene {req.scene_id}")
    pairs = []
    for scene_id, retained in parse_predictions(req.predictions):
        if scene_id == req.scene_id:
            pairs = retained
    return RenderResponse(svg=render_svg(scenes[req.scene_id], pairs))


# route -> (handler, request model); the CLI dispatches in-process through this.
ROUTES = {
    "/datasets/generate": (generate, GenerateRequest),
    "/priors/fit": (fit_priors_handler, FitPriorsRequest),
    "/models/train": (train_handler, TrainRequest),
    "/models/predict": (predict_handler, PredictRequest),
    "/models/evaluate": (evaluate_handler, EvaluateRequest),
    "/scenes/render": (render_handler, RenderRequest),
}


def create_app():
    app = FastAPI(title="wheelgraph", version=__version__)

    @app.exception_handler(WheelgraphError)
    async def _domain_error(_, exc):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(KeyError)
    async def _lookup_error(_, exc):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    app.get("/health", response_model=HealthResponse)(health)
    app.post("/datasets/generate", response_model=GenerateResponse)(generate)
    app.post("/priors/fit", response_model=FitPriorsResponse)(fit_priors_handler)
    app.post("/models/train", response_model=TrainResponse)(train_handler)
    app.post("/models/predict", response_model=PredictResponse)(predict_handler)
    app.post("/models/evaluate", response_model=EvaluateResponse)(evaluate_handler)
    app.post("/scenes/render", response_model=RenderResponse)(render_handler)
    return app


app = create_app()
