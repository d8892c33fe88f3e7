"""Request/response models of the pipeline service."""

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class GenerateRequest(BaseModel):
    scenes: int = 100
    width: float = 800.0
    height: float = 600.0
    min_vehicles: int = 1
    max_vehicles: int = 3
    wheels_per_vehicle: int = 2
    ambiguity: float = 0.0
    jitter: float = 0.0
    seed: int = 0


class GenerateResponse(BaseModel):
    dataset: str
    scene_count: int
    wheel_vehicle_pairs: int
    wheel_wheel_pairs: int


class FitPriorsRequest(BaseModel):
    dataset: str
    components: int = 2
    tol: float = 1e-6
    max_iter: int = 200
    seed: int = 0


class FitPriorsResponse(BaseModel):
    priors: str
    wheel_vehicle_samples: int
    wheel_wheel_samples: int


class TrainRequest(BaseModel):
    dataset: str
    priors: str
    epochs: int = 30
    learning_rate: float = 0.01
    momentum: float = 0.9
    neg_weight: float = 0.1
    neg_keep: float = 1.0
    batch_size: int = 4
    seed: int = 0
    feature_dim: int = 64
    gcn_depth: int = 2
    gat_hidden: int = 64
    extractor_hidden: list[int] = Field(default_factory=lambda: [64])
    small_object_mask: bool = True


class TrainResponse(BaseModel):
    checkpoint: str
    loss_history: list[float]


class PredictRequest(BaseModel):
    dataset: str
    priors: str
    checkpoint: str
    threshold: float = 0.5
    small_object_mask: bool = True


class PredictResponse(BaseModel):
    predictions: str
    retained_pairs: int


class MetricRow(BaseModel):
    method: str
    split: str
    pairs: str
    accuracy: float | None
    scenes: int


class EvaluateRequest(BaseModel):
    dataset: str
    priors: str
    checkpoint: str
    threshold: float = 0.5
    split_seed: int = 0
    baseline: bool = False
    small_object_mask: bool = True


class EvaluateResponse(BaseModel):
    table: str
    rows: list[MetricRow]


class RenderRequest(BaseModel):
    dataset: str
    scene_id: int
    predictions: str


class RenderResponse(BaseModel):
    svg: str
