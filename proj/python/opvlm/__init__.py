from ._opvlm import (
    ConceptBank,
    ConceptEmbedding,
    ModelConfig,
    ModelParams,
    SyntheticSpec,
    TrainConfig,
    embed_concept,
    euclidean_limit_distance,
    exp_map_origin,
    identify,
    init_model,
    poincare_distance,
    run_cached_benchmark,
)

__all__ = [
    "ConceptBank",
    "ConceptEmbedding",
    "ModelConfig",
    "ModelParams",
    "SyntheticSpec",
    "TrainConfig",
    "embed_concept",
    "euclidean_limit_distance",
    "exp_map_origin",
    "identify",
    "init_model",
    "poincare_distance",
    "run_cached_benchmark",
]
