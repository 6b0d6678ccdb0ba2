from .corpus import make_demo_manifest, make_text_pool
from .grid import (
    ALL_CONFIGS,
    GridConfig,
    ToyExperiment,
    ablate_embedding_size,
    config_tag,
    evaluate_model,
    run_experiment_grid,
)
from .model import (
    ToyModel,
    TrainConfig,
    TrainingData,
    build_training_data,
    closed_form_solution,
    fit,
    grad_check,
    infer,
    infer_text,
    loss_and_grads,
    solve_closed_form,
    train_model,
)
from .world import ToyWorld, WorldConfig, asset_ref, generate_world, render_utterance
