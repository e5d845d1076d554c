"""modalgauge: embedding-space geometry measures and linear transfer
predictors for dual-encoder (image/text) models."""

__version__ = "0.1.0"

from .embed_io import (
    Manifest,
    TaskEmbeddings,
    load_array,
    load_task,
    normalize_rows,
    save_task,
    write_array,
)
from .measures import (
    MEASURE_NAMES,
    Centroids,
    MeasureOptions,
    MeasureReport,
    calinski_harabasz,
    clustering_entropy,
    correct_label_alignment,
    davies_bouldin,
    iimm,
    inter_modal_measure,
    intra_images_measure,
    intra_texts_measure,
    measure_suite,
    modality_gap,
    silhouette,
)
from .stats import (
    CorrelationResult,
    RegressionFit,
    ols_fit,
    predict_with_band,
    rank_with_ties,
    spearman,
    t_distribution_sf,
)
from .transfer import (
    GainRecord,
    OutcomeRecord,
    TransferPrediction,
    build_gain_table,
    correlate_all,
    fit_transfer_model,
    gain_over_zero_shot_error,
    predict_transfer,
)

__all__ = [name for name in dir() if not name.startswith("_")]
