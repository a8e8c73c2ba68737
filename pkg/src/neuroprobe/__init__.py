"""Generator introspection: activation rates, artifact detection, ablation repair.

The package profiles per-neuron activation frequency in small layered
convolutional image generators, flags generations that light up many
rarely-activated neurons, and repairs them by zeroing those neurons
mid-forward-pass.
"""

__version__ = "0.1.0"

from .ablation import (
    AblationConfig,
    MODE_HR,
    MODE_LR,
    MODE_RANDOM,
    PRESETS,
    default_target_layers,
    preset_config,
    random_ablate,
    sequential_ablate,
    single_ablate,
)
from .detect import (
    ArtifactScore,
    Heatmap,
    artifact_score,
    heatmap,
    rank_images,
    render_overlay,
    write_scores_csv,
)
from .errors import (
    ContractError,
    DigestMismatchError,
    FormatError,
    NeuroprobeError,
    NumericError,
    ShapeError,
)
from .freqstat import (
    NeuronSet,
    RateTable,
    estimate_rates,
    hr_set,
    load_glz,
    load_grt,
    lr_set,
    merge_counts,
    sample_latents,
    save_glz,
    save_grt,
)
from .genmodel import (
    Generator,
    GeneratorSpec,
    LayerDesc,
    LayerTrace,
    forward,
    forward_batch,
    forward_from,
    forward_hooked,
    load_gwf,
    save_gwf,
    write_gwf,
)
from .metrics import (
    FeatureSet,
    MetricReport,
    fid,
    frechet_distance,
    gaussian_stats,
    load_fts,
    matrix_sqrt_psd,
    pixel_features,
    precision_recall,
    realism_score,
    save_fts,
)
