"""Tumor-centered patch extraction for 3D brain MRI.

ROI segmentation (blur, sharpen, multilevel Yen thresholding,
morphology), 0-dimensional cubical persistent homology, 3D connected
component analysis, six patching strategies and the metrics used to
compare them.
"""

__version__ = "0.1.0"

from .errors import (
    DegenerateInputError,
    EmptyMaskError,
    EmptySelectionError,
    TumorPatchError,
    UndefinedMetricError,
    VolumeLoadError,
)
from .volume_io import (
    Case,
    SegMask3D,
    Volume3D,
    axial_slice,
    load_case,
    load_mask,
    load_volume,
    save_mask,
    save_volume,
)
from .preprocess import (
    FilterKernel,
    GradientField,
    RoiParams,
    convolve,
    extract_roi,
    gaussian_blur,
    gradient,
    morph_open_close,
    sharpen,
    threshold_top_class,
    yen_thresholds,
    zscore_normalize,
)
from .homology import (
    LifetimeImage,
    PersistenceDiagram0,
    PersistencePair,
    PersistenceSurface,
    diagram_to_csv,
    lifetime_image,
    persistence_0d,
    persistence_surface,
    strongest_component_centroid,
)
from .cca import (
    ComponentInfo,
    ComponentSet,
    components_to_csv,
    filter_small,
    label_components,
    mask_centroid,
    mask_dice,
    whole_tumor_mask,
)
from .metrics import (
    REGIONS,
    ConfusionCounts,
    center_distance,
    confusion,
    dice,
    dice_loss,
    focal_loss,
    sensitivity,
    specificity,
    tumor_fraction,
)
from .patching import (
    Patch,
    PatchParams,
    PatchSpec,
    STRATEGIES,
    clamp_window,
    generate_patches,
    patch_cca_3d,
    patch_centered_crop,
    patch_fixed_quadrants,
    patch_overlapping,
    patch_random,
    patch_tda_2d,
    splitmix64,
)
from .evaluation import (
    Phantom,
    PhantomParams,
    StrategyReport,
    PatchEvaluation,
    compare_strategies,
    evaluate_patch,
    evaluate_strategy,
    generate_phantom,
    imbalance_report,
    phantom_corpus,
)
