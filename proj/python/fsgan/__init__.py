"""Python access to the fsgan core: the command line plus data and metric helpers."""

from ._fsgan import (
    __version__,
    desk_fid,
    intra_diversity,
    kl_divergence,
    perceptual_distance,
    run_cli,
    sample_mask,
    synth_images,
)

__all__ = [
    "__version__",
    "desk_fid",
    "intra_diversity",
    "kl_divergence",
    "perceptual_distance",
    "run_cli",
    "sample_mask",
    "synth_images",
]
