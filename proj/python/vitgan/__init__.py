"""ViT generator and PatchGAN discriminator for paired image translation."""

from ._core import (
    ConfigError,
    ContractError,
    DimensionError,
    Discriminator,
    DiscriminatorConfig,
    Error,
    Generator,
    GeneratorConfig,
    IoError,
    LoadError,
    NumericError,
    Trainer,
    attention,
    fid,
    inception_score,
    load_image,
    mean_abs_laplacian,
    read_checkpoint,
    save_image,
    ssim,
    synth_pair,
    write_checkpoint,
)

__all__ = [name for name in dir() if not name.startswith("_")]
