"""Latent-variable models: audio clip VAE, conditional line VAE, and the
latent alignment GAN that chains them."""

from .latent_gan import (COLLAPSE_STREAK, FUSION_MODES, GanConfig, GanModel,
                         GanTrainConfig, GanTrainTrace, build_triples, fuse,
                         load_triples, save_triples, train_gan)
from .latents import (LATENT_DIM, ORIGINS, LatentCode, LatentDistribution,
                      sample_latent)
from .spec_vae import (SpecVae, SpecVaeConfig, SpecVaeTrainConfig, TrainTrace,
                       train_spec_vae, validate_chain)
from .text_cvae import (BOS, EOS, MAX_LINE_TOKENS, PAD, SPECIAL_TOKENS, UNK,
                        LyricLine, TextCvae, TextCvaeConfig,
                        TextCvaeTrainConfig, Vocabulary, annealed_lr,
                        default_heuristic_ranker, line_from_text, pad_batch,
                        rank_and_select, train_text_cvae)

__all__ = [
    "BOS", "COLLAPSE_STREAK", "EOS", "FUSION_MODES", "GanConfig", "GanModel",
    "GanTrainConfig", "GanTrainTrace", "LATENT_DIM", "LatentCode",
    "LatentDistribution", "LyricLine", "MAX_LINE_TOKENS", "ORIGINS", "PAD",
    "SPECIAL_TOKENS", "SpecVae", "SpecVaeConfig", "SpecVaeTrainConfig",
    "TextCvae", "TextCvaeConfig", "TextCvaeTrainConfig", "TrainTrace", "UNK",
    "Vocabulary", "annealed_lr", "build_triples", "default_heuristic_ranker",
    "fuse", "line_from_text", "load_triples", "pad_batch", "rank_and_select",
    "sample_latent", "save_triples", "train_gan", "train_spec_vae",
    "train_text_cvae", "validate_chain",
]
