"""NEAT neuroevolution lab with a dangerous-foraging evaluation domain."""

from .evolution import EvolutionConfig
from .foraging import FitnessRecord, Geometry
from .genome import Genome, GenomeParams, InnovationRegistry
from .harness import EvolutionRun, VariantSpec, all_variants

__all__ = [
    "EvolutionConfig",
    "EvolutionRun",
    "FitnessRecord",
    "Genome",
    "GenomeParams",
    "Geometry",
    "InnovationRegistry",
    "VariantSpec",
    "all_variants",
]

__version__ = "0.1.0"
