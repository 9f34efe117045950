from .canonical import canonical_match, canonicalize, symbolically_equivalent
from .metrics import r_squared, recovery_rate
from .registry import (BenchmarkSpec, Dataset, Registry, Sampling, UnsupportedBenchmark,
                       add_noise, sample_dataset)

__all__ = [
    "BenchmarkSpec", "Dataset", "Registry", "Sampling", "UnsupportedBenchmark", "add_noise",
    "canonical_match", "canonicalize", "r_squared", "recovery_rate", "sample_dataset",
    "symbolically_equivalent",
]
