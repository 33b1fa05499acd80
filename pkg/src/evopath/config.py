"""Configuration dataclasses shared across the package."""

from __future__ import annotations

from dataclasses import dataclass, field, fields


@dataclass
class HyperParams:
    """Network and evolution settings.

    ``mutation_prob`` defaults to ``1 / (max_active_per_layer * num_layers)``
    when left as None.
    """

    num_layers: int = 3
    modules_per_layer: int = 20
    module_width: int = 20
    max_active_per_layer: int = 4
    input_dim: int = 64 * 64 * 3
    learning_rate: float = 0.02
    batch_size: int = 64
    generations: int = 200
    population_size: int = 20
    mutation_prob: float | None = None
    mutation_range: int = 2
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.mutation_prob is None:
            self.mutation_prob = 1.0 / (self.max_active_per_layer * self.num_layers)
        self.validate()

    def validate(self) -> None:
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        if not 1 <= self.max_active_per_layer <= self.modules_per_layer:
            raise ValueError("max_active_per_layer must be in [1, modules_per_layer]")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.module_width < 1 or self.input_dim < 1:
            raise ValueError("module_width and input_dim must be >= 1")
        if not 0.0 <= self.mutation_prob <= 1.0:
            raise ValueError("mutation_prob must be in [0, 1]")
        if self.mutation_range < 0:
            raise ValueError("mutation_range must be >= 0")
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")

    def in_dim(self, layer: int) -> int:
        """Input width of modules in ``layer`` (0-based)."""
        return self.input_dim if layer == 0 else self.module_width


@dataclass
class MelConfig:
    """Log-Mel front-end settings.

    Window and hop are in samples (25 ms and 10 ms at 16 kHz). Segments are
    64-frame context windows advanced by 34 frames (30-frame overlap).
    """

    sample_rate: int = 16000
    win_len: int = 400
    hop: int = 160
    fft_size: int = 512
    n_mels: int = 64
    fmin: float = 20.0
    fmax: float = 8000.0
    log_epsilon: float = 1e-6
    segment_frames: int = 64
    segment_hop: int = 34
    delta_window: int = 2

    def __post_init__(self) -> None:
        if self.fmax > self.sample_rate / 2:
            raise ValueError("fmax must be <= sample_rate / 2")
        if self.fft_size < self.win_len:
            raise ValueError("fft_size must be >= win_len")
        if self.segment_hop < 1:
            raise ValueError("segment_hop must be >= 1")
        if self.delta_window < 1:
            raise ValueError("delta_window must be >= 1")


@dataclass
class SyntheticSpec:
    """Parameters for the paired synthetic source/destination task generator.

    ``relatedness`` is the inner product between matching source and
    destination class prototypes; 1.0 makes the tasks identical, 0.0
    orthogonal. ``subject_sigma`` (default ``noise / 2``) scales per-subject
    mean offsets that stand in for speaker variation.
    """

    num_classes: int = 4
    dim: int = 64 * 64 * 3
    samples_per_class: int = 50
    subjects: int = 5
    relatedness: float = 0.9
    noise: float = 0.5
    subject_sigma: float | None = None

    def __post_init__(self) -> None:
        if self.num_classes < 1 or self.samples_per_class < 1:
            raise ValueError("num_classes and samples_per_class must be >= 1")
        if self.subjects < 1:
            raise ValueError("subjects must be >= 1")
        if not 0.0 <= self.relatedness <= 1.0:
            raise ValueError("relatedness must be in [0, 1]")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")
        if self.dim < 2 * self.num_classes:
            raise ValueError("dim must be >= 2 * num_classes for orthogonal prototypes")
        if self.subject_sigma is None:
            self.subject_sigma = self.noise / 2.0


def hyperparams_from_dict(d: dict) -> HyperParams:
    """Build HyperParams from a config mapping, rejecting unknown keys."""
    return _from_dict(HyperParams, d)


def melconfig_from_dict(d: dict) -> MelConfig:
    return _from_dict(MelConfig, d)


def synthetic_from_dict(d: dict) -> SyntheticSpec:
    return _from_dict(SyntheticSpec, d)


def _from_dict(cls, d: dict):
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**d)
