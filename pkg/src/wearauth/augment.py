"""Breathing-event augmentation: 15 pitch shifts and 7 speed changes."""
from __future__ import annotations

from dataclasses import dataclass

from . import dsp
from .errors import ConfigError
from .ingest import AudioClip

PITCH_STEPS = tuple(k / 2.0 for k in range(-7, 8))  # semitones, includes 0
SPEED_RATES = (0.25, 0.5, 0.75, 1.25, 1.5, 1.75, 2.0)  # 1x is the pitch-0 variant


@dataclass(frozen=True)
class AugmentSpec:
    kind: str
    amount: float

    def __post_init__(self):
        if self.kind == "pitch":
            if self.amount not in PITCH_STEPS:
                raise ConfigError("pitch shift %g not in %s" % (self.amount, PITCH_STEPS))
        elif self.kind == "speed":
            if self.amount not in SPEED_RATES:
                raise ConfigError("speed rate %g not in %s (1x is excluded)" % (self.amount, SPEED_RATES))
        else:
            raise ConfigError("unknown augmentation kind %r" % self.kind)

    @property
    def label(self) -> str:
        return "pitch%+.1f" % self.amount if self.kind == "pitch" else "speed%.2fx" % self.amount

    @property
    def is_identity(self) -> bool:
        return self.kind == "pitch" and self.amount == 0.0


def pitch_shift(clip: AudioClip, semitones: float) -> AudioClip:
    """Shift pitch by ``semitones`` keeping duration.

    Resampling by ``2**(s/12)`` scales every frequency; a compensating
    time stretch restores the original length. ``semitones == 0`` returns
    the input unchanged.
    """
    if abs(semitones) > 12:
        raise ConfigError("pitch shift must be within +/-12 semitones, got %g" % semitones)
    if semitones == 0:
        return clip
    factor = 2.0 ** (semitones / 12.0)
    shifted = dsp.resample(clip, factor)
    return shifted.with_samples(dsp.wsola(shifted.samples, len(shifted) / len(clip)))


def speed_change(clip: AudioClip, rate: float) -> AudioClip:
    """Play ``rate`` times faster without changing pitch."""
    if not 0.25 <= rate <= 2.0:
        raise ConfigError("speed rate must be in [0.25, 2], got %g" % rate)
    return dsp.time_stretch(clip, rate)


def augmentation_specs() -> list[AugmentSpec]:
    return [AugmentSpec("pitch", s) for s in PITCH_STEPS] + [AugmentSpec("speed", r) for r in SPEED_RATES]


def apply(spec: AugmentSpec, clip: AudioClip) -> AudioClip:
    return pitch_shift(clip, spec.amount) if spec.kind == "pitch" else speed_change(clip, spec.amount)


def augment_breath_event(clip: AudioClip) -> list[tuple[AugmentSpec, AudioClip]]:
    """All 22 variants of one event; the pitch-0 variant is the event itself."""
    return [(spec, apply(spec, clip)) for spec in augmentation_specs()]
