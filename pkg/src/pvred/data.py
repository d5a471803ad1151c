"""Motion sequences: the text codec, a synthetic generator and clip sampling.

Sequence file layout::

    # fps=25.0 channels=6
    # names=j0_x,j0_y,j0_z,j1_x,j1_y,j1_z
    0.1,0.2,...
    ...

Values are written with ``repr`` so every float64 survives a round trip.
``#`` lines after the two header lines are comments.
"""
from __future__ import annotations

import re
from dataclasses import asdict, dataclass, field

import numpy as np

from ._io import atomic_write_text
from .errors import InsufficientLengthError, InvalidInputError, ParseError


@dataclass
class MotionSequence:
    frames: np.ndarray
    fps: float = 25.0
    channel_names: list = field(default_factory=list)

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2:
            raise InvalidInputError(f"frames must be (T, D), got {self.frames.shape}")
        if not self.fps > 0:
            raise InvalidInputError(f"fps must be positive, got {self.fps}")
        if not self.channel_names:
            self.channel_names = default_channel_names(self.frames.shape[1])
        if len(self.channel_names) != self.frames.shape[1]:
            raise InvalidInputError("one channel name per column is required")
        if not np.all(np.isfinite(self.frames)):
            raise InvalidInputError("frames contain non-finite values")

    @property
    def T(self):
        return self.frames.shape[0]

    @property
    def D(self):
        return self.frames.shape[1]

    def __eq__(self, other):
        if not isinstance(other, MotionSequence):
            return NotImplemented
        return (
            self.fps == other.fps
            and list(self.channel_names) == list(other.channel_names)
            and self.frames.shape == other.frames.shape
            and np.array_equal(self.frames, other.frames)
        )


def default_channel_names(d):
    axes = "xyz"
    return [f"j{c // 3}_{axes[c % 3]}" for c in range(d)]


# ---------------------------------------------------------------------------
# codec
# ---------------------------------------------------------------------------

_HEADER = re.compile(r"^#\s*fps=(\S+)\s+channels=(\d+)\s*$")
_NAMES = re.compile(r"^#\s*names=(.*)$")


def format_sequence(seq):
    lines = [f"# fps={seq.fps!r} channels={seq.D}", "# names=" + ",".join(seq.channel_names)]
    lines += [",".join(repr(float(v)) for v in row) for row in seq.frames]
    return "\n".join(lines) + "\n"


def parse_sequence(text, source="<string>"):
    lines = text.splitlines()
    if len(lines) < 2:
        raise ParseError(f"{source}: missing header", line=len(lines) + 1)
    head = _HEADER.match(lines[0])
    if not head:
        raise ParseError(f"{source}: expected '# fps=<float> channels=<int>'", line=1)
    try:
        fps = float(head.group(1))
    except ValueError:
        raise ParseError(f"{source}: bad fps value {head.group(1)!r}", line=1) from None
    width = int(head.group(2))
    names_m = _NAMES.match(lines[1])
    if not names_m:
        raise ParseError(f"{source}: expected '# names=<labels>'", line=2)
    names = names_m.group(1).split(",") if names_m.group(1) else []
    if len(names) != width:
        raise ParseError(f"{source}: {len(names)} names for {width} channels", line=2)
    rows = []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cells = line.split(",")
        if len(cells) != width:
            raise ParseError(f"{source}: row has {len(cells)} values, expected {width}", line=lineno)
        try:
            rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise ParseError(f"{source}: {exc}", line=lineno) from None
    frames = np.asarray(rows, dtype=np.float64).reshape(len(rows), width)
    try:
        return MotionSequence(frames, fps, names)
    except InvalidInputError as exc:
        raise ParseError(f"{source}: {exc}") from None


def save_sequence(seq, path):
    atomic_write_text(path, format_sequence(seq))


def load_sequence(path):
    with open(path, encoding="utf-8") as fh:
        return parse_sequence(fh.read(), source=str(path))


# ---------------------------------------------------------------------------
# synthetic motion
# ---------------------------------------------------------------------------

@dataclass
class SynthSpec:
    """Sum-of-sinusoids "actions" performed by several synthetic subjects.

    Each of ``num_actions`` actions draws, per channel, ``harmonics``
    amplitudes and frequencies (Hz), a constant offset and a drift rate
    (rad/s) from the given ranges. Sequence ``s`` performs action
    ``s % num_actions``: it multiplies the action's amplitudes and
    frequencies by factors in ``1 +- jitter``, draws fresh phases, and adds
    gaussian noise. The first ``periodic_actions`` actions carry no drift;
    the rest are aperiodic.
    """

    num_sequences: int = 24
    frames: int = 500
    joints: int = 4
    fps: float = 25.0
    num_actions: int = 4
    periodic_actions: int = 1
    harmonics: int = 2
    amp_range: tuple = (0.05, 0.4)
    freq_range: tuple = (0.2, 1.5)
    phase_range: tuple = (0.0, 2 * np.pi)
    offset_range: tuple = (-0.5, 0.5)
    drift: float = 0.03
    jitter: float = 0.1
    noise: float = 0.002
    seed: int = 7

    def validate(self):
        if self.num_sequences < 0 or self.frames < 1 or self.joints < 1 or self.harmonics < 0:
            raise InvalidInputError("counts must be positive")
        if self.num_actions < 1:
            raise InvalidInputError("need at least one action")
        if not self.fps > 0:
            raise InvalidInputError("fps must be positive")
        lo, hi = self.freq_range
        if lo < 0 or hi < lo:
            raise InvalidInputError(f"bad frequency range {self.freq_range}")
        if hi * (1 + self.jitter) >= self.fps / 2:
            raise InvalidInputError(f"frequency {hi} Hz (with jitter) is not below the Nyquist limit {self.fps / 2} Hz")
        a_lo, a_hi = self.amp_range
        if a_lo < 0 or a_hi < a_lo or a_hi * (1 + self.jitter) > np.pi:
            raise InvalidInputError(f"amplitudes must lie in [0, pi], got {self.amp_range}")
        if self.noise < 0 or self.drift < 0 or not 0 <= self.jitter < 1:
            raise InvalidInputError("noise and drift must be non-negative, jitter in [0, 1)")

    def to_dict(self):
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def generate_synthetic(spec):
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    d = 3 * spec.joints
    shape = (spec.harmonics, d)
    actions = []
    for a in range(spec.num_actions):
        rate = rng.uniform(-spec.drift, spec.drift, size=d)
        actions.append({
            "amp": rng.uniform(*spec.amp_range, size=shape),
            "freq": rng.uniform(*spec.freq_range, size=shape),
            "offset": rng.uniform(*spec.offset_range, size=d),
            "rate": rate if a >= spec.periodic_actions else np.zeros(d),
        })
    t = np.arange(spec.frames, dtype=np.float64)
    out = []
    for s in range(spec.num_sequences):
        act = actions[s % spec.num_actions]
        amp = act["amp"] * rng.uniform(1 - spec.jitter, 1 + spec.jitter, size=shape)
        freq = act["freq"] * rng.uniform(1 - spec.jitter, 1 + spec.jitter, size=shape)
        phase = rng.uniform(*spec.phase_range, size=shape)
        eps = rng.normal(0.0, 1.0, size=(spec.frames, d)) * spec.noise
        arg = 2 * np.pi * freq[None] * t[:, None, None] / spec.fps + phase[None]
        frames = (amp[None] * np.sin(arg)).sum(axis=1) + act["offset"] + act["rate"] * (t[:, None] / spec.fps) + eps
        out.append(MotionSequence(frames, spec.fps, default_channel_names(d)))
    return out


# ---------------------------------------------------------------------------
# clip sampling
# ---------------------------------------------------------------------------

def sample_clip(seq, n, m, rng):
    """Uniform contiguous ``(X, Y)`` pair: ``n`` observed frames followed by ``m`` targets."""
    frames = seq.frames if isinstance(seq, MotionSequence) else np.asarray(seq)
    total = frames.shape[0]
    if total < n + m:
        raise InsufficientLengthError(f"sequence has {total} frames, clips need {n + m}")
    start = int(rng.integers(0, total - n - m + 1))
    return frames[start : start + n].copy(), frames[start + n : start + n + m].copy()
