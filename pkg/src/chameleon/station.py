"""One measurement station.

A station sees the common seed, the trial count and its own angle policy,
nothing else. It regenerates the hidden-state stream, resolves its setting
per trial, and records the local sign and local weight.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence, Union

import numpy as np

from . import model, prng
from .errors import IntegrityError, RecordParseError, ScheduleError, ValidationError

RECORDS_MAGIC = "# chameleon-records v1"
# domain-separation tag for the private angle-choice stream
_CHOICE_STREAM_TAG = 0x63686F696365  # "choice"


# -- angle policies ----------------------------------------------------------


@dataclass(frozen=True)
class Fixed:
    angle: float

    def __post_init__(self):
        object.__setattr__(self, "angle", model.normalize_angle(self.angle))


@dataclass(frozen=True)
class Schedule:
    """Contiguous trial ranges ``[start, stop)`` starting at 0, one angle per range."""

    ranges: tuple[tuple[int, int], ...]
    angles: tuple[float, ...]

    def __post_init__(self):
        ranges = tuple((int(s), int(e)) for s, e in self.ranges)
        angles = tuple(model.normalize_angle(x) for x in self.angles)
        if not ranges:
            raise ScheduleError("schedule needs at least one range")
        if len(ranges) != len(angles):
            raise ScheduleError("schedule needs one angle per range")
        expected = 0
        for start, stop in ranges:
            if start != expected or stop <= start:
                raise ScheduleError(f"ranges must partition [0, n) in order; bad range [{start}, {stop})")
            expected = stop
        object.__setattr__(self, "ranges", ranges)
        object.__setattr__(self, "angles", angles)

    @property
    def stop(self) -> int:
        return self.ranges[-1][1]


@dataclass(frozen=True)
class SeededRandom:
    """Uniform per-trial choice among ``choices`` from a private SplitMix64 stream."""

    choices: tuple[float, ...]
    choice_seed: int

    def __post_init__(self):
        choices = tuple(model.normalize_angle(x) for x in self.choices)
        if not choices:
            raise ValidationError("SeededRandom needs at least one choice")
        if len(choices) >= 2**32:
            raise ValidationError("too many choices")
        object.__setattr__(self, "choices", choices)
        object.__setattr__(self, "choice_seed", prng.parse_seed(self.choice_seed))

    @property
    def stream_seed(self) -> int:
        return prng.derive_seed(self.choice_seed, _CHOICE_STREAM_TAG)


AnglePolicy = Union[Fixed, Schedule, SeededRandom]


def _choice_index(x, m: int):
    # multiply-shift on the top 32 bits: exact in uint64 for m < 2**32
    return (x >> 32) * m >> 32


def resolve_angle(p: AnglePolicy, trial: int) -> float:
    if trial < 0:
        raise ScheduleError(f"negative trial index {trial}")
    if isinstance(p, Fixed):
        return p.angle
    if isinstance(p, Schedule):
        for (start, stop), angle in zip(p.ranges, p.angles):
            if start <= trial < stop:
                return angle
        raise ScheduleError(f"trial {trial} outside schedule [0, {p.stop})")
    if isinstance(p, SeededRandom):
        x = prng.mix64((p.stream_seed + (trial + 1) * prng.GAMMA) & prng.MASK64)
        return p.choices[_choice_index(x, len(p.choices))]
    raise TypeError(f"not an angle policy: {p!r}")


def resolve_angles(p: AnglePolicy, n: int) -> np.ndarray:
    """Vectorized :func:`resolve_angle` for trials ``0..n-1``."""
    if isinstance(p, Fixed):
        return np.full(n, p.angle)
    if isinstance(p, Schedule):
        if n > p.stop:
            raise ScheduleError(f"trial {p.stop} outside schedule [0, {p.stop})")
        out = np.empty(n)
        for (start, stop), angle in zip(p.ranges, p.angles):
            out[start:min(stop, n)] = angle
        return out
    if isinstance(p, SeededRandom):
        x = prng.raw_stream(p.stream_seed, n)
        idx = _choice_index(x, np.uint64(len(p.choices))).astype(np.intp)
        return np.asarray(p.choices, dtype=np.float64)[idx]
    raise TypeError(f"not an angle policy: {p!r}")


def policy_to_dict(p: AnglePolicy) -> dict:
    if isinstance(p, Fixed):
        return {"kind": "fixed", "angle": p.angle}
    if isinstance(p, Schedule):
        return {"kind": "schedule", "ranges": [list(r) for r in p.ranges], "angles": list(p.angles)}
    if isinstance(p, SeededRandom):
        return {"kind": "seeded_random", "choices": list(p.choices), "choice_seed": prng.format_seed(p.choice_seed)}
    raise TypeError(f"not an angle policy: {p!r}")


def policy_from_dict(d: dict) -> AnglePolicy:
    try:
        kind = d["kind"]
        if kind == "fixed":
            return Fixed(model.parse_angle(d["angle"]))
        if kind == "schedule":
            return Schedule(tuple(tuple(r) for r in d["ranges"]), tuple(model.parse_angle(x) for x in d["angles"]))
        if kind == "seeded_random":
            return SeededRandom(tuple(model.parse_angle(x) for x in d["choices"]), prng.parse_seed(d["choice_seed"]))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"bad policy {d!r}: {exc}") from None
    raise ValidationError(f"unknown policy kind {d.get('kind')!r}")


def parse_policy(spec: str) -> AnglePolicy:
    """Parse a command-line policy.

    ``fixed:ANGLE``, ``schedule:START-STOP=ANGLE,...`` or
    ``random:SEED:ANGLE,ANGLE,...``; angles accept ``pi`` fractions.
    """
    kind, _, rest = spec.partition(":")
    kind = kind.strip().lower()
    try:
        if kind == "fixed":
            return Fixed(model.parse_angle(rest))
        if kind == "schedule":
            ranges, angles = [], []
            for item in rest.split(","):
                span, _, angle = item.partition("=")
                start, _, stop = span.partition("-")
                ranges.append((int(start), int(stop)))
                angles.append(model.parse_angle(angle))
            return Schedule(tuple(ranges), tuple(angles))
        if kind == "random":
            seed, _, choices = rest.partition(":")
            return SeededRandom(tuple(model.parse_angle(x) for x in choices.split(",")), prng.parse_seed(seed))
    except ValidationError:
        raise
    except ValueError as exc:
        raise ValidationError(f"bad policy {spec!r}: {exc}") from None
    raise ValidationError(f"unknown policy kind in {spec!r}")


# -- records -----------------------------------------------------------------


@dataclass(frozen=True)
class MeasurementRecord:
    trial: int
    setting: float
    sign: int
    weight: float


RECORD_COLUMNS = ("trial", "setting", "sign", "weight")


class RecordSet:
    """Column-oriented records of one station run."""

    def __init__(self, role: int, seed: int, trial, setting, sign, weight):
        self.role = int(role)
        self.seed = int(seed)
        self.trial = np.asarray(trial, dtype=np.int64)
        self.setting = np.asarray(setting, dtype=np.float64)
        self.sign = np.asarray(sign, dtype=np.int8)
        self.weight = np.asarray(weight, dtype=np.float64)
        n = len(self.trial)
        if not (len(self.setting) == len(self.sign) == len(self.weight) == n):
            raise ValueError("record columns differ in length")

    @classmethod
    def from_records(cls, role: int, seed: int, records: Sequence[MeasurementRecord]) -> RecordSet:
        return cls(
            role,
            seed,
            [r.trial for r in records],
            [r.setting for r in records],
            [r.sign for r in records],
            [r.weight for r in records],
        )

    def __len__(self) -> int:
        return len(self.trial)

    def __iter__(self) -> Iterator[MeasurementRecord]:
        for t, x, s, w in zip(self.trial.tolist(), self.setting.tolist(), self.sign.tolist(), self.weight.tolist()):
            yield MeasurementRecord(t, x, s, w)

    def __getitem__(self, i: int) -> MeasurementRecord:
        return MeasurementRecord(int(self.trial[i]), float(self.setting[i]), int(self.sign[i]), float(self.weight[i]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, RecordSet):
            return NotImplemented
        return (
            self.role == other.role
            and self.seed == other.seed
            and np.array_equal(self.trial, other.trial)
            and np.array_equal(self.sign, other.sign)
            and self.setting.tobytes() == other.setting.tobytes()
            and self.weight.tobytes() == other.weight.tobytes()
        )

    def __repr__(self) -> str:
        return f"RecordSet(role={self.role}, seed={prng.format_seed(self.seed)}, n={len(self)})"

    def columns(self, start: int = 0, stop: int | None = None) -> dict[str, list]:
        """Plain-list columns for ``[start, stop)``, keyed by :data:`RECORD_COLUMNS`."""
        sl = slice(start, stop)
        return {
            "trial": self.trial[sl].tolist(),
            "setting": self.setting[sl].tolist(),
            "sign": self.sign[sl].tolist(),
            "weight": self.weight[sl].tolist(),
        }

    def validate(self) -> None:
        if self.role not in (1, 2):
            raise IntegrityError(f"bad role {self.role}")
        if len(self) and (self.trial[0] < 0 or np.any(np.diff(self.trial) <= 0)):
            raise IntegrityError("trial indices not strictly increasing")
        if not np.all((self.sign == 1) | (self.sign == -1)):
            raise IntegrityError("sign outside {-1, +1}")
        if not np.all(self.weight >= 0):
            raise IntegrityError("negative or non-finite weight")


def run_station(role: int, seed: int, n: int, policy: AnglePolicy) -> RecordSet:
    """Measure ``n`` trials of the shared stream with this station's own observable."""
    if role not in (1, 2):
        raise ValidationError(f"role must be 1 or 2, got {role!r}")
    if n < 0:
        raise ValidationError("n must be >= 0")
    if isinstance(policy, Schedule) and policy.stop != n:
        raise ScheduleError(f"schedule covers [0, {policy.stop}) but n = {n}")
    lam = prng.hidden_state_stream(seed, n)
    setting = resolve_angles(policy, n)
    if role == 1:
        sign = model.observable_station1(setting, lam)
        weight = model.weight_station1(setting, lam)
    else:
        sign = model.observable_station2(setting, lam)
        weight = model.weight_station2(setting, lam)
    return RecordSet(role, seed, np.arange(n), setting, sign, weight)


# -- record files ------------------------------------------------------------


def _float_reprs(values: np.ndarray):
    # settings (and station 2's weights) repeat a handful of values; format each distinct bit pattern once
    bits, inverse = np.unique(values.view(np.int64), return_inverse=True)
    if 4 * len(bits) > len(values):
        return map(repr, values.tolist())
    reps = [repr(x) for x in bits.view(np.float64).tolist()]
    return map(reps.__getitem__, inverse.reshape(-1).tolist())


def format_records(records: RecordSet) -> str:
    header = f"{RECORDS_MAGIC} role={records.role} seed={prng.format_seed(records.seed)} n={len(records)}\n"
    # float repr is the shortest round-trip decimal
    cols = (
        map(str, records.trial.tolist()),
        _float_reprs(records.setting),
        map(str, records.sign.tolist()),
        _float_reprs(records.weight),
    )
    body = "".join(f"{t},{x},{s},{w}\n" for t, x, s, w in zip(*cols))
    return header + body


def write_records(records: RecordSet, destination) -> None:
    text = format_records(records)
    if isinstance(destination, (str, os.PathLike)):
        Path(destination).write_text(text, encoding="utf-8", newline="\n")
    else:
        destination.write(text)


def _parse_header(line: str) -> tuple[int, int, int]:
    if not line.startswith(RECORDS_MAGIC + " "):
        raise RecordParseError(1, "missing chameleon-records v1 header")
    fields = dict(item.split("=", 1) for item in line[len(RECORDS_MAGIC) + 1 :].split() if "=" in item)
    try:
        role = int(fields["role"])
        seed = prng.parse_seed(fields["seed"])
        n = int(fields["n"])
    except (KeyError, ValueError) as exc:
        raise RecordParseError(1, f"bad header field: {exc}") from None
    if role not in (1, 2) or n < 0:
        raise RecordParseError(1, "bad role or count in header")
    return role, seed, n


def _parse_body_fast(lines: list[str]):
    """Columnar parse of well-formed data lines; None means fall back to the checking loop."""
    if not lines:
        return None
    fields = ",".join(lines).split(",")
    if len(fields) != 4 * len(lines):
        return None
    try:
        trial = np.array(fields[0::4], dtype=np.int64)
        setting = np.array(fields[1::4], dtype=np.float64)
        sign = np.array(fields[2::4], dtype=np.int64)
        weight = np.array(fields[3::4], dtype=np.float64)
    except (ValueError, OverflowError):
        return None
    ok = (
        np.all((sign == 1) | (sign == -1))
        and np.all(np.isfinite(setting))
        and np.all(np.isfinite(weight) & (weight >= 0))
        and np.all(np.diff(trial) > 0)
        and trial[0] >= 0
    )
    return (trial, setting, sign, weight) if ok else None


def parse_records(text: str) -> RecordSet:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise RecordParseError(1, "empty file")
    role, seed, n = _parse_header(lines[0])
    fast = _parse_body_fast(lines[1:])
    if fast is not None:
        if len(fast[0]) != n:
            raise IntegrityError(f"header says n={n} but file holds {len(fast[0])} records")
        return RecordSet(role, seed, *fast)
    trial, setting, sign, weight = [], [], [], []
    prev = -1
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 4:
            raise RecordParseError(lineno, f"expected 4 fields, got {len(parts)}")
        try:
            t = int(parts[0])
            x = float(parts[1])
            s = int(parts[2])
            w = float(parts[3])
        except ValueError as exc:
            raise RecordParseError(lineno, str(exc)) from None
        if s not in (-1, 1):
            raise RecordParseError(lineno, f"sign must be -1 or +1, got {s}")
        if not (math.isfinite(x) and math.isfinite(w)) or w < 0:
            raise RecordParseError(lineno, "setting must be finite and weight finite and >= 0")
        if t <= prev:
            raise IntegrityError(f"line {lineno}: trial index {t} not greater than {prev}")
        prev = t
        trial.append(t)
        setting.append(x)
        sign.append(s)
        weight.append(w)
    if len(trial) != n:
        raise IntegrityError(f"header says n={n} but file holds {len(trial)} records")
    return RecordSet(role, seed, trial, setting, sign, weight)


def read_records(source) -> RecordSet:
    if isinstance(source, (str, os.PathLike)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    return parse_records(text)
