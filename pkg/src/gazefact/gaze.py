"""Core gaze processing: screen geometry, fixation detection and AOI measures.

The pipeline is sample stream -> fixations -> per-AOI measure records.
All functions here are pure; callers may parallelize over disjoint
(participant, screen) sessions freely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

from .errors import ConfigError, InputOrderError

POSITIONS = ("top", "middle", "bottom")
LABEL_TRUE = "true_news"
LABEL_FALSE = "false_news"
LABELS = (LABEL_TRUE, LABEL_FALSE)
GENDERS = ("male", "female")

#: Names of the five per-AOI eye-tracking measures, in report order.
MEASURE_NAMES = ("gaze", "fixdur", "fixcount", "avgfix", "firstfix")


@dataclass(frozen=True)
class ScreenGeometry:
    """Physical display setup used to convert between pixels and visual degrees."""

    width_px: float = 1920.0
    height_px: float = 1200.0
    dpi: float = 170.0
    viewing_distance_mm: float = 600.0
    sample_rate_hz: float = 30.0

    def __post_init__(self):
        for name in ("width_px", "height_px", "dpi", "viewing_distance_mm", "sample_rate_hz"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"ScreenGeometry.{name} must be strictly positive")

    @property
    def sample_period_ms(self) -> float:
        return 1000.0 / self.sample_rate_hz


@dataclass(frozen=True)
class GazeSample:
    """One timestamped on-screen gaze point for a participant on a screen."""

    participant_id: str
    screen_id: str
    t: float  # milliseconds since screen onset
    x: float  # pixels, horizontal
    y: float  # pixels, vertical
    valid: bool = True


@dataclass(frozen=True)
class FixationParams:
    """Thresholds for dispersion-based fixation detection.

    Defaults follow common practice for a 30 Hz tracker: 2 degrees of
    dispersion, 100 ms minimum duration, 30 deg/s velocity ceiling and a
    single tolerated dropout sample inside a window.
    """

    dispersion_threshold_deg: float = 2.0
    min_duration_ms: float = 100.0
    velocity_threshold_deg_s: float = 30.0
    max_gap_samples: int = 1

    def __post_init__(self):
        if self.dispersion_threshold_deg <= 0:
            raise ConfigError("dispersion_threshold_deg must be > 0")
        if self.min_duration_ms <= 0:
            raise ConfigError("min_duration_ms must be > 0")
        if self.velocity_threshold_deg_s <= 0:
            raise ConfigError("velocity_threshold_deg_s must be > 0")
        if self.max_gap_samples < 0:
            raise ConfigError("max_gap_samples must be >= 0")


@dataclass(frozen=True)
class Fixation:
    """A stable-gaze event: centroid, time bounds and member-sample count."""

    centroid_x: float
    centroid_y: float
    start_ms: float
    end_ms: float
    n_samples: int

    @property
    def duration_ms(self) -> float:
        return self.end_ms - self.start_ms


@dataclass(frozen=True)
class AOI:
    """Axis-aligned rectangle (inclusive bounds) around one headline."""

    headline_id: str
    position: str
    rect: tuple[float, float, float, float]  # x0, y0, x1, y1

    def __post_init__(self):
        if self.position not in POSITIONS:
            raise ConfigError(f"unknown AOI position {self.position!r}")
        x0, y0, x1, y1 = self.rect
        if not (x0 < x1 and y0 < y1):
            raise ConfigError(f"degenerate AOI rect {self.rect} for {self.headline_id!r}")

    def contains(self, x: float, y: float) -> bool:
        x0, y0, x1, y1 = self.rect
        return x0 <= x <= x1 and y0 <= y <= y1


@dataclass(frozen=True)
class ScreenLayout:
    """The three headline AOIs shown together on one screen."""

    screen_id: str
    aois: tuple[AOI, AOI, AOI]

    def __post_init__(self):
        positions = sorted(a.position for a in self.aois)
        if positions != sorted(POSITIONS):
            raise ConfigError(
                f"screen {self.screen_id!r} must have exactly one AOI per position, got {positions}"
            )
        rects = [a.rect for a in self.aois]
        for i in range(len(rects)):
            for j in range(i + 1, len(rects)):
                if _rects_overlap(rects[i], rects[j]):
                    raise ConfigError(f"screen {self.screen_id!r} has overlapping AOIs")

    def aoi(self, position: str) -> AOI:
        for a in self.aois:
            if a.position == position:
                return a
        raise KeyError(position)

    def headline_ids(self) -> tuple[str, str, str]:
        return tuple(a.headline_id for a in self.aois)


def _rects_overlap(a, b) -> bool:
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    return ax0 <= bx1 and bx0 <= ax1 and ay0 <= by1 and by0 <= ay1


@dataclass(frozen=True)
class Headline:
    """Corpus entry: text, factuality label and (normalized) length."""

    headline_id: str
    text: str
    label: str
    word_count: int
    length_norm: float = float("nan")

    def __post_init__(self):
        if self.label not in LABELS:
            raise ConfigError(f"unknown headline label {self.label!r}")
        if self.word_count < 1:
            raise ConfigError(f"headline {self.headline_id!r} has word_count < 1")


@dataclass(frozen=True)
class MeasureRecord:
    """The five eye-tracking measures for one (participant, headline) pair.

    The gamma_* fields are in milliseconds (counts for gamma_fixcount) when
    produced by the measurement pipeline; the synthetic generator emits them
    directly in standardized units instead, which downstream consumers
    re-standardize anyway.
    """

    participant_id: str
    headline_id: str
    position: str
    gender: str
    label: str
    length_norm: float
    gamma_gaze_ms: float
    gamma_fixdur_ms: float
    gamma_fixcount: float
    gamma_avgfix_ms: float
    gamma_firstfix_ms: float

    def measure(self, name: str) -> float:
        """Return one of the five measures by short name (see MEASURE_NAMES)."""
        try:
            return {
                "gaze": self.gamma_gaze_ms,
                "fixdur": self.gamma_fixdur_ms,
                "fixcount": self.gamma_fixcount,
                "avgfix": self.gamma_avgfix_ms,
                "firstfix": self.gamma_firstfix_ms,
            }[name]
        except KeyError:
            raise ConfigError(f"unknown measure {name!r}; expected one of {MEASURE_NAMES}") from None


def px_per_degree(geom: ScreenGeometry) -> float:
    """Pixels subtended by one degree of visual angle at the viewing distance."""
    mm_per_degree = geom.viewing_distance_mm * math.tan(math.radians(1.0))
    return mm_per_degree * geom.dpi / 25.4


def _check_sorted(samples: Sequence[GazeSample]) -> None:
    for a, b in zip(samples, samples[1:]):
        if b.t <= a.t:
            raise InputOrderError(
                f"samples not strictly increasing in t: {a.t} followed by {b.t}"
                f" (participant {a.participant_id!r}, screen {a.screen_id!r})"
            )


def _mean_velocity_deg_s(window: Sequence[GazeSample], ppd: float) -> float:
    """Mean point-to-point speed over consecutive window samples, in deg/s."""
    if len(window) < 2:
        return 0.0
    total = 0.0
    for a, b in zip(window, window[1:]):
        dist_deg = math.hypot(b.x - a.x, b.y - a.y) / ppd
        total += dist_deg / ((b.t - a.t) / 1000.0)
    return total / (len(window) - 1)


def detect_fixations(
    samples: Sequence[GazeSample],
    geom: ScreenGeometry,
    params: FixationParams = FixationParams(),
) -> list[Fixation]:
    """Detect fixations in one (participant, screen) sample stream.

    Dispersion-threshold identification: a window of valid samples grows
    while both its horizontal and vertical extents stay within the
    dispersion threshold (converted to pixels). A window whose time span
    reaches the minimum duration is emitted as a fixation unless its mean
    point-to-point velocity exceeds the velocity threshold. Invalid samples
    inside a window are tolerated up to ``max_gap_samples`` in a row;
    a longer dropout closes the window. Emitted fixations are
    non-overlapping and ordered in time.

    Raises InputOrderError if the stream is not strictly increasing in t.
    """
    _check_sorted(samples)
    ppd = px_per_degree(geom)
    disp_px = params.dispersion_threshold_deg * ppd

    fixations: list[Fixation] = []
    n = len(samples)
    i = 0
    while i < n:
        if not samples[i].valid:
            i += 1
            continue
        window = [samples[i]]
        xmin = xmax = samples[i].x
        ymin = ymax = samples[i].y
        end_idx = i
        gap = 0
        j = i + 1
        while j < n:
            s = samples[j]
            if not s.valid:
                gap += 1
                if gap > params.max_gap_samples:
                    break
                j += 1
                continue
            nxmin, nxmax = min(xmin, s.x), max(xmax, s.x)
            nymin, nymax = min(ymin, s.y), max(ymax, s.y)
            if (nxmax - nxmin) > disp_px or (nymax - nymin) > disp_px:
                break
            window.append(s)
            xmin, xmax, ymin, ymax = nxmin, nxmax, nymin, nymax
            end_idx = j
            gap = 0
            j += 1

        span = window[-1].t - window[0].t
        if (
            len(window) >= 2
            and span >= params.min_duration_ms
            and _mean_velocity_deg_s(window, ppd) <= params.velocity_threshold_deg_s
        ):
            fixations.append(
                Fixation(
                    centroid_x=sum(s.x for s in window) / len(window),
                    centroid_y=sum(s.y for s in window) / len(window),
                    start_ms=window[0].t,
                    end_ms=window[-1].t,
                    n_samples=len(window),
                )
            )
            i = end_idx + 1
        else:
            i += 1
    return fixations


def assign_aoi(point: tuple[float, float], layout: ScreenLayout) -> Optional[AOI]:
    """Return the AOI containing the point (inclusive bounds), or None."""
    x, y = point
    for aoi in layout.aois:
        if aoi.contains(x, y):
            return aoi
    return None


def compute_measures(
    samples: Sequence[GazeSample],
    fixations: Sequence[Fixation],
    layout: ScreenLayout,
    headlines: Mapping[str, Headline],
    gender: str = "female",
) -> list[MeasureRecord]:
    """Aggregate fixations and raw dwell into the five measures per AOI.

    Fixations are attributed to the AOI containing their centroid. Total
    gaze duration additionally counts raw dwell: the sum of inter-sample
    intervals over consecutive valid samples that both fall inside the AOI,
    which picks up between-fixation activity. A session with fewer than
    two valid samples yields zero-valued records rather than an error.
    """
    if gender not in GENDERS:
        raise ConfigError(f"unknown gender {gender!r}")
    participant_id = samples[0].participant_id if samples else ""
    for s in samples:
        if s.screen_id != layout.screen_id:
            raise ConfigError(
                f"sample screen {s.screen_id!r} does not match layout {layout.screen_id!r}"
            )
    missing = [h for h in layout.headline_ids() if h not in headlines]
    if missing:
        raise ConfigError(f"layout {layout.screen_id!r} references unknown headlines {missing}")

    valid = [s for s in samples if s.valid]
    records = []
    for aoi in layout.aois:
        in_aoi = [f for f in fixations if aoi.contains(f.centroid_x, f.centroid_y)]
        fixdur = sum(f.duration_ms for f in in_aoi)
        count = len(in_aoi)
        gaze = 0.0
        for a, b in zip(valid, valid[1:]):
            if aoi.contains(a.x, a.y) and aoi.contains(b.x, b.y):
                gaze += b.t - a.t
        headline = headlines[aoi.headline_id]
        records.append(
            MeasureRecord(
                participant_id=participant_id,
                headline_id=aoi.headline_id,
                position=aoi.position,
                gender=gender,
                label=headline.label,
                length_norm=headline.length_norm,
                gamma_gaze_ms=gaze,
                gamma_fixdur_ms=fixdur,
                gamma_fixcount=count,
                gamma_avgfix_ms=fixdur / count if count else 0.0,
                gamma_firstfix_ms=in_aoi[0].duration_ms if in_aoi else 0.0,
            )
        )
    return records


def group_sessions(
    samples: Iterable[GazeSample],
) -> dict[tuple[str, str], list[GazeSample]]:
    """Split a flat sample stream into per-(participant, screen) sessions.

    Order within each session is preserved as given.
    """
    sessions: dict[tuple[str, str], list[GazeSample]] = {}
    for s in samples:
        sessions.setdefault((s.participant_id, s.screen_id), []).append(s)
    return sessions
