"""File formats: gaze stream CSV, layout JSON, headline corpus and
measure/fixation/report CSVs.

All readers raise ParseError naming the offending line; all writers use a
fixed float formatting so identical inputs produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DegenerateInputError, ParseError
from .gaze import (
    AOI,
    Fixation,
    GazeSample,
    GENDERS,
    Headline,
    LABELS,
    MeasureRecord,
    ScreenLayout,
)

GAZE_HEADER = ["participant_id", "screen_id", "t_ms", "x_px", "y_px", "valid"]
CORPUS_HEADER = ["headline_id", "text", "label", "word_count"]
PARTICIPANTS_HEADER = ["participant_id", "gender"]
FIXATIONS_HEADER = [
    "participant_id", "screen_id", "centroid_x", "centroid_y",
    "start_ms", "end_ms", "duration_ms", "n_samples",
]
MEASURES_HEADER = [
    "participant_id", "headline_id", "position", "gender", "label", "length_norm",
    "gamma_gaze_ms", "gamma_fixdur_ms", "gamma_fixcount", "gamma_avgfix_ms",
    "gamma_firstfix_ms",
]

_TRUTHY = {"1", "true", "t", "yes"}
_FALSY = {"0", "false", "f", "no"}


def _fmt(x: float) -> str:
    """Stable float formatting (round-trips doubles, no trailing noise)."""
    return format(float(x), ".12g")


def _open_rows(path: str | Path, expected_header: list[str]):
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"{path}: cannot open: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: line 1: missing header") from None
        if [h.strip() for h in header] != expected_header:
            raise ParseError(
                f"{path}: line 1: expected header {','.join(expected_header)}, got {','.join(header)}"
            )
        yield from ((lineno, row) for lineno, row in enumerate(reader, start=2) if row)


def read_gaze_csv(path: str | Path) -> list[GazeSample]:
    """Read a gaze stream CSV; rows keep file order."""
    samples = []
    for lineno, row in _open_rows(path, GAZE_HEADER):
        if len(row) != len(GAZE_HEADER):
            raise ParseError(f"{path}: line {lineno}: expected {len(GAZE_HEADER)} fields")
        pid, sid, t, x, y, valid = [c.strip() for c in row]
        try:
            t_ms, x_px, y_px = float(t), float(x), float(y)
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: {exc}") from None
        v = valid.lower()
        if v in _TRUTHY:
            is_valid = True
        elif v in _FALSY:
            is_valid = False
        else:
            raise ParseError(f"{path}: line {lineno}: bad valid flag {valid!r}")
        samples.append(GazeSample(pid, sid, t_ms, x_px, y_px, is_valid))
    return samples


def write_gaze_csv(path: str | Path, samples: Iterable[GazeSample]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(GAZE_HEADER)
        for s in samples:
            w.writerow(
                [s.participant_id, s.screen_id, _fmt(s.t), _fmt(s.x), _fmt(s.y),
                 "1" if s.valid else "0"]
            )


def read_layout_json(path: str | Path) -> dict[str, ScreenLayout]:
    """Read screen layouts keyed by screen_id."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"{path}: cannot open: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    return _layouts_from_payload(payload, str(path))


def _layouts_from_payload(payload, origin: str) -> dict[str, ScreenLayout]:
    if not isinstance(payload, dict) or "screens" not in payload:
        raise ParseError(f"{origin}: expected a top-level 'screens' list")
    layouts: dict[str, ScreenLayout] = {}
    for k, screen in enumerate(payload["screens"]):
        try:
            aois = tuple(
                AOI(
                    headline_id=str(a["headline_id"]),
                    position=str(a["position"]),
                    rect=tuple(float(v) for v in a["rect"]),
                )
                for a in screen["aois"]
            )
            if len(aois) != 3:
                raise ConfigError("each screen needs exactly three AOIs")
            layout = ScreenLayout(screen_id=str(screen["screen_id"]), aois=aois)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{origin}: screens[{k}]: {exc}") from None
        if layout.screen_id in layouts:
            raise ParseError(f"{origin}: duplicate screen_id {layout.screen_id!r}")
        layouts[layout.screen_id] = layout
    return layouts


def write_layout_json(path: str | Path, layouts: Mapping[str, ScreenLayout]) -> None:
    payload = {
        "screens": [
            {
                "screen_id": lay.screen_id,
                "aois": [
                    {"position": a.position, "headline_id": a.headline_id,
                     "rect": list(a.rect)}
                    for a in lay.aois
                ],
            }
            for lay in layouts.values()
        ]
    }
    Path(path).write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")


def read_corpus_csv(path: str | Path) -> dict[str, Headline]:
    """Read the headline corpus and z-score word counts into length_norm."""
    entries = []
    for lineno, row in _open_rows(path, CORPUS_HEADER):
        if len(row) != len(CORPUS_HEADER):
            raise ParseError(f"{path}: line {lineno}: expected {len(CORPUS_HEADER)} fields")
        hid, text, label, wc = row
        if label not in LABELS:
            raise ParseError(f"{path}: line {lineno}: unknown label {label!r}")
        try:
            word_count = int(wc)
        except ValueError:
            raise ParseError(f"{path}: line {lineno}: bad word_count {wc!r}") from None
        if word_count < 1:
            raise ParseError(f"{path}: line {lineno}: word_count must be >= 1")
        entries.append((hid, text, label, word_count))
    if len({e[0] for e in entries}) != len(entries):
        raise ParseError(f"{path}: duplicate headline_id")
    counts = np.array([e[3] for e in entries], dtype=float)
    if len(entries) < 2 or counts.std(ddof=1) == 0:
        raise DegenerateInputError(f"{path}: cannot normalize headline lengths")
    norm = (counts - counts.mean()) / counts.std(ddof=1)
    return {
        hid: Headline(hid, text, label, wc, float(norm[i]))
        for i, (hid, text, label, wc) in enumerate(entries)
    }


def write_corpus_csv(path: str | Path, headlines: Iterable[Headline]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CORPUS_HEADER)
        for h in headlines:
            w.writerow([h.headline_id, h.text, h.label, str(h.word_count)])


def read_participants_csv(path: str | Path) -> dict[str, str]:
    """Read participant genders keyed by participant_id."""
    genders: dict[str, str] = {}
    for lineno, row in _open_rows(path, PARTICIPANTS_HEADER):
        if len(row) != 2:
            raise ParseError(f"{path}: line {lineno}: expected 2 fields")
        pid, gender = [c.strip() for c in row]
        if gender not in GENDERS:
            raise ParseError(f"{path}: line {lineno}: unknown gender {gender!r}")
        if pid in genders:
            raise ParseError(f"{path}: line {lineno}: duplicate participant {pid!r}")
        genders[pid] = gender
    return genders


def write_participants_csv(path: str | Path, genders: Mapping[str, str]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(PARTICIPANTS_HEADER)
        for pid in genders:
            w.writerow([pid, genders[pid]])


def write_fixations_csv(
    path: str | Path, fixations: Iterable[tuple[str, str, Fixation]]
) -> None:
    """Write (participant_id, screen_id, fixation) triples."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(FIXATIONS_HEADER)
        for pid, sid, f in fixations:
            w.writerow(
                [pid, sid, _fmt(f.centroid_x), _fmt(f.centroid_y), _fmt(f.start_ms),
                 _fmt(f.end_ms), _fmt(f.duration_ms), str(f.n_samples)]
            )


def write_measures_csv(path: str | Path, records: Iterable[MeasureRecord]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(MEASURES_HEADER)
        for r in records:
            w.writerow(
                [r.participant_id, r.headline_id, r.position, r.gender, r.label,
                 _fmt(r.length_norm), _fmt(r.gamma_gaze_ms), _fmt(r.gamma_fixdur_ms),
                 _fmt(r.gamma_fixcount), _fmt(r.gamma_avgfix_ms),
                 _fmt(r.gamma_firstfix_ms)]
            )


def read_measures_csv(path: str | Path) -> list[MeasureRecord]:
    records = []
    for lineno, row in _open_rows(path, MEASURES_HEADER):
        if len(row) != len(MEASURES_HEADER):
            raise ParseError(f"{path}: line {lineno}: expected {len(MEASURES_HEADER)} fields")
        pid, hid, position, gender, label = [c.strip() for c in row[:5]]
        try:
            nums = [float(c) for c in row[5:]]
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: {exc}") from None
        if label not in LABELS:
            raise ParseError(f"{path}: line {lineno}: unknown label {label!r}")
        records.append(
            MeasureRecord(pid, hid, position, gender, label, nums[0], nums[1], nums[2],
                          nums[3], nums[4], nums[5])
        )
    return records


def load_default_corpus() -> dict[str, Headline]:
    """The bundled 108-headline corpus (72 true, 36 false)."""
    with resources.as_file(resources.files("gazefact.data") / "headlines.csv") as p:
        return read_corpus_csv(p)


def load_default_layout() -> dict[str, ScreenLayout]:
    """The bundled 36-screen layout with counterbalanced false positions."""
    with resources.as_file(resources.files("gazefact.data") / "layout.json") as p:
        return read_layout_json(p)


def headline_positions(layouts: Mapping[str, ScreenLayout]) -> dict[str, str]:
    """Map headline_id -> screen position, over all screens of a layout set."""
    positions: dict[str, str] = {}
    for lay in layouts.values():
        for a in lay.aois:
            if a.headline_id in positions:
                raise ConfigError(f"headline {a.headline_id!r} appears on multiple screens")
            positions[a.headline_id] = a.position
    return positions
