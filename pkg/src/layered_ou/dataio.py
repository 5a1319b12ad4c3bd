"""Datasets of noisily observed site means, and text-file ingestion.

Dataset files are delimiter-separated text with a header naming the
columns ``site, time_my, mean_log_size, sample_variance, n`` (comma, tab
or whitespace separated). Forcing files carry ``time_my, value``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DuplicateTime, ParseError, ValidationError
from .forcing import ForcingSeries

DATASET_COLUMNS = ("site", "time_my", "mean_log_size", "sample_variance", "n")
FORCING_COLUMNS = ("time_my", "value")


@dataclass(frozen=True)
class Dataset:
    """Observations sorted by time; ties keep their original file order.

    ``sites`` lists the distinct site labels in sorted order and fixes the
    site indexing used by regional parameters. ``provenance`` holds each
    record's original row position.
    """

    site: tuple[str, ...]
    time: np.ndarray
    y: np.ndarray
    s2: np.ndarray
    n: np.ndarray
    provenance: np.ndarray = field(default=None)
    sites: tuple[str, ...] = field(init=False)
    site_index: np.ndarray = field(init=False)

    def __post_init__(self):
        time = np.asarray(self.time, dtype=float)
        y = np.asarray(self.y, dtype=float)
        s2 = np.asarray(self.s2, dtype=float)
        n = np.asarray(self.n, dtype=float)
        m = len(self.site)
        if not (time.shape == y.shape == s2.shape == n.shape == (m,)):
            raise ValidationError("dataset columns must have equal length")
        prov = self.provenance
        prov = np.arange(m) if prov is None else np.asarray(prov)
        order = np.argsort(time, kind="stable")
        site = tuple(self.site[i] for i in order)
        object.__setattr__(self, "site", site)
        object.__setattr__(self, "time", time[order])
        object.__setattr__(self, "y", y[order])
        object.__setattr__(self, "s2", s2[order])
        object.__setattr__(self, "n", n[order])
        object.__setattr__(self, "provenance", prov[order])
        sites = tuple(sorted(set(site)))
        lookup = {s: i for i, s in enumerate(sites)}
        object.__setattr__(self, "sites", sites)
        object.__setattr__(
            self, "site_index", np.array([lookup[s] for s in site], dtype=int)
        )
        self._validate()

    def _validate(self):
        for k, (t, yy, ss, nn) in enumerate(zip(self.time, self.y, self.s2, self.n)):
            row = int(self.provenance[k]) + 1
            if not (np.isfinite(t) and np.isfinite(yy) and np.isfinite(ss) and np.isfinite(nn)):
                raise ValidationError(f"row {row}: non-finite field")
            if ss < 0:
                raise ValidationError(f"row {row}: negative sample variance")
            if nn < 1:
                raise ValidationError(f"row {row}: sample size n must be >= 1")

    def __len__(self) -> int:
        return len(self.site)

    @property
    def n_obs(self) -> int:
        return len(self.site)

    @property
    def noise_var(self) -> np.ndarray:
        return self.s2 / self.n

    def per_site_counts(self) -> dict[str, int]:
        return {s: int((self.site_index == i).sum()) for i, s in enumerate(self.sites)}


def _split_table(path) -> list[tuple[int, list[str]]]:
    text = Path(path).read_text()
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "," in line:
            fields = [f.strip() for f in line.split(",")]
        else:
            fields = line.split()
        rows.append((lineno, fields))
    if not rows:
        raise ParseError("file is empty")
    return rows


def _parse_header(fields, required, path):
    lowered = [f.lower() for f in fields]
    missing = [c for c in required if c not in lowered]
    if missing:
        raise ParseError(f"{path}: header must name columns {required}, missing {missing}")
    return [lowered.index(c) for c in required]


def load_dataset(path) -> Dataset:
    """Read, validate and time-sort a dataset file."""
    rows = _split_table(path)
    header_line, header = rows[0]
    cols = _parse_header(header, DATASET_COLUMNS, path)
    site, time, y, s2, n = [], [], [], [], []
    for lineno, fields in rows[1:]:
        if len(fields) < len(header):
            raise ParseError("too few fields", line=lineno)
        try:
            site.append(fields[cols[0]])
            time.append(float(fields[cols[1]]))
            y.append(float(fields[cols[2]]))
            s2.append(float(fields[cols[3]]))
            n.append(float(fields[cols[4]]))
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from exc
    try:
        return Dataset(site=tuple(site), time=time, y=y, s2=s2, n=n)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def save_dataset(dataset: Dataset, path) -> None:
    lines = [",".join(DATASET_COLUMNS)]
    for k in range(len(dataset)):
        lines.append(
            f"{dataset.site[k]},{float(dataset.time[k])!r},{float(dataset.y[k])!r},"
            f"{float(dataset.s2[k])!r},{float(dataset.n[k])!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def load_forcing(path) -> ForcingSeries:
    """Read a forcing series; times are sorted and must be distinct."""
    rows = _split_table(path)
    _, header = rows[0]
    cols = _parse_header(header, FORCING_COLUMNS, path)
    times, values = [], []
    for lineno, fields in rows[1:]:
        if len(fields) < 2:
            raise ParseError("too few fields", line=lineno)
        try:
            times.append(float(fields[cols[0]]))
            values.append(float(fields[cols[1]]))
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from exc
    order = np.argsort(times, kind="stable")
    t = np.asarray(times)[order]
    if (np.diff(t) == 0).any():
        dup = t[np.flatnonzero(np.diff(t) == 0)[0]]
        raise DuplicateTime(f"{path}: duplicated time {dup}")
    return ForcingSeries(times=t, values=np.asarray(values)[order])
