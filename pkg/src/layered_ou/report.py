"""Result records, parameter summary tables and atomic output writing.

Machine records keep raw natural-scale values (pulls in 1/My); human
tables present pulls as characteristic times with auto-scaled units and
the level on the original measurement scale.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .mcmc import Chain
from .mlfit import MLResult
from .priors import PriorSpec

_TIME_UNITS = (("Gy", 1e3), ("My", 1.0), ("ky", 1e-3), ("y", 1e-6))


def format_characteristic_time(alpha: float) -> str:
    """1/alpha rendered with y/ky/My/Gy units, e.g. 0.0909 -> '11 My'."""
    dt_my = 1.0 / alpha
    for unit, scale in _TIME_UNITS:
        value = dt_my / scale
        if value >= 0.3:
            return f"{value:.2g} {unit}"
    return f"{dt_my / 1e-6:.2g} y"


def _fmt(value: float) -> str:
    return f"{value:.3g}"


def _natural_prior_interval(ptype: str, prior: PriorSpec) -> tuple[float, float]:
    """Prior 95% interval on the raw parameter scale (pull in 1/My, mu0 in
    log units)."""
    lo, hi = prior.natural_interval(ptype)
    if ptype == "pull":
        return 1.0 / hi, 1.0 / lo
    if ptype == "mu0":
        return math.log(lo), math.log(hi)
    return lo, hi


def parameter_rows(
    ml: MLResult | None = None,
    chain: Chain | None = None,
    prior: PriorSpec | None = None,
) -> list[dict]:
    """One machine-readable row per free parameter: ML value, posterior
    median and 95% interval (raw natural scale), prior 95% interval."""
    from .params import ParamTransform

    if ml is None and chain is None:
        raise ValueError("need an ML result or a chain")
    prior = prior or PriorSpec()
    spec = ml.spec if ml is not None else chain.spec
    full = ParamTransform(spec)
    ml_values = full.natural_of(ml.params) if ml is not None else {}
    natural = chain.natural_draws() if chain is not None and chain.n_draws else {}
    rows = []
    for coord in full.coords:
        row = {
            "name": coord.name,
            "type": coord.ptype,
            "prior95": list(_natural_prior_interval(coord.ptype, prior)),
        }
        if coord.name in ml_values:
            row["ml"] = ml_values[coord.name]
        if coord.name in natural:
            draws = natural[coord.name]
            row["median"] = float(np.median(draws))
            row["posterior95"] = [
                float(np.percentile(draws, 2.5)),
                float(np.percentile(draws, 97.5)),
            ]
        rows.append(row)
    return rows


def _present(ptype: str, value: float) -> str:
    if ptype == "pull":
        return format_characteristic_time(value)
    if ptype == "mu0":
        return _fmt(math.exp(value))
    return _fmt(value)


def _present_interval(ptype: str, lo: float, hi: float) -> str:
    if ptype == "pull":
        # alpha interval maps to a reversed characteristic-time interval
        return f"{format_characteristic_time(hi)} - {format_characteristic_time(lo)}"
    return f"{_present(ptype, lo)} - {_present(ptype, hi)}"


def _display_name(row: dict) -> str:
    name, ptype = row["name"], row["type"]
    if ptype == "pull":
        return "dt_" + name.removeprefix("pull_")
    if ptype == "mu0":
        suffix = name.removeprefix("mu0")
        return "exp(mu0)" + suffix
    return name


def parameter_table_text(rows: list[dict]) -> str:
    """Fixed-width summary with ML, Bayesian median, prior and posterior
    95% interval columns."""
    header = ["Parameter", "ML", "B. median", "Prior 95%", "Posterior 95%"]
    body = []
    for row in rows:
        ptype = row["type"]
        body.append(
            [
                _display_name(row),
                _present(ptype, row["ml"]) if "ml" in row else "-",
                _present(ptype, row["median"]) if "median" in row else "-",
                _present_interval(ptype, *row["prior95"]),
                _present_interval(ptype, *row["posterior95"])
                if "posterior95" in row
                else "-",
            ]
        )
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    for r in body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)))
    return "\n".join(lines)


def weights_table_text(pw) -> str:
    """Property weights in 'weight% (model count)' form."""
    lines = [f"{pw.property_name}:"]
    for label, weight, count in zip(pw.labels, pw.weights, pw.counts):
        lines.append(f"  {label}: {100.0 * weight:.1f}% ({count})")
    return "\n".join(lines)


def write_text_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_record(record: dict) -> str:
    return json.dumps(record, sort_keys=True, allow_nan=True)


def write_jsonl_atomic(path, records: list[dict]) -> None:
    write_text_atomic(path, "\n".join(dump_record(r) for r in records) + "\n")
