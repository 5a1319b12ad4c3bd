"""Structural description of layered OU model variants.

Layers are numbered 1 (top, observed) to ``n_layers`` (bottom). Each layer
holds one process per site; layer i is pulled toward layer i+1 of the same
site, and the bottom layer is pulled toward the level ``mu0``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

REGIONAL_KINDS = ("none", "level", "pull", "diffusion")
CORRELATION_KINDS = ("none", "intermediate", "perfect")

RANDOM_WALK_PULL = 0.001  # 1/My; characteristic time 1 Gy

_REG_ABBREV = {"level": "level", "pull": "pull", "diffusion": "diff"}
_CORR_ABBREV = {"intermediate": "int", "perfect": "perf"}


@dataclass(frozen=True)
class ModelSpec:
    """One structural model variant.

    Vacuous flag combinations are normalized away at construction so that
    structurally identical variants compare (and hash) equal:

    * regionality and correlations with a single site collapse to none,
    * correlation flags on deterministic layers collapse to none,
    * regional diffusion on a deterministic layer collapses to none,
    * regional pull on a random-walk bottom layer collapses to none.
    """

    n_layers: int
    n_sites: int
    regional_kind: str = "none"
    regional_layer: int | None = None
    deterministic_layers: frozenset[int] = frozenset()
    random_walk_bottom: bool = False
    correlations: tuple[str, ...] = field(default=())
    forcing_layer: int | None = None

    def __post_init__(self):
        if not 1 <= self.n_layers <= 3:
            raise ValueError(f"n_layers must be in 1..3, got {self.n_layers}")
        if self.n_sites < 1:
            raise ValueError(f"n_sites must be >= 1, got {self.n_sites}")
        if self.regional_kind not in REGIONAL_KINDS:
            raise ValueError(f"unknown regional_kind {self.regional_kind!r}")

        corr = tuple(self.correlations)
        if not corr:
            corr = ("none",) * self.n_layers
        if len(corr) != self.n_layers:
            raise ValueError("correlations must have one entry per layer")
        for kind in corr:
            if kind not in CORRELATION_KINDS:
                raise ValueError(f"unknown correlation kind {kind!r}")

        det = frozenset(self.deterministic_layers)
        if self.n_layers in det:
            raise ValueError("bottom layer cannot be deterministic")
        if any(not 1 <= i <= self.n_layers for i in det):
            raise ValueError("deterministic layer index out of range")

        kind = self.regional_kind
        layer = self.regional_layer
        if kind == "none":
            layer = None
        else:
            if kind == "level":
                # mu0 enters the bottom-layer dynamics only
                if layer is None:
                    layer = self.n_layers
                elif layer != self.n_layers:
                    raise ValueError("regional level attaches to the bottom layer")
            elif layer is None or not 1 <= layer <= self.n_layers:
                raise ValueError("regional_kind set but regional_layer invalid")

        if self.forcing_layer is not None and not 1 <= self.forcing_layer <= self.n_layers:
            raise ValueError("forcing_layer out of range")

        # collapse vacuous combinations to a canonical form
        if self.n_sites == 1:
            kind, layer = "none", None
            corr = ("none",) * self.n_layers
        corr = tuple(
            "none" if (i + 1) in det else c for i, c in enumerate(corr)
        )
        if kind == "diffusion" and layer in det:
            kind, layer = "none", None
        if kind == "pull" and self.random_walk_bottom and layer == self.n_layers:
            kind, layer = "none", None

        object.__setattr__(self, "regional_kind", kind)
        object.__setattr__(self, "regional_layer", layer)
        object.__setattr__(self, "deterministic_layers", det)
        object.__setattr__(self, "correlations", corr)

    @property
    def n_states(self) -> int:
        return self.n_layers * self.n_sites

    def is_deterministic(self, layer: int) -> bool:
        return layer in self.deterministic_layers

    def is_regional(self, kind: str, layer: int) -> bool:
        return self.regional_kind == kind and self.regional_layer == layer

    def correlation(self, layer: int) -> str:
        return self.correlations[layer - 1]

    def pull_is_fixed(self, layer: int) -> bool:
        return self.random_walk_bottom and layer == self.n_layers

    @property
    def name(self) -> str:
        """Canonical spec name, e.g. ``L3:S6:regpull@2:det@2:corr3=int:rw0``."""
        parts = [f"L{self.n_layers}", f"S{self.n_sites}"]
        if self.regional_kind != "none":
            parts.append(f"reg{_REG_ABBREV[self.regional_kind]}@{self.regional_layer}")
        if self.deterministic_layers:
            layers = ",".join(str(i) for i in sorted(self.deterministic_layers))
            parts.append(f"det@{layers}")
        for i, kind in enumerate(self.correlations, start=1):
            if kind != "none":
                parts.append(f"corr{i}={_CORR_ABBREV[kind]}")
        parts.append(f"rw{int(self.random_walk_bottom)}")
        if self.forcing_layer is not None:
            parts.append(f"forcing@{self.forcing_layer}")
        return ":".join(parts)

    def __str__(self) -> str:
        return self.name


_NAME_RE = re.compile(
    r"^L(?P<layers>\d+):S(?P<sites>\d+)"
    r"(?::reg(?P<regkind>level|pull|diff)@(?P<reglayer>\d+))?"
    r"(?::det@(?P<det>[\d,]+))?"
    r"(?P<corr>(?::corr\d+=(?:int|perf))*)"
    r":rw(?P<rw>[01])"
    r"(?::forcing@(?P<forcing>\d+))?$"
)


def parse_spec_name(name: str) -> ModelSpec:
    """Inverse of :attr:`ModelSpec.name`."""
    m = _NAME_RE.match(name.strip())
    if m is None:
        raise ValueError(f"not a valid spec name: {name!r}")
    n_layers = int(m.group("layers"))
    kind = {"diff": "diffusion", "level": "level", "pull": "pull", None: "none"}[
        m.group("regkind")
    ]
    corr = ["none"] * n_layers
    for cm in re.finditer(r":corr(\d+)=(int|perf)", m.group("corr")):
        idx = int(cm.group(1))
        if not 1 <= idx <= n_layers:
            raise ValueError(f"correlation layer {idx} out of range in {name!r}")
        corr[idx - 1] = "intermediate" if cm.group(2) == "int" else "perfect"
    det = frozenset(
        int(s) for s in m.group("det").split(",")
    ) if m.group("det") else frozenset()
    return ModelSpec(
        n_layers=n_layers,
        n_sites=int(m.group("sites")),
        regional_kind=kind,
        regional_layer=int(m.group("reglayer")) if m.group("reglayer") else None,
        deterministic_layers=det,
        random_walk_bottom=m.group("rw") == "1",
        correlations=tuple(corr),
        forcing_layer=int(m.group("forcing")) if m.group("forcing") else None,
    )
