"""Enumeration of structural model variants and model categorizations.

A frame crosses the structural axes (layer count, regionality of one
parameter type in one layer, deterministic layers, random-walk bottom,
per-layer correlation kind, optional forcing layer); vacuous combinations
collapse to their canonical form during :class:`ModelSpec` construction
and duplicates are removed, so the enumerated list holds structurally
distinct valid specs in a deterministic order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import chain, combinations, product
from typing import Callable

from .model import CORRELATION_KINDS, REGIONAL_KINDS, ModelSpec


@dataclass(frozen=True)
class ModelFrame:
    n_sites: int
    layer_counts: tuple[int, ...] = (1, 2, 3)
    regional_kinds: tuple[str, ...] = REGIONAL_KINDS
    allow_determinism: bool = True
    allow_random_walk: bool = True
    correlation_kinds: tuple[str, ...] = CORRELATION_KINDS
    forcing_layers: tuple[int | None, ...] = (None,)

    def __post_init__(self):
        for kind in self.regional_kinds:
            if kind not in REGIONAL_KINDS:
                raise ValueError(f"unknown regional kind {kind!r}")
        for kind in self.correlation_kinds:
            if kind not in CORRELATION_KINDS:
                raise ValueError(f"unknown correlation kind {kind!r}")
        if any(not 1 <= n <= 3 for n in self.layer_counts):
            raise ValueError("layer counts must lie in 1..3")

    def to_dict(self) -> dict:
        return {
            "n_sites": self.n_sites,
            "layer_counts": list(self.layer_counts),
            "regional_kinds": list(self.regional_kinds),
            "allow_determinism": self.allow_determinism,
            "allow_random_walk": self.allow_random_walk,
            "correlation_kinds": list(self.correlation_kinds),
            "forcing_layers": list(self.forcing_layers),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelFrame":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown frame fields: {sorted(unknown)}")
        kwargs = dict(data)
        for key in ("layer_counts", "regional_kinds", "correlation_kinds", "forcing_layers"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


def _regional_options(frame: ModelFrame, n_layers: int):
    options = []
    if "none" in frame.regional_kinds:
        options.append(("none", None))
    if frame.n_sites > 1:
        if "level" in frame.regional_kinds:
            options.append(("level", n_layers))
        for kind in ("pull", "diffusion"):
            if kind in frame.regional_kinds:
                options.extend((kind, layer) for layer in range(1, n_layers + 1))
    return options


def _det_options(frame: ModelFrame, n_layers: int):
    if not frame.allow_determinism or n_layers == 1:
        return [frozenset()]
    upper = range(1, n_layers)
    subsets = chain.from_iterable(combinations(upper, r) for r in range(n_layers))
    return [frozenset(s) for s in subsets]


def enumerate_models(frame: ModelFrame) -> list[ModelSpec]:
    """All structurally distinct specs in the frame, deduplicated and in
    deterministic (layer count, canonical name) order."""
    seen = {}
    rw_options = (False, True) if frame.allow_random_walk else (False,)
    for n_layers in frame.layer_counts:
        corr_axis = (
            [("none",) * n_layers]
            if frame.n_sites == 1
            else list(product(frame.correlation_kinds, repeat=n_layers))
        )
        forcing_axis = [f for f in frame.forcing_layers if f is None or f <= n_layers]
        for det in _det_options(frame, n_layers):
            for kind, layer in _regional_options(frame, n_layers):
                for rw in rw_options:
                    for corr in corr_axis:
                        for forcing in forcing_axis:
                            spec = ModelSpec(
                                n_layers=n_layers,
                                n_sites=frame.n_sites,
                                regional_kind=kind,
                                regional_layer=layer,
                                deterministic_layers=det,
                                random_walk_bottom=rw,
                                correlations=corr,
                                forcing_layer=forcing,
                            )
                            seen.setdefault(spec.name, spec)
    return sorted(seen.values(), key=lambda s: (s.n_layers, s.name))


@dataclass(frozen=True)
class Categorization:
    """A named property partitioning the model space into categories."""

    property_name: str
    categories: tuple[tuple[str, Callable[[ModelSpec], bool]], ...] = field(repr=False)

    def classify(self, spec: ModelSpec) -> str:
        matches = [label for label, predicate in self.categories if predicate(spec)]
        if len(matches) != 1:
            raise ValueError(
                f"{self.property_name!r} does not partition: spec {spec.name} "
                f"matches {matches}"
            )
        return matches[0]

    def counts(self, specs) -> dict[str, int]:
        out = {label: 0 for label, _ in self.categories}
        for spec in specs:
            out[self.classify(spec)] += 1
        return out

    def check_partition(self, specs) -> None:
        """Raise unless every spec falls in exactly one category."""
        total = sum(self.counts(specs).values())
        if total != len(list(specs)):
            raise ValueError(f"{self.property_name!r} does not partition the model set")


def _corr_class(spec: ModelSpec) -> str:
    kinds = set(spec.correlations)
    if kinds == {"none"}:
        return "none"
    if "perfect" in kinds:
        return "perfect"
    return "intermediate"


def _det_label(spec: ModelSpec) -> str:
    if not spec.deterministic_layers:
        return "no layer"
    return "layer " + " and ".join(str(i) for i in sorted(spec.deterministic_layers))


def standard_categorizations(layer_counts=(1, 2, 3)) -> list[Categorization]:
    """The reported model properties: layer count, regionality kind and
    placement, correlation class, deterministic layers, random-walk bottom."""
    cats = [
        Categorization(
            "number of layers",
            tuple(
                (str(k), (lambda s, k=k: s.n_layers == k)) for k in layer_counts
            ),
        ),
        Categorization(
            "regionality",
            (
                ("none or level", lambda s: s.regional_kind in ("none", "level")),
                ("pull", lambda s: s.regional_kind == "pull"),
                ("diffusion", lambda s: s.regional_kind == "diffusion"),
            ),
        ),
        Categorization(
            "regional parameters in",
            (
                ("no layer", lambda s: s.regional_kind in ("none", "level")),
                *(
                    (
                        f"layer {k}",
                        lambda s, k=k: s.regional_kind in ("pull", "diffusion")
                        and s.regional_layer == k,
                    )
                    for k in range(1, max(layer_counts) + 1)
                ),
            ),
        ),
        Categorization(
            "inter-regional correlations",
            (
                ("none", lambda s: _corr_class(s) == "none"),
                ("intermediate", lambda s: _corr_class(s) == "intermediate"),
                ("perfect", lambda s: _corr_class(s) == "perfect"),
            ),
        ),
        Categorization(
            "no diffusion in",
            (
                ("no layer", lambda s: not s.deterministic_layers),
                *(
                    (f"layer {k}", lambda s, k=k: s.deterministic_layers == frozenset({k}))
                    for k in range(1, max(layer_counts))
                ),
                (
                    "layer 1 and 2",
                    lambda s: s.deterministic_layers == frozenset({1, 2}),
                ),
            ),
        ),
        Categorization(
            "random walk in the lowest layer",
            (
                ("no", lambda s: not s.random_walk_bottom),
                ("yes", lambda s: s.random_walk_bottom),
            ),
        ),
    ]
    return cats


def restrict_to_nonempty(cat: Categorization, specs) -> Categorization:
    """Drop categories with no members over ``specs`` (weights over a small
    frame would otherwise hit EmptyCategory)."""
    counts = {}
    for spec in specs:
        counts[cat.classify(spec)] = counts.get(cat.classify(spec), 0) + 1
    kept = tuple(
        (label, pred) for label, pred in cat.categories if counts.get(label, 0) > 0
    )
    return Categorization(cat.property_name, kept)
