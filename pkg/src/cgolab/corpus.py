"""Test corpus of phantoms and phantom pairs shipped with the package."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .fields import Grid3
from .materials import Bump, MaterialSet, PhantomSpec, build_phantom

__all__ = ["Corpus", "PairEntry", "load_corpus", "spec_from_dict"]


def spec_from_dict(entry: dict) -> PhantomSpec:
    """Build a :class:`PhantomSpec` from a JSON-style dictionary."""
    bumps = tuple(
        Bump(
            target=b["target"],
            center=tuple(float(c) for c in b["center"]),
            radius=float(b["radius"]),
            amplitude=float(b["amplitude"]),
            smoothness=float(b.get("smoothness", 1.0)),
        )
        for b in entry.get("bumps", [])
    )
    return PhantomSpec(
        omega=float(entry.get("omega", 1.0)),
        eps0=float(entry.get("eps0", 1.0)),
        mu0=float(entry.get("mu0", 1.0)),
        bumps=bumps,
    )


@dataclass(frozen=True)
class PairEntry:
    name: str
    first: str
    second: str
    generic: bool
    oracle_max_abs_t: dict | None
    detection_threshold: dict | None


@dataclass(frozen=True, eq=False)
class Corpus:
    raw: dict

    @property
    def grid(self) -> Grid3:
        g = self.raw["grid"]
        return Grid3(int(g["n"]), float(g["box_length"]))

    @property
    def suite(self) -> list[str]:
        return list(self.raw["suite"])

    @property
    def cgo_phantom(self) -> str:
        return self.raw["cgo_phantom"]

    @property
    def detection(self) -> dict:
        return dict(self.raw["detection"])

    def spec(self, name: str) -> PhantomSpec:
        return spec_from_dict(self.raw["phantoms"][name])

    def build(self, name: str, grid: Grid3 | None = None) -> MaterialSet:
        return build_phantom(self.spec(name), grid or self.grid)

    @property
    def pairs(self) -> list[PairEntry]:
        return [
            PairEntry(
                name=p["name"],
                first=p["first"],
                second=p["second"],
                generic=bool(p.get("generic", False)),
                oracle_max_abs_t=p.get("oracle_max_abs_t"),
                detection_threshold=p.get("detection_threshold"),
            )
            for p in self.raw["pairs"]
        ]

    def pair(self, name: str) -> PairEntry:
        for p in self.pairs:
            if p.name == name:
                return p
        raise KeyError(name)


@lru_cache(maxsize=1)
def load_corpus() -> Corpus:
    text = resources.files("cgolab").joinpath("data/corpus.json").read_text(encoding="utf-8")
    return Corpus(json.loads(text))
