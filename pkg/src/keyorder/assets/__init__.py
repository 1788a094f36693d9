"""Bundled protocol models and scenario scripts."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Dict, Tuple

STATIC_BASELINE = "StaticBaseline"
STATIC_NO_INTENDED_RECEIVER = "StaticNoIntendedReceiver"
DYNAMIC_SKELETON = "DynamicSkeleton"

_FILES = {
    STATIC_BASELINE: "ensemble_static.spk",
    STATIC_NO_INTENDED_RECEIVER: "ensemble_static_nomatch.spk",
    DYNAMIC_SKELETON: "ensemble_dynamic.spk",
}

_SCENARIOS = {
    STATIC_BASELINE: ("static_full_run", "static_full_run_reveal_jrek"),
    STATIC_NO_INTENDED_RECEIVER: ("static_full_run",),
    DYNAMIC_SKELETON: ("dynamic_two_platoons",),
}

_ALIASES = {
    "staticbaseline": STATIC_BASELINE,
    "static": STATIC_BASELINE,
    "ensemble_static": STATIC_BASELINE,
    "staticnointendedreceiver": STATIC_NO_INTENDED_RECEIVER,
    "static-nomatch": STATIC_NO_INTENDED_RECEIVER,
    "ensemble_static_nomatch": STATIC_NO_INTENDED_RECEIVER,
    "dynamicskeleton": DYNAMIC_SKELETON,
    "dynamic": DYNAMIC_SKELETON,
    "ensemble_dynamic": DYNAMIC_SKELETON,
}


@dataclass(frozen=True)
class ModelAsset:
    variant: str
    path: Path
    scenarios: Dict[str, Path]
    expected_classes: int = 10
    expected_max_chain: int = 6

    def text(self) -> str:
        return self.path.read_text()

    def model(self):
        from ..model import parse_model

        return parse_model(self.text())

    def scenario_text(self, name: str) -> str:
        return self.scenarios[name].read_text()


def _root() -> Path:
    return Path(resources.files(__package__))  # type: ignore[arg-type]


def variant_name(name: str) -> str:
    if name in _FILES:
        return name
    key = name.lower().replace("-", "_").replace("_", "").replace(".spk", "")
    key2 = name.lower().replace("-", "_").replace(".spk", "")
    for cand in (key, key2, name.lower()):
        if cand in _ALIASES:
            return _ALIASES[cand]
    raise KeyError(f"unknown model variant {name!r}")


def asset(variant: str) -> ModelAsset:
    """Look up a bundled model by variant name (aliases accepted)."""
    variant = variant_name(variant)
    root = _root()
    scen = {
        s: root / "scenarios" / f"{s}.scn" for s in _SCENARIOS[variant]
    }
    return ModelAsset(variant, root / "models" / _FILES[variant], scen)


def scenario_path(name: str) -> Path:
    p = _root() / "scenarios" / f"{name}.scn"
    if not p.exists():
        raise KeyError(f"unknown bundled scenario {name!r}")
    return p


def all_variants() -> Tuple[str, ...]:
    return tuple(_FILES)
