"""Natural Earth country name -> ISO 3166-1 alpha-3 lookup."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources
from typing import Mapping


@lru_cache(maxsize=1)
def bundled_iso_mapping() -> dict[str, str]:
    text = resources.files("ramangeo.data").joinpath("ne_iso_a3.json").read_text(encoding="utf-8")
    return json.loads(text)


def iso_a3(name: str, overrides: Mapping[str, str] | None = None) -> str | None:
    """Code for ``name``; ``overrides`` (e.g. codes read from the polygon file) win."""
    if overrides and name in overrides:
        return overrides[name]
    table = bundled_iso_mapping()
    if name in table:
        return table[name]
    folded = {k.casefold(): v for k, v in table.items()}
    return folded.get(name.casefold())
