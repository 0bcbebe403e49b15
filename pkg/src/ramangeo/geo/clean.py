"""Locality string cleanup and synthetic-sample detection."""

from __future__ import annotations

import re
from typing import Iterable

DEFAULT_SYNTHETIC_KEYWORDS = ("synthetic", "laboratory-grown", "lab-grown", "man-made")

_PAREN = re.compile(r"\([^()]*\)")
_DELIM = re.compile(r"\s*[,;][\s,;]*")
_SPACE = re.compile(r"\s+")


def clean_locality(s: str) -> str:
    """Drop parenthesized text, normalize delimiters to ``", "``, collapse spaces.

    >>> clean_locality("Tsumeb Mine (Ongopolo) , Namibia")
    'Tsumeb Mine, Namibia'
    """
    if not s:
        return ""
    prev = None
    while prev != s:
        prev = s
        s = _PAREN.sub(" ", s)
    s = s.replace("(", " ").replace(")", " ")
    s = _DELIM.sub(", ", s)
    s = _SPACE.sub(" ", s)
    return s.strip(" ,;")


def normalize_query(s: str) -> str:
    """Cache key form of a locality: cleaned and lowercased."""
    return clean_locality(s).lower()


def _keyword_pattern(keywords: Iterable[str]) -> re.Pattern | None:
    alts = "|".join(re.escape(k.strip()) for k in keywords if k.strip())
    if not alts:
        return None
    return re.compile(rf"(?<!\w)(?:{alts})(?!\w)", re.IGNORECASE)


_DEFAULT_PATTERN = _keyword_pattern(DEFAULT_SYNTHETIC_KEYWORDS)


def detect_synthetic(locality: str | None, names: str | None, keywords: Iterable[str] | None = None) -> bool:
    """Whole-word, case-insensitive keyword search over locality and names."""
    pat = _DEFAULT_PATTERN if keywords is None else _keyword_pattern(keywords)
    if pat is None:
        return False
    return any(pat.search(field) for field in (locality or "", names or "") if field)
