"""Classification of the object strings used to name content.

Three reference styles are recognised besides opaque names::

    http://releases.ubuntu.com/15.04/ubuntu-15.04-server-i386.iso   URL
    ubuntu.com/torrent/ubuntu-15.04-server-i386.iso                 CCN name
    05E965AC45FF0D739B3B8998FFFB815D1F238DE9                        info-hash
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

_HEX40 = re.compile(r"[0-9A-Fa-f]{40}\Z")


@dataclass(frozen=True)
class Url:
    scheme: str
    authority: str
    path: str


@dataclass(frozen=True)
class CcnName:
    components: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if not self.components or not all(self.components):
            raise ValueError("CCN names need non-empty components")


@dataclass(frozen=True)
class InfoHash:
    digest: bytes

    def __post_init__(self):
        if len(self.digest) != 20:
            raise ValueError("info-hash digest must be 20 bytes")

    @property
    def hex(self) -> str:
        return self.digest.hex()


@dataclass(frozen=True)
class Opaque:
    text: str


ContentRef = Union[Url, CcnName, InfoHash, Opaque]


def classify(raw: str) -> ContentRef:
    """Total and deterministic; anything ambiguous is Opaque."""
    if "://" in raw:
        scheme, _, rest = raw.partition("://")
        slash = rest.find("/")
        if slash < 0:
            return Url(scheme, rest, "")
        return Url(scheme, rest[:slash], rest[slash:])
    if _HEX40.match(raw):
        return InfoHash(bytes.fromhex(raw))
    if "/" in raw:
        parts = raw.split("/")
        if "." in parts[0] and all(parts):
            return CcnName(tuple(parts))
    return Opaque(raw)


def normalize(ref: ContentRef) -> str:
    if isinstance(ref, Url):
        return f"{ref.scheme.lower()}://{ref.authority.lower()}{ref.path}"
    if isinstance(ref, InfoHash):
        return ref.hex
    if isinstance(ref, CcnName):
        return "/".join(ref.components)
    return ref.text


def canonical(raw: str) -> str:
    """Shorthand for ``normalize(classify(raw))``."""
    return normalize(classify(raw))
