"""32-hex-character tokens derived by MD5."""

from __future__ import annotations

import hashlib
import re

_TOKEN_RE = re.compile(r"^[0-9a-f]{32}$")


def generate_token(key: str, data: str) -> str:
    return hashlib.md5(key.encode("utf-8") + data.encode("utf-8")).hexdigest()


def is_token(value: object) -> bool:
    return isinstance(value, str) and _TOKEN_RE.match(value) is not None
