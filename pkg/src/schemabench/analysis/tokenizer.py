"""Token counting for overhead metrics.

The default counts whitespace-delimited tokens. Any object with ``name``
and ``count(text)`` can be substituted (e.g. a model-specific tokenizer);
reports always name the tokenizer they used.
"""

from __future__ import annotations

from typing import Protocol


class Tokenizer(Protocol):
    name: str

    def count(self, text: str) -> int: ...


class WhitespaceTokenizer:
    name = "whitespace"

    def count(self, text: str) -> int:
        return len(text.split())


DEFAULT_TOKENIZER = WhitespaceTokenizer()
