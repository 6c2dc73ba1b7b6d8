"""Offset-unit conversion.

Fast tokenizers frequently report character spans in UTF-8 bytes; the
pipeline's binary formats index Unicode code points.  The conversion
lives here so the downstream formats stay unit-consistent.
"""

from __future__ import annotations


def byte_to_code_point_map(text: str) -> dict[int, int]:
    """Map every valid UTF-8 byte boundary of ``text`` to its code-point
    index.  Byte positions inside a multi-byte character are absent."""
    mapping = {}
    byte_pos = 0
    for cp_index, ch in enumerate(text):
        mapping[byte_pos] = cp_index
        byte_pos += len(ch.encode("utf-8"))
    mapping[byte_pos] = len(text)
    return mapping


def byte_offsets_to_code_points(text: str, offsets) -> list[tuple[int, int]]:
    """Convert (start, end) byte offsets into code-point offsets.

    Special-token markers (0, 0) pass through unchanged.  Offsets that do
    not land on a character boundary mean the tokenizer and the text
    disagree, which is a hard error, not something to round over.
    """
    mapping = byte_to_code_point_map(text)
    converted = []
    for start, end in offsets:
        if (start, end) == (0, 0):
            converted.append((0, 0))
            continue
        if start not in mapping or end not in mapping:
            raise ValueError(
                f"byte offset ({start}, {end}) does not fall on a character "
                f"boundary of the text"
            )
        converted.append((mapping[start], mapping[end]))
    return converted
