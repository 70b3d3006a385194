"""Stop-sequence truncation for raw generator output.

Keeps the first block of generated code by cutting at the earliest stop
string. The search starts after the first newline so a completion that opens
with a definition is not emptied by the "\\ndef" stop.
"""

from __future__ import annotations

DEFAULT_STOPS = (
    "\nclass",
    "\ndef",
    "\n#",
    "\nif",
    "\nprint",
    "\nassert",
    '\n"""',
    "\n<|",
)


def truncate_at_stop(raw: str, stops=DEFAULT_STOPS, search_from_first_newline=True):
    """Truncate ``raw`` at the earliest occurrence of any stop string.

    Returns ``(text, applied)``. The output is always a prefix of the input;
    when no stop occurs the input comes back unchanged with ``applied=False``.
    """
    if not stops:
        raise ValueError("stops must be non-empty when truncation is enabled")
    offset = 0
    if search_from_first_newline:
        first_newline = raw.find("\n")
        offset = first_newline if first_newline >= 0 else len(raw)
    cut = len(raw)
    for stop in stops:
        pos = raw.find(stop, offset)
        if pos != -1 and pos < cut:
            cut = pos
    if cut == len(raw):
        return raw, False
    return raw[:cut], True
