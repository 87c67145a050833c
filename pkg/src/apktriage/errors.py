"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class TriageError(Exception):
    """Base class for all typed pipeline errors."""


# -- container --------------------------------------------------------------

class NotAZip(TriageError):
    """File is not a ZIP container."""


class NoDexFound(TriageError):
    """Archive holds no classes*.dex entry."""


class IoFailure(TriageError):
    """Underlying read failed."""


class IndexOutOfRange(TriageError):
    """Ordinal outside the valid range of a table or entry list."""


class CorruptEntry(TriageError):
    """Archive entry failed to decompress or its size disagrees."""


# -- dex --------------------------------------------------------------------

class DexError(TriageError):
    """Base class for DEX parse failures."""


class BadMagic(DexError):
    """Buffer does not start with a known DEX magic/version."""


class Truncated(DexError):
    """Buffer ends before a structure is complete."""


class Overlong(DexError):
    """Varint encoding has no terminator within its legal width."""


class MalformedOffset(DexError):
    """A table offset, size, or stored index points outside its bounds."""


# -- prompts / backend ------------------------------------------------------

class BudgetExceeded(TriageError):
    """Rendered prompt would exceed its tier's token budget."""


class TemplateError(TriageError):
    """Template asset missing or placeholder unresolved."""


class BackendUnavailable(TriageError):
    """Backend still failing after the retry policy was exhausted."""


class AuthFailure(TriageError):
    """Endpoint rejected the credential."""


class ResponseMalformed(TriageError):
    """Backend reply does not match the chat-completions shape."""


# -- reports / evaluation ---------------------------------------------------

class TagNotFound(TriageError):
    """Requested tag appears nowhere in the report."""


class ClassNotFound(TriageError):
    """Class filter matched nothing in the archive."""


class SchemaMismatch(TriageError):
    """Report file does not parse under the current schema."""


class EmptyCorpus(TriageError):
    """Corpus manifest lists no samples."""


class LengthMismatch(TriageError):
    """Aligned lists have different lengths."""
