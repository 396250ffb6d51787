"""Exporter error types."""


class ExportError(RuntimeError):
    """Anything that stops an export: bad inputs, bad upstream data."""


class MissingDependencyError(ExportError):
    """The optional download stack (moabb, mne) is not installed."""
