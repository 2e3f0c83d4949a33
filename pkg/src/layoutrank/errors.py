"""Shared exception for cross-file compatibility failures."""
from __future__ import annotations

__all__ = ["VersionError"]


class VersionError(ValueError):
    """A persisted artifact (schema, checkpoint, manifest, store) does not
    match the version or fingerprint this code expects."""
