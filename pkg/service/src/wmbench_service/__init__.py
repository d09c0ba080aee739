"""Paraphrase sidecar: caption and image-to-image regeneration over HTTP."""

from .app import ParaphraseService, ServiceConfig

__version__ = "0.1.0"

__all__ = ["ParaphraseService", "ServiceConfig"]
