"""Embedding exporter sidecar for the prototype classifier engine."""

from .backends import HashBackend, make_backend
from .export import ExportJob, ExportResult, export
from .service import create_app, embed_service

__version__ = "0.1.0"
