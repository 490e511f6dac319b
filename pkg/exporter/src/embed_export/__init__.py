"""Embedding exporter: encoder adapters writing the binary container format."""

from .adapters import get_adapter, list_families, register_family
from .container import ExportError, write_container
from .export import ExportJob, run_export

__version__ = "0.1.0"
