"""Reference victim-model server for the igaff wire protocol."""

__version__ = "0.1.0"

from .nets import ServedModel, load_manifest, load_ref
from .server import TcpServer, handle_line, serve_stdio

__all__ = ["ServedModel", "TcpServer", "handle_line", "load_manifest", "load_ref", "serve_stdio"]
