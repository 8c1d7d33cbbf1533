"""Reference worker for the teachloop external-trainer protocol."""

from .worker import MemorizingWorker, serve_http, serve_stdio

__all__ = ["MemorizingWorker", "serve_http", "serve_stdio"]
