"""Headless e-mail triage: keyword routing, attachment filing and run reports."""

from .message_model import ParsedMessage, RawMessage, normalize_text, parse_message
from .pipeline import run_pipeline

__version__ = "0.1.0"

__all__ = ["ParsedMessage", "RawMessage", "normalize_text", "parse_message", "run_pipeline"]
