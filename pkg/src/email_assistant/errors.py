"""Exception hierarchy shared by every stage of the assistant."""

from __future__ import annotations


class AssistantError(Exception):
    """Base class for all errors raised by this package."""


# message parsing

class MalformedMessage(AssistantError):
    pass


class UnsupportedEncoding(AssistantError):
    pass


class CorruptEncoding(AssistantError):
    pass


# configuration

class ConfigError(AssistantError):
    pass


class ConfigSyntax(ConfigError):
    pass


class ConfigSemantic(ConfigError):
    pass


class NoCredentials(ConfigError):
    pass


# mailbox access

class StoreError(AssistantError):
    pass


class ConnectFailure(StoreError):
    """The server could not be reached or spoke no IMAP greeting."""


class ConnectTimeout(ConnectFailure):
    pass


class TlsFailure(ConnectFailure):
    pass


class AuthFailure(StoreError):
    pass


class NoSuchFolder(StoreError):
    pass


class FetchFailure(StoreError):
    pass


class ActionFailure(StoreError):
    pass


class PortInUse(StoreError):
    pass


# filesystem / reporting

class IoFailure(AssistantError):
    pass


class ExhaustedSuffixes(IoFailure):
    pass


class ManifestMismatch(AssistantError):
    pass
