"""EMFS: a filesystem stored as message chains in an email account."""

from .codec import (EmfsMessage, SENTINEL, decode8, encode8, hash_id, pack,
                    parse_message, serialize_message, slice_encoded)
from .core import FileChain, FileEntry, FsIndex, FsInstance, connect, init
from .mock import FaultScript, MockAccount, MockSession
from .transport import (Endpoint, MailboxPath, MessageHandle, ProviderProfile,
                        connect_and_login)

__version__ = "0.1.0"

__all__ = [
    "EmfsMessage", "SENTINEL", "decode8", "encode8", "hash_id", "pack",
    "parse_message", "serialize_message", "slice_encoded",
    "FileChain", "FileEntry", "FsIndex", "FsInstance", "connect", "init",
    "FaultScript", "MockAccount", "MockSession",
    "Endpoint", "MailboxPath", "MessageHandle", "ProviderProfile",
    "connect_and_login",
]
