"""Mail transport abstraction: the SMTP send path plus the IMAP verbs EMFS uses.

Two bindings exist: :class:`emfs.mock.MockSession` for the in-process
provider simulator and :class:`emfs.netmail.NetSession` for real servers.
"""

from __future__ import annotations

import abc
import os
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Tuple

from .codec import EmfsMessage
from .errors import InvalidName, MissingCredential

DELIMITER = "/"
INBOX = "INBOX"
HEADER_ALLOWANCE = 1024

MiB = 2 ** 20


class Endpoint(NamedTuple):
    host: str
    port: int

    def __str__(self):
        return "%s:%d" % (self.host, self.port)


@dataclass(frozen=True)
class ProviderProfile:
    smtp_endpoint: Endpoint
    imap_endpoint: Endpoint
    username: str
    credential_ref: str
    size_limit_s: int
    root_folder: str = "EMFS"
    use_tls: bool = True

    def __post_init__(self):
        if self.size_limit_s < 1:
            raise ValueError("size_limit_s must be >= 1")
        if not self.root_folder or DELIMITER in self.root_folder:
            raise ValueError("root_folder must be a single non-empty folder name")

    def password(self) -> str:
        value = os.environ.get(self.credential_ref)
        if value is None:
            raise MissingCredential(
                "environment variable %s is not set" % self.credential_ref)
        return value


@dataclass(frozen=True, order=True)
class MailboxPath:
    """A folder as an ordered tuple of names, outermost first."""

    segments: Tuple[str, ...]

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise InvalidName("mailbox path must have at least one segment")
        for seg in segs:
            if not seg or DELIMITER in seg:
                raise InvalidName("bad folder name segment %r" % seg)

    @classmethod
    def parse(cls, name: str, delimiter: str = DELIMITER) -> "MailboxPath":
        return cls(tuple(name.split(delimiter)))

    def name(self, delimiter: str = DELIMITER) -> str:
        return delimiter.join(self.segments)

    @property
    def leaf(self) -> str:
        return self.segments[-1]

    @property
    def parent(self) -> Optional["MailboxPath"]:
        if len(self.segments) == 1:
            return None
        return MailboxPath(self.segments[:-1])

    def child(self, name: str) -> "MailboxPath":
        return MailboxPath(self.segments + (name,))

    def is_within(self, other: "MailboxPath") -> bool:
        return self.segments[:len(other.segments)] == other.segments

    def __str__(self):
        return self.name()


INBOX_PATH = MailboxPath((INBOX,))


@dataclass(frozen=True)
class MessageHandle:
    mailbox: MailboxPath
    uid: int


@dataclass(frozen=True)
class MessageInfo:
    """Header summary for one stored message.

    ``filename`` is None for messages without EMFS headers; ``first_id`` and
    ``next_id`` are then meaningless.
    """

    handle: MessageHandle
    filename: Optional[str]
    first_id: str = ""
    next_id: str = ""
    encoded_size: int = 0

    @property
    def is_emfs(self) -> bool:
        return self.filename is not None


@dataclass
class Session(abc.ABC):
    """An authenticated connection pair (submission + mailbox access).

    Not thread-safe: one operation at a time.
    """

    profile: ProviderProfile
    selected: Optional[MailboxPath] = field(default=None, init=False)

    @abc.abstractmethod
    def create_folder(self, path: MailboxPath) -> None: ...

    @abc.abstractmethod
    def select_folder(self, path: MailboxPath) -> None: ...

    @abc.abstractmethod
    def list_folders(self, path: MailboxPath) -> List[MailboxPath]:
        """Immediate children of ``path``."""

    @abc.abstractmethod
    def delete_folder(self, path: MailboxPath) -> None: ...

    @abc.abstractmethod
    def send_message(self, message: EmfsMessage) -> None: ...

    @abc.abstractmethod
    def fetch_message(self, handle: MessageHandle) -> str: ...

    @abc.abstractmethod
    def list_messages(self, path: MailboxPath) -> List[MessageInfo]: ...

    @abc.abstractmethod
    def move_message(self, handle: MessageHandle, dest: MailboxPath) -> MessageHandle: ...

    @abc.abstractmethod
    def delete_message(self, handle: MessageHandle) -> None: ...

    @abc.abstractmethod
    def folder_exists(self, path: MailboxPath) -> bool: ...

    def logout(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.logout()


def connect_and_login(profile: ProviderProfile, mock=None,
                      password: Optional[str] = None) -> Session:
    """Open an authenticated session.

    With ``mock`` (a :class:`emfs.mock.MockAccount`) the session binds to the
    in-process simulator; otherwise real SMTP and IMAP connections are made.
    The password is read from the profile's credential variable unless given.
    """
    if password is None:
        password = profile.password()
    if mock is not None:
        from .mock import MockSession
        return MockSession.login(profile, mock, password)
    from .netmail import NetSession
    return NetSession.login(profile, password)
