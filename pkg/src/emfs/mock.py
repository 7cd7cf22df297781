"""In-process email service provider used for hermetic tests and ``--mock``.

A :class:`MockAccount` models a single mailbox account: submissions land in
INBOX, folders form a tree delimited by ``/``, and every stored message
keeps its exact wire text. A :class:`FaultScript` can be attached to make
the account misbehave in scripted, reproducible ways.
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Tuple

from .codec import parse_message, payload_size, serialize_message, split_wire
from .errors import (AlreadyExists, AuthFailed, EmfsError, FaultInjected,
                     FolderError, HasSubfolders, MessageTooLarge, NoParent,
                     NoSuchFolder, NoSuchMessage, TlsUnavailable)
from .transport import (DELIMITER, HEADER_ALLOWANCE, INBOX, MailboxPath,
                        MessageHandle, MessageInfo, ProviderProfile, Session)

SNAPSHOT_MAGIC = "emfs-mock-snapshot 1"

FAULT_KINDS = ("drop-nth-send", "corrupt-message", "delete-message",
               "refuse-tls", "fail-after")


class FaultScript:
    """Ordered fault directives, consumed head first.

    Directives are ``(kind, arg)`` pairs:

    * ``("drop-nth-send", n)``: the n-th submission seen while this directive
      is at the head is silently lost.
    * ``("corrupt-message", uid)`` / ``("delete-message", uid)``: applied as
      soon as a message with that uid exists.
    * ``("refuse-tls", None)``: the next STARTTLS attempt is refused.
    * ``("fail-after", k)``: k more operations succeed, every later one
      raises :class:`FaultInjected`. Never exhausted.
    """

    def __init__(self, directives: Iterable[Tuple[str, Optional[int]]] = ()):
        self.directives = deque()
        for kind, arg in directives:
            if kind not in FAULT_KINDS:
                raise ValueError("unknown fault directive %r" % kind)
            self.directives.append([kind, arg])
        self._sends = 0

    @property
    def head(self):
        return self.directives[0] if self.directives else None

    def pop(self):
        self.directives.popleft()
        self._sends = 0

    def __bool__(self):
        return bool(self.directives)


@dataclass
class StoredMessage:
    uid: int
    wire: str
    deleted: bool = False


@dataclass
class MockAccount:
    address: str = "user@example.com"
    password: str = "password"
    size_limit_s: int = 25 * 2 ** 20
    tls_enabled: bool = True
    folders: dict = field(default_factory=dict)
    next_uid: int = 1
    faults: FaultScript = field(default_factory=FaultScript)
    log: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.size_limit_s < 1:
            raise ValueError("size_limit_s must be >= 1")
        self.folders.setdefault(INBOX, [])
        self._lock = threading.RLock()

    # -- fault machinery --------------------------------------------------

    def _find(self, uid):
        for name, msgs in self.folders.items():
            for m in msgs:
                if m.uid == uid:
                    return name, m
        return None

    def _tick(self, verb, *args):
        self.log.append((verb,) + args)
        script = self.faults
        while script.head and script.head[0] in ("corrupt-message", "delete-message"):
            found = self._find(script.head[1])
            if found is None:
                break
            name, msg = found
            if script.head[0] == "delete-message":
                self.folders[name].remove(msg)
            else:
                msg.wire = _corrupt(msg.wire)
            script.pop()
        head = script.head
        if head and head[0] == "fail-after":
            if head[1] <= 0:
                raise FaultInjected("injected failure on %s" % verb)
            head[1] -= 1

    # -- authentication ---------------------------------------------------

    def login(self, username: str, password: str, starttls: bool = True) -> None:
        with self._lock:
            self._tick("login", username)
            if starttls:
                head = self.faults.head
                if head and head[0] == "refuse-tls":
                    self.faults.pop()
                    raise TlsUnavailable("STARTTLS refused (scripted)")
                if not self.tls_enabled:
                    raise TlsUnavailable("server does not offer STARTTLS")
            if username != self.address or password != self.password:
                raise AuthFailed("LOGIN rejected for %s" % username)

    # -- submission -------------------------------------------------------

    def submit(self, wire: str) -> None:
        """Accept a message for delivery to INBOX."""
        with self._lock:
            self._tick("submit")
            lines, body = split_wire(wire)
            size = payload_size(body)
            if size > self.size_limit_s:
                raise MessageTooLarge(
                    "body payload %d exceeds limit %d" % (size, self.size_limit_s))
            head_len = len(wire) - len(body)
            if head_len > HEADER_ALLOWANCE:
                raise MessageTooLarge("header block %d exceeds %d octets"
                                      % (head_len, HEADER_ALLOWANCE))
            head = self.faults.head
            if head and head[0] == "drop-nth-send":
                self.faults._sends += 1
                if self.faults._sends == head[1]:
                    self.faults.pop()
                    return
            self.folders[INBOX].append(StoredMessage(self._take_uid(), wire))

    def _take_uid(self):
        uid = self.next_uid
        self.next_uid += 1
        return uid

    # -- folder verbs -----------------------------------------------------

    def _require(self, name):
        if name not in self.folders:
            raise NoSuchFolder(name)
        return self.folders[name]

    def exists(self, name: str) -> bool:
        with self._lock:
            self._tick("exists", name)
            return name in self.folders

    def create(self, name: str) -> None:
        with self._lock:
            self._tick("create", name)
            if name in self.folders:
                raise AlreadyExists(name)
            parent, sep, _ = name.rpartition(DELIMITER)
            if sep and parent not in self.folders:
                raise NoParent(name)
            self.folders[name] = []

    def select(self, name: str) -> int:
        with self._lock:
            self._tick("select", name)
            return len(self._require(name))

    def _children(self, name):
        prefix = name + DELIMITER
        return sorted(n for n in self.folders
                      if n.startswith(prefix) and DELIMITER not in n[len(prefix):])

    def list_children(self, name: str) -> List[str]:
        with self._lock:
            self._tick("list", name)
            self._require(name)
            return self._children(name)

    def delete(self, name: str) -> None:
        with self._lock:
            self._tick("delete", name)
            self._require(name)
            if name == INBOX:
                raise FolderError("INBOX cannot be deleted")
            if self._children(name):
                raise HasSubfolders(name)
            del self.folders[name]

    # -- message verbs ----------------------------------------------------

    def _message(self, name, uid):
        for m in self._require(name):
            if m.uid == uid:
                return m
        raise NoSuchMessage("%s uid %d" % (name, uid))

    def messages(self, name: str) -> List[Tuple[int, str]]:
        with self._lock:
            self._tick("fetch-all", name)
            return [(m.uid, m.wire) for m in self._require(name)]

    def fetch(self, name: str, uid: int) -> str:
        with self._lock:
            self._tick("fetch", name, uid)
            return self._message(name, uid).wire

    def move(self, name: str, uid: int, dest: str) -> int:
        with self._lock:
            self._tick("move", name, uid, dest)
            msg = self._message(name, uid)
            target = self._require(dest)
            self.folders[name].remove(msg)
            moved = StoredMessage(self._take_uid(), msg.wire)
            target.append(moved)
            return moved.uid

    def store_deleted(self, name: str, uid: int) -> None:
        with self._lock:
            self._tick("store-deleted", name, uid)
            self._message(name, uid).deleted = True

    def expunge(self, name: str) -> List[int]:
        with self._lock:
            self._tick("expunge", name)
            msgs = self._require(name)
            gone = [m.uid for m in msgs if m.deleted]
            msgs[:] = [m for m in msgs if not m.deleted]
            return gone

    # -- inspection -------------------------------------------------------

    def message_count(self, name: str) -> int:
        with self._lock:
            return len(self._require(name))

    def snapshot(self) -> str:
        """Deterministic line-oriented dump of the whole account."""
        with self._lock:
            out = [SNAPSHOT_MAGIC,
                   "address %s" % self.address,
                   "password %s" % self.password,
                   "size-limit %d" % self.size_limit_s,
                   "tls %d" % int(self.tls_enabled),
                   "next-uid %d" % self.next_uid]
            for name in sorted(self.folders, key=lambda n: (n != INBOX, n)):
                msgs = self.folders[name]
                out.append("folder %d %s" % (len(msgs), name))
                for m in msgs:
                    lines = m.wire.split("\r\n")
                    out.append("message %d %d%s" % (m.uid, len(lines),
                                                    " deleted" if m.deleted else ""))
                    out.extend("| " + _escape(line) for line in lines)
            return "\n".join(out) + "\n"

    @classmethod
    def from_snapshot(cls, text: str) -> "MockAccount":
        lines = text.split("\n")
        if not lines or lines[0] != SNAPSHOT_MAGIC:
            raise ValueError("not a mock snapshot")
        meta = {}
        pos = 1
        while pos < len(lines) and not lines[pos].startswith("folder "):
            if lines[pos]:
                key, _, value = lines[pos].partition(" ")
                meta[key] = value
            pos += 1
        account = cls(address=meta["address"], password=meta["password"],
                      size_limit_s=int(meta["size-limit"]),
                      tls_enabled=meta["tls"] == "1",
                      next_uid=int(meta["next-uid"]))
        account.folders.clear()
        while pos < len(lines) and lines[pos]:
            _, count, name = lines[pos].split(" ", 2)
            pos += 1
            msgs = account.folders.setdefault(name, [])
            for _ in range(int(count)):
                parts = lines[pos].split(" ")
                uid, nlines = int(parts[1]), int(parts[2])
                body = [_unescape(line[2:]) for line in lines[pos + 1:pos + 1 + nlines]]
                msgs.append(StoredMessage(uid, "\r\n".join(body), "deleted" in parts[3:]))
                pos += 1 + nlines
        account.folders.setdefault(INBOX, [])
        return account

    def save(self, path) -> None:
        Path(path).write_text(self.snapshot(), encoding="utf-8", newline="\n")

    @classmethod
    def load(cls, path) -> "MockAccount":
        return cls.from_snapshot(Path(path).read_text(encoding="utf-8"))


def new_account(address: str, password: str, size_limit_s: int,
                tls_enabled: bool = True) -> MockAccount:
    return MockAccount(address=address, password=password,
                       size_limit_s=size_limit_s, tls_enabled=tls_enabled)


def _escape(line):
    return line.replace("\\", "\\\\").replace("\r", "\\r").replace("\n", "\\n")


def _unescape(line):
    out = []
    chars = iter(line)
    for ch in chars:
        if ch == "\\":
            nxt = next(chars, "")
            out.append({"r": "\r", "n": "\n"}.get(nxt, nxt))
        else:
            out.append(ch)
    return "".join(out)


def _corrupt(wire):
    # Flip one body character to another alphabet character so the payload
    # size is unchanged but the link hash no longer matches.
    _, body = split_wire(wire)
    start = len(wire) - len(body)
    for i in range(start, len(wire)):
        if wire[i] not in "\r\n":
            repl = "B" if wire[i] == "A" else "A"
            return wire[:i] + repl + wire[i + 1:]
    return wire + "A"


class MockSession(Session):
    """Transport binding that talks to a :class:`MockAccount` directly."""

    def __init__(self, profile: ProviderProfile, account: MockAccount):
        super().__init__(profile)
        self.account = account

    @classmethod
    def login(cls, profile, account, password):
        account.login(profile.username, password, starttls=profile.use_tls)
        return cls(profile, account)

    def create_folder(self, path):
        self.account.create(path.name())

    def select_folder(self, path):
        self.account.select(path.name())
        self.selected = path

    def folder_exists(self, path):
        return self.account.exists(path.name())

    def list_folders(self, path):
        return [MailboxPath.parse(n) for n in self.account.list_children(path.name())]

    def delete_folder(self, path):
        self.account.delete(path.name())
        if self.selected is not None and self.selected.is_within(path):
            self.selected = None

    def send_message(self, message):
        self.account.submit(serialize_message(message))

    def fetch_message(self, handle):
        return self.account.fetch(handle.mailbox.name(), handle.uid)

    def list_messages(self, path):
        infos = []
        for uid, wire in self.account.messages(path.name()):
            handle = MessageHandle(path, uid)
            try:
                msg = parse_message(wire)
            except EmfsError:
                infos.append(MessageInfo(handle, None))
                continue
            infos.append(MessageInfo(handle, msg.filename, msg.first_id,
                                     msg.next_id, len(msg.body)))
        return infos

    def move_message(self, handle, dest):
        uid = self.account.move(handle.mailbox.name(), handle.uid, dest.name())
        return MessageHandle(dest, uid)

    def delete_message(self, handle):
        name = handle.mailbox.name()
        self.account.store_deleted(name, handle.uid)
        self.account.expunge(name)
