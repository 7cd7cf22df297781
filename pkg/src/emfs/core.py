"""The EMFS engine: directories are folders, files are message chains.

An :class:`FsInstance` owns one transport session and a cached
:class:`FsIndex` of the folder tree. Mutations update the index in place so
listings never need another LIST round trip.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

from .codec import (EmfsMessage, SENTINEL, decode8, encode8, hash_id, pack,
                    parse_message, slice_encoded)
from .errors import (AlreadyExists, BrokenChain, EmfsError, FileExists,
                     InvalidName, NoSuchFile, NoSuchFolder, PartialUpload,
                     RootCreateFailed, TransportError)
from .transport import (DELIMITER, INBOX_PATH, MailboxPath, MessageHandle,
                        MessageInfo, ProviderProfile, Session,
                        connect_and_login)

log = logging.getLogger(__name__)

_BAD_FILENAME_CHARS = set("\r\n\x00") | {DELIMITER}


@dataclass(frozen=True, order=True)
class FileEntry:
    filename: str
    first_id: str
    chain_length: int
    encoded_size: int

    def __post_init__(self):
        if self.chain_length < 1:
            raise ValueError("chain_length must be >= 1")


@dataclass
class FsIndex:
    """Directory path -> file entries, for every folder under the root."""

    entries: Dict[MailboxPath, List[FileEntry]] = field(default_factory=dict)
    built_at: float = field(default_factory=time.time, compare=False)

    def __contains__(self, path: MailboxPath) -> bool:
        return path in self.entries

    def files(self, path: MailboxPath) -> List[FileEntry]:
        try:
            return self.entries[path]
        except KeyError:
            raise NoSuchFolder(str(path)) from None

    def lookup(self, path: MailboxPath, filename: str) -> Optional[FileEntry]:
        for entry in self.files(path):
            if entry.filename == filename:
                return entry
        return None

    def children(self, path: MailboxPath) -> List[MailboxPath]:
        depth = len(path.segments) + 1
        return sorted(p for p in self.entries
                      if len(p.segments) == depth and p.is_within(path))

    def message_count(self, path: MailboxPath) -> int:
        """M for one folder: the sum of chain lengths of its files."""
        return sum(e.chain_length for e in self.files(path))

    def add(self, path: MailboxPath, entry: FileEntry) -> None:
        files = self.files(path)
        files.append(entry)
        files.sort()

    def remove(self, path: MailboxPath, entry: FileEntry) -> None:
        self.files(path).remove(entry)

    def drop_tree(self, path: MailboxPath) -> None:
        for p in [p for p in self.entries if p.is_within(path)]:
            del self.entries[p]


@dataclass
class FileChain:
    """A file's messages in chain order, with their handles."""

    messages: List[EmfsMessage]
    handles: List[MessageHandle]

    def data(self) -> bytes:
        return decode8("".join(m.body for m in self.messages))

    def is_linked(self) -> bool:
        if not self.messages:
            return False
        first = self.messages[0]
        for i, msg in enumerate(self.messages):
            if msg.first_id != first.first_id:
                return False
            own = hash_id(first.filename, i, msg.body)
            if i == 0 and own != first.first_id:
                return False
            if i > 0 and self.messages[i - 1].next_id != own:
                return False
        return self.messages[-1].next_id == SENTINEL


def check_filename(filename: str) -> None:
    if not filename or filename in (".", ".."):
        raise InvalidName("bad filename %r" % filename)
    if _BAD_FILENAME_CHARS & set(filename):
        raise InvalidName("filename %r contains a forbidden character" % filename)


def group_chains(infos: List[MessageInfo]) -> List[FileEntry]:
    """Group a folder's header summaries into file entries by first id."""
    groups: Dict[str, List[MessageInfo]] = {}
    for info in infos:
        if not info.is_emfs:
            log.warning("skipping non-EMFS message %s uid %s",
                        info.handle.mailbox, info.handle.uid)
            continue
        groups.setdefault(info.first_id, []).append(info)
    entries = []
    for first_id, members in groups.items():
        names = {m.filename for m in members}
        if len(names) != 1:
            log.warning("skipping chain %s with mixed filenames %s",
                        first_id[:12], sorted(names))
            continue
        entries.append(FileEntry(members[0].filename, first_id, len(members),
                                 sum(m.encoded_size for m in members)))
    return sorted(entries)


class FsInstance:
    def __init__(self, session: Session, *, delivery_timeout: float = 0.0,
                 poll_interval: float = 0.5):
        self.session = session
        self.profile: ProviderProfile = session.profile
        self.root = MailboxPath((self.profile.root_folder,))
        self.delivery_timeout = delivery_timeout
        self.poll_interval = poll_interval
        self.root_created = False
        self.index = FsIndex()

    # -- lifecycle --------------------------------------------------------

    @classmethod
    def open(cls, session: Session, **kwargs) -> "FsInstance":
        fs = cls(session, **kwargs)
        fs.index = fs.build_index()
        return fs

    @classmethod
    def create(cls, session: Session, **kwargs) -> "FsInstance":
        """Ensure the root folder exists, then index the instance."""
        fs = cls(session, **kwargs)
        try:
            session.create_folder(fs.root)
            fs.root_created = True
        except AlreadyExists:
            pass
        except TransportError:
            raise
        except EmfsError as exc:
            raise RootCreateFailed("cannot create %s: %s" % (fs.root, exc)) from exc
        fs.index = fs.build_index()
        return fs

    def close(self) -> None:
        self.session.logout()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- paths ------------------------------------------------------------

    def resolve(self, path: str) -> MailboxPath:
        """Map a user path like ``a/b`` to the folder under the root."""
        stripped = path.strip(DELIMITER)
        if stripped in ("", "."):
            return self.root
        segments = stripped.split(DELIMITER)
        for seg in segments:
            if seg in ("", ".", ".."):
                raise InvalidName("bad path %r" % path)
        return MailboxPath(self.root.segments + tuple(segments))

    def _existing_dir(self, path: str) -> MailboxPath:
        folder = self.resolve(path)
        if folder not in self.index:
            raise NoSuchFolder(str(folder))
        return folder

    # -- index ------------------------------------------------------------

    def scan_folder(self, folder: MailboxPath) -> List[FileEntry]:
        return group_chains(self.session.list_messages(folder))

    def build_index(self) -> FsIndex:
        index = FsIndex()
        if not self.session.folder_exists(self.root):
            return index
        pending = [self.root]
        while pending:
            folder = pending.pop()
            index.entries[folder] = self.scan_folder(folder)
            pending.extend(self.session.list_folders(folder))
        return index

    def rescan(self, folder: MailboxPath) -> None:
        if folder in self.index:
            self.index.entries[folder] = self.scan_folder(folder)

    def list_dir(self, path: str = "") -> Tuple[List[FileEntry], List[str]]:
        folder = self.resolve(path)
        files = list(self.index.files(folder))
        return files, [c.leaf for c in self.index.children(folder)]

    # -- directories ------------------------------------------------------

    def mkdir(self, path: str) -> List[MailboxPath]:
        """Create ``path`` and any missing parents; returns what was created."""
        target = self.resolve(path)
        if target == self.root:
            raise InvalidName("mkdir needs a non-empty path")
        if self.root not in self.index:
            raise NoSuchFolder("%s (run init first)" % self.root)
        created = []
        for depth in range(2, len(target.segments) + 1):
            d = MailboxPath(target.segments[:depth])
            if d not in self.index:
                try:
                    self.session.create_folder(d)
                    self.index.entries[d] = []
                    created.append(d)
                except AlreadyExists:
                    self.index.entries[d] = self.scan_folder(d)
            self.session.select_folder(d)
        return created

    def rmdir(self, path: str) -> List[MailboxPath]:
        """Remove ``path`` with everything below it, children first.

        Returns the folders deleted, in deletion order.
        """
        deleted: List[MailboxPath] = []

        def remove(folder):
            for sub in self.session.list_folders(folder):
                remove(sub)
            self.session.delete_folder(folder)
            deleted.append(folder)
            self.index.entries.pop(folder, None)

        remove(self.resolve(path))
        return deleted

    # -- files ------------------------------------------------------------

    def put(self, data: bytes, dest_dir: str, filename: str,
            overwrite: bool = False) -> FileEntry:
        folder = self._existing_dir(dest_dir)
        check_filename(filename)
        existing = self.index.lookup(folder, filename)
        if existing is not None:
            if not overwrite:
                raise FileExists("%s/%s" % (folder, filename))
            self.delete(dest_dir, filename)

        encoded = encode8(data)
        messages = pack(filename, slice_encoded(encoded, self.profile.size_limit_s),
                        self.profile.username)
        first_id = messages[0].first_id
        total = len(messages)
        before = {i.handle for i in self.session.list_messages(INBOX_PATH)}

        for sent, msg in enumerate(messages):
            try:
                self.session.send_message(msg)
            except TransportError as exc:
                if sent == 0:
                    raise
                self._discard(first_id, filename, before, folder)
                raise PartialUpload("upload of %s stopped after %d of %d messages"
                                    % (filename, sent, total), sent, total) from exc

        try:
            arrived = self._await_delivery(first_id, filename, before, total)
            if len(arrived) < total:
                self._discard(first_id, filename, before, folder)
                raise PartialUpload("only %d of %d messages of %s were delivered"
                                    % (len(arrived), total, filename),
                                    len(arrived), total)
            for handle in arrived:
                self.session.move_message(handle, folder)
        except TransportError as exc:
            self._discard(first_id, filename, before, folder)
            raise PartialUpload("relocation of %s failed: %s" % (filename, exc),
                                0, total) from exc

        entry = FileEntry(filename, first_id, total, len(encoded))
        self.index.add(folder, entry)
        log.info("put %s/%s as %d message(s)", folder, filename, total)
        return entry

    def _inbox_arrivals(self, first_id, filename, before):
        return [i.handle for i in self.session.list_messages(INBOX_PATH)
                if i.is_emfs and i.first_id == first_id
                and i.filename == filename and i.handle not in before]

    def _await_delivery(self, first_id, filename, before, total):
        deadline = time.monotonic() + self.delivery_timeout
        while True:
            arrived = self._inbox_arrivals(first_id, filename, before)
            if len(arrived) >= total or time.monotonic() >= deadline:
                return arrived[:total]
            time.sleep(self.poll_interval)

    def _discard(self, first_id, filename, before, folder):
        # Best effort: a failing transport may refuse the cleanup too.
        try:
            for handle in self._inbox_arrivals(first_id, filename, before):
                self.session.delete_message(handle)
            known = {e.first_id for e in self.index.files(folder)}
            if first_id not in known:
                for info in self.session.list_messages(folder):
                    if info.first_id == first_id:
                        self.session.delete_message(info.handle)
        except EmfsError as exc:
            log.warning("cleanup after failed upload incomplete: %s", exc)
        try:
            self.rescan(folder)
        except EmfsError:
            pass

    def _entry(self, dir_path: str, filename: str) -> Tuple[MailboxPath, FileEntry]:
        folder = self._existing_dir(dir_path)
        entry = self.index.lookup(folder, filename)
        if entry is None:
            raise NoSuchFile("%s/%s" % (folder, filename))
        return folder, entry

    def walk_chain(self, folder: MailboxPath, first_id: str,
                   filename: str) -> Iterator[Tuple[MessageHandle, EmfsMessage]]:
        """Yield chain links in order, starting from the first id.

        The next link is resolved only after the caller resumes the
        generator, so a link may be deleted as soon as it is yielded.
        """
        candidates = [i.handle for i in self.session.list_messages(folder)
                      if i.first_id == first_id and i.filename == filename]
        if not candidates:
            raise NoSuchFile("%s/%s" % (folder, filename))
        fetched: Dict[MessageHandle, EmfsMessage] = {}
        remaining = list(candidates)
        expected, index = first_id, 0
        while expected != SENTINEL:
            found = None
            for handle in remaining:
                if handle not in fetched:
                    fetched[handle] = parse_message(self.session.fetch_message(handle))
                if hash_id(filename, index, fetched[handle].body) == expected:
                    found = handle
                    break
            if found is None:
                raise BrokenChain("%s/%s: link %d (%s) not found"
                                  % (folder, filename, index, expected[:12]),
                                  remaining)
            remaining.remove(found)
            msg = fetched[found]
            yield found, msg
            expected, index = msg.next_id, index + 1
        if remaining:
            log.warning("%d stray message(s) share chain %s", len(remaining), first_id[:12])

    def read_chain(self, dir_path: str, filename: str) -> FileChain:
        folder, entry = self._entry(dir_path, filename)
        handles, messages = [], []
        for handle, msg in self.walk_chain(folder, entry.first_id, filename):
            handles.append(handle)
            messages.append(msg)
        return FileChain(messages, handles)

    def get(self, dir_path: str, filename: str) -> bytes:
        return self.read_chain(dir_path, filename).data()

    def delete(self, dir_path: str, filename: str) -> int:
        """Delete a file's chain link by link; returns the deletion count."""
        folder, entry = self._entry(dir_path, filename)
        count = 0
        try:
            for handle, _msg in self.walk_chain(folder, entry.first_id, filename):
                self.session.delete_message(handle)
                count += 1
        except EmfsError:
            self.rescan(folder)
            raise
        self.index.remove(folder, entry)
        return count


def init(profile: ProviderProfile, mock=None, password: Optional[str] = None,
         **kwargs) -> FsInstance:
    """Log in and make sure the instance root exists."""
    return FsInstance.create(connect_and_login(profile, mock, password), **kwargs)


def connect(profile: ProviderProfile, mock=None, password: Optional[str] = None,
            **kwargs) -> FsInstance:
    """Log in to an existing instance without creating anything."""
    return FsInstance.open(connect_and_login(profile, mock, password), **kwargs)
