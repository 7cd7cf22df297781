"""Transport binding for real providers over SMTP submission and IMAP.

Ports 465 and 993 are treated as implicit TLS; on any other port STARTTLS
is demanded when the profile asks for TLS.
"""

from __future__ import annotations

import base64
import imaplib
import logging
import re
import smtplib
import ssl
from typing import Optional

from .codec import (FILENAME_HEADER, LINE_WIDTH, NEXT_HEADER, SENTINEL,
                    header_lines, is_id_hash, parse_headers,
                    serialize_message, split_wire)
from .errors import (AlreadyExists, AuthFailed, ConnectFailed, HasSubfolders,
                     MessageTooLarge, NoParent, NoSuchFolder, NoSuchMessage,
                     TlsUnavailable, TransportError)
from .transport import (DELIMITER, MailboxPath, MessageHandle, MessageInfo,
                        ProviderProfile, Session)

log = logging.getLogger(__name__)

IMPLICIT_TLS_PORTS = (465, 993)

_LIST_RE = re.compile(rb'\((?P<flags>[^)]*)\) (?P<delim>"(?:\\.|[^"])*"|NIL) (?P<name>.*)$')
_UID_RE = re.compile(rb"UID (\d+)")
_SIZE_RE = re.compile(rb"RFC822\.SIZE (\d+)")


# -- helpers (pure, unit tested) ------------------------------------------

def imap_utf7_encode(name: str) -> str:
    """Modified UTF-7 mailbox name encoding."""
    out, pending = [], []

    def flush():
        if pending:
            raw = "".join(pending).encode("utf-16-be")
            out.append("&" + base64.b64encode(raw).decode().rstrip("=").replace("/", ",") + "-")
            pending.clear()

    for ch in name:
        if 0x20 <= ord(ch) <= 0x7E:
            flush()
            out.append("&-" if ch == "&" else ch)
        else:
            pending.append(ch)
    flush()
    return "".join(out)


def imap_utf7_decode(name: str) -> str:
    def repl(m):
        chunk = m.group(1)
        if not chunk:
            return "&"
        chunk = chunk.replace(",", "/")
        chunk += "=" * (-len(chunk) % 4)
        return base64.b64decode(chunk).decode("utf-16-be")

    return re.sub(r"&([^-]*)-", repl, name)


def quote(name: str) -> str:
    return '"%s"' % name.replace("\\", "\\\\").replace('"', '\\"')


def unquote(token: bytes) -> str:
    text = token.decode("ascii", "replace").strip()
    if len(text) >= 2 and text[0] == text[-1] == '"':
        text = re.sub(r"\\(.)", r"\1", text[1:-1])
    return text


def parse_list_line(item) -> Optional[tuple]:
    """Parse one LIST response into (flags, delimiter, name)."""
    if isinstance(item, tuple):
        head, literal = item
        m = _LIST_RE.match(head.rstrip() + b" ")
        if not m:
            return None
        name = literal.decode("ascii", "replace")
    else:
        m = _LIST_RE.match(item)
        if not m:
            return None
        name = unquote(m.group("name"))
    delim = m.group("delim")
    delim = None if delim == b"NIL" else unquote(delim)
    flags = m.group("flags").decode().split()
    return flags, delim, imap_utf7_decode(name)


def payload_from_text_octets(octets: int) -> int:
    """Invert the body wrapping of :func:`emfs.codec.wrap_body`.

    Each full line is LINE_WIDTH payload characters plus CRLF; a final
    partial line also ends in CRLF.
    """
    full, rem = divmod(octets, LINE_WIDTH + 2)
    return full * LINE_WIDTH + max(rem - 2, 0)


# -- session --------------------------------------------------------------

class NetSession(Session):
    def __init__(self, profile: ProviderProfile, imap, smtp, delimiter: str):
        super().__init__(profile)
        self.imap = imap
        self.smtp = smtp
        self.delimiter = delimiter or DELIMITER
        caps = getattr(imap, "capabilities", ())
        self.can_move = "MOVE" in caps
        self.uidplus = "UIDPLUS" in caps

    @classmethod
    def login(cls, profile: ProviderProfile, password: str) -> "NetSession":
        imap = _open_imap(profile)
        try:
            imap.login(profile.username, password)
        except imaplib.IMAP4.error as exc:
            raise AuthFailed("IMAP LOGIN rejected: %s" % exc) from exc
        smtp = _open_smtp(profile, password)
        delimiter = DELIMITER
        typ, data = imap.list('""', '""')
        if typ == "OK" and data and data[0]:
            parsed = parse_list_line(data[0])
            if parsed and parsed[1]:
                delimiter = parsed[1]
        return cls(profile, imap, smtp, delimiter)

    def _name(self, path: MailboxPath) -> str:
        return quote(imap_utf7_encode(path.name(self.delimiter)))

    def _call(self, fn, *args):
        try:
            return fn(*args)
        except (imaplib.IMAP4.abort, OSError) as exc:
            raise TransportError(str(exc)) from exc
        except imaplib.IMAP4.error as exc:
            return "NO", [str(exc).encode()]

    def folder_exists(self, path):
        typ, data = self._call(self.imap.list, '""', self._name(path))
        return typ == "OK" and any(d for d in data)

    def create_folder(self, path):
        typ, data = self._call(self.imap.create, self._name(path))
        if typ != "OK":
            if self.folder_exists(path):
                raise AlreadyExists(str(path))
            if path.parent is not None and not self.folder_exists(path.parent):
                raise NoParent(str(path))
            raise TransportError("CREATE %s failed: %r" % (path, data))

    def _select(self, path, readonly=False) -> int:
        typ, data = self._call(self.imap.select, self._name(path), readonly)
        if typ != "OK":
            raise NoSuchFolder(str(path))
        self.selected = path
        return int(data[0] or 0)

    def select_folder(self, path):
        self._select(path)

    def list_folders(self, path):
        if not self.folder_exists(path):
            raise NoSuchFolder(str(path))
        pattern = imap_utf7_encode(path.name(self.delimiter) + self.delimiter) + "%"
        typ, data = self._call(self.imap.list, '""', quote(pattern))
        children = []
        for item in data if typ == "OK" else ():
            parsed = item and parse_list_line(item)
            if parsed:
                children.append(MailboxPath(tuple(parsed[2].split(self.delimiter))))
        return sorted(children)

    def delete_folder(self, path):
        if self.list_folders(path):
            raise HasSubfolders(str(path))
        if self.selected == path:
            self._call(self.imap.close)
            self.selected = None
        typ, data = self._call(self.imap.delete, self._name(path))
        if typ != "OK":
            raise NoSuchFolder("DELETE %s failed: %r" % (path, data))

    def send_message(self, message):
        wire = serialize_message(message).encode("utf-8")
        try:
            self.smtp.sendmail(message.sender, [message.recipient], wire)
        except (smtplib.SMTPDataError, smtplib.SMTPSenderRefused) as exc:
            if exc.smtp_code == 552:
                raise MessageTooLarge(str(exc)) from exc
            raise TransportError(str(exc)) from exc
        except (smtplib.SMTPException, OSError) as exc:
            raise TransportError(str(exc)) from exc

    def list_messages(self, path):
        if self._select(path, readonly=True) == 0:
            return []
        typ, data = self._call(self.imap.uid, "FETCH", "1:*",
                               "(UID RFC822.SIZE BODY.PEEK[HEADER])")
        if typ != "OK":
            raise TransportError("FETCH headers in %s failed" % path)
        infos = []
        for item in data:
            if not isinstance(item, tuple):
                continue
            meta, header = item
            uid = int(_UID_RE.search(meta).group(1))
            size = int(_SIZE_RE.search(meta).group(1))
            text = header.decode("utf-8", "replace")
            headers = parse_headers(header_lines(text))
            handle = MessageHandle(path, uid)
            filename = headers.get(FILENAME_HEADER.lower())
            next_id = headers.get(NEXT_HEADER.lower(), "").strip()
            first_id = headers.get("subject", "").partition(" ")[0]
            if (filename is None or not is_id_hash(first_id)
                    or not (next_id == SENTINEL or is_id_hash(next_id))):
                infos.append(MessageInfo(handle, None))
                continue
            body_octets = size - len(header)
            infos.append(MessageInfo(handle, filename, first_id, next_id,
                                     payload_from_text_octets(body_octets)))
        return sorted(infos, key=lambda i: i.handle.uid)

    def fetch_message(self, handle):
        self._select(handle.mailbox, readonly=True)
        typ, data = self._call(self.imap.uid, "FETCH", str(handle.uid), "(BODY.PEEK[])")
        parts = [d for d in data or () if isinstance(d, tuple)]
        if typ != "OK" or not parts:
            raise NoSuchMessage("%s uid %d" % (handle.mailbox, handle.uid))
        return parts[0][1].decode("utf-8", "replace")

    def move_message(self, handle, dest):
        raw = self.fetch_message(handle)
        headers = parse_headers(split_wire(raw)[0])
        self._select(handle.mailbox)
        uid, target = str(handle.uid), self._name(dest)
        if self.can_move:
            typ, data = self._call(self.imap.uid, "MOVE", uid, target)
        else:
            typ, data = self._call(self.imap.uid, "COPY", uid, target)
            if typ == "OK":
                self._expunge_uid(uid)
        if typ != "OK":
            raise NoSuchFolder("MOVE to %s failed: %r" % (dest, data))
        _, codes = self.imap.response("COPYUID")
        for code in codes or ():
            if code:
                fields = code.split()
                if len(fields) == 3 and fields[1] == uid.encode():
                    return MessageHandle(dest, int(fields[2]))
        return self._search_moved(dest, headers)

    def _search_moved(self, dest, headers):
        self._select(dest, readonly=True)
        typ, data = self._call(
            self.imap.uid, "SEARCH", "HEADER", NEXT_HEADER,
            quote(headers.get(NEXT_HEADER.lower(), "").strip()),
            "HEADER", "Subject", quote(headers.get("subject", "").partition(" ")[0]))
        uids = [int(u) for u in (data[0] or b"").split()] if typ == "OK" else []
        if not uids:
            raise NoSuchMessage("moved message not found in %s" % dest)
        return MessageHandle(dest, max(uids))

    def _expunge_uid(self, uid):
        self._call(self.imap.uid, "STORE", uid, "+FLAGS.SILENT", r"(\Deleted)")
        if self.uidplus:
            self._call(self.imap.uid, "EXPUNGE", uid)
        else:
            self._call(self.imap.expunge)

    def delete_message(self, handle):
        self._select(handle.mailbox)
        typ, data = self._call(self.imap.uid, "STORE", str(handle.uid),
                               "+FLAGS.SILENT", r"(\Deleted)")
        if typ != "OK":
            raise NoSuchMessage("%s uid %d" % (handle.mailbox, handle.uid))
        if self.uidplus:
            self._call(self.imap.uid, "EXPUNGE", str(handle.uid))
        else:
            self._call(self.imap.expunge)

    def logout(self):
        for closer in (self.imap.logout, self.smtp.quit):
            try:
                closer()
            except Exception:  # connection may already be gone
                pass


def _open_imap(profile: ProviderProfile):
    host, port = profile.imap_endpoint
    ctx = ssl.create_default_context()
    try:
        if port in IMPLICIT_TLS_PORTS and profile.use_tls:
            return imaplib.IMAP4_SSL(host, port, ssl_context=ctx)
        imap = imaplib.IMAP4(host, port)
    except OSError as exc:
        raise ConnectFailed("IMAP %s: %s" % (profile.imap_endpoint, exc)) from exc
    if profile.use_tls:
        try:
            imap.starttls(ssl_context=ctx)
        except imaplib.IMAP4.error as exc:
            raise TlsUnavailable("IMAP STARTTLS refused: %s" % exc) from exc
    return imap


def _open_smtp(profile: ProviderProfile, password: str):
    host, port = profile.smtp_endpoint
    ctx = ssl.create_default_context()
    try:
        if port in IMPLICIT_TLS_PORTS and profile.use_tls:
            smtp = smtplib.SMTP_SSL(host, port, context=ctx)
        else:
            smtp = smtplib.SMTP(host, port)
            if profile.use_tls:
                try:
                    smtp.starttls(context=ctx)
                except smtplib.SMTPNotSupportedError as exc:
                    raise TlsUnavailable("SMTP STARTTLS refused") from exc
        smtp.login(profile.username, password)
    except smtplib.SMTPAuthenticationError as exc:
        raise AuthFailed("SMTP AUTH rejected: %s" % exc) from exc
    except (smtplib.SMTPException, OSError) as exc:
        raise ConnectFailed("SMTP %s: %s" % (profile.smtp_endpoint, exc)) from exc
    return smtp
