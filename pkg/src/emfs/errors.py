"""Exception hierarchy shared by every EMFS layer.

Each class carries the CLI exit code for its error class so the command-line
frontend can map failures without a lookup table.
"""


class EmfsError(Exception):
    exit_code = 1


# --- codec ---------------------------------------------------------------

class MalformedEncoding(EmfsError):
    exit_code = 7


class NotAnEmfsMessage(EmfsError):
    exit_code = 7


class MalformedHeader(EmfsError):
    exit_code = 7


# --- configuration -------------------------------------------------------

class BadConfig(EmfsError):
    exit_code = 9


class MissingCredential(EmfsError):
    exit_code = 9


# --- folder / message verbs ----------------------------------------------

class InvalidName(EmfsError):
    exit_code = 6


class FolderError(EmfsError):
    exit_code = 6


class AlreadyExists(FolderError):
    pass


class NoParent(FolderError):
    pass


class HasSubfolders(FolderError):
    pass


class NoSuchFolder(EmfsError):
    exit_code = 5


class NoSuchMessage(EmfsError):
    exit_code = 5


# --- filesystem ----------------------------------------------------------

class NoSuchFile(EmfsError):
    exit_code = 3


class FileExists(EmfsError):
    exit_code = 4


class BrokenChain(EmfsError):
    """A chain link could not be resolved.

    ``remaining`` holds handles of chain members left behind in the folder,
    so callers can clean them up by hand.
    """

    exit_code = 7

    def __init__(self, message, remaining=()):
        super().__init__(message)
        self.remaining = list(remaining)


class PartialUpload(EmfsError):
    exit_code = 8

    def __init__(self, message, sent=0, total=0):
        super().__init__(message)
        self.sent = sent
        self.total = total


# --- transport -----------------------------------------------------------

class TransportError(EmfsError):
    exit_code = 10


class MessageTooLarge(TransportError):
    exit_code = 8


class AuthFailed(TransportError):
    pass


class TlsUnavailable(TransportError):
    pass


class ConnectFailed(TransportError):
    pass


class FaultInjected(TransportError):
    pass


class RootCreateFailed(TransportError):
    pass
