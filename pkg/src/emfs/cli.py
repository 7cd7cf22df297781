"""``emfs`` command-line frontend.

Each subcommand maps onto one :class:`emfs.core.FsInstance` operation.
With ``--mock SNAPSHOT`` the command runs against an in-process mock
account loaded from (and saved back to) a snapshot file.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional, TextIO

from . import core
from .config import DEFAULT_CREDENTIAL_REF, CliConfig, load_config
from .errors import EmfsError
from .mock import MockAccount
from .transport import Endpoint, ProviderProfile

USAGE_ERROR = 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="emfs", description="Store files in an email account.")
    parser.add_argument("--config", help="flat key = value profile file")
    parser.add_argument("--mock", metavar="SNAPSHOT",
                        help="run against an in-process mock account stored in SNAPSHOT")
    parser.add_argument("--verbose", "-v", action="count", default=0)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    sub.add_parser("init", help="create the EMFS root folder")
    p = sub.add_parser("mkdir", help="create a directory and missing parents")
    p.add_argument("path")
    p = sub.add_parser("rmdir", help="remove a directory tree")
    p.add_argument("path")
    p = sub.add_parser("put", help="upload a local file into a directory")
    p.add_argument("local")
    p.add_argument("dir")
    p.add_argument("--overwrite", action="store_true")
    p = sub.add_parser("get", help="download <dir>/<name> to a local path")
    p.add_argument("remote")
    p.add_argument("local")
    p = sub.add_parser("rm", help="delete <dir>/<name>")
    p.add_argument("remote")
    p = sub.add_parser("ls", help="list a directory")
    p.add_argument("path", nargs="?", default="")
    sub.add_parser("index", help="print the whole index")
    return parser


def split_remote(remote: str):
    dir_path, _, name = remote.strip("/").rpartition("/")
    return dir_path, name


def display(fs: core.FsInstance, folder) -> str:
    rel = folder.segments[len(fs.root.segments):]
    return "/".join(rel) + "/" if rel else "/"


def format_entry(entry: core.FileEntry) -> str:
    return "f\t%s\t%d\t%d" % (entry.filename, entry.chain_length, entry.encoded_size)


def _mock_profile(account: MockAccount) -> ProviderProfile:
    return ProviderProfile(
        smtp_endpoint=Endpoint("mock", 587),
        imap_endpoint=Endpoint("mock", 143),
        username=account.address,
        credential_ref=DEFAULT_CREDENTIAL_REF,
        size_limit_s=account.size_limit_s,
    )


def _dispatch(args, fs: core.FsInstance, out: TextIO) -> None:
    cmd = args.command
    if cmd == "init":
        state = "created" if fs.root_created else "found existing"
        print("%s root %s" % (state, fs.profile.root_folder), file=out)
    elif cmd == "mkdir":
        for folder in fs.mkdir(args.path):
            print("created %s" % display(fs, folder), file=out)
    elif cmd == "rmdir":
        for folder in fs.rmdir(args.path):
            print("removed %s" % display(fs, folder), file=out)
    elif cmd == "put":
        local = Path(args.local)
        data = local.read_bytes()
        entry = fs.put(data, args.dir, local.name, overwrite=args.overwrite)
        print("put %s%s: %d message(s), %d encoded octets"
              % (display(fs, fs.resolve(args.dir)), entry.filename,
                 entry.chain_length, entry.encoded_size), file=out)
    elif cmd == "get":
        dir_path, name = split_remote(args.remote)
        data = fs.get(dir_path, name)
        target = Path(args.local)
        if target.is_dir():
            target = target / name
        target.write_bytes(data)
        print("got %s (%d bytes) -> %s" % (args.remote, len(data), target), file=out)
    elif cmd == "rm":
        dir_path, name = split_remote(args.remote)
        count = fs.delete(dir_path, name)
        print("removed %s (%d message(s))" % (args.remote, count), file=out)
    elif cmd == "ls":
        files, dirs = fs.list_dir(args.path)
        for d in dirs:
            print("d\t%s/\t-\t-" % d, file=out)
        for entry in files:
            print(format_entry(entry), file=out)
    elif cmd == "index":
        for folder in sorted(fs.index.entries):
            files = fs.index.files(folder)
            print("%s\tM=%d\tK=%d" % (display(fs, folder),
                                      fs.index.message_count(folder), len(files)), file=out)
            for entry in files:
                print("  %s\t%s" % (format_entry(entry), entry.first_id), file=out)


def run(argv: List[str], out: Optional[TextIO] = None, err: Optional[TextIO] = None) -> int:
    """Run one command; returns the process exit code."""
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print("usage error: %s" % exc, file=err)
        return USAGE_ERROR
    except SystemExit as exc:  # --help
        return int(exc.code or 0)

    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    account = None
    fs = None
    try:
        config: Optional[CliConfig] = None
        password = None
        if args.mock:
            snap = Path(args.mock)
            if args.config or os.environ.get("EMFS_CONFIG"):
                config = load_config(args.config, verbosity=level)
            if snap.exists():
                account = MockAccount.load(snap)
            else:
                limit = config.profile.size_limit_s if config else MockAccount.size_limit_s
                account = MockAccount(size_limit_s=limit)
            if config is None:
                profile = _mock_profile(account)
                password = account.password
            else:
                profile = config.profile
            timeout = 0.0
        else:
            config = load_config(args.config, verbosity=level)
            profile = config.profile
            timeout = config.delivery_timeout

        opener = core.init if args.command == "init" else core.connect
        fs = opener(profile, mock=account, password=password, delivery_timeout=timeout)
        _dispatch(args, fs, out)
        return 0
    except EmfsError as exc:
        print("error: %s: %s" % (type(exc).__name__, exc), file=err)
        return exc.exit_code
    except OSError as exc:
        print("error: %s" % exc, file=err)
        return USAGE_ERROR
    finally:
        if fs is not None:
            fs.close()
        if account is not None:
            account.save(args.mock)


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
