import os
import random

import pytest

from conftest import PASSWORD, make_fs, make_profile
from oracles import (brute_index, expected_chain_length, folder_counts,
                     post_order)
from emfs import core
from emfs.codec import SENTINEL, encode8, hash_id
from emfs.errors import (AuthFailed, BrokenChain, FileExists, InvalidName,
                         MessageTooLarge, NoSuchFile, NoSuchFolder,
                         PartialUpload)
from emfs.mock import FaultScript
from emfs.transport import MiB, MailboxPath


def P(name):
    return MailboxPath.parse(name)


def calls(account, verb):
    return [entry for entry in account.log if entry[0] == verb]


# -- init -------------------------------------------------------------------

def test_init_fresh(account):
    fs, _ = make_fs(64, account)
    assert fs.root_created
    assert "EMFS" in account.folders
    assert fs.index.entries == {P("EMFS"): []}


def test_init_twice(account):
    make_fs(64, account)
    fs, _ = make_fs(64, account)
    assert not fs.root_created
    assert sorted(account.folders) == ["EMFS", "INBOX"]


def test_init_auth_failure(account):
    with pytest.raises(AuthFailed):
        core.init(make_profile(), mock=account, password="bad")


def test_init_indexes_existing_chains(account):
    fs, _ = make_fs(64, account)
    fs.mkdir("docs")
    fs.put(os.urandom(150), "docs", "a.bin")
    fs.put(b"hi", "", "b.txt")
    again, _ = make_fs(64, account)
    assert again.index == fs.index
    assert again.index.entries == brute_index(account)


# -- mkdir / rmdir ----------------------------------------------------------

def test_mkdir_creates_all(fs, account):
    assert fs.mkdir("a/b/c") == [P("EMFS/a"), P("EMFS/a/b"), P("EMFS/a/b/c")]
    assert [e[1] for e in calls(account, "create")][-3:] == \
        ["EMFS/a", "EMFS/a/b", "EMFS/a/b/c"]


def test_mkdir_existing_prefix(fs):
    fs.mkdir("a")
    assert fs.mkdir("a/b/c") == [P("EMFS/a/b"), P("EMFS/a/b/c")]


def test_mkdir_twice(fs, account):
    fs.mkdir("a/b")
    creates = len(calls(account, "create"))
    assert fs.mkdir("a/b") == []
    assert len(calls(account, "create")) == creates


def test_mkdir_selects_each_level(fs, account):
    fs.mkdir("x/y")
    assert [e for e in account.log if e[0] == "select"][-2:] == \
        [("select", "EMFS/x"), ("select", "EMFS/x/y")]


@pytest.mark.parametrize("bad", ["a//b", "", "/", "a/../b"])
def test_mkdir_invalid(fs, bad):
    with pytest.raises(InvalidName):
        fs.mkdir(bad)


def test_mkdir_before_init(account):
    fs = core.connect(make_profile(), mock=account, password=PASSWORD)
    with pytest.raises(NoSuchFolder):
        fs.mkdir("a")


def test_mkdir_tolerates_foreign_folder(fs, account):
    account.create("EMFS/other")
    assert fs.mkdir("other/sub") == [P("EMFS/other/sub")]


def test_rmdir_leaf(fs, account):
    fs.mkdir("a/b")
    assert fs.rmdir("a/b") == [P("EMFS/a/b")]
    assert len(calls(account, "delete")) == 1


def test_rmdir_tree_post_order(fs, account):
    tree = {"l1": {}, "l2": {}}
    for path in ("d/a/l1", "d/a/l2", "d/l3"):
        fs.mkdir(path)
    deleted = fs.rmdir("d")
    assert len(deleted) == 5
    expected = post_order({"a": tree, "l3": {}}, "EMFS/d")
    assert [str(p) for p in deleted] == expected
    assert [e[1] for e in calls(account, "delete")] == expected
    assert not any(n.startswith("EMFS/d") for n in account.folders)
    assert fs.index.entries == {P("EMFS"): []}


def test_rmdir_removes_messages(fs, account):
    fs.mkdir("d")
    fs.put(os.urandom(200), "d", "x")
    fs.rmdir("d")
    assert folder_counts(account) == {P("EMFS"): 0}


def test_rmdir_root(fs, account):
    fs.mkdir("a/b")
    fs.put(b"data", "", "f")
    fs.rmdir("")
    assert sorted(account.folders) == ["INBOX"]
    assert fs.index.entries == {}
    with pytest.raises(NoSuchFolder):
        fs.mkdir("a")
    fs2, _ = make_fs(64, account)
    assert fs2.root_created


def test_rmdir_missing(fs):
    with pytest.raises(NoSuchFolder):
        fs.rmdir("ghost")


# -- put / get --------------------------------------------------------------

def test_put_get_three_messages(fs, account):
    data = os.urandom(120)  # 160 encoded chars -> 3 slices of <= 64
    entry = fs.put(data, "", "hello.mp4")
    assert entry.chain_length == 3
    assert entry.encoded_size == 160
    assert account.message_count("EMFS") == 3
    assert account.message_count("INBOX") == 0
    assert fs.get("", "hello.mp4") == data
    chain = fs.read_chain("", "hello.mp4")
    assert chain.is_linked()
    assert chain.messages[-1].next_id == SENTINEL


def test_put_empty_file(fs, account):
    entry = fs.put(b"", "", "empty")
    assert entry.chain_length == 1 and entry.encoded_size == 0
    (stored,) = account.folders["EMFS"]
    assert stored.wire.endswith("EMFS-Next: -1\r\n\r\n")
    assert fs.get("", "empty") == b""


def test_put_gmail_preset_fifty_megabytes():
    limit = 25 * MiB
    fs, account = make_fs(limit)
    data = bytes(50 * 10 ** 6)
    entry = fs.put(data, "", "big.bin")
    # 50e6 bytes -> 66,666,668 base-64 chars; / 26,214,400 = 2.54 -> 3
    assert entry.encoded_size == 66666668
    assert entry.chain_length == 3 == expected_chain_length(data, limit)
    assert fs.get("", "big.bin") == data


@pytest.mark.parametrize("limit", [4, 64])
def test_put_get_boundary_sizes(limit):
    fs, _ = make_fs(limit)
    sizes = [0, 1, limit - 1, limit, limit + 1, 2 * limit, 2 * limit + 1]
    # raw sizes whose encoding lands exactly on multiples of S
    sizes += [3 * limit // 4, 3 * limit // 2]
    for i, size in enumerate(sizes):
        data = os.urandom(size)
        entry = fs.put(data, "", "f%d" % i)
        assert entry.chain_length == expected_chain_length(data, limit)
        assert fs.get("", "f%d" % i) == data


def test_put_get_random_files():
    limit = 16
    fs, account = make_fs(limit)
    rng = random.Random(1234)
    files = {}
    for i in range(200):
        data = rng.randbytes(rng.randint(0, 3 * limit))
        files["r%03d" % i] = data
        fs.put(data, "", "r%03d" % i)
    for name, data in files.items():
        assert fs.get("", name) == data
    assert fs.index.entries == brute_index(account)


def test_put_into_subdir(fs, account):
    fs.mkdir("example")
    fs.put(b"abc", "example", "x")
    assert account.message_count("EMFS/example") == 1
    assert fs.get("example", "x") == b"abc"
    assert fs.get("/example/", "x") == b"abc"


def test_put_missing_dir(fs):
    with pytest.raises(NoSuchFolder):
        fs.put(b"x", "nope", "f")


@pytest.mark.parametrize("bad", ["", "a/b", "x\ny", ".", ".."])
def test_put_bad_filename(fs, bad):
    with pytest.raises(InvalidName):
        fs.put(b"x", "", bad)


def test_put_odd_filenames(fs):
    for name in ("my file.txt", "ünï\x85code", "tab\tname"):
        fs.put(name.encode(), "", name)
        assert fs.get("", name) == name.encode()


def test_file_exists_and_overwrite(fs, account):
    fs.put(b"one", "", "f")
    with pytest.raises(FileExists):
        fs.put(b"two", "", "f")
    fs.put(os.urandom(100), "", "f", overwrite=True)
    data = b"three"
    fs.put(data, "", "f", overwrite=True)
    assert fs.get("", "f") == data
    assert account.message_count("EMFS") == 1
    assert fs.index.entries == brute_index(account)


def test_put_same_content_two_dirs(fs):
    fs.mkdir("a")
    fs.mkdir("b")
    fs.put(b"same", "a", "f")
    fs.put(b"same", "b", "f")
    assert fs.get("a", "f") == fs.get("b", "f") == b"same"


def test_message_too_large_on_first_send(account):
    fs, _ = make_fs(64, account)
    fs.profile = make_profile(128)  # client believes in a larger cap
    with pytest.raises(MessageTooLarge):
        fs.put(os.urandom(90), "", "f")
    assert account.message_count("INBOX") == 0
    assert fs.index.files(P("EMFS")) == []


def test_get_missing(fs):
    with pytest.raises(NoSuchFile):
        fs.get("", "missing.txt")


def test_get_broken_chain(fs, account):
    fs.put(os.urandom(120), "", "f")
    middle = account.folders["EMFS"][1].uid
    account.faults = FaultScript([("delete-message", middle)])
    with pytest.raises(BrokenChain) as info:
        fs.get("", "f")
    assert len(info.value.remaining) == 1


def test_get_corrupted_link(fs, account):
    fs.put(os.urandom(120), "", "f")
    account.faults = FaultScript([("corrupt-message", account.folders["EMFS"][2].uid)])
    with pytest.raises(BrokenChain):
        fs.get("", "f")


def test_get_ignores_message_order(fs, account):
    data = os.urandom(200)
    fs.put(data, "", "f")
    account.folders["EMFS"].reverse()
    assert fs.get("", "f") == data


# -- delete -----------------------------------------------------------------

def test_delete_three(fs, account):
    fs.put(os.urandom(120), "", "f")
    before = account.message_count("EMFS")
    assert fs.delete("", "f") == 3
    assert account.message_count("EMFS") == before - 3
    assert len(calls(account, "store-deleted")) == 3
    with pytest.raises(NoSuchFile):
        fs.get("", "f")


def test_delete_single(fs, account):
    fs.put(b"x", "", "f")
    assert fs.delete("", "f") == 1
    assert len(calls(account, "store-deleted")) == 1


def test_delete_follows_links_in_order(fs, account):
    fs.put(os.urandom(150), "", "f")
    chain = fs.read_chain("", "f")
    fs.delete("", "f")
    deleted = [e[2] for e in calls(account, "store-deleted")]
    assert deleted == [h.uid for h in chain.handles]


def test_delete_leaves_no_trace(fs, account):
    fs.put(os.urandom(100), "", "f")
    fs.put(b"other", "", "g")
    fs.delete("", "f")
    assert all("EMFS-Filename: f\r\n" not in m.wire for m in account.folders["EMFS"])


def test_delete_broken_chain_reports_tail(fs, account):
    fs.put(os.urandom(200), "", "f")  # 268 chars -> 5 links
    uids = [m.uid for m in account.folders["EMFS"]]
    account.faults = FaultScript([("delete-message", uids[1])])
    with pytest.raises(BrokenChain) as info:
        fs.delete("", "f")
    assert [h.uid for h in info.value.remaining] == uids[2:]
    assert fs.index.entries == brute_index(account)
    (entry,) = fs.index.files(P("EMFS"))
    assert entry.chain_length == 3


# -- partial uploads --------------------------------------------------------

def test_partial_upload_dropped_send(fs, account):
    account.faults = FaultScript([("drop-nth-send", 2)])
    with pytest.raises(PartialUpload) as info:
        fs.put(os.urandom(120), "", "f")
    assert info.value.total == 3
    assert account.message_count("INBOX") == 0
    assert account.message_count("EMFS") == 0
    assert fs.index.files(P("EMFS")) == []


def test_partial_upload_transport_failure(fs, account):
    # list inbox, then two sends succeed, the third fails
    account.faults = FaultScript([("fail-after", 3)])
    with pytest.raises(PartialUpload) as info:
        fs.put(os.urandom(120), "", "f")
    assert info.value.sent == 2
    account.faults = FaultScript()
    # cleanup could not run against the failing transport: the two
    # delivered links are stranded in INBOX, outside the instance
    assert account.message_count("INBOX") == 2
    assert fs.index.entries == brute_index(account)
    assert fs.build_index() == fs.index


def test_partial_upload_cleanup_when_transport_recovers(fs, account):
    account.faults = FaultScript([("drop-nth-send", 3)])
    with pytest.raises(PartialUpload):
        fs.put(os.urandom(200), "", "f")
    assert account.message_count("INBOX") == 0
    fs.put(b"fine", "", "f")
    assert fs.get("", "f") == b"fine"


# -- index ------------------------------------------------------------------

def build_figure(fs):
    fs.put(b"example text", "", "example.txt")
    fs.put(b"\x89PNG....", "", "example.png")
    fs.mkdir("example")
    fs.put(os.urandom(120), "example", "hello.mp4")


def test_index_figure(fs, account):
    build_figure(fs)
    index = fs.build_index()
    assert index.message_count(P("EMFS")) == 2
    assert index.message_count(P("EMFS/example")) == 3
    assert [len(index.files(P("EMFS"))), len(index.files(P("EMFS/example")))] == [2, 1]
    assert index == fs.index
    assert index.entries == brute_index(account)


def test_index_empty(fs):
    index = fs.build_index()
    assert index.entries == {P("EMFS"): []}
    assert index.message_count(P("EMFS")) == 0


def test_index_skips_foreign_messages(fs, account):
    fs.put(b"x", "", "f")
    account.submit("From: a\r\nSubject: hi\r\n\r\nhello\r\n")
    uid = account.folders["INBOX"][-1].uid
    account.move("INBOX", uid, "EMFS")
    names = [e.filename for e in fs.build_index().files(P("EMFS"))]
    assert names == ["f"]


def test_list_dir_figure(fs):
    build_figure(fs)
    files, dirs = fs.list_dir("")
    assert sorted(f.filename for f in files) == ["example.png", "example.txt"]
    assert dirs == ["example"]
    files, dirs = fs.list_dir("example")
    assert [(f.filename, f.chain_length) for f in files] == [("hello.mp4", 3)]


def test_list_dir_empty_and_missing(fs):
    fs.mkdir("e")
    assert fs.list_dir("e") == ([], [])
    with pytest.raises(NoSuchFolder):
        fs.list_dir("nothing")


def test_list_dir_no_traffic(fs, account):
    build_figure(fs)
    before = len(account.log)
    fs.list_dir("")
    fs.list_dir("example")
    assert len(account.log) == before


def test_incremental_matches_rebuild(fs):
    fs.mkdir("a")
    fs.put(b"1", "a", "one")
    files, _ = fs.list_dir("a")
    assert files == fs.build_index().files(P("EMFS/a"))


def test_opacity(fs, account):
    build_figure(fs)
    fs.delete("example", "hello.mp4")
    assert set(account.folders) == {"INBOX", "EMFS", "EMFS/example"}
    assert account.message_count("INBOX") == 0


def test_first_id_is_slice_zero_hash(fs, account):
    data = os.urandom(100)
    entry = fs.put(data, "", "f")
    assert entry.first_id == hash_id("f", 0, encode8(data)[:64])
