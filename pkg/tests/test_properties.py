from hypothesis import settings
import hypothesis.strategies as st
from hypothesis.stateful import (RuleBasedStateMachine, invariant, precondition,
                                 rule)

from conftest import make_fs
from oracles import brute_index, expected_chain_length, folder_counts
from emfs.errors import FileExists

NAMES = st.sampled_from(["a", "b", "c d"])
FILES = st.sampled_from(["x.bin", "y", "z z"])


class EmfsMachine(RuleBasedStateMachine):
    """Random mkdir/put/delete/rmdir sequences against a model of the tree."""

    def __init__(self):
        super().__init__()
        self.limit = 12
        self.fs, self.account = make_fs(self.limit)
        self.model = {"": {}}

    def dirs(self):
        return sorted(self.model)

    @rule(parts=st.lists(NAMES, min_size=1, max_size=3))
    def mkdir(self, parts):
        path = "/".join(parts)
        self.fs.mkdir(path)
        for depth in range(1, len(parts) + 1):
            self.model.setdefault("/".join(parts[:depth]), {})

    @rule(data=st.data(), name=FILES, payload=st.binary(max_size=40), overwrite=st.booleans())
    def put(self, data, name, payload, overwrite):
        d = data.draw(st.sampled_from(self.dirs()))
        exists = name in self.model[d]
        try:
            entry = self.fs.put(payload, d, name, overwrite=overwrite)
        except FileExists:
            assert exists and not overwrite
            return
        assert not exists or overwrite
        assert entry.chain_length == expected_chain_length(payload, self.limit)
        self.model[d][name] = payload

    @precondition(lambda self: any(self.model.values()))
    @rule(data=st.data())
    def delete(self, data):
        d = data.draw(st.sampled_from([k for k, v in sorted(self.model.items()) if v]))
        name = data.draw(st.sampled_from(sorted(self.model[d])))
        self.fs.delete(d, name)
        del self.model[d][name]

    @precondition(lambda self: len(self.model) > 1)
    @rule(data=st.data())
    def rmdir(self, data):
        d = data.draw(st.sampled_from([k for k in self.dirs() if k]))
        self.fs.rmdir(d)
        for k in [k for k in self.model if k == d or k.startswith(d + "/")]:
            del self.model[k]

    @invariant()
    def index_matches_store(self):
        assert self.fs.index.entries == brute_index(self.account)
        assert self.fs.build_index() == self.fs.index

    @invariant()
    def folder_arithmetic(self):
        for folder, count in folder_counts(self.account).items():
            assert count == self.fs.index.message_count(folder)

    @invariant()
    def contents_roundtrip(self):
        for d, files in self.model.items():
            for name, payload in files.items():
                assert self.fs.get(d, name) == payload

    @invariant()
    def inbox_drained(self):
        assert self.account.message_count("INBOX") == 0


TestEmfsMachine = EmfsMachine.TestCase
TestEmfsMachine.settings = settings(max_examples=40, stateful_step_count=25, deadline=None)
