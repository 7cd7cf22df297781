import pytest

from emfs import core
from emfs.mock import MockAccount
from emfs.transport import Endpoint, ProviderProfile

ADDRESS = "me@example.com"
PASSWORD = "hunter2"


def make_profile(size_limit_s=64, use_tls=True, username=ADDRESS):
    return ProviderProfile(
        smtp_endpoint=Endpoint("mock", 587),
        imap_endpoint=Endpoint("mock", 143),
        username=username,
        credential_ref="EMFS_TEST_PASSWORD",
        size_limit_s=size_limit_s,
        use_tls=use_tls,
    )


def make_fs(size_limit_s=64, account=None):
    account = account or MockAccount(ADDRESS, PASSWORD, size_limit_s)
    fs = core.init(make_profile(size_limit_s), mock=account, password=PASSWORD)
    return fs, account


@pytest.fixture
def account():
    return MockAccount(ADDRESS, PASSWORD, 64)


@pytest.fixture
def fs(account):
    fs, _ = make_fs(64, account)
    return fs


# acceptance criteria report: (number, description, passed)
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, text, passed in sorted(ACCEPTANCE):
        terminalreporter.write_line("%s  criterion %d: %s"
                                    % ("PASS" if passed else "FAIL", number, text))
