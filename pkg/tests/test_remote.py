import pytest

from aimp.cas import ObjectStore, hash_path
from aimp.errors import ConfigError, DigestMismatch, Unauthorized
from aimp.remote import pull, push


@pytest.fixture
def local(tmp_path):
    s = ObjectStore(tmp_path / "local")
    for i in range(5):
        s.put(f"object {i}".encode())
    return s


def test_push_then_pull_round_trip(local, remote, tmp_path):
    rep = push(local, remote.url, remote.token)
    assert rep.ok and len(rep.transferred) == 5
    again = push(local, remote.url, remote.token)
    assert again.transferred == [] and len(again.skipped) == 5

    fresh = ObjectStore(tmp_path / "fresh")
    digests = list(local.iter_digests())
    got = pull(fresh, remote.url, remote.token, digests, jobs=3)
    assert got.ok and got.transferred == sorted(digests)
    for d in digests:
        assert fresh.get(d) == local.get(d)


def test_pull_expands_directory_manifests(remote, tmp_path):
    src = ObjectStore(tmp_path / "src")
    d = tmp_path / "dir"
    d.mkdir()
    (d / "a").write_bytes(b"A")
    (d / "b").write_bytes(b"B")
    ref = hash_path(d, src)
    push(src, remote.url, remote.token)
    dst = ObjectStore(tmp_path / "dst")
    rep = pull(dst, remote.url, remote.token, [ref.sha256])
    assert rep.ok and len(rep.transferred) == 3
    assert sorted(dst.iter_digests()) == sorted(src.iter_digests())


def test_wrong_token(local, remote):
    rep = push(local, remote.url, "not-the-token")
    assert isinstance(rep.first_error(), Unauthorized)
    assert remote.objects == {}


def test_tampered_payload_not_admitted(local, remote, tmp_path):
    push(local, remote.url, remote.token)
    remote.tamper = True
    fresh = ObjectStore(tmp_path / "fresh")
    digest = next(local.iter_digests())
    rep = pull(fresh, remote.url, remote.token, [digest])
    assert isinstance(rep.failed[digest], DigestMismatch)
    assert not fresh.has(digest)
    assert list(fresh.iter_digests()) == []


def test_corrupt_local_object_never_uploaded(local, remote):
    digest = next(local.iter_digests())
    p = local.path_for(digest)
    p.write_bytes(b"garbage")
    rep = push(local, remote.url, remote.token)
    assert isinstance(rep.failed[digest], DigestMismatch)
    assert digest not in remote.objects and len(remote.objects) == 4


def test_bad_configuration(local):
    with pytest.raises(ConfigError):
        push(local, "ftp://x", "t")
    with pytest.raises(ConfigError):
        push(local, "http://x", "")
