from pathlib import Path

from epimem.idf import canonical, decode, encode
from epimem.tools.golden import make_vectors, verify_corpus, write_corpus

REPO_GOLDEN = Path(__file__).parent.parent / "golden"


def test_corpus_covers_every_tag():
    tags = {encode(value)[0] for _, value in make_vectors()}
    assert tags == set(range(0x0B))


def test_corpus_size():
    assert len(make_vectors()) >= 100


def test_vectors_are_canonical():
    for name, value in make_vectors():
        assert encode(value) == encode(canonical(value)), name


def test_regeneration_is_deterministic(tmp_path):
    write_corpus(tmp_path / "a")
    write_corpus(tmp_path / "b")
    a_files = sorted((tmp_path / "a" / "vectors").iterdir())
    b_files = sorted((tmp_path / "b" / "vectors").iterdir())
    assert [f.name for f in a_files] == [f.name for f in b_files]
    for fa, fb in zip(a_files, b_files):
        assert fa.read_bytes() == fb.read_bytes()


def test_committed_corpus_matches_generator():
    """The corpus in the repository is byte-identical to regeneration."""
    assert REPO_GOLDEN.exists(), "golden corpus missing; run: epimem golden golden/"
    count = verify_corpus(REPO_GOLDEN)
    assert count >= 100
    for i, (name, value) in enumerate(make_vectors()):
        path = REPO_GOLDEN / "vectors" / f"{i:03d}_{name}.bin"
        assert path.read_bytes() == encode(value), name


def test_decode_reencode_identity(tmp_path):
    write_corpus(tmp_path)
    for path in (tmp_path / "vectors").iterdir():
        raw = path.read_bytes()
        assert encode(decode(raw)) == raw
