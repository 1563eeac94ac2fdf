import hashlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_article
from newsburst.embed import (
    BadVectorFile,
    NoEmbeddableTokens,
    VectorizeConfig,
    article_tokens,
    hash_provider,
    load_table_provider,
    vectorize_article,
)
from newsburst.textpipe import Lexicon, StopList

NO_LEX = Lexicon()
NO_STOPS = StopList()


def write(tmp_path, text, name="vec.txt"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_table_provider_loads(tmp_path):
    p = write(tmp_path, "3 4\nalfa 1 0 0 0\nbeta 0 1 0 0\nžluť 0.5 0.5 0 -1e-3\n")
    prov = load_table_provider(p)
    assert prov.dimension == 4
    assert len(prov) == 3
    np.testing.assert_array_equal(prov.lookup("žluť"), [0.5, 0.5, 0, -1e-3])
    assert prov.lookup("gama") is None


@pytest.mark.parametrize(
    "text",
    [
        "",
        "0 4\n",
        "2 4\nalfa 1 0 0 0\nbeta 0 1 0\n",
        "1 4\nalfa 1 0 x 0\n",
        "1 2\nalfa 1 nan\n",
        "2 2\nalfa 1 0\n",
        "four\nalfa 1 0 0 0\n",
    ],
)
def test_table_provider_rejects_bad_files(tmp_path, text):
    with pytest.raises(BadVectorFile):
        load_table_provider(write(tmp_path, text))


def _hash_oracle(token, dim, seed):
    key = seed.to_bytes(16, "little", signed=True)
    comps = []
    for i in range(dim):
        d = hashlib.blake2b(token.encode() + b"\x00" + i.to_bytes(4, "little"), digest_size=8, key=key).digest()
        comps.append(-1.0 + 2.0 * int.from_bytes(d, "little") / (2**64 - 1))
    v = np.array(comps)
    return v / np.sqrt(sum(c * c for c in comps))


def test_hash_provider_matches_independent_derivation():
    prov = hash_provider(16, seed=3)
    np.testing.assert_allclose(prov.lookup("praha"), _hash_oracle("praha", 16, 3), rtol=0, atol=1e-15)


def test_hash_provider_deterministic_bitwise():
    a = hash_provider(200, 1).lookup("rozpočet")
    b = hash_provider(200, 1).lookup("rozpočet")
    assert a.tobytes() == b.tobytes()
    assert hash_provider(200, 2).lookup("rozpočet").tobytes() != a.tobytes()


def test_hash_provider_distinct_tokens_not_parallel():
    prov = hash_provider(200, 0)
    u, v = prov.lookup("sněmovna"), prov.lookup("senát")
    assert float(u @ v) < 1.0
    assert abs(float(u @ v)) < 0.5


def test_hash_provider_rejects_zero_dimension():
    with pytest.raises(ValueError):
        hash_provider(0, 0)


def test_hash_provider_total_and_unit():
    prov = hash_provider(32, 0)
    for tok in ["", "a", "žluťoučký", "123"]:
        v = prov.lookup(tok)
        assert v.shape == (32,) and np.all(np.isfinite(v))
        assert abs(np.linalg.norm(v) - 1) < 1e-12


class FixedProvider:
    dimension = 3

    def __init__(self, table):
        self.table = {k: np.asarray(v, float) for k, v in table.items()}

    def lookup(self, token):
        return self.table.get(token)


def test_vectorize_identical_token_vectors():
    u = np.array([3.0, 4.0, 0.0])
    prov = FixedProvider({f"t{i}": u for i in range(60)})
    art = make_article(title="t0 t1", body=" ".join(f"t{i}" for i in range(2, 60)) + ".")
    av = vectorize_article(art, prov, VectorizeConfig(50), NO_LEX, NO_STOPS)
    np.testing.assert_allclose(av.v, [0.6, 0.8, 0.0], atol=1e-15)


def test_vectorize_averages_fewer_than_n_tokens():
    prov = FixedProvider({"a1": [1, 0, 0], "a2": [0, 2, 0], "a3": [1, 1, 1]})
    art = make_article(title="a1 neznámé", body="a2 a3.")
    av = vectorize_article(art, prov, VectorizeConfig(50), NO_LEX, NO_STOPS)
    # hand average: (2, 3, 1) / 3, then normalised
    expected = np.array([2.0, 3.0, 1.0]) / np.sqrt(14.0)
    np.testing.assert_allclose(av.v, expected, atol=1e-15)
    assert av.article_id == art.article_id


def test_vectorize_only_first_n_tokens_count():
    prov = FixedProvider({"a": [1, 0, 0], "b": [0, 1, 0]})
    art = make_article(title="a a", body="b b b.")
    av = vectorize_article(art, prov, VectorizeConfig(2), NO_LEX, NO_STOPS)
    np.testing.assert_allclose(av.v, [1, 0, 0])


def test_title_tokens_come_first():
    art = make_article(title="Alfa beta", body="Gama delta.")
    assert article_tokens(art, VectorizeConfig(3), NO_LEX, NO_STOPS) == ["alfa", "beta", "gama"]


def test_vectorize_no_embeddable_tokens():
    art = make_article(title="", body="A pak a.")
    with pytest.raises(NoEmbeddableTokens):
        vectorize_article(art, hash_provider(8), VectorizeConfig(), NO_LEX, StopList({"a", "pak"}))
    with pytest.raises(NoEmbeddableTokens):
        vectorize_article(make_article(body="x y."), FixedProvider({}), VectorizeConfig(), NO_LEX, NO_STOPS)


def test_vectorize_cancelling_vectors_rejected():
    prov = FixedProvider({"a": [1, 0, 0], "b": [-1, 0, 0]})
    with pytest.raises(NoEmbeddableTokens):
        vectorize_article(make_article(title="a b", body="."), prov, VectorizeConfig(), NO_LEX, NO_STOPS)


def test_vectorize_config_validation():
    with pytest.raises(ValueError):
        VectorizeConfig(0)


words = st.text(alphabet="abcdefghijklmnopqrstuvwxyzáčěšž", min_size=1, max_size=8)


@settings(max_examples=60, deadline=None)
@given(st.lists(words, min_size=1, max_size=80), st.lists(words, min_size=1, max_size=20))
def test_vector_unit_norm_and_tail_invariance(body_words, extra):
    prov = hash_provider(24, 5)
    cfg = VectorizeConfig(50)
    art = make_article(title="Titulek zprávy", body=" ".join(body_words) + ".")
    base = vectorize_article(art, prov, cfg, NO_LEX, NO_STOPS)
    assert abs(np.linalg.norm(base.v) - 1.0) < 1e-9
    tokens = article_tokens(art, cfg, NO_LEX, NO_STOPS)
    if len(tokens) == cfg.n_tokens:
        longer = make_article(title=art.title, body=art.body + "\n\n" + " ".join(extra) + ".")
        assert vectorize_article(longer, prov, cfg, NO_LEX, NO_STOPS).v.tobytes() == base.v.tobytes()
