import pytest
from hypothesis import given
from hypothesis import strategies as st

from newsburst.textpipe import (
    Lexicon,
    StopList,
    demo_lexicon,
    demo_stoplist,
    lemmatize,
    preprocess,
    split_sentences,
    tokenize,
)


@pytest.mark.parametrize(
    "text, expected",
    [
        ("", []),
        ("Ahoj. Jak se máš?", ["Ahoj.", "Jak se máš?"]),
        ("Dr. Novák přišel.", ["Dr. Novák přišel."]),
        ("Přišel J. Novák. Pak odešel!", ["Přišel J. Novák.", "Pak odešel!"]),
        ("Stalo se 12. 3. 2024 v Praze.", ["Stalo se 12. 3. 2024 v Praze."]),
        ("Bylo jich 500. 2 odešli.", ["Bylo jich 500.", "2 odešli."]),
        ("konec věty. malé písmeno", ["konec věty. malé písmeno"]),
        ("Co? Nic!", ["Co?", "Nic!"]),
    ],
)
def test_split_sentences(text, expected):
    assert split_sentences(text) == expected


@given(st.text(alphabet=st.sampled_from(list("ab .!?XY9\n\t")), max_size=60))
def test_split_sentences_covers_all_text(text):
    joined = "".join(split_sentences(text))
    assert joined.replace(" ", "").replace("\n", "").replace("\t", "") == "".join(text.split())


@pytest.mark.parametrize(
    "sentence, expected",
    [
        ("Praha, 2024!", ["praha", "2024"]),
        ("", []),
        ("e-mail", ["e-mail"]),
        ("Žluťoučký KŮŇ", ["žluťoučký", "kůň"]),
        ("snake_case -dash- x", ["snake", "case", "dash", "x"]),
    ],
)
def test_tokenize(sentence, expected):
    assert tokenize(sentence) == expected


def test_lemmatize_lookup_and_pass_through():
    lex = Lexicon({"navštívil": "navštívit"})
    assert lemmatize("navštívil", lex) == "navštívit"
    assert lemmatize("bravanský", lex) == "bravanský"
    assert lemmatize("", lex) == ""


def test_lexicon_keys_are_case_folded():
    assert Lexicon({"Praze": "praha"})["praze"] == "praha"


def test_preprocess_composes_stages():
    lex = Lexicon({"šel": "jít", "domů": "domů"})
    assert preprocess("A pak šel domů.", lex, StopList({"a", "pak"})) == ["jít", "domů"]


def test_preprocess_only_stop_words():
    assert preprocess("A pak a pak.", Lexicon(), StopList({"a", "pak"})) == []


def test_stop_words_removed_after_lemmatisation():
    # "je" lemmatises to the stop lemma "být"
    assert preprocess("Je tam.", Lexicon({"je": "být"}), StopList({"být"})) == ["tam"]


def test_preprocess_idempotent_on_fixed_points():
    lex, stops = Lexicon({"domy": "dům"}), StopList({"a"})
    tokens = preprocess("Domy stojí v ulici.", lex, stops)
    assert preprocess(" ".join(tokens), lex, stops) == tokens


@given(st.lists(st.sampled_from(["a", "pak", "jde", "domů", "je", "dům", "x1", "Praha"]), max_size=20))
def test_preprocess_never_emits_stop_words(words):
    stops = StopList({"a", "pak", "být"})
    lex = Lexicon({"je": "být", "jde": "jít"})
    out = preprocess(" ".join(words) + ".", lex, stops)
    assert not set(out) & stops


@given(st.text(min_size=1, max_size=12))
def test_lemmatize_total(token):
    assert lemmatize(token, demo_lexicon())


def test_file_formats(tmp_path):
    lex_file = tmp_path / "lex.tsv"
    lex_file.write_text("# comment\nŠel\tjít\n\nšla\tjít\n", encoding="utf-8")
    stop_file = tmp_path / "stop.txt"
    stop_file.write_text("# comment\nA\npak\n", encoding="utf-8")
    assert dict(Lexicon.from_file(lex_file)) == {"šel": "jít", "šla": "jít"}
    assert StopList.from_file(stop_file) == {"a", "pak"}
    bad = tmp_path / "bad.tsv"
    bad.write_text("no tab here\n", encoding="utf-8")
    with pytest.raises(ValueError):
        Lexicon.from_file(bad)


def test_bundled_demo_data():
    assert demo_lexicon()["poslanců"] == "poslanec"
    assert "a" in demo_stoplist() and "být" in demo_stoplist()
