import json
import random

import pytest

from stylecast.text import (
    Article, CorpusError, EOS, PAD, SEP1, SEP2, SOS, UNK, Vocab, build_vocab,
    decode, encode, encode_title, format_article, load_jsonl, split_shuffled,
)
from tests.conftest import make_articles


def article(title="ab", sub="c", body="de", label=0):
    return Article(main_title=title, sub_title=sub, body=body, label=label,
                   author="x", release_time=1_000_000_000, tags=[])


def write_jsonl(path, rows):
    path.write_text("\n".join(json.dumps(r) for r in rows), encoding="utf-8")


def valid_row(**kw):
    row = {"main_title": "t", "sub_title": "s", "body": "b", "label": 0,
           "author": "a", "release_time": 123, "tags": ["x"]}
    row.update(kw)
    return row


class TestLoadJsonl:
    def test_three_valid_lines(self, tmp_path):
        p = tmp_path / "c.jsonl"
        write_jsonl(p, [valid_row(main_title=f"t{i}") for i in range(3)])
        articles, report = load_jsonl(p)
        assert len(articles) == 3 and report == []
        assert [a.main_title for a in articles] == ["t0", "t1", "t2"]

    def test_missing_field_reported_with_line_number(self, tmp_path):
        p = tmp_path / "c.jsonl"
        rows = [valid_row(), {k: v for k, v in valid_row().items() if k != "main_title"}]
        write_jsonl(p, rows)
        articles, report = load_jsonl(p)
        assert len(articles) == 1
        assert len(report) == 1 and "line 2" in report[0] and "main_title" in report[0]

    def test_label_out_of_range_skipped(self, tmp_path):
        p = tmp_path / "c.jsonl"
        write_jsonl(p, [valid_row(label=7), valid_row()])
        articles, report = load_jsonl(p, n_sections=4)
        assert len(articles) == 1
        assert "label 7" in report[0]

    def test_boolean_label_rejected(self, tmp_path):
        p = tmp_path / "c.jsonl"
        write_jsonl(p, [valid_row(label=True), valid_row()])
        articles, report = load_jsonl(p)
        assert len(articles) == 1 and "label" in report[0]

    def test_tags_optional(self, tmp_path):
        p = tmp_path / "c.jsonl"
        row = valid_row()
        del row["tags"]
        write_jsonl(p, [row])
        articles, report = load_jsonl(p)
        assert articles[0].tags == [] and report == []

    def test_unreadable_file_is_fatal(self, tmp_path):
        with pytest.raises(CorpusError):
            load_jsonl(tmp_path / "missing.jsonl")


class TestVocab:
    def test_first_occurrence_ids(self):
        v = build_vocab([article(title="ab", sub="", body="")])
        assert v.char_to_id == {"a": 6, "b": 7}

    def test_determinism(self):
        arts = make_articles(10)
        v1, v2 = build_vocab(arts), build_vocab(arts)
        assert v1.char_to_id == v2.char_to_id
        assert v1.id_to_char == v2.id_to_char

    def test_large_charset_size(self):
        chars = "".join(chr(0x4E00 + i) for i in range(5000))
        v = build_vocab([article(title=chars, sub="", body="")])
        assert v.size == 5006

    def test_no_ordinary_char_takes_special_id(self):
        v = build_vocab(make_articles(8))
        assert all(i >= 6 for i in v.char_to_id.values())

    def test_inverse_maps(self):
        v = build_vocab(make_articles(8))
        assert all(v.id_to_char[i] == c for c, i in v.char_to_id.items())

    def test_save_load_round_trip(self, tmp_path):
        v = build_vocab(make_articles(8))
        p = tmp_path / "vocab.tsv"
        v.save(p)
        loaded = Vocab.load(p)
        assert loaded.char_to_id == v.char_to_id

    def test_file_format_id_tab_hex(self, tmp_path):
        v = build_vocab([article(title="ab", sub="", body="")])
        p = tmp_path / "vocab.tsv"
        v.save(p)
        lines = p.read_text(encoding="utf-8").splitlines()
        assert lines == [f"6\t{ord('a'):x}", f"7\t{ord('b'):x}"]

    def test_reserved_id_in_file_rejected(self, tmp_path):
        p = tmp_path / "vocab.tsv"
        p.write_text("3\t61\n", encoding="utf-8")
        with pytest.raises(CorpusError, match="reserved"):
            Vocab.load(p)

    def test_empty_corpus(self):
        with pytest.raises(CorpusError):
            build_vocab([])


class TestFormat:
    def test_template(self):
        v = build_vocab([article()])
        ids = format_article(article(), v)
        a, b, c, d, e = (v.char_to_id[ch] for ch in "abcde")
        assert ids[:9] == [SOS, a, b, SEP1, c, SEP2, d, e, EOS]
        assert len(ids) == 512
        assert all(i == PAD for i in ids[9:])

    def test_long_body_truncated_eos_last(self):
        v = build_vocab([article(body="x" * 10_000)])
        ids = format_article(article(body="x" * 10_000), v)
        assert len(ids) == 512
        assert ids[-1] == EOS
        assert PAD not in ids

    def test_empty_sub_title(self):
        a = article(sub="")
        v = build_vocab([a])
        ids = format_article(a, v)
        sep1 = ids.index(SEP1)
        assert ids[sep1 + 1] == SEP2

    def test_exactly_one_sos_and_eos_property(self):
        arts = make_articles(30)
        v = build_vocab(arts)
        for a in arts:
            ids = format_article(a, v, max_len=64)
            assert len(ids) == 64
            assert ids.count(SOS) == 1 and ids.count(EOS) == 1


class TestEncodeDecode:
    def test_encode_pads(self):
        v = build_vocab([article(title="ab", sub="", body="")])
        assert encode("ab", v, 4, pad=True) == [6, 7, PAD, PAD]

    def test_unknown_char_maps_to_unk(self):
        v = build_vocab([article(title="ab", sub="", body="")])
        assert encode("aZ", v, 4) == [6, UNK]

    def test_truncation_to_title_budget(self):
        v = build_vocab([article(title="a" * 80, sub="", body="")])
        assert len(encode("a" * 80, v, 50)) == 50

    def test_round_trip(self):
        v = build_vocab([article(title="abc", sub="", body="")])
        assert decode(encode("abc", v, 10), v) == "abc"

    def test_round_trip_property_random_strings(self):
        arts = make_articles(20)
        v = build_vocab(arts)
        alphabet = list(v.char_to_id)
        rng = random.Random(42)
        for _ in range(1000):
            s = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 30)))
            assert decode(encode(s, v, 40), v) == s

    def test_specials_render_bracketed_pad_dropped(self):
        v = build_vocab([article(title="a", sub="", body="")])
        assert decode([SOS, 6, EOS, PAD, PAD], v) == "[SOS]a[EOS]"

    def test_out_of_range_id(self):
        v = build_vocab([article(title="a", sub="", body="")])
        with pytest.raises(IndexError):
            decode([v.size], v)

    def test_encode_title_wraps_and_pads(self):
        v = build_vocab([article(title="ab", sub="", body="")])
        ids = encode_title("ab", v, 6)
        assert ids == [SOS, 6, 7, EOS, PAD, PAD]
        long = encode_title("ab" * 60, v, 50)
        assert len(long) == 50 and long[0] == SOS and long[-1] == EOS


class TestSplit:
    def test_ninety_ten(self):
        train, val = split_shuffled(list(range(100)), 0.9, seed=1)
        assert len(train) == 90 and len(val) == 10

    def test_same_seed_identical(self):
        items = list(range(50))
        assert split_shuffled(items, 0.8, seed=5) == split_shuffled(items, 0.8, seed=5)

    def test_different_seeds_differ(self):
        items = list(range(100))
        t1, _ = split_shuffled(items, 0.9, seed=1)
        t2, _ = split_shuffled(items, 0.9, seed=2)
        assert t1 != t2

    def test_exact_partition(self):
        items = list(range(37))
        train, val = split_shuffled(items, 0.7, seed=3)
        assert sorted(train + val) == items
        assert not set(train) & set(val)

    def test_bad_ratio(self):
        with pytest.raises(ValueError):
            split_shuffled(list(range(10)), 1.5)

    def test_too_few_items(self):
        with pytest.raises(ValueError):
            split_shuffled([1], 0.9)
