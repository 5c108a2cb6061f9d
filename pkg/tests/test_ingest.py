import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from claimgraph.ingest import (
    ConlluError,
    EmbeddingFormatError,
    EmbeddingTable,
    ManifestError,
    ParsedDocument,
    Token,
    fallback_embed,
    load_embedding_table,
    load_manifest,
    parse_conllu,
    save_embedding_table,
    serialize_conllu,
)

HAND_SENTENCE = """1\tAlice\tAlice\tPROPN\t_\t_\t2\tnsubj\t_\tNER=B-PERSON
2\tgreeted\tgreet\tVERB\t_\t_\t0\troot\t_\t_
3\tBob\tBob\tPROPN\t_\t_\t2\tdobj\t_\tNER=B-PERSON
4\t.\t.\tPUNCT\t_\t_\t2\tpunct\t_\t_
"""


class TestParseConllu:
    def test_empty_input(self):
        doc = parse_conllu("")
        assert doc.sentences == ()
        assert doc.entity_spans == ()

    def test_hand_written_sentence_reads_back_verbatim(self):
        doc = parse_conllu(HAND_SENTENCE, doc_id="hand")
        assert len(doc.sentences) == 1
        sent = doc.sentences[0]
        assert [t.form for t in sent] == ["Alice", "greeted", "Bob", "."]
        assert [t.head for t in sent] == [2, 0, 2, 2]
        assert [t.deprel for t in sent] == ["nsubj", "root", "dobj", "punct"]
        assert sent[1].lemma == "greet" and sent[1].upos == "VERB"
        assert [s.label for s in doc.entity_spans] == ["PERSON", "PERSON"]
        assert [(s.start, s.end) for s in doc.entity_spans] == [(0, 1), (2, 3)]

    def test_wrong_column_count_names_line(self):
        bad = HAND_SENTENCE.replace("2\tgreeted\tgreet\tVERB\t_\t_\t0\troot\t_\t_",
                                    "2\tgreeted\tgreet\tVERB\t_\t_\t0\troot\t_")
        with pytest.raises(ConlluError, match="line 2"):
            parse_conllu(bad)

    def test_head_out_of_range(self):
        bad = HAND_SENTENCE.replace("2\tnsubj\t_\tNER=B-PERSON", "9\tnsubj\t_\tNER=B-PERSON")
        with pytest.raises(ConlluError, match="head 9"):
            parse_conllu(bad)

    def test_self_heading_token(self):
        bad = HAND_SENTENCE.replace("1\tAlice\tAlice\tPROPN\t_\t_\t2", "1\tAlice\tAlice\tPROPN\t_\t_\t1")
        with pytest.raises(ConlluError, match="heads itself"):
            parse_conllu(bad)

    def test_orphan_bio_continuation(self):
        bad = HAND_SENTENCE.replace("NER=B-PERSON", "NER=I-PERSON", 1)
        with pytest.raises(ConlluError, match="I-PERSON"):
            parse_conllu(bad)

    def test_multiword_and_empty_node_lines_skipped(self):
        text = (
            "1-2\tcannot\t_\t_\t_\t_\t_\t_\t_\t_\n"
            "1\tcan\tcan\tAUX\t_\t_\t0\troot\t_\t_\n"
            "2\tnot\tnot\tPART\t_\t_\t1\tadvmod\t_\t_\n"
            "2.1\tghost\tghost\tNOUN\t_\t_\t_\t_\t_\t_\n"
        )
        doc = parse_conllu(text)
        assert [t.form for t in doc.sentences[0]] == ["can", "not"]

    def test_comments_ignored(self):
        doc = parse_conllu("# sent_id = 1\n" + HAND_SENTENCE)
        assert len(doc.sentences) == 1


@st.composite
def documents(draw):
    upos_pool = ["NOUN", "VERB", "PROPN", "ADP", "PUNCT"]
    rel_pool = ["nsubj", "dobj", "prep", "pobj", "compound", "root", "punct"]
    sentences = []
    for s in range(draw(st.integers(0, 3))):
        n = draw(st.integers(1, 6))
        toks = []
        ner_open = False
        for i in range(1, n + 1):
            head = draw(st.sampled_from([h for h in range(0, n + 1) if h != i]))
            if ner_open:
                tag = draw(st.sampled_from([None, "I-ORG", "B-GPE"]))
            else:
                tag = draw(st.sampled_from([None, "B-ORG", "B-GPE"]))
            ner_open = tag is not None and tag in ("B-ORG", "I-ORG")
            toks.append(
                Token(
                    index=i,
                    form=draw(st.text("abcXYZ", min_size=1, max_size=5)),
                    lemma=draw(st.text("abc", min_size=1, max_size=5)),
                    upos=draw(st.sampled_from(upos_pool)),
                    head=head,
                    deprel=draw(st.sampled_from(rel_pool)),
                    ner=tag if tag is None or tag.startswith("B-") or ner_open else None,
                )
            )
        sentences.append(tuple(toks))
    text = serialize_conllu(ParsedDocument("x", tuple(sentences), ()))
    return parse_conllu(text, "x")


@settings(max_examples=60, deadline=None)
@given(documents())
def test_serialize_parse_round_trip(doc):
    again = parse_conllu(serialize_conllu(doc), doc.doc_id)
    assert again == doc


class TestEmbeddingTable:
    def test_round_trip(self, tmp_path):
        table = EmbeddingTable(
            dim=384,
            entries={
                "alpha": np.arange(384, dtype=np.float32) / 384,
                "beta": -np.ones(384, dtype=np.float32),
            },
        )
        path = tmp_path / "t.egtb"
        save_embedding_table(path, table)
        loaded = load_embedding_table(path)
        assert loaded.dim == 384 and len(loaded) == 2
        np.testing.assert_array_equal(loaded.get("alpha"), table.entries["alpha"])
        for vec in loaded.entries.values():
            assert vec.shape == (384,) and np.all(np.isfinite(vec))

    def test_empty_table_valid(self, tmp_path):
        path = tmp_path / "empty.egtb"
        save_embedding_table(path, EmbeddingTable(dim=768, entries={}))
        loaded = load_embedding_table(path)
        assert loaded.dim == 768 and len(loaded) == 0

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.egtb"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(EmbeddingFormatError, match="magic"):
            load_embedding_table(path)

    def test_truncated_vector(self, tmp_path):
        table = EmbeddingTable(dim=4, entries={"k": np.ones(4, dtype=np.float32)})
        path = tmp_path / "trunc.egtb"
        save_embedding_table(path, table)
        blob = path.read_bytes()
        path.write_bytes(blob[:-3])
        with pytest.raises(EmbeddingFormatError, match="truncated"):
            load_embedding_table(path)

    def test_duplicate_key(self, tmp_path):
        table = EmbeddingTable(dim=2, entries={"k": np.ones(2, dtype=np.float32)})
        path = tmp_path / "dup.egtb"
        save_embedding_table(path, table)
        blob = bytearray(path.read_bytes())
        entry = blob[20:]
        blob[12:20] = (2).to_bytes(8, "little")
        path.write_bytes(bytes(blob) + bytes(entry))
        with pytest.raises(EmbeddingFormatError, match="duplicate"):
            load_embedding_table(path)

    def test_trailing_garbage(self, tmp_path):
        path = tmp_path / "trail.egtb"
        save_embedding_table(path, EmbeddingTable(dim=2, entries={}))
        path.write_bytes(path.read_bytes() + b"xx")
        with pytest.raises(EmbeddingFormatError, match="trailing"):
            load_embedding_table(path)


class TestFallbackEmbed:
    def test_deterministic_bit_for_bit(self):
        a = fallback_embed("abc", 384)
        b = fallback_embed("abc", 384)
        assert a.tobytes() == b.tobytes()

    def test_self_cosine_is_one(self):
        v = fallback_embed("abc", 384)
        assert np.dot(v, v) == pytest.approx(1.0, abs=1e-12)

    def test_empty_text_gives_first_basis_vector(self):
        v = fallback_embed("", 384)
        assert v[0] == 1.0 and np.count_nonzero(v) == 1

    def test_unit_norm(self):
        for text in ("hello world", "Sonia Gandhi", "x" * 100):
            assert np.linalg.norm(fallback_embed(text, 768)) == pytest.approx(1.0, abs=1e-12)

    def test_case_insensitive(self):
        assert np.array_equal(fallback_embed("Paris", 384), fallback_embed("paris", 384))

    def test_rejects_other_dims(self):
        with pytest.raises(ValueError):
            fallback_embed("abc", 100)

    @settings(max_examples=40, deadline=None)
    @given(st.text(max_size=30))
    def test_pure_function_property(self, text):
        a = fallback_embed(text, 384)
        assert a.tobytes() == fallback_embed(text, 384).tobytes()
        assert np.all(np.isfinite(a))
        assert np.linalg.norm(a) == pytest.approx(1.0, abs=1e-9)


class TestManifest:
    def _write(self, tmp_path, records, docs=("c.conllu", "e1.conllu")):
        for name in docs:
            (tmp_path / name).write_text(HAND_SENTENCE, encoding="utf-8")
        path = tmp_path / "data.jsonl"
        path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")
        return path

    def test_load(self, tmp_path):
        path = self._write(
            tmp_path,
            [{"id": "s1", "claim_doc": "c.conllu", "evidence_docs": ["e1.conllu"], "label": 1,
              "image_key": "img-1"}],
        )
        manifest = load_manifest(path)
        assert manifest.records[0].sample_id == "s1"
        assert manifest.records[0].image_key == "img-1"

    def test_missing_files_all_reported(self, tmp_path):
        path = self._write(
            tmp_path,
            [{"id": "s1", "claim_doc": "c.conllu", "evidence_docs": ["gone1.conllu", "gone2.conllu"],
              "label": 0}],
        )
        with pytest.raises(ManifestError) as err:
            load_manifest(path)
        assert "gone1.conllu" in str(err.value) and "gone2.conllu" in str(err.value)

    def test_bad_label(self, tmp_path):
        path = self._write(
            tmp_path,
            [{"id": "s1", "claim_doc": "c.conllu", "evidence_docs": ["e1.conllu"], "label": 2}],
        )
        with pytest.raises(ManifestError, match="label"):
            load_manifest(path)
