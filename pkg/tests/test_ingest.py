import pytest

from hcfkit.core import HcfError, InteractionMatrix
from hcfkit.ingest import (CorpusRecord, DensityFilterConfig, align_corpus,
                           filter_items, load_corpus, load_interactions,
                           occurrence_density)
from hcfkit.rng import make_rng


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def matrix_with_item_counts(m, counts):
    """One item per count; item k is held by counts[k] distinct entities."""
    pairs = set()
    for item, c in enumerate(counts):
        for u in range(c):
            pairs.add((u, item))
    return InteractionMatrix(tuple(f"e{k}" for k in range(m)),
                             tuple(f"i{k}" for k in range(len(counts))),
                             frozenset(pairs))


class TestLoadInteractions:
    def test_basic_parse_in_file_order(self, tmp_path):
        p = write(tmp_path, "x.txt", "acme,docker\nacme,mysql\n")
        mat, report = load_interactions(p)
        assert (mat.m, mat.n) == (1, 2)
        assert len(mat.pairs) == 2
        assert mat.entity_ids == ("acme",)
        assert mat.item_ids == ("docker", "mysql")
        assert report.duplicates == 0

    def test_missing_item_field_names_line(self, tmp_path):
        p = write(tmp_path, "x.txt", "acme\n")
        with pytest.raises(HcfError, match=":1"):
            load_interactions(p)

    def test_duplicates_collapsed_and_counted(self, tmp_path):
        p = write(tmp_path, "x.txt", "acme,docker\nacme,docker\nacme,docker\n")
        mat, report = load_interactions(p)
        assert len(mat.pairs) == 1
        assert report.duplicates == 2

    def test_comments_and_blanks_ignored(self, tmp_path):
        p = write(tmp_path, "x.txt", "# header comment\n\nacme,docker\n")
        mat, _ = load_interactions(p)
        assert len(mat.pairs) == 1

    def test_empty_file_rejected(self, tmp_path):
        p = write(tmp_path, "x.txt", "# nothing here\n")
        with pytest.raises(HcfError, match="no interaction pairs"):
            load_interactions(p)


class TestLoadCorpus:
    def test_records_in_file_order(self, tmp_path):
        p = write(tmp_path, "c.jsonl",
                  '{"id": "a", "text": "alpha"}\n{"id": "b", "text": "beta"}\n')
        records, _ = load_corpus(p)
        assert [r.entity_id for r in records] == ["a", "b"]

    def test_duplicate_id_rejected(self, tmp_path):
        p = write(tmp_path, "c.jsonl",
                  '{"id": "a", "text": "x"}\n{"id": "a", "text": "y"}\n')
        with pytest.raises(HcfError, match="'a'"):
            load_corpus(p)

    def test_empty_text_flagged(self, tmp_path):
        p = write(tmp_path, "c.jsonl", '{"id": "a", "text": ""}\n')
        records, report = load_corpus(p)
        assert records[0].text == ""
        assert report.empty_text_ids == ["a"]

    def test_align_fills_missing_entities(self):
        mat = matrix_with_item_counts(3, [1])
        records = [CorpusRecord("e0", "hello"), CorpusRecord("e2", "world")]
        aligned, report = align_corpus(records, mat)
        assert [r.entity_id for r in aligned] == ["e0", "e1", "e2"]
        assert aligned[1].text == ""
        assert report.missing_text_ids == ["e1"]


class TestOccurrenceDensity:
    def test_direct_division(self):
        mat = matrix_with_item_counts(100, [9, 100])
        assert occurrence_density(mat, "i0") == pytest.approx(0.09)
        assert occurrence_density(mat, "i1") == pytest.approx(1.0)

    def test_quarter(self):
        mat = matrix_with_item_counts(4, [1])
        assert occurrence_density(mat, "i0") == pytest.approx(0.25)

    def test_unknown_item_rejected(self):
        mat = matrix_with_item_counts(4, [1])
        with pytest.raises(HcfError, match="unknown item"):
            occurrence_density(mat, "nope")


class TestDensityFilter:
    def test_bounds_validation(self):
        with pytest.raises(HcfError):
            DensityFilterConfig(0.5, 0.5)
        with pytest.raises(HcfError):
            DensityFilterConfig(-0.1, 0.5)
        with pytest.raises(HcfError):
            DensityFilterConfig(0.1, 1.5)

    def test_boundary_inclusive_both_ends(self):
        mat = matrix_with_item_counts(100, [9, 10, 85, 90])
        out, report = filter_items(mat, DensityFilterConfig(0.1, 0.85))
        assert out.item_ids == ("i1", "i2")  # rho 0.10 and 0.85 kept
        reasons = {d["id"]: d["reason"] for d in report.dropped}
        assert reasons == {"i0": "too_rare", "i3": "too_common"}

    def test_m10_counts_1_5_9(self):
        mat = matrix_with_item_counts(10, [1, 5, 9])
        out, _ = filter_items(mat, DensityFilterConfig())
        assert out.item_ids == ("i0", "i1")  # rho 0.1 kept inclusively, 0.9 dropped

    def test_all_filtered_is_error(self):
        mat = matrix_with_item_counts(100, [1, 99])
        with pytest.raises(HcfError, match="empty matrix after density filter"):
            filter_items(mat, DensityFilterConfig(0.1, 0.85))

    def test_entities_with_zero_items_retained(self):
        mat = matrix_with_item_counts(10, [2, 9])
        out, _ = filter_items(mat, DensityFilterConfig(0.15, 0.85))
        assert out.m == 10
        assert out.item_ids == ("i0",)

    def _random_matrix(self, rng):
        m = int(rng.integers(4, 30))
        n = int(rng.integers(2, 15))
        pairs = {(int(u), int(i)) for u in range(m) for i in range(n)
                 if rng.random() < rng.uniform(0.05, 0.9)}
        pairs.add((0, 0))
        return InteractionMatrix(tuple(f"e{k}" for k in range(m)),
                                 tuple(f"i{k}" for k in range(n)),
                                 frozenset(pairs))

    def test_idempotence_and_bounds_over_random_matrices(self):
        rng = make_rng(10, "filter")
        cfg = DensityFilterConfig(0.1, 0.85)
        for _ in range(100):
            mat = self._random_matrix(rng)
            try:
                once, report = filter_items(mat, cfg)
            except HcfError:
                continue
            twice, report2 = filter_items(once, cfg)
            assert twice.pairs == once.pairs
            assert twice.item_ids == once.item_ids
            assert report2.dropped == []
            # every retained item satisfies the bounds on the input matrix
            rho = {iid: occurrence_density(mat, iid) for iid in mat.item_ids}
            for iid in once.item_ids:
                assert cfg.rho_min <= rho[iid] <= cfg.rho_max
            for d in report.dropped:
                assert not (cfg.rho_min <= d["rho"] <= cfg.rho_max)

    def test_monotonicity_widening_never_drops(self):
        rng = make_rng(11, "mono")
        for _ in range(100):
            mat = self._random_matrix(rng)
            lo, hi = sorted(rng.uniform(0.05, 0.95, size=2).tolist())
            if hi - lo < 0.05:
                continue
            try:
                narrow, _ = filter_items(mat, DensityFilterConfig(lo, hi))
            except HcfError:
                continue
            wide, _ = filter_items(mat, DensityFilterConfig(
                max(lo - 0.05, 0.0), min(hi + 0.05, 1.0)))
            assert set(narrow.item_ids) <= set(wide.item_ids)

    def test_paper_scale_retention_property(self):
        rng = make_rng(12, "scale")
        counts = rng.integers(0, 201, size=400).tolist()
        mat = matrix_with_item_counts(200, counts)
        out, report = filter_items(mat, DensityFilterConfig())
        assert 0 < out.n < mat.n  # strict subset retained
        assert set(out.item_ids) <= set(mat.item_ids)
