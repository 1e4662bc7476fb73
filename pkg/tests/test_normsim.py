import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synthkit.errors import (
    CorruptHeaderError,
    DimensionMismatchError,
    DuplicateIdError,
    EmptyMatrixError,
    EmptyReferenceError,
    EmptyScoresError,
    EndpointRequestError,
    SchemaViolationError,
)
from synthkit.normsim import (
    DEFAULT_MEMORY_BUDGET,
    MAGIC,
    VERSION_F32,
    VERSION_F64,
    EmbeddingMatrix,
    NormSimScores,
    default_grid,
    embed_via_endpoint,
    l2_normalize,
    load_embeddings,
    normsim_scores,
    plan_blocks,
    read_scores,
    relevance_novelty_report,
    save_embeddings,
    similarity_curve,
    write_curves_csv,
    write_scores,
)

from conftest import deterministic_embedding


def oracle_norm_sim(query: np.ndarray, reference: np.ndarray) -> list[float]:
    """Scalar double-loop reference: fsum dot products, no linear algebra."""

    def unit(row: list[float]) -> list[float]:
        norm = math.sqrt(math.fsum(v * v for v in row))
        return [v / norm for v in row]

    refs = [unit(z) for z in reference.tolist()]
    out = []
    for row in query.tolist():
        x = unit(row)
        best = max(math.fsum(a * b for a, b in zip(z, x)) for z in refs)
        out.append(min(1.0, max(-1.0, best)))
    return out


def seeded_pair(seed: int, nq: int, nr: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    return rng.standard_normal((nq, dim)), rng.standard_normal((nr, dim))


def matrices(seed: int, nq: int, nr: int, dim: int, side=None):
    q, r = seeded_pair(seed, nq, nr, dim)
    return (
        EmbeddingMatrix.build([f"q{i}" for i in range(nq)], q, side=side),
        EmbeddingMatrix.build([f"r{i}" for i in range(nr)], r, side=side),
    )


# Expected outputs of oracle_norm_sim for the seeded_pair cases below, frozen
# so a regression in either the oracle or the production path shows up.
FROZEN_CASES = {
    (20260814, 4, 6, 5): [
        0.8907236212676611,
        0.0777776666003339,
        0.40858036676311055,
        0.423920713800098,
    ],
    (7, 3, 8, 12): [
        0.8404087798899406,
        0.5261483228926259,
        0.39989605137971046,
    ],
    (41, 5, 5, 3): [
        0.3189441308295062,
        0.7680484574409704,
        0.3293199033656836,
        0.7480187735756268,
        0.6263519088407479,
    ],
}


class TestEmbeddingMatrix:
    def test_build_normalizes(self):
        m = EmbeddingMatrix.build(["a", "b"], np.array([[3.0, 4.0], [0.0, 2.0]]))
        assert np.allclose(np.linalg.norm(m.rows, axis=1), 1.0)
        assert m.rows[0] == pytest.approx([0.6, 0.8])
        assert (m.count, m.dim) == (2, 2)

    def test_zero_norm_row_rejected(self):
        with pytest.raises(SchemaViolationError):
            EmbeddingMatrix.build(["a"], np.array([[0.0, 0.0]]))

    def test_duplicate_ids_rejected(self):
        with pytest.raises(DuplicateIdError):
            EmbeddingMatrix.build(["a", "a"], np.eye(2))

    def test_shape_validation(self):
        with pytest.raises(SchemaViolationError):
            EmbeddingMatrix(ids=("a",), rows=np.zeros(3))
        with pytest.raises(SchemaViolationError):
            EmbeddingMatrix(ids=("a", "b"), rows=np.eye(3))
        with pytest.raises(SchemaViolationError):
            EmbeddingMatrix(ids=("a",), rows=np.eye(1), side="query")


class TestBinaryContainer:
    def test_round_trip_f64_exact(self, tmp_path):
        m, _ = matrices(3, 5, 1, 7)
        path = tmp_path / "m.nsim"
        save_embeddings(m, path, precision="f64")
        back = load_embeddings(path, normalize=False)
        assert back.ids == m.ids
        assert np.array_equal(back.rows, m.rows)

    def test_round_trip_f32_quantizes(self, tmp_path):
        m, _ = matrices(4, 6, 1, 9)
        path = tmp_path / "m.nsim"
        save_embeddings(m, path, precision="f32")
        back = load_embeddings(path, normalize=False)
        assert back.rows.dtype == np.dtype("<f4")
        assert np.allclose(back.rows, m.rows, atol=1e-6)

    def test_header_layout(self, tmp_path):
        m = EmbeddingMatrix.build(["café-00042"], np.array([[1.0, 2.0, 2.0]]))
        path = tmp_path / "m.nsim"
        save_embeddings(m, path, precision="f32")
        blob = path.read_bytes()
        magic, version, dim, count = struct.unpack_from("<4sIIQ", blob, 0)
        assert (magic, version, dim, count) == (MAGIC, VERSION_F32, 3, 1)
        (id_len,) = struct.unpack_from("<I", blob, 20)
        raw_id = blob[24 : 24 + id_len]
        assert raw_id.decode("utf-8") == "café-00042"
        floats = np.frombuffer(blob[24 + id_len :], dtype="<f4")
        assert floats == pytest.approx([1 / 3, 2 / 3, 2 / 3])

    def test_f64_version_field(self, tmp_path):
        m, _ = matrices(5, 2, 1, 2)
        path = tmp_path / "m.nsim"
        save_embeddings(m, path, precision="f64")
        _, version, _, _ = struct.unpack_from("<4sIIQ", path.read_bytes(), 0)
        assert version == VERSION_F64

    def test_unknown_precision_rejected(self, tmp_path):
        m, _ = matrices(5, 2, 1, 2)
        with pytest.raises(SchemaViolationError):
            save_embeddings(m, tmp_path / "m.nsim", precision="f16")

    def test_mmap_load_matches_regular(self, tmp_path):
        m, _ = matrices(6, 8, 1, 5)
        path = tmp_path / "m.nsim"
        save_embeddings(m, path, precision="f64")
        plain = load_embeddings(path, normalize=False)
        mapped = load_embeddings(path, normalize=False, mmap=True)
        assert np.array_equal(np.asarray(mapped.rows), plain.rows)
        assert mapped.ids == plain.ids

    def test_load_can_renormalize(self, tmp_path):
        m = EmbeddingMatrix.build(["a"], np.array([[3.0, 4.0]]), normalize=False)
        path = tmp_path / "m.nsim"
        save_embeddings(m, path, precision="f64")
        raw = load_embeddings(path, normalize=False)
        unit = load_embeddings(path, normalize=True)
        assert raw.rows[0] == pytest.approx([3.0, 4.0])
        assert unit.rows[0] == pytest.approx([0.6, 0.8])

    def test_side_is_callers_to_supply(self, tmp_path):
        m, _ = matrices(7, 2, 1, 2, side="prompt")
        path = tmp_path / "m.nsim"
        save_embeddings(m, path)
        assert load_embeddings(path).side is None
        assert load_embeddings(path, side="response").side == "response"

    def corrupt(self, tmp_path, blob: bytes):
        path = tmp_path / "bad.nsim"
        path.write_bytes(blob)
        return path

    def test_bad_magic(self, tmp_path):
        blob = struct.pack("<4sIIQ", b"XSIM", 1, 2, 1) + b"\x00" * 32
        with pytest.raises(CorruptHeaderError):
            load_embeddings(self.corrupt(tmp_path, blob))

    def test_unknown_version(self, tmp_path):
        blob = struct.pack("<4sIIQ", MAGIC, 9, 2, 1) + b"\x00" * 32
        with pytest.raises(CorruptHeaderError):
            load_embeddings(self.corrupt(tmp_path, blob))

    def test_zero_dim(self, tmp_path):
        blob = struct.pack("<4sIIQ", MAGIC, 1, 0, 1)
        with pytest.raises(CorruptHeaderError):
            load_embeddings(self.corrupt(tmp_path, blob))

    def test_zero_rows(self, tmp_path):
        blob = struct.pack("<4sIIQ", MAGIC, 1, 4, 0)
        with pytest.raises(EmptyMatrixError):
            load_embeddings(self.corrupt(tmp_path, blob))

    def test_truncated_header(self, tmp_path):
        with pytest.raises(CorruptHeaderError):
            load_embeddings(self.corrupt(tmp_path, MAGIC + b"\x01"))

    def test_truncated_id_table(self, tmp_path):
        blob = struct.pack("<4sIIQ", MAGIC, 1, 2, 1) + struct.pack("<I", 5) + b"ab"
        with pytest.raises(CorruptHeaderError):
            load_embeddings(self.corrupt(tmp_path, blob))

    def test_truncated_row_payload(self, tmp_path):
        m, _ = matrices(8, 3, 1, 4)
        path = tmp_path / "m.nsim"
        save_embeddings(m, path, precision="f64")
        blob = path.read_bytes()
        with pytest.raises(CorruptHeaderError):
            load_embeddings(self.corrupt(tmp_path, blob[:-8]))


class TestEmbedViaEndpoint:
    def test_rows_are_unit_and_in_input_order(self, embedding_server):
        server = embedding_server(dim=6)
        m = embed_via_endpoint(["alpha", "beta"], server.url, "prompt")
        assert (m.count, m.dim, m.side) == (2, 6, "prompt")
        assert m.ids == ("0", "1")
        assert np.allclose(np.linalg.norm(m.rows, axis=1), 1.0)
        expected = l2_normalize(
            np.array([deterministic_embedding(t, 6) for t in ("alpha", "beta")])
        )
        assert np.allclose(m.rows, expected)

    def test_identical_texts_embed_identically(self, embedding_server):
        server = embedding_server()
        m = embed_via_endpoint(["same", "other", "same"], server.url, None)
        assert np.array_equal(m.rows[0], m.rows[2])
        assert not np.array_equal(m.rows[0], m.rows[1])

    def test_batching_is_invisible(self, embedding_server):
        texts = [f"text {i}" for i in range(7)]
        one = embedding_server()
        many = embedding_server()
        whole = embed_via_endpoint(texts, one.url, None, batch_size=64)
        split = embed_via_endpoint(texts, many.url, None, batch_size=2)
        assert one.app.request_count == 1
        assert many.app.request_count == 4
        assert np.array_equal(whole.rows, split.rows)

    def test_custom_ids(self, embedding_server):
        server = embedding_server()
        m = embed_via_endpoint(["a", "b"], server.url, None, ids=["x", "y"])
        assert m.ids == ("x", "y")
        with pytest.raises(SchemaViolationError):
            embed_via_endpoint(["a", "b"], server.url, None, ids=["x"])

    def test_empty_input_rejected(self, embedding_server):
        server = embedding_server()
        with pytest.raises(EmptyMatrixError):
            embed_via_endpoint([], server.url, None)

    def test_dim_change_across_batches(self, embedding_server):
        server = embedding_server(dim=4)
        original = server.app.respond
        calls = {"n": 0}

        def respond(path, body):
            calls["n"] += 1
            server.app.dim = 4 if calls["n"] == 1 else 5
            return original(path, body)

        server.app.respond = respond
        with pytest.raises(DimensionMismatchError):
            embed_via_endpoint(["a", "b", "c"], server.url, None, batch_size=2)

    def test_malformed_response_body(self, embedding_server):
        server = embedding_server()
        server.app.respond = lambda path, body: (200, {"nope": 1})
        with pytest.raises(EndpointRequestError):
            embed_via_endpoint(["a"], server.url, None)

    def test_short_response_rejected(self, embedding_server):
        server = embedding_server()
        original = server.app.respond

        def respond(path, body):
            status, payload = original(path, body)
            payload["data"] = payload["data"][:-1]
            return status, payload

        server.app.respond = respond
        with pytest.raises(EndpointRequestError):
            embed_via_endpoint(["a", "b"], server.url, None)


class TestBlockPlan:
    def test_scratch_fits_budget_at_scale(self):
        plan = plan_blocks(25_000, 300_000, 768, DEFAULT_MEMORY_BUDGET)
        assert plan.scratch_bytes <= DEFAULT_MEMORY_BUDGET
        assert plan.query_block == 25_000
        assert 1 <= plan.ref_block <= 300_000

    def test_generous_budget_single_tile(self):
        plan = plan_blocks(10, 20, 4, 1 << 30)
        assert (plan.query_block, plan.ref_block) == (10, 20)

    def test_tiny_budget_floors_to_one(self):
        plan = plan_blocks(10, 20, 4, 1)
        assert (plan.query_block, plan.ref_block) == (1, 1)


class TestNormSimScores:
    def test_identical_row_scores_one(self):
        rng = np.random.default_rng(0)
        row = rng.standard_normal(16)
        query = EmbeddingMatrix.build(["q"], row[None, :])
        ref = EmbeddingMatrix.build(["a", "b"], np.vstack([rng.standard_normal(16), row]))
        scores = normsim_scores(query, ref)
        assert scores.scores["q"] == pytest.approx(1.0, abs=1e-9)

    def test_orthogonal_rows_score_zero(self):
        query = EmbeddingMatrix.build(["q"], np.array([[1.0, 0.0, 0.0]]))
        ref = EmbeddingMatrix.build(["a", "b"], np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))
        assert normsim_scores(query, ref).scores["q"] == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("case", sorted(FROZEN_CASES))
    def test_matches_frozen_scalar_oracle(self, case):
        seed, nq, nr, dim = case
        q, r = seeded_pair(seed, nq, nr, dim)
        frozen = FROZEN_CASES[case]
        # the in-file oracle reproduces the frozen values...
        assert oracle_norm_sim(q, r) == pytest.approx(frozen, abs=1e-12)
        # ...and the production path agrees with both
        query, ref = matrices(seed, nq, nr, dim)
        assert normsim_scores(query, ref).values() == pytest.approx(frozen, abs=1e-9)

    def test_scores_independent_of_block_sizes(self):
        query, ref = matrices(11, 37, 23, 7)
        outs = [
            normsim_scores(query, ref, memory_budget=budget).values()
            for budget in (600, 5_000, DEFAULT_MEMORY_BUDGET)
        ]
        for other in outs[1:]:
            assert np.max(np.abs(np.array(outs[0]) - np.array(other))) <= 1e-12

    def test_reference_permutation_and_duplication_invariance(self):
        query, ref = matrices(12, 9, 14, 6)
        base = normsim_scores(query, ref).values()
        perm = np.random.default_rng(1).permutation(ref.count)
        shuffled = EmbeddingMatrix(
            ids=tuple(ref.ids[i] for i in perm), rows=ref.rows[perm]
        )
        doubled = EmbeddingMatrix(
            ids=ref.ids + tuple(f"dup-{i}" for i in ref.ids),
            rows=np.vstack([ref.rows, ref.rows]),
        )
        assert normsim_scores(query, shuffled).values() == pytest.approx(base, abs=1e-12)
        assert normsim_scores(query, doubled).values() == pytest.approx(base, abs=1e-12)

    def test_adding_reference_rows_never_lowers_scores(self):
        query, ref = matrices(13, 12, 10, 5)
        extra = np.random.default_rng(99).standard_normal((4, 5))
        bigger = EmbeddingMatrix.build(
            list(ref.ids) + [f"x{i}" for i in range(4)],
            np.vstack([ref.rows, l2_normalize(extra)]),
            normalize=False,
        )
        before = np.array(normsim_scores(query, ref).values())
        after = np.array(normsim_scores(query, bigger).values())
        assert (after >= before - 1e-12).all()

    def test_raw_products_skip_normalization_and_clip(self):
        query = EmbeddingMatrix.build(["q"], np.array([[2.0, 0.0]]), normalize=False)
        ref = EmbeddingMatrix.build(["r"], np.array([[3.0, 0.0]]), normalize=False)
        assert normsim_scores(query, ref, raw_products=True).scores["q"] == 6.0
        assert normsim_scores(query, ref).scores["q"] == pytest.approx(1.0)

    def test_scores_against_memory_mapped_file(self, tmp_path):
        query, ref = matrices(14, 6, 11, 8)
        path = tmp_path / "ref.nsim"
        save_embeddings(ref, path, precision="f64")
        mapped = load_embeddings(path, normalize=False, mmap=True)
        direct = normsim_scores(query, ref).values()
        via_file = normsim_scores(query, mapped).values()
        assert via_file == pytest.approx(direct, abs=1e-12)

    def test_side_checks_and_propagation(self):
        qp, rp = matrices(15, 2, 3, 4, side="prompt")
        _, rr = matrices(15, 2, 3, 4, side="response")
        with pytest.raises(SchemaViolationError):
            normsim_scores(qp, rr)
        assert normsim_scores(qp, rp).side == "prompt"
        bare, _ = matrices(15, 2, 3, 4)
        assert normsim_scores(bare, rr).side == "response"

    def test_dim_mismatch(self):
        query, _ = matrices(16, 2, 2, 4)
        _, ref = matrices(16, 2, 2, 5)
        with pytest.raises(DimensionMismatchError):
            normsim_scores(query, ref)

    def test_empty_reference_rejected(self):
        query, _ = matrices(17, 2, 2, 4)
        empty = EmbeddingMatrix(ids=(), rows=np.empty((0, 4)))
        with pytest.raises(EmptyReferenceError):
            normsim_scores(query, empty)

    def test_empty_query_yields_no_scores(self):
        _, ref = matrices(18, 1, 3, 4)
        empty = EmbeddingMatrix(ids=(), rows=np.empty((0, 4)))
        assert normsim_scores(empty, ref).scores == {}

    def test_reference_id_recorded(self):
        query, ref = matrices(19, 2, 2, 4)
        assert normsim_scores(query, ref, reference_id="train-v1").reference_id == "train-v1"

    def test_scores_file_round_trip(self, tmp_path):
        query, ref = matrices(20, 3, 4, 5, side="response")
        scores = normsim_scores(query, ref, reference_id="ref")
        path = tmp_path / "scores.json"
        write_scores(scores, path)
        assert read_scores(path) == scores


class TestSimilarityCurve:
    def test_worked_example(self):
        curve = similarity_curve({"a": 0.2, "b": 0.5, "c": 0.8}, grid=[0.0, 0.5, 1.0])
        assert curve.thresholds == (0.0, 0.5, 1.0)
        assert curve.fractions == (1.0, 2 / 3, 0.0)

    def test_accepts_scores_object_and_iterable(self):
        grid = [0.0, 0.5, 1.0]
        as_obj = NormSimScores(side=None, reference_id="r", scores={"a": 0.2, "b": 0.5, "c": 0.8})
        assert similarity_curve(as_obj, grid) == similarity_curve([0.2, 0.5, 0.8], grid)

    def test_single_score_at_its_own_threshold(self):
        assert similarity_curve([0.4], grid=[0.4]).fractions == (1.0,)

    def test_default_grid(self):
        grid = default_grid()
        assert grid.shape == (201,)
        assert grid[0] == -1.0 and grid[-1] == 1.0
        assert 0.35 in grid and 0.0 in grid
        curve = similarity_curve([0.3, -0.2], grid=None)
        assert len(curve.thresholds) == 201
        assert curve.fractions[0] == 1.0
        assert curve.fractions[-1] == 0.0

    def test_threshold_above_all_clipped_scores(self):
        scores = [1.0, 0.9, -1.0]
        curve = similarity_curve(scores, grid=[-1.0, 1.0, 1.0 + 1e-9])
        assert curve.fractions[0] == 1.0
        assert curve.fractions[-1] == 0.0

    @settings(max_examples=200)
    @given(
        st.lists(st.floats(-1.0, 1.0), min_size=1, max_size=40),
        st.lists(st.floats(-1.0, 1.0), min_size=1, max_size=20, unique=True),
    )
    def test_fractions_non_increasing(self, scores, grid_points):
        curve = similarity_curve(scores, grid=sorted(grid_points))
        assert all(a >= b for a, b in zip(curve.fractions, curve.fractions[1:]))
        assert all(0.0 <= f <= 1.0 for f in curve.fractions)

    def test_grid_must_ascend(self):
        with pytest.raises(SchemaViolationError):
            similarity_curve([0.1], grid=[0.5, 0.5])
        with pytest.raises(SchemaViolationError):
            similarity_curve([0.1], grid=[0.5, 0.2])
        with pytest.raises(SchemaViolationError):
            similarity_curve([0.1], grid=[])

    def test_empty_scores_rejected(self):
        with pytest.raises(EmptyScoresError):
            similarity_curve([], grid=[0.0])

    def test_csv_output(self, tmp_path):
        curve = similarity_curve([0.2, 0.8], grid=[0.0, 0.5])
        path = tmp_path / "curve.csv"
        curve.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "threshold,fraction"
        assert lines[1:] == ["0.0,1.0", "0.5,0.5"]

    def test_curves_csv_long_form(self, tmp_path):
        curves = {
            "prompt": similarity_curve([0.2], grid=[0.0]),
            "response": similarity_curve([0.9], grid=[0.0]),
        }
        path = tmp_path / "curves.csv"
        write_curves_csv(path, curves)
        lines = path.read_text().splitlines()
        assert lines[0] == "side,threshold,fraction"
        assert lines[1] == "prompt,0.0,1.0"
        assert lines[2] == "response,0.0,1.0"


class TestRelevanceNoveltyReport:
    def test_quartiles_and_band_masses(self):
        scores = [i / 10 for i in range(1, 10)]  # 0.1 .. 0.9
        report = relevance_novelty_report(scores, scores)
        side = report.prompt
        assert (side.q1, side.median, side.q3) == (0.3, 0.5, 0.7)
        assert side.count == 9
        assert side.mass_below == pytest.approx(3 / 9)
        assert side.mass_mid == pytest.approx(5 / 9)
        assert side.mass_above == pytest.approx(1 / 9)
        assert report.response == report.prompt

    def test_band_edges_count_as_mid(self):
        report = relevance_novelty_report([0.35, 0.85], [0.5])
        assert report.prompt.mass_mid == 1.0
        assert report.prompt.mass_below == 0.0
        assert report.prompt.mass_above == 0.0

    def test_identical_scores_collapse_quartiles(self):
        report = relevance_novelty_report([0.5] * 4, [0.5] * 4)
        side = report.prompt
        assert side.q1 == side.median == side.q3 == 0.5
        assert side.mass_mid == 1.0

    def test_custom_bands(self):
        report = relevance_novelty_report([0.1, 0.5, 0.9], [0.5], bands=(0.2, 0.6))
        assert report.prompt.mass_below == pytest.approx(1 / 3)
        assert report.prompt.mass_mid == pytest.approx(1 / 3)
        assert report.prompt.mass_above == pytest.approx(1 / 3)

    def test_invalid_bands(self):
        with pytest.raises(SchemaViolationError):
            relevance_novelty_report([0.5], [0.5], bands=(0.8, 0.3))
        with pytest.raises(SchemaViolationError):
            relevance_novelty_report([0.5], [0.5], bands=(0.5, 0.5))

    @settings(max_examples=200)
    @given(st.lists(st.floats(-1.0, 1.0), min_size=1, max_size=50))
    def test_masses_partition_the_scores(self, scores):
        report = relevance_novelty_report(scores, [0.0])
        side = report.prompt
        total = side.mass_below + side.mass_mid + side.mass_above
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_json_shape(self):
        report = relevance_novelty_report([0.2], [0.9])
        obj = report.to_json()
        assert obj["bands"] == {"low": 0.35, "high": 0.85}
        assert set(obj) == {"bands", "prompt", "response"}
        assert obj["prompt"]["count"] == 1
        assert obj["response"]["mass_above"] == 1.0

    def test_empty_scores_rejected(self):
        with pytest.raises(EmptyScoresError):
            relevance_novelty_report([], [0.5])
