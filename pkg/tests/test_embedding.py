from __future__ import annotations

import json
import math
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from notegen.embedding import (
    DEFAULT_INSTRUCTION,
    Embedder,
    EmbedderConfig,
    EmbeddingError,
    EmbeddingVector,
    LocalHashEmbedder,
    RemoteEmbedder,
    RemoteEmbeddingError,
    cosine,
    embed,
)
from oracles import oracle_cosine


def vec(*values):
    return EmbeddingVector(np.asarray(values, dtype=float))


class TestLocalHash:
    def test_deterministic(self):
        config = EmbedderConfig()
        a = embed(config, "the patient has a cough")
        b = embed(config, "the patient has a cough")
        assert np.array_equal(a.values, b.values)

    def test_empty_text_zero_vector(self):
        v = embed(EmbedderConfig(), "")
        assert v.is_zero
        assert v.norm == 0.0

    def test_short_text_not_zero(self):
        assert not embed(EmbedderConfig(), "ab").is_zero

    def test_unit_norm(self):
        v = embed(EmbedderConfig(), "some dialogue text here")
        assert abs(v.norm - 1.0) <= 1e-6

    def test_dims(self):
        v = embed(EmbedderConfig(dims=256), "hello world")
        assert v.dims == 256

    def test_instruction_changes_space(self):
        base = embed(EmbedderConfig(), "chest pain for two days")
        other = embed(EmbedderConfig(instruction="other task"), "chest pain for two days")
        assert not np.array_equal(base.values, other.values)

    def test_default_instruction(self):
        assert EmbedderConfig().instruction == DEFAULT_INSTRUCTION
        assert DEFAULT_INSTRUCTION == "Represent the Medicine dialogue for clustering:"

    @settings(max_examples=50)
    @given(
        base=st.text(alphabet="abcdefghijklm", min_size=30, max_size=80),
        suffix=st.text(alphabet="abcdefghijklm", min_size=0, max_size=10),
        disjoint=st.text(alphabet="nopqrstuvwxyz", min_size=30, max_size=80),
    )
    def test_shared_ngrams_score_higher_than_disjoint(self, base, suffix, disjoint):
        embedder = LocalHashEmbedder(EmbedderConfig())
        query = embedder.embed(base)
        similar = embedder.embed(base + suffix)
        other = embedder.embed(disjoint)
        assert cosine(query, similar) > cosine(query, other)


class TestCosine:
    def test_identity(self):
        v = embed(EmbedderConfig(), "identical text")
        assert cosine(v, v) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal(self):
        assert cosine(vec(1, 0), vec(0, 1)) == pytest.approx(0.0, abs=1e-12)

    def test_hand_computed(self):
        # cos((1,0), (1,1)/sqrt(2)) = 1/sqrt(2)
        b = vec(1 / math.sqrt(2), 1 / math.sqrt(2))
        assert cosine(vec(1, 0), b) == pytest.approx(0.70711, abs=1e-5)

    def test_dimension_mismatch(self):
        with pytest.raises(EmbeddingError, match="mismatch"):
            cosine(vec(1, 0), vec(1, 0, 0))

    def test_zero_vector_rejected(self):
        with pytest.raises(EmbeddingError, match="zero"):
            cosine(vec(0, 0), vec(1, 0))

    @settings(max_examples=100)
    @given(
        values=st.lists(
            st.floats(min_value=-10, max_value=10), min_size=4, max_size=4
        ).filter(lambda v: any(abs(x) > 1e-3 for x in v)),
        other=st.lists(
            st.floats(min_value=-10, max_value=10), min_size=4, max_size=4
        ).filter(lambda v: any(abs(x) > 1e-3 for x in v)),
        scale=st.floats(min_value=0.01, max_value=100),
    )
    def test_symmetry_and_scale_invariance(self, values, other, scale):
        a, b = vec(*values), vec(*other)
        assert cosine(a, b) == pytest.approx(cosine(b, a), abs=1e-12)
        scaled = EmbeddingVector(b.values * scale)
        assert cosine(a, scaled) == pytest.approx(cosine(a, b), abs=1e-9)

    def test_against_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            a = rng.normal(size=6)
            b = rng.normal(size=6)
            assert cosine(EmbeddingVector(a), EmbeddingVector(b)) == pytest.approx(
                oracle_cosine(a.tolist(), b.tolist()), abs=1e-12
            )


class TestEmbeddingVector:
    def test_non_finite_rejected(self):
        with pytest.raises(EmbeddingError, match="finite"):
            vec(1.0, float("nan"))

    def test_empty_rejected(self):
        with pytest.raises(EmbeddingError):
            EmbeddingVector(np.asarray([], dtype=float))


class _EmbedHandler(BaseHTTPRequestHandler):
    responses: list = []
    requests: list = []
    statuses: list = []

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        _EmbedHandler.requests.append(
            {"body": body, "auth": self.headers.get("Authorization")}
        )
        status = _EmbedHandler.statuses.pop(0) if _EmbedHandler.statuses else 200
        payload = _EmbedHandler.responses.pop(0) if _EmbedHandler.responses else {}
        data = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def embed_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _EmbedHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _EmbedHandler.responses = []
    _EmbedHandler.requests = []
    _EmbedHandler.statuses = []
    yield f"http://127.0.0.1:{server.server_port}/embed"
    server.shutdown()


class TestRemoteProvider:
    def test_renormalizes_drifted_vectors(self, embed_server):
        # 512 floats of 0.5: norm ~ 11.3 deviates > 1e-3, so client renormalizes.
        _EmbedHandler.responses = [{"embeddings": [[0.5] * 512]}]
        config = EmbedderConfig(provider="remote", endpoint=embed_server)
        v = RemoteEmbedder(config).embed("some text")
        assert v.dims == 512
        assert abs(v.norm - 1.0) <= 1e-6

    def test_request_body_contract(self, embed_server, monkeypatch):
        monkeypatch.setenv("NOTEGEN_EMBED_TOKEN", "secret-token")
        _EmbedHandler.responses = [{"embeddings": [[1.0, 0.0]]}]
        config = EmbedderConfig(provider="remote", endpoint=embed_server, model="embed-1")
        RemoteEmbedder(config).embed("dialogue text")
        request = _EmbedHandler.requests[0]
        assert request["body"] == {
            "model": "embed-1",
            "instruction": DEFAULT_INSTRUCTION,
            "inputs": ["dialogue text"],
        }
        assert request["auth"] == "Bearer secret-token"

    def test_retries_then_succeeds(self, embed_server):
        _EmbedHandler.statuses = [500, 200]
        _EmbedHandler.responses = [{}, {"embeddings": [[0.0, 1.0]]}]
        config = EmbedderConfig(
            provider="remote", endpoint=embed_server, base_backoff=0.001
        )
        v = RemoteEmbedder(config).embed("text")
        assert v.values[1] == 1.0
        assert len(_EmbedHandler.requests) == 2

    def test_non_retryable_status_fails_fast(self, embed_server):
        _EmbedHandler.statuses = [401]
        config = EmbedderConfig(
            provider="remote", endpoint=embed_server, base_backoff=0.001
        )
        with pytest.raises(RemoteEmbeddingError, match="401"):
            RemoteEmbedder(config).embed("text")
        assert len(_EmbedHandler.requests) == 1

    def test_malformed_body_is_protocol_error(self, embed_server):
        _EmbedHandler.responses = [{"wrong": []}]
        config = EmbedderConfig(provider="remote", endpoint=embed_server)
        with pytest.raises(RemoteEmbeddingError, match="malformed"):
            RemoteEmbedder(config).embed("text")


class TestCache:
    def test_cache_hit_skips_provider(self, tmp_path):
        config = EmbedderConfig(cache_dir=str(tmp_path))
        first = Embedder(config).embed("cached text")
        cache_files = list(tmp_path.glob("*.json"))
        assert len(cache_files) == 1
        # Corrupt the provider path: a fresh embedder must read the cache file.
        stored = json.loads(cache_files[0].read_text())
        stored[0] += 0.25
        cache_files[0].write_text(json.dumps(stored))
        second = Embedder(config).embed("cached text")
        assert second.values[0] == pytest.approx(first.values[0] + 0.25)

    def test_cache_key_includes_instruction(self, tmp_path):
        Embedder(EmbedderConfig(cache_dir=str(tmp_path))).embed("text")
        Embedder(
            EmbedderConfig(cache_dir=str(tmp_path), instruction="other")
        ).embed("text")
        assert len(list(tmp_path.glob("*.json"))) == 2
