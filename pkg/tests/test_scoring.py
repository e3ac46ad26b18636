import io
import json
import sys
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from vlprobe.ingestion import BBox, ImageMeta
from vlprobe.negatives import ProbePair
from vlprobe.scoring import (
    Batching,
    Capabilities,
    HttpEndpoint,
    OracleEndpoint,
    PROTOCOL_VERSION,
    ScoreRequest,
    ScoredPair,
    ScorerError,
    SubprocessEndpoint,
    TransportError,
    handshake,
    load_scored_pairs,
    oracle_score,
    score_probe_set,
    write_scored_pairs,
)
from vlprobe.taxonomy import Aspect, AspectPath, LocationBucket, RelationKind, SizeBucket

HELPERS = Path(__file__).parent / "helpers"


def make_pair(pair_id, uri, pos, neg, crop=None):
    return ProbePair(
        pair_id=pair_id,
        sample_id=pair_id.split("-")[0],
        path=AspectPath(aspect=Aspect.RELATION, rel_kind=RelationKind.SPATIAL),
        image=ImageMeta(uri=uri, width=100, height=100),
        crop=crop,
        positive_text=pos,
        negative_text=neg,
        replaced_original="on",
        replacement="under",
        similarity=0.4,
    )


CAPTIONS = {
    "img/a.png": "wheel on car",
    "img/b.png": "cat on table",
    "img/c.png": "dog near tree",
}

PAIRS = [
    make_pair("a-rel-0", "img/a.png", "wheel on car", "wheel under car"),
    make_pair("b-rel-0", "img/b.png", "cat on table", "cat under table"),
    make_pair("c-rel-0", "img/c.png", "dog near tree", "dog behind tree"),
]


class TestOracleScore:
    def test_exact_match(self):
        response = oracle_score(ScoreRequest("r1", "img/a.png", None, "wheel on car"), CAPTIONS)
        assert response.score == 1.0

    def test_no_overlap(self):
        response = oracle_score(ScoreRequest("r1", "img/a.png", None, "zebra under moon"), CAPTIONS)
        assert response.score == 0.0

    def test_partial_overlap(self):
        response = oracle_score(ScoreRequest("r1", "img/a.png", None, "wheel on bus"), CAPTIONS)
        assert response.score == pytest.approx(2 / 3, abs=1e-9)

    def test_unknown_uri(self):
        with pytest.raises(ScorerError, match="img/zzz"):
            oracle_score(ScoreRequest("r1", "img/zzz.png", None, "x"), CAPTIONS)

    def test_deterministic(self):
        request = ScoreRequest("r1", "img/b.png", None, "cat under table")
        assert oracle_score(request, CAPTIONS) == oracle_score(request, CAPTIONS)


class TestHandshake:
    def test_oracle_capabilities(self):
        caps = handshake(OracleEndpoint(CAPTIONS))
        assert caps == Capabilities(PROTOCOL_VERSION, True)

    def test_version_mismatch_names_both(self):
        endpoint = SubprocessEndpoint([sys.executable, str(HELPERS / "oldversion_scorer.py")])
        try:
            with pytest.raises(ScorerError) as excinfo:
                handshake(endpoint)
            assert "'1'" in str(excinfo.value) and "'0'" in str(excinfo.value)
        finally:
            endpoint.close()

    def test_unreachable_http_endpoint(self):
        with pytest.raises(TransportError):
            HttpEndpoint("http://127.0.0.1:9", timeout=0.2).hello()


class TestScoreProbeSet:
    def test_oracle_three_pairs_six_requests(self):
        endpoint = OracleEndpoint(dict(CAPTIONS))
        scored = score_probe_set(PAIRS, endpoint)
        assert len(scored) == 3
        assert len(endpoint.log) == 6
        assert [s.pair_id for s in scored] == [p.pair_id for p in PAIRS]
        assert all(s.pos_score == 1.0 for s in scored)
        assert all(s.neg_score < 1.0 for s in scored)

    def test_batching_transparency(self):
        small = score_probe_set(PAIRS, OracleEndpoint(dict(CAPTIONS)), Batching(batch_size=2))
        large = score_probe_set(PAIRS, OracleEndpoint(dict(CAPTIONS)), Batching(batch_size=6))
        assert small == large

    def test_crop_requires_support(self, tmp_path):
        pairs = [make_pair("a-rel-0", "img/a.png", "p q", "p r", crop=BBox(0, 0, 10, 10))]
        endpoint = SubprocessEndpoint([sys.executable, str(HELPERS / "nocrop_scorer.py")])
        try:
            with pytest.raises(ScorerError, match="crop"):
                score_probe_set(pairs, endpoint)
        finally:
            endpoint.close()

    def test_duplicate_pair_id_rejected(self):
        pairs = [PAIRS[0], PAIRS[0]]
        with pytest.raises(ScorerError, match="duplicate pair_id"):
            score_probe_set(pairs, OracleEndpoint(dict(CAPTIONS)))

    def test_non_finite_score_names_rid(self):
        from vlprobe.scoring import ScoreResponse

        class InfEndpoint(OracleEndpoint):
            def score_batch(self, requests, timeout=None):
                return [ScoreResponse(r.rid, float("inf")) for r in requests]

        with pytest.raises(ScorerError, match="a-rel-0#pos"):
            score_probe_set([PAIRS[0]], InfEndpoint(dict(CAPTIONS)))

    def test_unknown_rid_is_protocol_error(self):
        from vlprobe.scoring import ScoreResponse

        class RogueEndpoint(OracleEndpoint):
            def score_batch(self, requests, timeout=None):
                return [ScoreResponse("ghost", 0.5)]

        with pytest.raises(ScorerError, match="ghost"):
            score_probe_set([PAIRS[0]], RogueEndpoint(dict(CAPTIONS)))


class TestSubprocessTransport:
    def run_with(self, script, captions_path, pairs=PAIRS, batching=None):
        endpoint = SubprocessEndpoint([sys.executable, str(HELPERS / script), str(captions_path)])
        try:
            return score_probe_set(pairs, endpoint, batching or Batching())
        finally:
            endpoint.close()

    @pytest.fixture
    def captions_path(self, tmp_path):
        path = tmp_path / "captions.json"
        path.write_text(json.dumps(CAPTIONS), encoding="utf-8")
        return path

    def test_well_behaved_scorer(self, captions_path):
        scored = self.run_with("echo_scorer.py", captions_path)
        oracle = score_probe_set(PAIRS, OracleEndpoint(dict(CAPTIONS)))
        assert scored == oracle

    def test_faulty_scorer_matches_well_behaved(self, captions_path):
        # drops one response (answered on retry), duplicates all, reorders pairwise
        pairs = PAIRS + [make_pair("d-rel-0", "img/a.png", "wheel on car", "wheel at car")]
        batching = Batching(batch_size=4, max_retries=2, response_timeout=0.5)
        scored = self.run_with("faulty_scorer.py", captions_path, pairs=pairs, batching=batching)
        oracle = score_probe_set(pairs, OracleEndpoint(dict(CAPTIONS)))
        assert scored == oracle

    def test_dropped_response_names_rid(self, captions_path):
        batching = Batching(batch_size=4, max_retries=1, response_timeout=0.3)
        with pytest.raises(ScorerError, match="unscored rids after retries: a-rel-0#neg"):
            self.run_with("dropping_scorer.py", captions_path, batching=batching)


class StubScorerHandler(BaseHTTPRequestHandler):
    captions = CAPTIONS

    def do_GET(self):
        body = json.dumps({"op": "hello", "version": "1", "supports_crop": True}).encode()
        self.send_response(200)
        self.end_headers()
        self.wfile.write(body)

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        payload = json.loads(self.rfile.read(length))
        responses = []
        for request in payload["requests"]:
            reference = set(self.captions[request["image_uri"]].lower().split())
            text = set(request["text"].lower().split())
            responses.append({"rid": request["rid"], "score": len(reference & text) / len(reference)})
        body = json.dumps({"responses": responses}).encode()
        self.send_response(200)
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


class TestHttpTransport:
    @pytest.fixture
    def server_url(self):
        server = ThreadingHTTPServer(("127.0.0.1", 0), StubScorerHandler)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        yield f"http://127.0.0.1:{server.server_address[1]}"
        server.shutdown()

    def test_http_roundtrip(self, server_url):
        endpoint = HttpEndpoint(server_url)
        scored = score_probe_set(PAIRS, endpoint)
        oracle = score_probe_set(PAIRS, OracleEndpoint(dict(CAPTIONS)))
        assert scored == oracle


class TestScoredPairIO:
    def test_roundtrip(self):
        pairs = [
            ScoredPair(
                pair_id="x-obj-o1",
                path=AspectPath(
                    aspect=Aspect.OBJECT, size=SizeBucket.LARGE, location=LocationBucket.CENTER
                ),
                pos_score=0.9,
                neg_score=0.1,
            ),
            ScoredPair(
                pair_id="x-rel-0",
                path=AspectPath(aspect=Aspect.RELATION, rel_kind=RelationKind.ACTION),
                pos_score=0.5,
                neg_score=0.5,
            ),
        ]
        buf = io.StringIO()
        write_scored_pairs(pairs, buf)
        assert load_scored_pairs(buf.getvalue()) == pairs
