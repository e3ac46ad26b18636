"""Scorer dispatch over the subprocess/HTTP wire protocol, plus the oracle scorer.

Protocol (version "1"): the harness sends a handshake line
``{"op":"hello","version":"1"}`` and expects capabilities back; score
requests are ``{"op":"score","rid":...,"image_uri":...,"crop":[x,y,w,h]|null,
"text":...}`` answered by ``{"op":"score","rid":...,"score":<number>}``;
``{"op":"bye"}`` shuts down. One JSON object per line, UTF-8, LF.
Responses may arrive out of order and are re-sequenced by rid; duplicate
responses are ignored (first one wins), unknown rids are protocol errors,
and rids still unanswered after the retry budget fail the run by name.

Score magnitudes are never interpreted here beyond finiteness: only the
positive-vs-negative comparison downstream matters, so any calibration of
the external scorer is irrelevant.
"""

from __future__ import annotations

import json
import math
import queue
import subprocess
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import IO, Iterable

from .negatives import ProbePair
from .taxonomy import AspectPath

PROTOCOL_VERSION = "1"


class ScorerError(RuntimeError):
    pass


class TransportError(ScorerError):
    pass


@dataclass(frozen=True)
class ScoreRequest:
    rid: str
    image_uri: str
    crop: tuple[float, float, float, float] | None
    text: str

    def to_dict(self) -> dict:
        return {
            "op": "score",
            "rid": self.rid,
            "image_uri": self.image_uri,
            "crop": list(self.crop) if self.crop else None,
            "text": self.text,
        }


@dataclass(frozen=True)
class ScoreResponse:
    rid: str
    score: float


@dataclass(frozen=True)
class Capabilities:
    protocol_version: str
    supports_crop: bool


@dataclass(frozen=True)
class ScoredPair:
    pair_id: str
    path: AspectPath
    pos_score: float
    neg_score: float


@dataclass(frozen=True)
class Batching:
    batch_size: int = 16
    max_in_flight: int = 32
    max_retries: int = 2
    response_timeout: float = 30.0


def oracle_score(request: ScoreRequest, ground_truth: dict[str, str]) -> ScoreResponse:
    """Deterministic test scorer: token-set overlap with the reference caption."""
    if request.image_uri not in ground_truth:
        raise ScorerError(f"oracle has no reference caption for image {request.image_uri!r}")
    reference = ground_truth[request.image_uri]
    ref_tokens = set(reference.lower().split())
    if not ref_tokens:
        raise ScorerError(f"oracle reference caption for {request.image_uri!r} is empty")
    text_tokens = set(request.text.lower().split())
    return ScoreResponse(rid=request.rid, score=len(ref_tokens & text_tokens) / len(ref_tokens))


@dataclass
class OracleEndpoint:
    """In-core scorer endpoint; logs every request it serves."""

    ground_truth: dict[str, str]
    log: list[ScoreRequest] = field(default_factory=list)

    def hello(self) -> Capabilities:
        return Capabilities(protocol_version=PROTOCOL_VERSION, supports_crop=True)

    def score_batch(self, requests: list[ScoreRequest], timeout: float | None = None) -> list[ScoreResponse]:
        self.log.extend(requests)
        return [oracle_score(r, self.ground_truth) for r in requests]

    def close(self) -> None:
        pass


class SubprocessEndpoint:
    """Line-protocol scorer spawned as a child process.

    One writer (the caller) and one reader thread; responses are matched by
    rid, so out-of-order and duplicated lines from the scorer are tolerated.
    """

    def __init__(self, argv: list[str], cwd: str | None = None):
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                cwd=cwd,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise TransportError(f"cannot spawn scorer {argv!r}: {exc}") from exc
        self._argv = argv
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._accepted: set[str] = set()
        self._sent: set[str] = set()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self) -> None:
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _write(self, message: dict) -> None:
        try:
            self._proc.stdin.write(json.dumps(message) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise TransportError(f"scorer {self._argv!r} pipe closed: {exc}") from exc

    def _next_message(self, deadline: float) -> dict | None:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            return None
        try:
            line = self._lines.get(timeout=remaining)
        except queue.Empty:
            return None
        if line is None:
            self._lines.put(None)  # keep EOF visible to later calls
            return None
        try:
            message = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ScorerError(f"scorer sent a non-JSON line: {line!r}") from exc
        if not isinstance(message, dict):
            raise ScorerError(f"scorer sent a non-object line: {line!r}")
        return message

    def hello(self) -> Capabilities:
        self._write({"op": "hello", "version": PROTOCOL_VERSION})
        message = self._next_message(time.monotonic() + 10.0)
        if message is None:
            raise TransportError(f"scorer {self._argv!r} did not answer the handshake")
        if message.get("op") != "hello":
            raise ScorerError(f"expected hello response, got {message!r}")
        return Capabilities(
            protocol_version=str(message.get("version")),
            supports_crop=bool(message.get("supports_crop")),
        )

    def score_batch(self, requests: list[ScoreRequest], timeout: float = 30.0) -> list[ScoreResponse]:
        outstanding = {r.rid for r in requests}
        self._sent.update(outstanding)
        for request in requests:
            self._write(request.to_dict())
        responses: list[ScoreResponse] = []
        deadline = time.monotonic() + timeout
        while outstanding:
            message = self._next_message(deadline)
            if message is None:
                break
            op = message.get("op")
            if op == "error":
                # Scorer-side failure for one rid; leave it unscored so the
                # harness retry/reporting machinery deals with it.
                continue
            if op != "score":
                raise ScorerError(f"unexpected message op {op!r} from scorer")
            rid = message.get("rid")
            if rid in outstanding:
                score = message.get("score")
                if isinstance(score, bool) or not isinstance(score, (int, float)):
                    raise ScorerError(f"non-numeric score for rid {rid!r}: {score!r}")
                responses.append(ScoreResponse(rid=rid, score=float(score)))
                outstanding.discard(rid)
                self._accepted.add(rid)
            elif rid in self._accepted or rid in self._sent:
                continue  # duplicate response; first one won
            else:
                raise ScorerError(f"response for unknown rid {rid!r}")
        return responses

    def close(self) -> None:
        try:
            self._write({"op": "bye"})
        except TransportError:
            pass
        try:
            self._proc.wait(timeout=5.0)
        except subprocess.TimeoutExpired:
            self._proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


class HttpEndpoint:
    """HTTP scorer: GET /hello for capabilities, POST /score for batches."""

    def __init__(self, url: str, timeout: float = 30.0):
        self.url = url.rstrip("/")
        self.timeout = timeout

    def hello(self) -> Capabilities:
        try:
            with urllib.request.urlopen(self.url + "/hello", timeout=self.timeout) as response:
                payload = json.loads(response.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, ValueError) as exc:
            raise TransportError(f"scorer endpoint {self.url} unreachable: {exc}") from exc
        return Capabilities(
            protocol_version=str(payload.get("version")),
            supports_crop=bool(payload.get("supports_crop")),
        )

    def score_batch(self, requests: list[ScoreRequest], timeout: float | None = None) -> list[ScoreResponse]:
        body = json.dumps({"requests": [r.to_dict() for r in requests]}).encode("utf-8")
        http_request = urllib.request.Request(
            self.url + "/score", data=body, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(http_request, timeout=timeout or self.timeout) as response:
                payload = json.loads(response.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            raise TransportError(f"scorer endpoint {self.url} returned status {exc.code}") from exc
        except (urllib.error.URLError, OSError, ValueError) as exc:
            raise TransportError(f"scorer endpoint {self.url} unreachable: {exc}") from exc
        responses = []
        known = {r.rid for r in requests}
        for item in payload.get("responses", []):
            rid = item.get("rid")
            if rid not in known:
                raise ScorerError(f"response for unknown rid {rid!r}")
            score = item.get("score")
            if isinstance(score, bool) or not isinstance(score, (int, float)):
                raise ScorerError(f"non-numeric score for rid {rid!r}: {score!r}")
            responses.append(ScoreResponse(rid=rid, score=float(score)))
        return responses

    def close(self) -> None:
        pass


def handshake(endpoint) -> Capabilities:
    """Verify the scorer speaks our protocol version and report capabilities."""
    caps = endpoint.hello()
    if caps.protocol_version != PROTOCOL_VERSION:
        raise ScorerError(
            f"protocol version mismatch: harness speaks {PROTOCOL_VERSION!r}, "
            f"scorer speaks {caps.protocol_version!r}"
        )
    return caps


def _chunks(items: list, size: int):
    for start in range(0, len(items), size):
        yield items[start : start + size]


def score_probe_set(
    pairs: list[ProbePair],
    endpoint,
    batching: Batching = Batching(),
) -> list[ScoredPair]:
    """Score every pair (two requests each) and re-sequence to input order.

    Fails with the offending rids if any request stays unanswered after
    ``max_retries`` identical re-sends.
    """
    caps = handshake(endpoint)
    if any(p.crop is not None for p in pairs) and not caps.supports_crop:
        raise ScorerError("probe set contains crops but the scorer does not support crops")

    seen_ids = set()
    requests: list[ScoreRequest] = []
    for pair in pairs:
        if pair.pair_id in seen_ids:
            raise ScorerError(f"duplicate pair_id {pair.pair_id!r} in probe set")
        seen_ids.add(pair.pair_id)
        crop = (pair.crop.x, pair.crop.y, pair.crop.w, pair.crop.h) if pair.crop else None
        requests.append(ScoreRequest(f"{pair.pair_id}#pos", pair.image.uri, crop, pair.positive_text))
        requests.append(ScoreRequest(f"{pair.pair_id}#neg", pair.image.uri, crop, pair.negative_text))

    all_rids = {request.rid for request in requests}
    scores: dict[str, float] = {}
    window = max(1, min(batching.batch_size, batching.max_in_flight))
    for chunk in _chunks(requests, window):
        outstanding = list(chunk)
        last_transport_error: TransportError | None = None
        for _attempt in range(batching.max_retries + 1):
            try:
                responses = endpoint.score_batch(outstanding, batching.response_timeout)
            except TransportError as exc:
                last_transport_error = exc
                responses = []
            for response in responses:
                if response.rid not in all_rids:
                    raise ScorerError(f"response for unknown rid {response.rid!r}")
                if response.rid in scores:
                    continue
                if not math.isfinite(response.score):
                    raise ScorerError(f"non-finite score for rid {response.rid!r}")
                scores[response.rid] = response.score
            outstanding = [r for r in outstanding if r.rid not in scores]
            if not outstanding:
                break
        if outstanding:
            rids = ", ".join(sorted(r.rid for r in outstanding))
            detail = f" (last transport error: {last_transport_error})" if last_transport_error else ""
            raise ScorerError(f"unscored rids after retries: {rids}{detail}")

    return [
        ScoredPair(
            pair_id=pair.pair_id,
            path=pair.path,
            pos_score=scores[f"{pair.pair_id}#pos"],
            neg_score=scores[f"{pair.pair_id}#neg"],
        )
        for pair in pairs
    ]


def scored_pair_to_dict(pair: ScoredPair) -> dict:
    path = pair.path.to_dict()
    path["aspect"] = pair.path.aspect.value
    return {
        "pair_id": pair.pair_id,
        "path": path,
        "pos_score": pair.pos_score,
        "neg_score": pair.neg_score,
    }


def scored_pair_from_dict(raw: dict) -> ScoredPair:
    path = dict(raw["path"])
    aspect = path.pop("aspect")
    return ScoredPair(
        pair_id=raw["pair_id"],
        path=AspectPath.from_dict(aspect, path),
        pos_score=float(raw["pos_score"]),
        neg_score=float(raw["neg_score"]),
    )


def write_scored_pairs(pairs: Iterable[ScoredPair], fh: IO[str]) -> None:
    for pair in pairs:
        fh.write(json.dumps(scored_pair_to_dict(pair), ensure_ascii=False) + "\n")


def load_scored_pairs(stream: str | IO[str]) -> list[ScoredPair]:
    lines = stream.splitlines() if isinstance(stream, str) else stream
    pairs = []
    for line in lines:
        if line.strip():
            pairs.append(scored_pair_from_dict(json.loads(line)))
    return pairs
