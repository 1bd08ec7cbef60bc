import json

import httpx
import pytest

from conftest import make_graph
from convkg.annotate import (
    AnnotateConfig,
    AnnotationResult,
    annotate,
    annotate_batch,
    assemble_prompt,
    build_evidence,
    resolve_answer,
    retrieve,
)
from convkg.grounding import CellSentence
from convkg.llm import (
    HttpChatClient,
    LlmRequest,
    LlmResponse,
    MockChatClient,
    RecordingClient,
    TransportError,
)
from convkg.obo import OntologyDag, OntologyTerm
from convkg.scoring import ScoringConfig
from convkg.synth import build, planted_spec

RETRIEVAL_STAGES = {"ground", "traverse", "score", "select", "evidence"}


@pytest.fixture(scope="module")
def planted():
    return build(planted_spec(3, n_targets=20, marker_density=0.005, function_fanout=1))


@pytest.fixture(scope="module")
def planted_dag(planted):
    return OntologyDag({t.id: t for t in planted.terms})


@pytest.fixture
def toy_dag():
    return OntologyDag({
        "C": OntologyTerm("C", "C cell", frozenset()),
        "T": OntologyTerm("T", "T cell", frozenset({"C"}), frozenset({"T lymphocyte"})),
    })


def test_two_hop_path_rendering(two_hop_graph):
    s = CellSentence("x", ("G",))
    r = retrieve(s, two_hop_graph)
    ctx = build_evidence(r.topk, two_hop_graph, r.grounded, include_paths=True)
    assert [p.rendered for p in ctx.paths] == ["G -PARTICIPATES_IN-> P <-CAPABLE_OF- C"]
    assert ctx.paths_for("C")[0].nodes == ("G", "P", "C")
    prompt = assemble_prompt(ctx, s).user_prompt
    assert "path: G -PARTICIPATES_IN-> P <-CAPABLE_OF- C" in prompt


def test_no_paths_unless_requested(two_hop_graph):
    r = retrieve(CellSentence("x", ("G", "M")), two_hop_graph)
    ctx = build_evidence(r.topk, two_hop_graph, r.grounded)
    assert len(ctx) == 1 and ctx.paths == ()
    assert "path:" not in assemble_prompt(ctx, CellSentence("x", ("G", "M"))).user_prompt


def test_ten_entries_without_paths(planted):
    s = planted.sentences[0]
    r = retrieve(s, planted.graph, scoring=ScoringConfig(K=10))
    assert r.table.target_count >= 10
    ctx = build_evidence(r.topk, planted.graph, r.grounded)
    assert len(ctx) == 10
    assert [e.target for e in ctx.entries] == [c.target for c in r.topk]
    assert ctx.paths == ()


def test_empty_topk():
    g = make_graph([("A", "Gene", "A")], [])
    ctx = build_evidence([], g, retrieve(CellSentence("x", ("A",)), g).grounded)
    assert len(ctx) == 0 and ctx.paths == ()


def test_paths_alternate_types(planted):
    s = planted.sentences[5]
    r = retrieve(s, planted.graph)
    ctx = build_evidence(r.topk, planted.graph, r.grounded, include_paths=True)
    assert len(ctx.paths) == sum(c.supporter_count for c in r.topk)
    g = planted.graph
    for p in ctx.paths:
        types = [g.type_of(g.index_of(n)) for n in p.nodes]
        assert all(a != b for a, b in zip(types, types[1:]))
        assert types[-1] == "CellType"


def test_prompt_is_deterministic_and_has_one_block_per_entry(planted):
    s = planted.sentences[0]
    r = retrieve(s, planted.graph, scoring=ScoringConfig(K=2))
    ctx = build_evidence(r.topk, planted.graph, r.grounded)
    a, b = assemble_prompt(ctx, s), assemble_prompt(ctx, s)
    assert a == b and a.user_prompt == b.user_prompt
    assert a.user_prompt.count("[Evidence ") == 2
    assert ", ".join(s.gene_symbols) in a.user_prompt
    assert "single Cell Ontology cell type" in a.user_prompt


def test_label_space_hint(toy_dag, two_hop_graph):
    cfg = AnnotateConfig(label_space_hint=True, dry_run=True)
    res = annotate(CellSentence("x", ("G",)), two_hop_graph, toy_dag, None, config=cfg)
    assert "Candidate cell types: C cell; T cell" in res.request.user_prompt


def test_mock_valid_term(two_hop_graph, toy_dag):
    client = MockChatClient({"x": "T lymphocyte"})
    res = annotate(CellSentence("x", ("G",), "T"), two_hop_graph, toy_dag, client)
    assert (res.predicted_term, res.llm_calls, res.evidence_count) == ("T", 1, 1)
    assert client.call_count == 1


def test_mock_gibberish(two_hop_graph, toy_dag):
    res = annotate(CellSentence("x", ("G",)), two_hop_graph, toy_dag, MockChatClient(default="qwzx!"))
    assert res.predicted_term is None and res.llm_calls == 1
    assert res.raw_answer == "qwzx!"


@pytest.mark.parametrize(
    "text, expected",
    [("T cell", "T"), ("**T cell**", "T"), ("Answer: t cell.", "T"), ("T\nbecause", "T"), ("", None)],
)
def test_resolve_answer(toy_dag, text, expected):
    assert resolve_answer(toy_dag, text) == expected


def test_empty_grounding_still_calls_once(two_hop_graph, toy_dag):
    client = MockChatClient()
    res = annotate(CellSentence("x", ("ZZZ", "RPL3")), two_hop_graph, toy_dag, client)
    assert res.llm_calls == 1 and client.call_count == 1
    assert res.grounded_count == 0 and res.evidence_count == 0
    assert res.warnings == ["no_grounded_genes"]
    assert "No knowledge-graph evidence" in client.requests[0].user_prompt


def test_dry_run_makes_no_calls(two_hop_graph, toy_dag):
    client = MockChatClient()
    res = annotate(CellSentence("x", ("G",)), two_hop_graph, toy_dag, client,
                   config=AnnotateConfig(dry_run=True))
    assert res.llm_calls == 0 and client.call_count == 0
    assert res.request is not None


def test_batch_of_100_calls_client_100_times(planted, planted_dag):
    client = RecordingClient(MockChatClient(echo_top_candidate=True))
    sentences = planted.sentences[:100]
    results = annotate_batch(sentences, planted.graph, planted_dag, client, observer=client.mark)
    assert len(client.calls) == 100
    assert [r.cell_id for r in results] == [s.cell_id for s in sentences]
    assert all(r.llm_calls == 1 for r in results)
    assert {stage for stage, _ in client.calls} == {"prompt"}
    # per cell: every retrieval stage is marked before the single call
    for s in sentences[:10]:
        events = [e for c, e in client.events if c == s.cell_id]
        call_at = events.index("llm_call")
        assert RETRIEVAL_STAGES <= set(events[:call_at])
        assert events.count("llm_call") == 1 and events[-1] == "resolve"


def test_echo_mock_recovers_planted_targets(planted, planted_dag):
    results = annotate_batch(planted.sentences, planted.graph, planted_dag,
                             MockChatClient(echo_top_candidate=True))
    truth = {m["cell_id"]: m["target"] for m in planted.manifest["sentences"]}
    assert all(r.predicted_term == truth[r.cell_id] for r in results)


def test_batch_is_order_and_concurrency_independent(planted, planted_dag):
    sents = planted.sentences[:20]
    one = annotate_batch(sents, planted.graph, planted_dag, MockChatClient(echo_top_candidate=True),
                         config=AnnotateConfig(max_in_flight=1))
    many = annotate_batch(sents, planted.graph, planted_dag, MockChatClient(echo_top_candidate=True),
                          config=AnnotateConfig(max_in_flight=8))
    assert [r.to_record() for r in one] == [r.to_record() for r in many]


class Flaky:
    def __init__(self, failures):
        self.failures = failures
        self.attempts = 0

    def complete(self, request):
        self.attempts += 1
        if self.attempts <= self.failures:
            raise TransportError("boom")
        return LlmResponse("T cell")


def test_retries_are_counted_separately(two_hop_graph, toy_dag):
    client = Flaky(2)
    res = annotate(CellSentence("x", ("G",)), two_hop_graph, toy_dag, client,
                   config=AnnotateConfig(max_retries=2))
    assert (res.llm_calls, res.retries, res.predicted_term) == (1, 2, "T")


def test_retry_budget_exhausted(two_hop_graph, toy_dag):
    with pytest.raises(TransportError):
        annotate(CellSentence("x", ("G",)), two_hop_graph, toy_dag, Flaky(5),
                 config=AnnotateConfig(max_retries=1))
    (res,) = annotate_batch([CellSentence("x", ("G",))], two_hop_graph, toy_dag, Flaky(5),
                            config=AnnotateConfig(max_retries=1))
    assert res.llm_calls == 0 and res.error.startswith("transport")


def test_record_roundtrip(two_hop_graph, toy_dag):
    res = annotate(CellSentence("x", ("ZZZ",), "T"), two_hop_graph, toy_dag, MockChatClient())
    rec = json.loads(json.dumps(res.to_record()))
    assert set(rec) >= {"cell_id", "predicted", "gold", "llm_calls", "evidence_count",
                        "grounded_count", "raw_answer"}
    assert AnnotationResult.from_record(rec) == res


def test_config_validation():
    with pytest.raises(ValueError):
        AnnotateConfig(template_version="nope")
    with pytest.raises(ValueError):
        AnnotateConfig(max_in_flight=0)


def chat_body(text):
    return {"choices": [{"message": {"role": "assistant", "content": text}}],
            "usage": {"prompt_tokens": 5, "completion_tokens": 2}}


def test_http_client_request_shape(monkeypatch):
    seen = {}

    def handler(request: httpx.Request):
        seen["url"] = str(request.url)
        seen["auth"] = request.headers.get("authorization")
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json=chat_body("B cell"))

    monkeypatch.setenv("MY_TOKEN", "s3cret")
    client = HttpChatClient("http://llm.local/v1/", token_env="MY_TOKEN",
                            transport=httpx.MockTransport(handler))
    req = LlmRequest("m", "sys", "user", 0.0, {"cell_id": "c"})
    resp = client.complete(req)
    assert resp.text == "B cell" and resp.usage == {"prompt_tokens": 5, "completion_tokens": 2}
    assert seen["url"] == "http://llm.local/v1/chat/completions"
    assert seen["auth"] == "Bearer s3cret"
    assert seen["body"] == {
        "model": "m",
        "messages": [{"role": "system", "content": "sys"}, {"role": "user", "content": "user"}],
        "temperature": 0.0,
    }


def test_http_client_without_token(monkeypatch):
    monkeypatch.delenv("ABSENT_TOKEN", raising=False)
    client = HttpChatClient("http://x", token_env="ABSENT_TOKEN", transport=httpx.MockTransport(
        lambda r: httpx.Response(200, json=chat_body("ok")) if "authorization" not in r.headers
        else httpx.Response(400)))
    assert client.complete(LlmRequest("m", "s", "u")).text == "ok"


@pytest.mark.parametrize(
    "response, exc",
    [
        (httpx.Response(503), TransportError),
        (httpx.Response(429), TransportError),
        (httpx.Response(200, text="not json"), TransportError),
        (httpx.Response(200, json={"choices": []}), TransportError),
        (httpx.Response(401), RuntimeError),
    ],
)
def test_http_client_errors(response, exc):
    client = HttpChatClient("http://x", transport=httpx.MockTransport(lambda r: response))
    with pytest.raises(exc) as info:
        client.complete(LlmRequest("m", "s", "u"))
    # client errors are not retriable
    assert isinstance(info.value, TransportError) == (exc is TransportError)


def test_http_client_network_error_is_transport():
    def handler(request):
        raise httpx.ConnectError("refused", request=request)

    client = HttpChatClient("http://x", transport=httpx.MockTransport(handler))
    with pytest.raises(TransportError):
        client.complete(LlmRequest("m", "s", "u"))
