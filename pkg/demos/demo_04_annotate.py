"""
Single-call annotation and evaluation
=====================================

Each cell gets one prompt built from the top-K convergence nodes and one call
to a chat-completion endpoint. Here a deterministic mock stands in for the
endpoint; swap in ``HttpChatClient(base_url)`` to talk to a real one (the
bearer token is read from ``CONVKG_LLM_API_KEY``).
"""

from convkg.annotate import AnnotateConfig, annotate, annotate_batch
from convkg.evaluation import evaluate
from convkg.llm import MockChatClient, RecordingClient
from convkg.obo import OntologyDag
from convkg.synth import build, planted_spec

data = build(planted_spec(seed=5, n_targets=20, marker_density=0.005, function_fanout=1))
dag = OntologyDag({t.id: t for t in data.terms})

# %%
# Dry run with explicit paths: the prompt is built, nothing is sent.
res = annotate(data.sentences[0], data.graph, dag, None,
               config=AnnotateConfig(include_paths=True, dry_run=True))
print("\n".join(res.request.user_prompt.splitlines()[:12]))

# %%
# A full batch against the mock. The recording wrapper logs which pipeline
# stage each cell had reached when its call went out.
client = RecordingClient(MockChatClient(echo_top_candidate=True))
results = annotate_batch(data.sentences, data.graph, dag, client, observer=client.mark)
print("calls:", len(client.calls), "stages at call time:", {s for s, _ in client.calls})

# %%
report = evaluate(results, data.sentences, dag)
print(report.to_table("convkg (mock)"))
