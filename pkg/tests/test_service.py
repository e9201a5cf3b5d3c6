import json
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from fastapi.testclient import TestClient

from copyrank.narration import prompt_key, ScriptedChatClient, build_insight_prompt
from copyrank.pipeline import insight_report, opportunity_report, rank_report
from copyrank.ranker import rank_variants
from copyrank.service import create_app

VARIANTS = [
    {"id": "v1", "text": "save big today with free shipping"},
    {"id": "v2", "text": "discover the secret deal everyone loves"},
    {"id": "v3", "text": "your journey starts now"},
]

ARMS = [
    {"id": "a1", "text": "save big today with free shipping", "impressions": 1000, "clicks": 80},
    {"id": "a2", "text": "discover the secret deal everyone loves", "impressions": 1000, "clicks": 52},
    {"id": "a3", "text": "your journey starts now", "impressions": 1000, "clicks": 31},
]


@pytest.fixture()
def client(trained_bundle, trained_embedder):
    app = create_app(trained_bundle, trained_embedder)
    return TestClient(app)


def test_health(client, trained_bundle):
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json() == {"status": "ok", "bundle_version": trained_bundle.format_version}


def test_model_manifest(client, trained_bundle):
    body = client.get("/model").json()
    assert body["provider_id"] == trained_bundle.provider_id
    assert body["dims"] == trained_bundle.dims
    assert body["lambda"] == trained_bundle.impact.lam
    assert body["config_hash"] == trained_bundle.metadata["config_hash"]


def test_rank_consistent_with_library(client, trained_bundle, trained_embedder):
    response = client.post("/rank", json={"variants": VARIANTS})
    assert response.status_code == 200
    body = response.json()
    assert body["relative"] is True
    scores = [row["score"] for row in body["scored"]]
    expected_ranks = rank_variants(scores)
    assert [row["rank"] for row in body["scored"]] == list(expected_ranks)
    expected = rank_report(trained_bundle, trained_embedder, VARIANTS)
    assert body == json.loads(json.dumps(expected))


def test_rank_requires_two_variants(client):
    response = client.post("/rank", json={"variants": [VARIANTS[0]]})
    assert response.status_code == 400
    assert "2" in str(response.json()["detail"])


def test_rank_schema_violation_field_level(client):
    response = client.post("/rank", json={"variants": [{"id": "x"}, {"text": "y"}]})
    assert response.status_code == 400
    fields = {e["field"] for e in response.json()["detail"]}
    assert any("text" in f for f in fields)
    assert any("id" in f for f in fields)


def test_insights_quantitative(client, trained_bundle):
    response = client.post("/insights", json={"arms": ARMS, "k": 3})
    assert response.status_code == 200
    body = response.json()
    assert body["best_arm_id"] == "a1"
    assert body["worst_arm_id"] == "a3"
    assert len(body["contributions"]) == trained_bundle.dims["m"]
    total = sum(c["contribution"] for c in body["contributions"])
    assert np.isclose(total, body["totals"]["explained"], atol=1e-12)
    assert body["insights"] is None


def test_insights_validation(client):
    assert client.post("/insights", json={"arms": ARMS[:1]}).status_code == 400
    bad = [dict(ARMS[0]), dict(ARMS[1])]
    bad[0]["clicks"] = 5000  # clicks > impressions
    assert client.post("/insights", json={"arms": bad}).status_code == 400


def test_opportunities_with_and_without_history(client, trained_bundle):
    response = client.post("/opportunities", json={"variants": VARIANTS, "k": 2})
    assert response.status_code == 200
    body = response.json()
    m = trained_bundle.dims["m"]
    assert len(body["ranking"]["r_opp"]) == m
    assert body["ranking"]["r_novel"] is None
    assert set(body["impact_bins"].values()) <= {"Strong", "Medium", "Weak"}

    history = list(np.linspace(0.0, 1.0, m))
    with_history = client.post(
        "/opportunities",
        json={"variants": VARIANTS, "history_means": history, "k": 2},
    ).json()
    assert with_history["ranking"]["r_novel"] is not None
    assert len(with_history["ranking"]["r_novel"]) == m


def test_opportunities_history_length_checked(client):
    response = client.post(
        "/opportunities", json={"variants": VARIANTS, "history_means": [0.1, 0.2]}
    )
    assert response.status_code == 400


def test_narrated_insights_with_scripted_client(trained_bundle, trained_embedder):
    # quantitative pass to learn which attributes get selected, then script
    # the exact completions the narration path will request
    quantitative = insight_report(trained_bundle, trained_embedder, ARMS, k=2)
    selected = [(s["attribute"], s["polarity"]) for s in quantitative["selected"]]
    if not selected:
        pytest.skip("no positive-contribution attributes in this synthetic bundle")

    ctr_order = sorted(ARMS, key=lambda a: -a["clicks"] / a["impressions"])
    ordered_texts = [a["text"] for a in ctr_order]
    cited = ordered_texts[0]
    completion = "\n\n".join(
        f'**{name}**: This attribute separates winners, as in "{cited}".'
        for name, _ in selected
    )
    system, user = build_insight_prompt(ordered_texts, selected)
    script = {prompt_key(system, user, 0.0): completion}

    from copyrank import narration as narration_module

    reflect_system = narration_module._template("reflect_system")
    for name, polarity in selected:
        reflect_user = narration_module._template("reflect_user").format(
            treatments_block=narration_module._treatments_block(ordered_texts),
            attribute=name,
            polarity=polarity,
            explanation=f'This attribute separates winners, as in "{cited}".',
        )
        script[prompt_key(reflect_system, reflect_user, 0.0)] = "DECISION: ACCEPT"

    chat = ScriptedChatClient(script)
    app = create_app(trained_bundle, trained_embedder, chat_client=chat)
    with TestClient(app) as client:
        body = client.post(
            "/insights", json={"arms": ARMS, "k": 2, "narrate": True}
        ).json()
    assert body["insights"] is not None
    assert 0 < len(body["insights"]) <= 2
    for insight in body["insights"]:
        assert insight["accepted"] is True
        assert any(p in t for p in insight["cited_phrases"] for t in ordered_texts)


def test_concurrent_identical_requests_identical_bodies(client):
    payload = {"variants": VARIANTS}

    def call(_):
        return client.post("/rank", json=payload).content

    with ThreadPoolExecutor(max_workers=16) as pool:
        bodies = list(pool.map(call, range(100)))
    assert len(set(bodies)) == 1


def test_internal_error_returns_opaque_id(trained_bundle, trained_embedder):
    class ExplodingEmbedder:
        def centered(self, texts):
            raise np.linalg.LinAlgError("synthetic numeric failure")

    app = create_app(trained_bundle, ExplodingEmbedder())
    with TestClient(app, raise_server_exceptions=False) as client:
        response = client.post("/rank", json={"variants": VARIANTS})
    assert response.status_code == 500
    assert "error_id" in response.json() or "detail" in response.json()
