#!/usr/bin/env python3
"""Record live service responses as dashboard contract fixtures.

Trains a small synthetic bundle, runs the real HTTP app in-process with a
scripted chat client, captures /rank, /insights, /opportunities bodies, and
writes them under frontend/fixtures/. The dashboard's vitest suite renders
its views from exactly these files, so they stay honest recordings.
"""

import json
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))
sys.path.insert(0, str(ROOT / "tests"))

from fastapi.testclient import TestClient  # noqa: E402

from conftest import planted_corpus  # noqa: E402
from copyrank import narration  # noqa: E402
from copyrank.attributes import default_lexicon_path, load_lexicon  # noqa: E402
from copyrank.embedding import HashProvider  # noqa: E402
from copyrank.narration import ScriptedChatClient, prompt_key  # noqa: E402
from copyrank.pipeline import (  # noqa: E402
    TrainConfig,
    insight_report,
    make_embedder,
    opportunity_report,
    train_pipeline,
)
from copyrank.service import create_app  # noqa: E402

VARIANTS = [
    {"id": "draft1", "text": "Start now and save big on your first order"},
    {"id": "draft2", "text": "A new season of products has arrived"},
    {"id": "draft3", "text": "Discover the secret to everyday low prices"},
]

ARMS = [
    {"id": "draft1", "text": "Start now and save big on your first order", "impressions": 20000, "clicks": 1660},
    {"id": "draft2", "text": "A new season of products has arrived", "impressions": 20000, "clicks": 1240},
    {"id": "draft3", "text": "Discover the secret to everyday low prices", "impressions": 20000, "clicks": 905},
]


def build_script(bundle, embedder, lexicon) -> ScriptedChatClient:
    """Scripted completions for exactly the prompts the reports will send."""
    script: dict[str, str] = {}

    quantitative = insight_report(bundle, embedder, ARMS, k=3)
    selected = [(s["attribute"], s["polarity"]) for s in quantitative["selected"]]
    ordered = sorted(ARMS, key=lambda a: -a["clicks"] / a["impressions"])
    ordered_texts = [a["text"] for a in ordered]
    if selected:
        completion = "\n\n".join(
            f'**{name}**: The stronger copy leans on this attribute, quoting '
            f'"{ordered_texts[0]}", while the weakest lacks any comparable phrasing.'
            for name, _ in selected
        )
        system, user = narration.build_insight_prompt(ordered_texts, selected)
        script[prompt_key(system, user, 0.0)] = completion
        reflect_system = narration._template("reflect_system")
        for name, polarity in selected:
            reflect_user = narration._template("reflect_user").format(
                treatments_block=narration._treatments_block(ordered_texts),
                attribute=name,
                polarity=polarity,
                explanation=(
                    f'The stronger copy leans on this attribute, quoting '
                    f'"{ordered_texts[0]}", while the weakest lacks any comparable phrasing.'
                ),
            )
            script[prompt_key(reflect_system, reflect_user, 0.0)] = "DECISION: ACCEPT"

    history = list(np.linspace(0.05, 0.25, bundle.dims["m"]))
    quantitative_opp = opportunity_report(
        bundle, embedder, VARIANTS, history_means=history, k=3
    )
    picked = quantitative_opp["selected"]
    if picked:
        descriptions = {a.name: a.description for a in lexicon.attributes}
        texts = [v["text"] for v in VARIANTS]
        system, user = narration.build_opportunity_prompt(texts, picked, descriptions)
        blocks = []
        samples = {
            0: "Your trusted partner in everyday savings.",
            1: "Over 10,000 happy customers already made the switch.",
            2: "Only hours left to claim your welcome offer.",
        }
        for i, name in enumerate(picked):
            sample = samples.get(i, "See why everyone is switching today.")
            blocks.append(
                f"**{name}**: Leaning into this attribute gives the next round "
                f'a clearly differentiated angle. Example: "{sample}"'
            )
        script[prompt_key(system, user, 0.0)] = "\n\n".join(blocks)
    return ScriptedChatClient(script), history


def main() -> int:
    provider = HashProvider(dim=24, seed=5)
    lexicon = load_lexicon(default_lexicon_path())
    corpus, _ = planted_corpus(provider, n_experiments=8, arms_per=3, seed=11)
    config = TrainConfig(q=6, ridge=1e-6, lam="cv", cv_folds=4, seed=3, pca_fit="train")
    bundle = train_pipeline(corpus, lexicon, provider, config)
    embedder = make_embedder(bundle, provider)

    chat, history = build_script(bundle, embedder, lexicon)
    app = create_app(bundle, embedder, chat_client=chat)
    client = TestClient(app)

    out_dir = ROOT / "frontend" / "fixtures"
    out_dir.mkdir(parents=True, exist_ok=True)

    rank_body = client.post("/rank", json={"variants": VARIANTS}).json()
    insights_body = client.post(
        "/insights", json={"arms": ARMS, "k": 3, "narrate": True}
    ).json()
    opportunities_body = client.post(
        "/opportunities",
        json={"variants": VARIANTS, "history_means": history, "k": 3, "narrate": True},
    ).json()

    for name, body in [
        ("rank", rank_body),
        ("insights", insights_body),
        ("opportunities", opportunities_body),
    ]:
        path = out_dir / f"{name}.json"
        path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
        print(f"wrote {path}")

    assert insights_body["insights"], "expected narrated insights in the fixture"
    assert opportunities_body["suggestions"], "expected suggestions in the fixture"
    return 0


if __name__ == "__main__":
    sys.exit(main())
