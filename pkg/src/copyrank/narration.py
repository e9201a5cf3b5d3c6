"""Turn quantitative attributions into text: insight explanations, opportunity
suggestions, self-reflection filtering, and the external judge harness.

Prompt templates live as text assets under ``copyrank/prompts`` so prompt
iteration never requires touching code. All builders are deterministic:
identical inputs render identical bytes. Filtering fails closed: when the
chat client errors, unvetted candidates are excluded rather than passed
through.
"""

from __future__ import annotations

import hashlib
import json
import re
import time
from dataclasses import dataclass, replace
from importlib import resources
from typing import Mapping, Optional, Protocol, Sequence

import numpy as np

from .errors import TransportError, ValidationError
from .indices import insight_contributions

POTENTIAL_LEVELS = ("High", "Medium", "Low")
_BIN_TO_CONVERSION = {"Strong": "High", "Medium": "Medium", "Weak": "Low"}

_BLOCK_RE = re.compile(
    r"\*\*(?P<name>[^*\n]+?)\*\*\s*:\s*(?P<body>.*?)(?=\n\s*\n|\n[^\S\n]*(?:[-*\d.)]+\s*)?\*\*|\Z)",
    re.DOTALL,
)
_QUOTE_RE = re.compile(r'"([^"]+)"')
_DECISION_RE = re.compile(r"\b(ACCEPT|REJECT)\b")
_VERDICT_RE = re.compile(r"^\s*(?:score\s*[:=]\s*)?([01])\s*[:\-,.]?\s*(.*)$", re.IGNORECASE)


class ChatClient(Protocol):
    def complete(self, system: str, user: str, temperature: float = 0.0) -> str: ...


def prompt_key(system: str, user: str, temperature: float = 0.0) -> str:
    """Stable hash of a (system, user, temperature) triple, used by the scripted mock."""
    return hashlib.sha256(
        f"{system}\x00{user}\x00{temperature:.6f}".encode()
    ).hexdigest()


class HTTPChatClient:
    """POST {"system", "user", "temperature"} -> {"text"} with bounded retries."""

    def __init__(self, url: str, timeout: float = 60.0, max_retries: int = 3, retry_wait: float = 0.5):
        self.url = url
        self.timeout = timeout
        self.max_retries = max_retries
        self.retry_wait = retry_wait

    def complete(self, system: str, user: str, temperature: float = 0.0) -> str:
        import requests

        last_error = None
        for attempt in range(self.max_retries):
            try:
                resp = requests.post(
                    self.url,
                    json={"system": system, "user": user, "temperature": temperature},
                    timeout=self.timeout,
                )
            except requests.RequestException as exc:
                last_error = exc
                time.sleep(self.retry_wait * (attempt + 1))
                continue
            if resp.status_code != 200:
                raise TransportError(f"chat endpoint {self.url} returned {resp.status_code}")
            return str(resp.json()["text"])
        raise TransportError(
            f"chat endpoint {self.url} unreachable after {self.max_retries} attempts: {last_error}"
        )


class ScriptedChatClient:
    """Canned completions keyed by prompt_key; deterministic given inputs."""

    def __init__(self, completions: Mapping[str, str]):
        self._completions = dict(completions)

    @classmethod
    def from_jsonl(cls, path) -> "ScriptedChatClient":
        completions = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    row = json.loads(line)
                    completions[row["key"]] = row["completion"]
        return cls(completions)

    def complete(self, system: str, user: str, temperature: float = 0.0) -> str:
        key = prompt_key(system, user, temperature)
        if key not in self._completions:
            raise LookupError(f"scripted client has no completion for key {key}")
        return self._completions[key]


@dataclass(frozen=True)
class InsightCandidate:
    attribute: str
    explanation: str
    cited_phrases: tuple[str, ...]
    polarity: Optional[str] = None  # "positive" | "negative"
    accepted: bool = False


@dataclass(frozen=True)
class InsightParse:
    candidates: dict[str, InsightCandidate]
    warning: Optional[str] = None


@dataclass(frozen=True)
class ReflectionResult:
    accepted: tuple[InsightCandidate, ...]
    degraded: bool = False  # client failures excluded candidates fail-closed


@dataclass(frozen=True)
class OpportunitySuggestion:
    attribute: str
    rationale: str
    examples: tuple[str, ...]  # 1-2 short illustrative copies
    learning_potential: str
    conversion_potential: str


@dataclass(frozen=True)
class JudgeVerdict:
    score: int  # 1 acceptable, 0 problematic
    justification: str
    parse_failure: bool = False


def _template(name: str) -> str:
    return resources.files("copyrank").joinpath(f"prompts/{name}.txt").read_text(
        encoding="utf-8"
    )


def _collapse_ws(text: str) -> str:
    return " ".join(text.replace("“", '"').replace("”", '"').split())


def select_insight_attributes(
    s_best, s_worst, beta_dprime, names: Sequence[str], k: int
) -> list[tuple[str, str]]:
    """Top-k attributes by strictly positive contribution, with effect polarity."""
    if k < 1:
        raise ValidationError("k must be at least 1")
    contributions = insight_contributions(s_best, s_worst, beta_dprime, names)
    survivors = [c for c in contributions if c.contribution > 0]
    survivors.sort(key=lambda c: -c.contribution)
    return [
        (c.attribute, "positive" if c.polarity > 0 else "negative")
        for c in survivors[:k]
    ]


def _treatments_block(treatments: Sequence[str]) -> str:
    return "\n".join(f'{i + 1}. "{t}"' for i, t in enumerate(treatments))


def build_insight_prompt(
    treatments_best_to_worst: Sequence[str],
    selected: Sequence[tuple[str, str]],
    exemplars: Sequence[str] = (),
) -> tuple[str, str]:
    """Render (system, user) texts; item count is fixed to the selected attributes."""
    if len(selected) == 0:
        raise ValidationError("need at least one selected attribute")
    attributes_block = "\n".join(
        f"- {name} ({polarity} effect)" for name, polarity in selected
    )
    exemplars_block = ""
    if exemplars:
        shots = "\n\n".join(exemplars)
        exemplars_block = f"\nExamples of the desired style:\n{shots}\n"
    user = _template("insight_user").format(
        treatments_block=_treatments_block(treatments_best_to_worst),
        n_attributes=len(selected),
        attributes_block=attributes_block,
        exemplars_block=exemplars_block,
    )
    return _template("insight_system"), user


def parse_insights(raw: str) -> InsightParse:
    """Extract one candidate per **Attribute**: block; malformed blocks are dropped."""
    candidates: dict[str, InsightCandidate] = {}
    for match in _BLOCK_RE.finditer(raw or ""):
        name = _collapse_ws(match.group("name"))
        body = _collapse_ws(match.group("body"))
        if not name or not body:
            continue
        cited = tuple(_QUOTE_RE.findall(body))
        candidates[name] = InsightCandidate(
            attribute=name, explanation=body, cited_phrases=cited
        )
    warning = None if candidates else "no parseable insight blocks in completion"
    return InsightParse(candidates=candidates, warning=warning)


def self_reflect(
    client: Optional[ChatClient],
    candidates: Sequence[InsightCandidate],
    treatments: Sequence[str],
    k: int,
) -> ReflectionResult:
    """Filter candidates by citation gate plus model critique; returns <= k, in order.

    The citation gate is local and unconditional: every cited phrase must be
    a substring of some treatment text (after whitespace normalization), and
    there must be at least one. Client failures exclude the candidate.
    """
    normalized_treatments = [_collapse_ws(t) for t in treatments]
    treatments_block = _treatments_block(treatments)
    system = _template("reflect_system")
    user_template = _template("reflect_user")

    accepted = []
    degraded = False
    for candidate in candidates:
        phrases = [_collapse_ws(p) for p in candidate.cited_phrases]
        grounded = bool(phrases) and all(
            any(p in t for t in normalized_treatments) for p in phrases
        )
        if not grounded:
            continue
        if client is None:
            degraded = True
            continue
        user = user_template.format(
            treatments_block=treatments_block,
            attribute=candidate.attribute,
            polarity=candidate.polarity or "unknown",
            explanation=candidate.explanation,
        )
        try:
            verdict = client.complete(system, user, temperature=0.0)
        except Exception:
            degraded = True
            continue
        decision = _DECISION_RE.search(verdict or "")
        if decision and decision.group(1) == "ACCEPT":
            accepted.append(replace(candidate, accepted=True))
        if len(accepted) == k:
            break
    return ReflectionResult(accepted=tuple(accepted), degraded=degraded)


def build_opportunity_prompt(
    treatments: Sequence[str],
    attributes: Sequence[str],
    descriptions: Optional[Mapping[str, str]] = None,
) -> tuple[str, str]:
    """Render (system, user) requesting one rationale + 1-2 example copies per attribute."""
    if len(attributes) == 0:
        raise ValidationError("need at least one missing attribute")
    lines = []
    for name in attributes:
        desc = (descriptions or {}).get(name, "")
        lines.append(f"- {name}: {desc}" if desc else f"- {name}")
    user = _template("opportunity_user").format(
        treatments_block=_treatments_block(treatments),
        n_attributes=len(attributes),
        attributes_block="\n".join(lines),
    )
    return _template("opportunity_system"), user


def _tercile_levels(values: Mapping[str, float]) -> dict[str, str]:
    # lowest tercile of the rank value = least explored = High learning potential
    vals = np.asarray(list(values.values()), dtype=float)
    lo, hi = np.quantile(vals, [1 / 3, 2 / 3])
    return {
        name: ("High" if v <= lo else ("Medium" if v <= hi else "Low"))
        for name, v in values.items()
    }


def parse_and_enrich_opportunities(
    raw: str,
    impact_bins: Mapping[str, str],
    novelty: Mapping[str, float],
) -> tuple[list[OpportunitySuggestion], Optional[str]]:
    """Parse **Attribute**: rationale + Example blocks; attach coarse potentials.

    Conversion potential maps from the attribute's impact bin; learning
    potential from the tercile of its novelty rank (low rank = unexplored =
    High). Blocks naming unknown attributes or missing a rationale are
    dropped.
    """
    levels = _tercile_levels(novelty) if novelty else {}
    suggestions = []
    for match in _BLOCK_RE.finditer(raw or ""):
        name = _collapse_ws(match.group("name"))
        body = _collapse_ws(match.group("body"))
        if name not in impact_bins:
            continue
        head, *example_parts = re.split(r"\bExamples?\s*:", body)
        rationale = head.strip()
        if not rationale:
            continue
        examples = []
        for part in example_parts:
            examples.extend(_QUOTE_RE.findall(part))
        examples = tuple(examples[:2])
        suggestions.append(
            OpportunitySuggestion(
                attribute=name,
                rationale=rationale,
                examples=examples,
                learning_potential=levels.get(name, "Medium"),
                conversion_potential=_BIN_TO_CONVERSION[impact_bins[name]],
            )
        )
    warning = None if suggestions else "no parseable opportunity blocks in completion"
    return suggestions, warning


def serialize_item(item) -> str:
    """Flatten an insight or opportunity into the judge's candidate block."""
    if isinstance(item, InsightCandidate):
        polarity = f" ({item.polarity} effect)" if item.polarity else ""
        return f"[insight] **{item.attribute}**{polarity}: {item.explanation}"
    if isinstance(item, OpportunitySuggestion):
        examples = " ".join(f'Example: "{e}"' for e in item.examples)
        return f"[opportunity] **{item.attribute}**: {item.rationale} {examples}".strip()
    return str(item)


def judge(client: ChatClient, item, treatments: Sequence[str]) -> JudgeVerdict:
    """Binary external verdict on one generated item; unparseable verdicts count as 0."""
    system = _template("judge_system")
    user = _template("judge_user").format(
        treatments_block=_treatments_block(treatments),
        item_block=serialize_item(item),
    )
    completion = client.complete(system, user, temperature=0.0)
    first_line = (completion or "").strip().splitlines()
    match = _VERDICT_RE.match(first_line[0]) if first_line else None
    if not match:
        return JudgeVerdict(score=0, justification=(completion or "").strip(), parse_failure=True)
    rest = match.group(2).strip()
    if len(first_line) > 1:
        rest = " ".join([rest] + [l.strip() for l in first_line[1:]]).strip()
    return JudgeVerdict(score=int(match.group(1)), justification=rest)


def judge_batch(
    client: ChatClient, items: Sequence, treatments: Sequence[str]
) -> tuple[list[JudgeVerdict], float]:
    """Judge every item and report the acceptance rate."""
    verdicts = [judge(client, item, treatments) for item in items]
    rate = sum(v.score for v in verdicts) / len(verdicts) if verdicts else 0.0
    return verdicts, rate
