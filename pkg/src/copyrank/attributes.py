"""Marketing-attribute lexicon, the attribute embedding dictionary V, and scoring.

Each dictionary row is the mean of that attribute's phrase embeddings minus
the grand mean over the multiset of ALL phrases (weighted by phrase count,
not per attribute), mirroring the demeaning applied to treatments. Attribute
scores are then plain inner products s = V phi against centered treatment
embeddings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .embedding import EmbeddingCache, EmbeddingProvider, as_values, embed_batch
from .errors import DimensionMismatchError, ParseError, ValidationError


@dataclass(frozen=True)
class Attribute:
    name: str
    description: str
    phrases: tuple[str, ...]


@dataclass(frozen=True)
class AttributeLexicon:
    attributes: tuple[Attribute, ...]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    def __len__(self) -> int:
        return len(self.attributes)


@dataclass(frozen=True)
class AttributeDictionary:
    v: np.ndarray  # (m, p), row order matches names
    names: tuple[str, ...]
    provider_id: str

    def __post_init__(self):
        v = np.asarray(self.v, dtype=np.float64)
        v.setflags(write=False)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "names", tuple(self.names))
        if v.ndim != 2 or v.shape[0] != len(self.names):
            raise DimensionMismatchError("dictionary rows must match attribute names")

    @property
    def m(self) -> int:
        return int(self.v.shape[0])

    @property
    def p(self) -> int:
        return int(self.v.shape[1])


@dataclass(frozen=True)
class AttributeScores:
    values: np.ndarray  # (m,)
    treatment: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


def load_lexicon(path) -> AttributeLexicon:
    """Parse a JSON lexicon: [{"name", "description", "phrases": [...]}, ...]."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(raw, list):
        raise ParseError(f"{path}: expected a JSON array of attributes")

    attributes = []
    seen = set()
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict) or "name" not in entry or "phrases" not in entry:
            raise ParseError(f"{path}: entry {i} missing name/phrases")
        name = str(entry["name"]).strip()
        if not name:
            raise ParseError(f"{path}: entry {i} has an empty name")
        if name in seen:
            raise ValidationError(f"duplicate attribute name {name!r}")
        seen.add(name)
        phrases = tuple(str(p) for p in entry["phrases"] if str(p).strip())
        if not phrases:
            raise ValidationError(f"attribute {name!r} has no representative phrases")
        attributes.append(
            Attribute(name=name, description=str(entry.get("description", "")), phrases=phrases)
        )
    return AttributeLexicon(tuple(attributes))


def default_lexicon_path() -> Path:
    from importlib import resources

    return Path(str(resources.files("copyrank").joinpath("data/lexicon.json")))


def build_dictionary(
    provider: EmbeddingProvider,
    lexicon: AttributeLexicon,
    cache: Optional[EmbeddingCache] = None,
) -> AttributeDictionary:
    """Embed every phrase once, average per attribute, remove the phrase-weighted grand mean."""
    all_phrases = [p for attr in lexicon.attributes for p in attr.phrases]
    vectors = embed_batch(provider, all_phrases, cache=cache)
    matrix = np.vstack([v.values for v in vectors])
    grand_mean = matrix.mean(axis=0)

    rows = []
    offset = 0
    for attr in lexicon.attributes:
        count = len(attr.phrases)
        rows.append(matrix[offset : offset + count].mean(axis=0) - grand_mean)
        offset += count
    return AttributeDictionary(
        v=np.vstack(rows), names=lexicon.names, provider_id=provider.provider_id
    )


def attribute_scores(dictionary: AttributeDictionary, phi, treatment: str = "") -> AttributeScores:
    """s = V phi for one centered treatment embedding."""
    values = as_values(phi)
    if values.shape != (dictionary.p,):
        raise DimensionMismatchError(
            f"phi dim {values.shape} incompatible with dictionary p={dictionary.p}"
        )
    return AttributeScores(values=dictionary.v @ values, treatment=treatment)


def score_matrix(dictionary: AttributeDictionary, phis: np.ndarray) -> np.ndarray:
    """Rows of attribute scores for a batch of centered embeddings: (n, m)."""
    phis = np.atleast_2d(np.asarray(phis, dtype=float))
    if phis.shape[-1] != dictionary.p:
        raise DimensionMismatchError(
            f"matrix dim {phis.shape[-1]} incompatible with dictionary p={dictionary.p}"
        )
    return phis @ dictionary.v.T
