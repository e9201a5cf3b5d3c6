"""Persist and load the trained model bundle.

Single container file: an 8-byte magic, a length-prefixed JSON manifest
(human-inspectable metadata plus a blob table), the raw matrix blobs as
little-endian float64, and a trailing sha256 of everything before it.
Numerics survive the round trip bit-exactly; metadata floats round-trip
through JSON's repr-based encoding exactly as well.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .attributes import Attribute, AttributeDictionary, AttributeLexicon
from .embedding import CenteringStats
from .errors import BundleFormatError, DimensionMismatchError
from .impact import ImpactModel
from .projection import ProjectionModel
from .ranker import FitDiagnostics, RankerModel

MAGIC = b"CPRKBNDL"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelBundle:
    format_version: int
    provider_id: str
    centering: CenteringStats
    projection: ProjectionModel
    ranker: RankerModel
    dictionary: AttributeDictionary
    lexicon: AttributeLexicon
    impact: ImpactModel
    metadata: dict[str, Any]

    def __post_init__(self):
        p = self.projection.p
        if self.centering.mean.shape != (p,):
            raise DimensionMismatchError("centering mean does not match projection p")
        if self.dictionary.p != p:
            raise DimensionMismatchError("dictionary does not match projection p")
        if self.ranker.q != self.projection.q:
            raise DimensionMismatchError("ranker q does not match projection q")
        if self.impact.beta_prime.shape != (p,):
            raise DimensionMismatchError("beta_prime does not match projection p")
        if self.impact.beta_dprime.shape != (self.dictionary.m,):
            raise DimensionMismatchError("beta_dprime does not match dictionary m")

    @property
    def dims(self) -> dict[str, int]:
        return {
            "p": self.projection.p,
            "q": self.projection.q,
            "m": self.dictionary.m,
        }


def _blob(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def save_bundle(bundle: ModelBundle, path) -> None:
    """Write the bundle container; the write is atomic-ish via a temp rename."""
    blobs: list[tuple[str, np.ndarray]] = [
        ("centering_mean", bundle.centering.mean),
        ("pca_pi", bundle.projection.pi),
        ("pca_mean", bundle.projection.sample_mean),
        ("pca_explained_variance", bundle.projection.explained_variance),
        ("ranker_beta", bundle.ranker.beta),
        ("dict_v", bundle.dictionary.v),
        ("impact_beta_prime", bundle.impact.beta_prime),
        ("impact_beta_dprime", bundle.impact.beta_dprime),
        ("impact_sign_vector", bundle.impact.sign_vector),
    ]
    table = []
    payload = b""
    for name, arr in blobs:
        raw = _blob(arr)
        table.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "offset": len(payload),
                "nbytes": len(raw),
            }
        )
        payload += raw

    manifest = {
        "format_version": bundle.format_version,
        "provider_id": bundle.provider_id,
        "centering": {
            "corpus_size": bundle.centering.corpus_size,
            "corpus_tag": bundle.centering.corpus_tag,
        },
        "projection": {
            "q": bundle.projection.q,
            "p": bundle.projection.p,
            "fit_corpus_tag": bundle.projection.fit_corpus_tag,
        },
        "ranker": {
            "ridge": bundle.ranker.ridge,
            "fixed_effects": bundle.ranker.fixed_effects,
            "diagnostics": {
                "residual_variance": bundle.ranker.diagnostics.residual_variance,
                "n_experiments": bundle.ranker.diagnostics.n_experiments,
                "n_arms": bundle.ranker.diagnostics.n_arms,
            },
        },
        "lexicon": [
            {"name": a.name, "description": a.description, "phrases": list(a.phrases)}
            for a in bundle.lexicon.attributes
        ],
        "impact": {
            "lambda": bundle.impact.lam,
            "cv_trace": [[lam, err] for lam, err in bundle.impact.cv_trace],
        },
        "metadata": bundle.metadata,
        "blobs": table,
    }
    manifest_bytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()

    body = MAGIC + struct.pack("<I", len(manifest_bytes)) + manifest_bytes + payload
    digest = hashlib.sha256(body).digest()

    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(body + digest)
    tmp.replace(path)


def load_bundle(path) -> ModelBundle:
    """Read and verify a bundle container; numerically identical to what was saved."""
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 4 + 32 or raw[: len(MAGIC)] != MAGIC:
        raise BundleFormatError(f"{path}: not a model bundle (bad magic or truncated)")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise BundleFormatError(f"{path}: checksum mismatch (file corrupted or truncated)")

    (manifest_len,) = struct.unpack_from("<I", raw, len(MAGIC))
    start = len(MAGIC) + 4
    manifest = json.loads(raw[start : start + manifest_len].decode())
    if manifest["format_version"] != FORMAT_VERSION:
        raise BundleFormatError(
            f"{path}: format_version {manifest['format_version']} needs migration "
            f"(this build reads version {FORMAT_VERSION})"
        )

    blob_base = start + manifest_len
    arrays = {}
    for entry in manifest["blobs"]:
        lo = blob_base + entry["offset"]
        arrays[entry["name"]] = np.frombuffer(
            raw[lo : lo + entry["nbytes"]], dtype="<f8"
        ).reshape(entry["shape"])

    centering = CenteringStats(
        mean=arrays["centering_mean"],
        corpus_size=manifest["centering"]["corpus_size"],
        corpus_tag=manifest["centering"]["corpus_tag"],
    )
    projection = ProjectionModel(
        pi=arrays["pca_pi"],
        explained_variance=arrays["pca_explained_variance"],
        sample_mean=arrays["pca_mean"],
        fit_corpus_tag=manifest["projection"]["fit_corpus_tag"],
    )
    diag = manifest["ranker"]["diagnostics"]
    ranker = RankerModel(
        beta=arrays["ranker_beta"],
        fixed_effects=dict(manifest["ranker"]["fixed_effects"]),
        ridge=manifest["ranker"]["ridge"],
        diagnostics=FitDiagnostics(
            residual_variance=diag["residual_variance"],
            n_experiments=diag["n_experiments"],
            n_arms=diag["n_arms"],
        ),
    )
    lexicon = AttributeLexicon(
        tuple(
            Attribute(e["name"], e["description"], tuple(e["phrases"]))
            for e in manifest["lexicon"]
        )
    )
    dictionary = AttributeDictionary(
        v=arrays["dict_v"], names=lexicon.names, provider_id=manifest["provider_id"]
    )
    impact = ImpactModel(
        beta_prime=arrays["impact_beta_prime"],
        beta_dprime=arrays["impact_beta_dprime"],
        lam=manifest["impact"]["lambda"],
        sign_vector=arrays["impact_sign_vector"],
        cv_trace=tuple((lam, err) for lam, err in manifest["impact"]["cv_trace"]),
    )
    return ModelBundle(
        format_version=manifest["format_version"],
        provider_id=manifest["provider_id"],
        centering=centering,
        projection=projection,
        ranker=ranker,
        dictionary=dictionary,
        lexicon=lexicon,
        impact=impact,
        metadata=manifest["metadata"],
    )
