"""Run configuration: one JSON document mirroring every module's knobs.

Unknown keys are rejected, every field has a default, and the canonical
hash of the resolved document is recorded in all run outputs.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from pydantic import BaseModel, ConfigDict, ValidationError

from .core import HcfError


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PathsConfig(_Section):
    interactions: str | None = None
    corpus: str | None = None
    items: str | None = None
    embeddings: str | None = None
    checkpoint: str | None = None


class SynthSection(_Section):
    m: int = 200
    n: int = 100
    k_topics: int = 6
    vocab_per_topic: int = 40
    doc_len: int = 60
    item_doc_len: int = 30
    sharpness: float = 10.0
    offset: float = 0.3
    noise: float = 0.05
    alpha_entity: float = 0.35
    alpha_item: float = 0.25


class FilterSection(_Section):
    rho_min: float = 0.1
    rho_max: float = 0.85


class SplitSection(_Section):
    train: float = 0.7
    val: float = 0.15
    test: float = 0.15


class EmbedSection(_Section):
    provider: str = "hashed_bow"  # "hashed_bow" | "external"
    dim: int = 256


class DcfSection(_Section):
    d: int = 64
    hidden: list[int] = [512, 256, 128, 70, 30]
    dropout: list[float] = [0.3, 0.3, 0.2, 0.2]
    delta: float = 1.0
    l2: float = 1e-4
    lr: float = 0.018
    batch_size: int = 1024
    epochs: int = 20
    neg_ratio: int = 4
    patience: int = 5
    init_mode: str = "pretrained"


class BpdmSection(_Section):
    k: int = 32
    lr: float = 0.05
    reg: float = 0.002
    epochs: int = 30
    batch_size: int = 512


class MemcfSection(_Section):
    k_neighbors: int = 0  # 0 = all neighbors


class EvalSection(_Section):
    neg_ratio: int = 4
    threshold_policy: str = "max_f1"  # "max_f1" | "fixed"
    fixed_threshold: float = 0.5
    full_negatives: bool = False  # evaluate against every unobserved pair
    models: list[str] = ["bpdm", "memcf", "stage1", "stage2", "hcf"]


class AblateSection(_Section):
    features: list[str] = ["cc", "cc_tech"]
    caps: list[int] = [50, 100, 200]
    models: list[str] = ["stage2", "hcf"]
    seeds: list[int] = [0, 1, 2]


class CommunitySection(_Section):
    threshold_kind: str = "percentile"  # "percentile" | "absolute"
    threshold_value: float = 90.0
    max_nodes: int = 0  # 0 = all entities
    top_items: int = 5
    neighbors_k: int = 10


class RunConfig(_Section):
    run_name: str = "run"
    seed: int = 42
    paths: PathsConfig = PathsConfig()
    synth: SynthSection = SynthSection()
    filter: FilterSection = FilterSection()
    split: SplitSection = SplitSection()
    embed: EmbedSection = EmbedSection()
    dcf: DcfSection = DcfSection()
    bpdm: BpdmSection = BpdmSection()
    memcf: MemcfSection = MemcfSection()
    eval: EvalSection = EvalSection()
    ablate: AblateSection = AblateSection()
    community: CommunitySection = CommunitySection()

    def config_hash(self) -> str:
        doc = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(doc.encode("utf-8")).hexdigest()[:16]


def load_config(path=None) -> RunConfig:
    """Config from a JSON file (defaults when path is None); unknown keys
    and type mismatches are reported as user errors."""
    if path is None:
        return RunConfig()
    p = Path(path)
    if not p.exists():
        raise HcfError(f"config file not found: {path}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise HcfError(f"{path}: invalid JSON: {exc}") from exc
    try:
        return RunConfig(**doc)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = ".".join(str(x) for x in first["loc"])
        raise HcfError(f"{path}: invalid config at '{loc}': {first['msg']}") from exc
