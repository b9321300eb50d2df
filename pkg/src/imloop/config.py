"""Declarative run configuration: strict JSON loading, a reproducibility
fingerprint, and factories that turn config sections into live components."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path

from .corpus import CorpusStore, ingest_corpus, load_samples
from .embed import DEFAULT_DIM, EmbeddingProvider, HashingEmbedder, RemoteEmbedder
from .episode import Backends, EpisodeConfig, Pipeline
from .index import VectorIndex, build_index
from .llm import ChatEndpoint
from .refine import (
    DEFAULT_TOP_K,
    DenseRetriever,
    IdentityRefiner,
    LexicalOverlapRefiner,
    ListwiseLlmRefiner,
)
from .reasoner import (
    LlmAnswerer,
    LlmQuestioner,
    PolicyParams,
    QuestionEchoQuestioner,
    ScriptedAnswerer,
    ScriptedQuestioner,
    ShortestTitleAnswerer,
    TemplatePolicyQuestioner,
)
from .trainer import TrainerConfig, load_policy


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field path."""


@dataclass(frozen=True)
class ProviderConfig:
    kind: str = "hash-local"  # hash-local | http-remote
    dim: int = DEFAULT_DIM
    endpoint: str = ""
    batch_size: int = 64


@dataclass(frozen=True)
class IndexConfig:
    variant: str = "exact"  # exact | ivf
    num_clusters: int = 64
    num_probes: int = 16
    path: str = ""  # optional persisted-index location


@dataclass(frozen=True)
class RefinerConfig:
    kind: str = "lexical"  # identity | lexical | llm-listwise
    top_k: int = DEFAULT_TOP_K
    endpoint: str = ""
    model: str = "default"


@dataclass(frozen=True)
class QuestionerConfig:
    kind: str = "question-echo"  # question-echo | scripted | template-policy | llm
    queries: tuple[str, ...] = ()
    templates: tuple[str, ...] = ()
    policy_path: str = ""
    greedy: bool = False
    endpoint: str = ""
    model: str = "default"


@dataclass(frozen=True)
class AnswererConfig:
    kind: str = "shortest-title"  # shortest-title | scripted | llm
    answer: str = ""
    endpoint: str = ""
    model: str = "default"


@dataclass(frozen=True)
class AppConfig:
    corpus_path: str = ""
    corpus_format: str = "jsonl"
    samples_path: str = ""
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    index: IndexConfig = field(default_factory=IndexConfig)
    refiner: RefinerConfig = field(default_factory=RefinerConfig)
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    questioner: QuestionerConfig = field(default_factory=QuestionerConfig)
    answerer: AnswererConfig = field(default_factory=AnswererConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    output_dir: str = "runs/out"
    seed: int = 0
    parallelism: int = 1


def _build_dataclass(cls, data: object, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}: unknown key")
    kwargs = {}
    for name, value in data.items():
        where = f"{path}.{name}"
        sub = _nested_dataclass(cls, name)
        if sub is not None:
            kwargs[name] = _build_dataclass(sub, value, where)
        else:
            kwargs[name] = _coerce(value, cls, name, where)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _nested_dataclass(cls, name: str):
    """The field's dataclass type, or None for scalar fields. Annotations are
    stored as strings (future annotations), so resolve through the module."""
    import sys

    annotation = cls.__dataclass_fields__[name].type
    if is_dataclass(annotation):
        return annotation
    if isinstance(annotation, str):
        candidate = getattr(sys.modules[cls.__module__], annotation, None)
        if candidate is None:
            candidate = globals().get(annotation)
        if candidate is not None and is_dataclass(candidate):
            return candidate
    return None


def _coerce(value, cls, name: str, where: str):
    default = next(f for f in fields(cls) if f.name == name)
    template = default.default if default.default is not dataclasses.MISSING else None
    if template is None and default.default_factory is not dataclasses.MISSING:  # type: ignore[misc]
        template = default.default_factory()  # type: ignore[misc]
    if isinstance(template, tuple) and isinstance(value, list):
        return tuple(value)
    if isinstance(template, bool) and not isinstance(value, bool):
        raise ConfigError(f"{where}: expected a boolean")
    if isinstance(template, int) and not isinstance(template, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        return int(value)
    if isinstance(template, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        return float(value)
    if isinstance(template, str) and not isinstance(value, str):
        raise ConfigError(f"{where}: expected a string")
    return value


def load_config(path: str | Path) -> AppConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc.msg}") from exc
    return _build_dataclass(AppConfig, data, "config")


def config_to_json(config: AppConfig) -> dict:
    return dataclasses.asdict(config)


def save_config(path: str | Path, config: AppConfig) -> None:
    data = config_to_json(config)
    # tuples serialize as lists
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, default=list)
        fh.write("\n")


def fingerprint(config: AppConfig) -> str:
    """Hash of the fully resolved configuration (seed included); identical
    fingerprints with deterministic components imply byte-identical outputs."""
    canonical = json.dumps(config_to_json(config), sort_keys=True, default=list)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


# --------------------------------------------------------------------------
# factories


def build_provider(cfg: ProviderConfig) -> EmbeddingProvider:
    if cfg.kind == "hash-local":
        return HashingEmbedder(dim=cfg.dim)
    if cfg.kind == "http-remote":
        if not cfg.endpoint:
            raise ConfigError("config.provider.endpoint: required for http-remote")
        return RemoteEmbedder(endpoint=cfg.endpoint, dim=cfg.dim, batch_size=cfg.batch_size)
    raise ConfigError(f"config.provider.kind: unknown kind {cfg.kind!r}")


def build_refiner(cfg: RefinerConfig):
    if cfg.kind == "identity":
        return IdentityRefiner(top_k=cfg.top_k)
    if cfg.kind == "lexical":
        return LexicalOverlapRefiner(top_k=cfg.top_k)
    if cfg.kind == "llm-listwise":
        if not cfg.endpoint:
            raise ConfigError("config.refiner.endpoint: required for llm-listwise")
        return ListwiseLlmRefiner(ChatEndpoint(url=cfg.endpoint, model=cfg.model), top_k=cfg.top_k)
    raise ConfigError(f"config.refiner.kind: unknown kind {cfg.kind!r}")


def build_questioner(cfg: QuestionerConfig):
    if cfg.kind == "question-echo":
        return QuestionEchoQuestioner()
    if cfg.kind == "scripted":
        if not cfg.queries:
            raise ConfigError("config.questioner.queries: required for scripted")
        return ScriptedQuestioner(tuple(cfg.queries))
    if cfg.kind == "template-policy":
        if cfg.policy_path:
            params = load_policy(cfg.policy_path)
        elif cfg.templates:
            params = PolicyParams.uniform(2, cfg.templates)
        else:
            raise ConfigError("config.questioner: template-policy needs templates or policy_path")
        return TemplatePolicyQuestioner(params, greedy=cfg.greedy)
    if cfg.kind == "llm":
        if not cfg.endpoint:
            raise ConfigError("config.questioner.endpoint: required for llm")
        return LlmQuestioner(ChatEndpoint(url=cfg.endpoint, model=cfg.model))
    raise ConfigError(f"config.questioner.kind: unknown kind {cfg.kind!r}")


def build_answerer(cfg: AnswererConfig):
    if cfg.kind == "shortest-title":
        return ShortestTitleAnswerer()
    if cfg.kind == "scripted":
        return ScriptedAnswerer(cfg.answer)
    if cfg.kind == "llm":
        if not cfg.endpoint:
            raise ConfigError("config.answerer.endpoint: required for llm")
        return LlmAnswerer(ChatEndpoint(url=cfg.endpoint, model=cfg.model))
    raise ConfigError(f"config.answerer.kind: unknown kind {cfg.kind!r}")


def load_store(config: AppConfig) -> CorpusStore:
    if not config.corpus_path:
        raise ConfigError("config.corpus_path: required")
    store = ingest_corpus(config.corpus_path, config.corpus_format)
    if config.samples_path:
        store = store.with_samples(load_samples(config.samples_path, store))
    return store


def build_pipeline(config: AppConfig, store: CorpusStore | None = None) -> Pipeline:
    """Assemble the full retrieval stack, loading a persisted index when the
    config names one that exists, building (and saving) it otherwise."""
    store = store if store is not None else load_store(config)
    provider = build_provider(config.provider)
    index_path = Path(config.index.path) if config.index.path else None
    if index_path and index_path.exists():
        index = VectorIndex.load(index_path)
    else:
        index = build_index(
            store,
            provider,
            variant=config.index.variant,
            num_clusters=config.index.num_clusters,
            num_probes=config.index.num_probes,
            seed=config.seed,
        )
        if index_path:
            index.save(index_path)
    return Pipeline(
        retriever=DenseRetriever(index, store, provider),
        refiner=build_refiner(config.refiner),
        provider=provider,
        store=store,
    )


def build_backends(config: AppConfig) -> Backends:
    return Backends(
        questioner=build_questioner(config.questioner),
        answerer=build_answerer(config.answerer),
    )


# --------------------------------------------------------------------------
# ablation presets


ABLATION_PRESETS = ("no-refiner", "no-im")


def apply_ablation(config: AppConfig, preset: str) -> AppConfig:
    """no-refiner: pass the retriever's top-5 through untouched.
    no-im: single-shot retrieval using the question as the only query."""
    if preset == "no-refiner":
        return dataclasses.replace(
            config, refiner=dataclasses.replace(config.refiner, kind="identity", top_k=5)
        )
    if preset == "no-im":
        return dataclasses.replace(
            config,
            questioner=QuestionerConfig(kind="question-echo"),
            episode=dataclasses.replace(config.episode, max_turns=1),
        )
    raise ConfigError(f"unknown ablation preset {preset!r} (choose from {ABLATION_PRESETS})")
