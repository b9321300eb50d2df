"""imloop: a multi-round retrieval loop for multi-hop QA.

A questioner proposes search queries turn by turn, a dense retriever and a
refiner supply evidence, and a progress tracker scores each turn against the
remaining gold passages and decides when to stop and answer. The loop's query
policy is trainable with a clipped policy-gradient on episode rewards, and
runs are scored with exact-match / token-F1 / passage-EM metrics plus McNemar
significance testing.
"""

from .corpus import CorpusStore, EpisodeSample, Passage, ingest_corpus, load_samples, normalize_answer
from .embed import CachingProvider, HashingEmbedder, RemoteEmbedder, cosine, tokenize
from .episode import Backends, EpisodeConfig, EpisodeResult, Pipeline, run_dataset, run_episode
from .eval import RunReport, evaluate_run, mcnemar_test, passage_em
from .index import SearchHit, VectorIndex, build_index
from .reasoner import (
    PolicyParams,
    ScriptedAnswerer,
    ScriptedQuestioner,
    ShortestTitleAnswerer,
    TemplatePolicyQuestioner,
    Transcript,
    Turn,
    export_sft_records,
)
from .refine import DenseRetriever, IdentityRefiner, LexicalOverlapRefiner, ListwiseLlmRefiner, RefinedSet, retrieve
from .reward import RewardBreakdown, answer_em, answer_f1, compose_reward, kl_categorical
from .tracker import TrackerState, accumulated_score, closest_gold, decide_role, score_turn
from .trainer import TrainerConfig, train_toy_questioner

__version__ = "0.1.0"
