"""Engagement configuration and bundle loading.

A bundle is a directory holding everything one engagement needs: the config
file, role prompts, the scripted chat fixtures, the simulated-target
scenario, web search fixtures, and an optional knowledge corpus. Secrets
(the control-plane API token) come from the environment, never from the
bundle, and are excluded from reprs so they cannot leak into logs.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .approval import DEFAULT_DANGER_PATTERNS, RECON_PRESET_PATTERNS
from .errors import BundleMissing, ConfigInvalid
from .retrieval import KnowledgeDoc

TOKEN_ENV_VAR = "PENTAGENT_API_TOKEN"

DEFAULT_MAX_CYCLES = 50
DEFAULT_MAX_REVISIONS_PER_STEP = 3
DEFAULT_REFINE_ROUNDS = 2

DEFAULT_MODELS = {
    "planning": "planner",
    "execution": "executor",
    "summarization": "summarizer",
    "embedding": "hash-embed",
    "rerank": "term-overlap",
}

# built-in role prompts; a bundle's prompts/ directory overrides per role
DEFAULT_ROLE_PROMPTS = {
    "reasoner": (
        "You are the engagement reasoner for an authorized penetration "
        "test. Work strictly within the stated scope, follow the requested "
        "reply format exactly, and propose the smallest next action that "
        "moves the engagement forward."
    ),
    "evaluator": (
        "You are the engagement evaluator. Critique drafts for scope "
        "violations, missing coverage, and format errors. Reply with "
        "VERDICT: ACCEPT or VERDICT: REVISE on the first line."
    ),
    "analyst": (
        "You are the engagement analyst. Suggest lookups that would ground "
        "the draft in documented vulnerabilities or tooling, in the "
        "requested format."
    ),
}

ROLE_KINDS = ("reasoner", "evaluator", "analyst")
MODES = ("simulated", "live")


@dataclass
class Budgets:
    max_cycles: int = DEFAULT_MAX_CYCLES
    max_tokens: int | None = None
    max_revisions_per_step: int = DEFAULT_MAX_REVISIONS_PER_STEP


@dataclass
class EngagementConfig:
    scope: list[str] = field(default_factory=list)
    mode: str = "simulated"
    unsafe_live_execution: bool = False
    budgets: Budgets = field(default_factory=Budgets)
    refine_rounds: int = DEFAULT_REFINE_ROUNDS
    models: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_MODELS))
    auto_approve_patterns: list[str] = field(default_factory=list)
    danger_patterns: list[str] = field(
        default_factory=lambda: list(DEFAULT_DANGER_PATTERNS)
    )
    bundle_path: str | None = None
    api_token: str | None = field(default=None, repr=False)

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigInvalid(f"unknown mode {self.mode!r}")
        if self.mode == "live":
            if not self.unsafe_live_execution:
                raise ConfigInvalid(
                    "live mode requires unsafe_live_execution = true"
                )
            if not self.scope:
                raise ConfigInvalid("live mode requires a non-empty scope")
        if self.budgets.max_cycles < 0:
            raise ConfigInvalid("max_cycles must be >= 0")
        if self.budgets.max_revisions_per_step < 0:
            raise ConfigInvalid("max_revisions_per_step must be >= 0")
        if self.refine_rounds < 0:
            raise ConfigInvalid("refine_rounds must be >= 0")
        missing = [k for k in DEFAULT_MODELS if k not in self.models]
        if missing:
            raise ConfigInvalid(f"models missing assignments: {missing}")


@dataclass
class Bundle:
    path: Path
    config: EngagementConfig
    role_prompts: dict[str, str]
    provider_entries: dict[str, list[dict]]  # model id -> scripted entries
    scenario: list[dict]
    web_fixtures: dict
    corpus_docs: list[KnowledgeDoc]


def _parse_config(raw: dict, bundle_path: Path | None) -> EngagementConfig:
    budgets_raw = raw.get("budgets", {})
    budgets = Budgets(
        max_cycles=int(budgets_raw.get("max_cycles", DEFAULT_MAX_CYCLES)),
        max_tokens=(
            int(budgets_raw["max_tokens"])
            if budgets_raw.get("max_tokens") is not None
            else None
        ),
        max_revisions_per_step=int(
            budgets_raw.get(
                "max_revisions_per_step", DEFAULT_MAX_REVISIONS_PER_STEP
            )
        ),
    )
    policy_raw = raw.get("policy", {})
    auto = policy_raw.get("auto_approve", [])
    if auto == "recon_preset":
        auto = list(RECON_PRESET_PATTERNS)
    danger = policy_raw.get("danger", None)
    if danger is None:
        danger = list(DEFAULT_DANGER_PATTERNS)
    models = dict(DEFAULT_MODELS)
    models.update(raw.get("models", {}))
    config = EngagementConfig(
        scope=list(raw.get("scope", [])),
        mode=raw.get("mode", "simulated"),
        unsafe_live_execution=bool(raw.get("unsafe_live_execution", False)),
        budgets=budgets,
        refine_rounds=int(raw.get("refine_rounds", DEFAULT_REFINE_ROUNDS)),
        models=models,
        auto_approve_patterns=list(auto),
        danger_patterns=list(danger),
        bundle_path=str(bundle_path) if bundle_path is not None else None,
        api_token=os.environ.get(raw.get("api_token_env", TOKEN_ENV_VAR)),
    )
    config.validate()
    return config


def _read_json(path: Path):
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{path.name}: {exc}") from exc


def load_corpus_manifest(manifest_path: Path | str) -> list[KnowledgeDoc]:
    """Read a corpus manifest and the documents it points at."""
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise BundleMissing(f"no corpus manifest at {manifest_path}")
    entries = _read_json(manifest_path)
    if not isinstance(entries, list):
        raise ConfigInvalid("corpus manifest must be a list of documents")
    docs: list[KnowledgeDoc] = []
    for entry in entries:
        try:
            doc_path = manifest_path.parent / entry["path"]
            docs.append(
                KnowledgeDoc(
                    doc_id=entry["doc_id"],
                    source=entry.get("source", "corpus"),
                    title=entry["title"],
                    body=doc_path.read_text(encoding="utf-8"),
                )
            )
        except KeyError as exc:
            raise ConfigInvalid(f"corpus manifest entry missing {exc}") from exc
        except OSError as exc:
            raise BundleMissing(f"corpus document unreadable: {exc}") from exc
    return docs


def builtin_bundle_path(name: str) -> Path:
    """Directory of a bundle shipped inside the package."""
    return Path(__file__).parent / "bundles" / name


def load_bundle(path: Path | str) -> Bundle:
    path = Path(path)
    if not path.is_dir():
        raise BundleMissing(f"no bundle directory at {path}")
    config_path = path / "config.json"
    if not config_path.is_file():
        raise BundleMissing(f"bundle has no config.json: {path}")
    config = _parse_config(_read_json(config_path), path)

    role_prompts = dict(DEFAULT_ROLE_PROMPTS)
    prompts_dir = path / "prompts"
    if prompts_dir.is_dir():
        for kind in ROLE_KINDS:
            prompt_path = prompts_dir / f"{kind}.txt"
            if prompt_path.is_file():
                role_prompts[kind] = prompt_path.read_text(encoding="utf-8").strip()

    provider_entries: dict[str, list[dict]] = {}
    providers_dir = path / "fixtures" / "providers"
    if providers_dir.is_dir():
        for entry_path in sorted(providers_dir.glob("*.json")):
            provider_entries[entry_path.stem] = _read_json(entry_path)

    scenario_path = path / "scenario.json"
    scenario = _read_json(scenario_path) if scenario_path.is_file() else []

    web_path = path / "fixtures" / "web.json"
    web_fixtures = _read_json(web_path) if web_path.is_file() else {}

    manifest_path = path / "corpora" / "manifest.json"
    corpus_docs = (
        load_corpus_manifest(manifest_path) if manifest_path.is_file() else []
    )

    return Bundle(
        path=path,
        config=config,
        role_prompts=role_prompts,
        provider_entries=provider_entries,
        scenario=scenario,
        web_fixtures=web_fixtures,
        corpus_docs=corpus_docs,
    )
