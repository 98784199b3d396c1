"""One flat configuration namespace shared by the library and the CLI.

Config files are plain ``key = value`` lines (``#`` starts a comment).
Command-line flags override file values, which override the defaults below.
The same schema drives ``--help`` text, file parsing, validation, and the
effective-config echo written next to every command's outputs.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Any

from .data import SyntheticSpec
from .errors import ConfigError

KINDS = ("implicit", "explicit", "relative")
MODELS = ("genli", "avg_pool", "sim_soft")


def _field(default, help_text: str):
    if isinstance(default, (tuple, list)):
        return dataclasses.field(default_factory=lambda: tuple(default),
                                 metadata={"help": help_text})
    return dataclasses.field(default=default, metadata={"help": help_text})


@dataclasses.dataclass
class Config:
    # shared
    seed: int = _field(42, "base seed for data generation, init, and shuffling")
    seq_len: int = _field(100, "L: newest behaviors kept per user history")

    # model
    model: str = _field("genli", "model family: genli | avg_pool | sim_soft")
    window: int = _field(10, "l: newest behaviors feeding interest generation")
    dim_item: int = _field(4, "item embedding width")
    dim_category: int = _field(4, "category embedding width")
    n_buckets: int = _field(4096, "N: hashed id space of interest distributions")
    heads: int = _field(4, "attention heads in every attention block")
    head_dim: int = _field(8, "per-head width; also the attention output width")
    mlp_hidden: tuple = _field((200, 80), "hidden widths of the distribution MLPs")
    ctr_hidden: tuple = _field((200, 80), "hidden widths of the click-probability MLP")
    top_k: int = _field(20, "k: behaviors retrieved per interest distribution")
    interest_kinds: tuple = _field(KINDS, "active interest distributions")

    # training
    alpha: float = _field(1.0, "weight of the implicit (exposure) loss")
    beta: float = _field(1.0, "weight of the explicit (click) loss")
    learning_rate: float = _field(0.001, "Adam learning rate")
    batch_size: int = _field(256, "training batch size")
    epochs: int = _field(2, "training epoch budget")
    shuffle: bool = _field(True, "reshuffle training samples every epoch")
    early_stop: bool = _field(False, "stop after 3 epochs without AUC gain")

    # synthetic data
    n_users: int = _field(2000, "synthetic: number of users")
    n_items: int = _field(600, "synthetic: catalog size")
    n_categories: int = _field(30, "synthetic: number of categories")
    clusters_per_user: int = _field(3, "synthetic: active interest clusters per user")
    impressions_per_user: int = _field(50, "synthetic: impressions logged per user")
    p_click_in: float = _field(0.9, "synthetic: click rate on active-cluster targets")
    p_click_out: float = _field(0.1, "synthetic: click rate elsewhere")
    noise_rate: float = _field(0.2, "synthetic: chance of a random history item")
    recur_rate: float = _field(0.15, "synthetic: old-history revisits of active clusters")
    active_fraction: float = _field(0.5, "synthetic: newest history share from active clusters")
    active_share: float = _field(0.5, "synthetic: exposure share of active targets")
    expired_share: float = _field(0.25, "synthetic: exposure share of expired targets")
    train_fraction: float = _field(0.8, "synthetic: per-user share of training impressions")
    favorites_per_cluster: int = _field(0, "synthetic: signature items per cluster (0 = off)")
    favorite_rate: float = _field(0.5, "synthetic: chance a cluster slot repeats a signature item")
    favorite_exposure: float = _field(0.5, "synthetic: chance a cluster target is a signature item")
    p_click_near: float = _field(0.3, "synthetic: click rate on active non-signature targets")
    fresh_slots: int = _field(0, "synthetic: newest slots kept free of signature items")

    # benchmarks
    bench_lengths: tuple = _field((1000, 2000, 4000, 8000, 16000, 32000, 64000),
                                  "history lengths swept by the benchmarks")
    bench_head_dims: tuple = _field((8, 16, 32, 64, 128),
                                    "head widths swept by the scoring benchmark")
    hash_bits: int = _field(64, "signature bits for the hashing kernels")
    hash_rounds: int = _field(4, "rounds for the collision-selection kernel")
    bench_reps: int = _field(5, "timing repetitions per measurement")
    bench_batch: int = _field(8192, "samples per end-to-end latency batch")
    bench_users: int = _field(64, "distinct users inside a latency batch")


def config_fields() -> list[dataclasses.Field]:
    return list(dataclasses.fields(Config))


def _parse_value(f: dataclasses.Field, text: str) -> Any:
    text = text.strip()
    base = Config()
    current = getattr(base, f.name)
    try:
        if isinstance(current, bool):
            if text.lower() in ("true", "1", "yes"):
                return True
            if text.lower() in ("false", "0", "no"):
                return False
            raise ValueError(text)
        if isinstance(current, int):
            return int(text)
        if isinstance(current, float):
            return float(text)
        if isinstance(current, tuple):
            parts = [p.strip() for p in text.split(",") if p.strip()]
            if current and isinstance(current[0], int):
                return tuple(int(p) for p in parts)
            return tuple(parts)
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {f.name!r}: {text!r}") from exc


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def read_config_file(path: str | Path) -> dict[str, str]:
    raw: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
            key, value = stripped.split("=", 1)
            raw[key.strip()] = value.strip()
    return raw


def build_config(file_values: dict[str, str] | None = None,
                 overrides: dict[str, str] | None = None) -> Config:
    """Defaults, then file values, then explicit overrides; unknown keys fail."""
    by_name = {f.name: f for f in config_fields()}
    cfg = Config()
    for source in (file_values or {}), (overrides or {}):
        for key, text in source.items():
            f = by_name.get(key)
            if f is None:
                raise ConfigError(f"unknown config key {key!r}")
            setattr(cfg, key, _parse_value(f, text))
    validate(cfg)
    return cfg


def validate(cfg: Config) -> None:
    positive = ("seq_len", "window", "dim_item", "dim_category", "n_buckets",
                "heads", "head_dim", "top_k", "batch_size", "epochs",
                "hash_bits", "hash_rounds", "bench_reps", "bench_batch",
                "bench_users")
    for name in positive:
        if getattr(cfg, name) < 1:
            raise ConfigError(f"{name} must be positive, got {getattr(cfg, name)}")
    if cfg.window > cfg.seq_len:
        raise ConfigError(f"window ({cfg.window}) cannot exceed seq_len ({cfg.seq_len})")
    if cfg.model not in MODELS:
        raise ConfigError(f"model must be one of {MODELS}, got {cfg.model!r}")
    kinds = tuple(cfg.interest_kinds)
    if not kinds:
        raise ConfigError("interest_kinds must not be empty")
    if len(set(kinds)) != len(kinds):
        raise ConfigError("interest_kinds contains duplicates")
    for kind in kinds:
        if kind not in KINDS:
            raise ConfigError(f"unknown interest kind {kind!r}")
    if "relative" in kinds and not {"implicit", "explicit"} <= set(kinds):
        raise ConfigError("the relative distribution needs both the implicit "
                          "and explicit ones; adjust interest_kinds")
    for name in ("alpha", "beta"):
        if getattr(cfg, name) < 0:
            raise ConfigError(f"{name} must be non-negative")
    if cfg.learning_rate <= 0:
        raise ConfigError("learning_rate must be positive")
    if cfg.hash_bits > 64:
        raise ConfigError("hash_bits beyond 64 is not supported")
    spec = synthetic_spec(cfg)
    spec.validate()


def synthetic_spec(cfg: Config) -> SyntheticSpec:
    return SyntheticSpec(
        seed=cfg.seed, n_users=cfg.n_users, n_items=cfg.n_items,
        n_categories=cfg.n_categories, clusters_per_user=cfg.clusters_per_user,
        seq_len=cfg.seq_len, impressions_per_user=cfg.impressions_per_user,
        p_click_in=cfg.p_click_in, p_click_out=cfg.p_click_out,
        noise_rate=cfg.noise_rate, recur_rate=cfg.recur_rate,
        active_fraction=cfg.active_fraction,
        active_share=cfg.active_share, expired_share=cfg.expired_share,
        train_fraction=cfg.train_fraction,
        favorites_per_cluster=cfg.favorites_per_cluster,
        favorite_rate=cfg.favorite_rate,
        favorite_exposure=cfg.favorite_exposure,
        p_click_near=cfg.p_click_near,
        fresh_slots=cfg.fresh_slots,
    )


def effective_config_text(cfg: Config) -> str:
    """The fully resolved configuration, in the same format files use."""
    lines = [f"{f.name} = {format_value(getattr(cfg, f.name))}"
             for f in config_fields()]
    return "\n".join(lines) + "\n"


def write_effective_config(cfg: Config, out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "effective_config.txt"
    path.write_text(effective_config_text(cfg))
    return path
