"""Experiment configuration: TOML sections validated by pydantic."""
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import List, Literal, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from cpcssl.core.exceptions import ConfigError

SSL_MODES = ("cpc", "ccpc")
DEFAULT_D_Z = 64


class DataSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["synthetic", "idx", "text"] = "synthetic"
    synthetic_dir: Optional[str] = None
    synthetic_count: int = Field(1000, ge=1)
    synthetic_classes: int = Field(10, ge=2)
    synthetic_latent: int = Field(4, ge=1)
    synthetic_noise: float = Field(0.5, ge=0.0)
    synthetic_patch_dim: int = Field(16, ge=1)
    synthetic_length: int = Field(5, ge=2)
    synthetic_class_scale: float = Field(1.0, ge=0.0)
    synthetic_distractor_dim: int = Field(0, ge=0)
    synthetic_distractor_sigma: float = Field(1.0, ge=0.0)
    images: Optional[str] = None
    labels: Optional[str] = None
    test_images: Optional[str] = None
    test_labels: Optional[str] = None
    train_text: Optional[str] = None
    test_text: Optional[str] = None
    unlabeled_text: Optional[str] = None
    max_items: Optional[int] = Field(None, ge=1)
    labeled_fraction: float = Field(0.01, gt=0.0, le=1.0)
    split_manifest: Optional[str] = None
    image_size: int = Field(28, ge=1)
    patch: int = Field(12, ge=1)
    patch_stride: int = Field(4, ge=1)
    max_tokens: int = Field(24, ge=5)
    vocab_size: int = Field(20000, ge=1)
    eval_count: int = Field(0, ge=0, description="0 evaluates every item")


class ModelSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    t: int = Field(2, ge=1)
    K: int = Field(3, ge=1)
    N: int = Field(8, ge=2)
    d_z: Optional[int] = Field(None, ge=1, description="defaults to 64, or 3*text_filters for text")
    d_c: int = Field(64, ge=1)
    conv_layers: List[Tuple[int, int, int]] = Field(default_factory=lambda: [(32, 3, 1), (64, 3, 1), (64, 3, 2)])
    hidden: int = Field(0, ge=0)
    text_embed: int = Field(32, ge=1)
    text_filters: int = Field(32, ge=1)
    init_scale: float = Field(1.0, gt=0.0)


class TrainSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: Literal["cpc", "ccpc", "supervised-only"] = "cpc"
    learning_rate: float = Field(1e-3, gt=0.0)
    batch_size: int = Field(16, ge=1)
    epochs: int = Field(10, ge=0)
    alpha: Optional[float] = Field(None, ge=0.0, description="defaults to 8 * |unlabeled| / |labeled|")
    weight_decay: Optional[float] = Field(None, ge=0.0, description="supervised-only; 1e-4 images, 1e-3 text")
    seed: int = Field(0, ge=0)
    checkpoint_every: int = Field(1, ge=1)
    eval_every: int = Field(1, ge=1)
    k_list: List[int] = Field(default_factory=lambda: [1, 5])
    record_wall_time: bool = False


class CcpcSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    tau: float = Field(1.0, gt=0.0)
    anneal: float = Field(0.97, gt=0.0, le=1.0)
    tau_min: float = Field(0.1, gt=0.0)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    data: DataSection = Field(default_factory=DataSection)
    model: ModelSection = Field(default_factory=ModelSection)
    train: TrainSection = Field(default_factory=TrainSection)
    ccpc: CcpcSection = Field(default_factory=CcpcSection)

    @property
    def ssl(self) -> bool:
        return self.train.mode in SSL_MODES

    def cpc_config(self):
        from cpcssl.cpc.params import CpcConfig

        return CpcConfig(self.model.t, self.model.K, self.model.N, self.model.d_z or DEFAULT_D_Z, self.model.d_c)

    def gumbel(self):
        from cpcssl.objectives.ccpc_ssl import GumbelConfig

        return GumbelConfig(self.ccpc.tau, self.ccpc.anneal, self.ccpc.tau_min)

    def resolve(self, n_labeled: int, n_unlabeled: int) -> "ExperimentConfig":
        """Copy with data-dependent defaults filled: alpha = 8*rho, text d_z, baseline weight decay."""
        text = self.data.kind == "text"
        model = self.model.model_copy(update={"d_z": self.model.d_z or (3 * self.model.text_filters if text else DEFAULT_D_Z)})
        train = self.train
        if train.alpha is None:
            rho = n_unlabeled / n_labeled if n_labeled else 0.0
            train = train.model_copy(update={"alpha": 8.0 * rho})
        if train.weight_decay is None:
            decay = (1e-3 if text else 1e-4) if train.mode == "supervised-only" else 0.0
            train = train.model_copy(update={"weight_decay": decay})
        return self.model_copy(update={"model": model, "train": train})


def key_line(text: str, section: str, key: str) -> int:
    """1-based line of ``key`` inside ``[section]``; 0 when absent."""
    current = ""
    pattern = re.compile(rf"^\s*{re.escape(key)}\s*=")
    header = re.compile(r"^\s*\[([^\]]+)\]")
    for number, line in enumerate(text.splitlines(), start=1):
        match = header.match(line)
        if match:
            current = match.group(1).strip()
        elif current == section and pattern.match(line):
            return number
    return 0


def parse_override(item: str) -> Tuple[str, str, object]:
    """``section.key=value``; the value is read as a TOML scalar, else kept as a bare string."""
    name, sep, raw = item.partition("=")
    section, dot, key = name.strip().partition(".")
    if not sep or not dot or not section or not key:
        raise ConfigError(f"override must look like section.key=value, got {item!r}", key=name.strip())
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return section, key, value


def _raise_validation(exc: ValidationError, text: str) -> None:
    first = exc.errors()[0]
    loc = [str(p) for p in first["loc"]]
    section, key = (loc + ["", ""])[:2]
    raise ConfigError(first["msg"], key=".".join(p for p in loc[:2] if p), line=key_line(text, section, key))


def check_constraints(cfg: ExperimentConfig, text: str = "") -> None:
    """Cross-field rules that single-field validation cannot express."""
    def fail(message: str, section: str, key: str):
        raise ConfigError(message, key=f"{section}.{key}", line=key_line(text, section, key))

    if cfg.ssl and cfg.train.batch_size % 2:
        fail(f"batch_size {cfg.train.batch_size} must be even in {cfg.train.mode} mode", "train", "batch_size")
    if cfg.ssl and cfg.data.labeled_fraction >= 1.0:
        fail(f"labeled_fraction must be < 1 in {cfg.train.mode} mode", "data", "labeled_fraction")
    if cfg.ccpc.tau < cfg.ccpc.tau_min:
        fail(f"tau {cfg.ccpc.tau} is below tau_min {cfg.ccpc.tau_min}", "ccpc", "tau")
    if any(k < 1 for k in cfg.train.k_list):
        fail(f"k_list entries must be >= 1, got {cfg.train.k_list}", "train", "k_list")
    if cfg.data.kind == "idx" and not (cfg.data.images and cfg.data.labels):
        fail("idx data needs both images and labels", "data", "images")
    if cfg.data.kind == "text" and not cfg.data.train_text:
        fail("text data needs train_text", "data", "train_text")
    if cfg.data.synthetic_length < cfg.model.t + cfg.model.K and cfg.data.kind == "synthetic" and not cfg.data.synthetic_dir:
        fail(f"synthetic_length {cfg.data.synthetic_length} shorter than t+K", "data", "synthetic_length")


def parse_config_text(text: str, overrides: Sequence[str] = ()) -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}")
    for item in overrides:
        section, key, value = parse_override(item)
        target = raw.setdefault(section, {})
        if not isinstance(target, dict):
            raise ConfigError(f"{section} is not a section", key=section)
        target[key] = value
    try:
        cfg = ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        _raise_validation(exc, text)
    check_constraints(cfg, text)
    return cfg


def parse_config(path: Union[str, Path, None], overrides: Sequence[str] = ()) -> ExperimentConfig:
    """Validated config from a TOML file (or defaults when ``path`` is None) plus ``--set`` overrides."""
    text = ""
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}")
    return parse_config_text(text, overrides)
