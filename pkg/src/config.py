"""
Run configuration - JSON config files with environment overrides.

Precedence: command-line flags > environment (.env supported) > config file
> defaults. Unknown keys at any level are rejected.

Environment variables:
    P2G_SEED         run seed
    P2G_OUTPUT_DIR   output directory
    P2G_WORKERS      evaluation worker threads
    P2G_LOG_LEVEL    logging level (read by the CLI)
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, Optional

from dotenv import load_dotenv

from errors import InvalidBeta, InvalidConfig
from layout.sampling import STRATEGIES, DirectionalConfig
from models.gnn_model import ModelConfig, OptimizerConfig, TrainConfig
from dataio.synth import SynthConfig
from dataio.pages import CORPUS_FORMATS

logger = logging.getLogger(__name__)

RESOLVED_CONFIG_NAME = 'resolved_config.json'


def _from_section(cls, data: Optional[Dict[str, Any]], section: str):
    data = data or {}
    if not isinstance(data, dict):
        raise InvalidConfig(f"config section '{section}' must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise InvalidConfig(f"unknown config key(s): {', '.join(f'{section}.{k}' for k in unknown)}")
    try:
        return cls(**data)
    except TypeError as e:
        raise InvalidConfig(f"invalid '{section}' section: {e}")


@dataclass(frozen=True)
class DataConfig:
    train: str = 'data/synth/train.jsonl'
    eval: str = 'data/synth/eval.jsonl'
    format: str = 'auto'
    level: str = 'word'

    def __post_init__(self):
        if self.format not in CORPUS_FORMATS:
            raise InvalidConfig(f"data.format must be one of {CORPUS_FORMATS}")
        if self.level not in ('word', 'entity'):
            raise InvalidConfig("data.level must be 'word' or 'entity'")


@dataclass(frozen=True)
class SamplingConfig:
    strategy: str = 'directional'
    horizontal_k: int = 1
    vertical_k: int = 2
    band_overlap_min: float = 0.0
    k: int = 6
    beta: float = 1.0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise InvalidConfig(f"sampling.strategy must be one of {STRATEGIES}, got '{self.strategy}'")
        DirectionalConfig(self.horizontal_k, self.vertical_k, self.band_overlap_min)
        if self.k < 1:
            raise InvalidConfig(f"sampling.k must be >= 1, got {self.k}")
        if not 0.0 < self.beta <= 1.0:
            raise InvalidBeta(f"sampling.beta must lie in (0, 1], got {self.beta}")

    def params(self) -> Dict[str, Any]:
        """Keyword arguments for layout.sampling.sample_graph."""
        return {
            'horizontal_k': self.horizontal_k,
            'vertical_k': self.vertical_k,
            'band_overlap_min': self.band_overlap_min,
            'k': self.k,
            'beta': self.beta,
        }


@dataclass(frozen=True)
class EvalConfig:
    workers: int = 1
    split: str = 'eval'

    def __post_init__(self):
        if self.workers < 1:
            raise InvalidConfig(f"eval.workers must be >= 1, got {self.workers}")
        if self.split not in ('train', 'eval'):
            raise InvalidConfig("eval.split must be 'train' or 'eval'")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    output_dir: str = 'runs/default'
    data: DataConfig = field(default_factory=DataConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'seed': self.seed,
            'output_dir': self.output_dir,
            'data': asdict(self.data),
            'sampling': asdict(self.sampling),
            'model': self.model.to_dict(),
            'optimizer': asdict(self.optimizer),
            'training': asdict(self.training),
            'synth': self.synth.to_dict(),
            'eval': asdict(self.eval),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RunConfig':
        if not isinstance(data, dict):
            raise InvalidConfig("run config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise InvalidConfig(f"unknown config key(s): {', '.join(unknown)}")
        seed = data.get('seed', 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise InvalidConfig(f"seed must be an integer, got {seed!r}")
        return cls(
            seed=seed,
            output_dir=str(data.get('output_dir', cls.output_dir)),
            data=_from_section(DataConfig, data.get('data'), 'data'),
            sampling=_from_section(SamplingConfig, data.get('sampling'), 'sampling'),
            model=_model_section(data.get('model')),
            optimizer=_from_section(OptimizerConfig, data.get('optimizer'), 'optimizer'),
            training=_from_section(TrainConfig, data.get('training'), 'training'),
            synth=_synth_section(data.get('synth')),
            eval=_from_section(EvalConfig, data.get('eval'), 'eval'),
        )


def _model_section(data: Optional[Dict[str, Any]]) -> ModelConfig:
    try:
        return ModelConfig.from_dict(data or {})
    except TypeError as e:
        raise InvalidConfig(f"invalid 'model' section: {e}")


def _synth_section(data: Optional[Dict[str, Any]]) -> SynthConfig:
    try:
        return SynthConfig.from_dict(data or {})
    except TypeError as e:
        raise InvalidConfig(f"invalid 'synth' section: {e}")


def _env_int(name: str) -> Optional[int]:
    value = os.getenv(name)
    if value is None or value == '':
        return None
    try:
        return int(value)
    except ValueError:
        raise InvalidConfig(f"environment variable {name} must be an integer, got '{value}'")


def load_run_config(path: Optional[str] = None, seed: Optional[int] = None,
                    output_dir: Optional[str] = None, workers: Optional[int] = None) -> RunConfig:
    """
    Resolve the run configuration.

    Args:
        path: JSON config file (defaults only when None)
        seed, output_dir, workers: command-line overrides

    Returns:
        RunConfig with every value resolved
    """
    load_dotenv()

    data: Dict[str, Any] = {}
    if path:
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except OSError as e:
            raise InvalidConfig(f"cannot read config {path}: {e}")
        except json.JSONDecodeError as e:
            raise InvalidConfig(f"config {path} is not valid JSON: {e}")
        if not isinstance(data, dict):
            raise InvalidConfig(f"config {path} must hold a JSON object")

    data = json.loads(json.dumps(data))
    env_seed = _env_int('P2G_SEED')
    env_workers = _env_int('P2G_WORKERS')
    env_output = os.getenv('P2G_OUTPUT_DIR') or None

    for value, apply in (
        (env_seed, lambda v: data.__setitem__('seed', v)),
        (env_output, lambda v: data.__setitem__('output_dir', v)),
        (env_workers, lambda v: data.setdefault('eval', {}).__setitem__('workers', v)),
        (seed, lambda v: data.__setitem__('seed', v)),
        (output_dir, lambda v: data.__setitem__('output_dir', v)),
        (workers, lambda v: data.setdefault('eval', {}).__setitem__('workers', v)),
    ):
        if value is not None:
            apply(value)

    cfg = RunConfig.from_dict(data)
    logger.debug(f"Resolved config from {path or 'defaults'}: seed={cfg.seed} output_dir={cfg.output_dir}")
    return cfg


def write_resolved_config(cfg: RunConfig, out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, RESOLVED_CONFIG_NAME)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(cfg.to_dict(), f, indent=2, sort_keys=True)
    return path
