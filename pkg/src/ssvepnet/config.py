"""Run configuration: one JSON document covering generator, training and protocol settings."""
from dataclasses import asdict, dataclass, field, fields
import json

from .methods import METHODS, method_name
from .nn import TrainConfig
from .signal import CONDITIONS, Condition
from .synthgen import GenConfig


class ConfigError(ValueError):
    """Invalid or unknown configuration keys."""


@dataclass(frozen=True)
class ProtocolConfig:
    kind: str = "session-dependent"
    montages: tuple = ("scalp", "ear")
    speeds: tuple = ()  # empty: every speed valid for the protocol
    methods: tuple = METHODS
    k_folds: int = 5

    def __post_init__(self):
        from .evaluation import PROTOCOLS

        object.__setattr__(self, "montages", tuple(self.montages))
        object.__setattr__(self, "speeds", tuple(Condition(s).value for s in self.speeds))
        object.__setattr__(self, "methods", tuple(method_name(m) for m in self.methods))
        if self.kind not in PROTOCOLS:
            raise ConfigError(f"protocol.kind must be one of {PROTOCOLS}")
        bad = [m for m in self.montages if m not in ("scalp", "ear")]
        if bad or not self.montages:
            raise ConfigError(f"protocol.montages must be drawn from scalp, ear; got {list(self.montages)}")
        if not self.methods:
            raise ConfigError("protocol.methods is empty")
        if self.k_folds < 2:
            raise ConfigError("protocol.k_folds must be >= 2")

    def resolved_speeds(self):
        if self.speeds:
            return list(self.speeds)
        skip = Condition.STANDING.value if self.kind == "session-to-session" else None
        return [c.value for c in CONDITIONS if c.value != skip]


def _section(cls, data, name):
    if not isinstance(data, dict):
        raise ConfigError(f"{name} must be a JSON object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown keys in {name}: {', '.join(unknown)}")
    try:
        return cls(**data)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    jobs: int = 1
    quiet: bool = False
    generator: GenConfig = field(default_factory=GenConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)

    def to_dict(self):
        return {
            "seed": self.seed,
            "jobs": self.jobs,
            "quiet": self.quiet,
            "generator": self.generator.to_dict(),
            "train": asdict(self.train),
            "protocol": {**asdict(self.protocol), "montages": list(self.protocol.montages),
                         "speeds": list(self.protocol.speeds), "methods": list(self.protocol.methods)},
        }

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        top = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - top)
        if unknown:
            raise ConfigError(f"unknown keys: {', '.join(unknown)}")
        kw = {k: d[k] for k in ("seed", "jobs", "quiet") if k in d}
        if "generator" in d:
            kw["generator"] = _section(GenConfig, d["generator"], "generator")
        if "train" in d:
            kw["train"] = _section(TrainConfig, d["train"], "train")
        if "protocol" in d:
            kw["protocol"] = _section(ProtocolConfig, d["protocol"], "protocol")
        cfg = cls(**kw)
        if not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool):
            raise ConfigError("seed must be an integer")
        if not isinstance(cfg.jobs, int) or cfg.jobs < 1:
            raise ConfigError("jobs must be a positive integer")
        return cfg

    def dumps(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def loads(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.loads(fh.read())
