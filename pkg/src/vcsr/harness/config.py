"""Training configuration, profiles and the flat ``key=value`` config file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

from ..causalsim.synthetic import DatasetSpec


@dataclass
class TrainConfig:
    # architecture
    d: int = 512
    m: int = 6
    k: int = 4
    isa_layers: int = 2
    mmt_layers: int = 3
    heads: int = 8
    question_layers: int = 1
    ffn_mult: int = 4
    cma_dk: int = 0                 # 0 -> d
    readout: str = "mean"
    max_question_len: int = 16
    # scene separation / contrastive
    n_negatives: int = 4
    tau: float = 0.0                # 0 -> 1/T
    pool_capacity: int = 512
    hard_selection: bool = True
    vc_temperature: float = 0.0     # 0 -> raw dot products
    # objective
    alpha: float = 0.0125
    beta: float = 0.04
    # Gumbel temperature schedule
    temp_start: float = 1.0
    temp_end: float = 0.3
    temp_decay: str = "linear"
    # optimizer
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.99
    weight_decay: float = 0.0
    epochs: int = 50
    plateau_patience: int = 5
    batch_size: int = 32
    seed: int = 0
    # ablations
    use_qgr: bool = True
    use_css: bool = True
    use_vc: bool = True
    use_sp: bool = True
    mode: str = "mc"
    profile: str = "paper"

    def validate(self) -> None:
        if self.d % self.heads:
            raise ValueError(f"d={self.d} not divisible by heads={self.heads}")
        if min(self.d, self.m, self.k, self.isa_layers, self.mmt_layers, self.heads) < 1:
            raise ValueError("sizes must be positive")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.n_negatives < 0:
            raise ValueError("n_negatives must be >= 0")
        if not 0 < self.temp_end <= self.temp_start:
            raise ValueError("need 0 < temp_end <= temp_start")
        if self.temp_decay not in ("linear", "constant"):
            raise ValueError(f"unknown temperature decay {self.temp_decay!r}")
        if self.mode not in ("mc", "open"):
            raise ValueError(f"mode must be 'mc' or 'open', got {self.mode!r}")
        if self.readout not in ("mean", "cls"):
            raise ValueError(f"unknown readout {self.readout!r}")
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 0 or self.plateau_patience < 1:
            raise ValueError("invalid optimizer settings")

    @property
    def effective_alpha(self) -> float:
        return self.alpha if (self.use_vc and self.use_css) else 0.0

    @property
    def effective_beta(self) -> float:
        return self.beta if (self.use_sp and self.use_css) else 0.0

    def temperature(self, step: int, total_steps: int) -> float:
        if self.temp_decay == "constant" or total_steps <= 1:
            return self.temp_start
        frac = min(1.0, step / (total_steps - 1))
        return self.temp_start + (self.temp_end - self.temp_start) * frac

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **kw) -> "TrainConfig":
        return dataclasses.replace(self, **kw)


PROFILES: dict[str, dict[str, Any]] = {
    "paper": {},
    "desk": {"d": 64, "lr": 3e-4, "batch_size": 32, "epochs": 8, "plateau_patience": 5,
             "isa_layers": 1, "mmt_layers": 1, "ffn_mult": 2, "profile": "desk"},
    "micro": {"d": 8, "heads": 2, "m": 3, "k": 2, "n_negatives": 2, "isa_layers": 1,
              "mmt_layers": 1, "epochs": 1, "batch_size": 4, "lr": 1e-3, "profile": "micro"},
}

# confounded regime used for the desk-scale recovery experiment
DESK_DATA = DatasetSpec(n_train=2000, n_val=200, n_test=500, rho_train=0.9, rho_test=0.1,
                        n_families=2, confound_amp=1.5, mode="open")

ABLATIONS: dict[str, dict[str, Any]] = {
    "full": {},
    "no_qgr": {"use_qgr": False},
    "no_css": {"use_css": False},
    "no_sp": {"use_sp": False},
    "no_vc": {"use_vc": False},
}
STAR = {"use_qgr": False, "use_css": False, "use_vc": False, "use_sp": False,
        "alpha": 0.0, "beta": 0.0}


def make_config(profile: str = "paper", **overrides) -> TrainConfig:
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    cfg = TrainConfig(**{**PROFILES[profile], **overrides})
    cfg.validate()
    return cfg


def _coerce(raw: str, typ) -> Any:
    typ = {"int": int, "float": float, "bool": bool, "str": str}.get(typ, typ)
    if typ is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if typ is int:
        return int(raw)
    if typ is float:
        return float(raw)
    if "None" in str(typ):
        return None if raw.strip().lower() == "none" else _coerce(raw, str(typ).split(" |")[0])
    return raw.strip()


def parse_pairs(pairs: list[str], target) -> dict[str, Any]:
    """Turn ``key=value`` strings into typed kwargs for a dataclass type."""
    types = {f.name: f.type for f in fields(target)}
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"expected key=value, got {pair!r}")
        key, value = (s.strip() for s in pair.split("=", 1))
        if key not in types:
            raise ValueError(f"unknown {target.__name__} key {key!r}")
        out[key] = _coerce(value, types[key])
    return out


def read_config_file(path: str | Path) -> tuple[list[str], list[str]]:
    """Split a flat config file into TrainConfig pairs and ``data.``-prefixed DatasetSpec pairs."""
    train, data = [], []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("data."):
            data.append(line[len("data."):])
        else:
            train.append(line)
    return train, data


def dumps_config(cfg: TrainConfig) -> str:
    return "".join(f"{k}={v}\n" for k, v in cfg.to_dict().items())
