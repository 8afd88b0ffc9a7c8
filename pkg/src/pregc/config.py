"""Run configuration: an INI file with one section per pipeline stage.

Every value has a default and the fully resolved configuration is echoed to
the output directory, so a run can be reproduced from its echo alone.
"""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field, fields, replace

from .condense import TrainConfig
from .errors import InvalidInputError
from .ot import OtConfig


@dataclass(frozen=True)
class DataConfig:
    edges: str = ""
    features: str = ""
    labels: str = ""
    splits: str = ""
    self_loops: bool = True

    @property
    def present(self) -> bool:
        return bool(self.edges or self.features)


@dataclass(frozen=True)
class SyntheticConfig:
    block_sizes: tuple = ()
    p_in: float = 0.5
    p_out: float = 0.02
    dim: int = 4
    separation: float = 4.0
    noise_sigma: float = 1.0
    train_frac: float = 0.3
    val_frac: float = 0.2

    @property
    def present(self) -> bool:
        return bool(self.block_sizes)


@dataclass(frozen=True)
class CondenseSection:
    m: int = 0
    ratio: float = 0.0
    xi: float = 1.0
    epochs: int = 500
    steps_k: int = 5
    delta_t_min: float = 0.0  # 0 selects 1% of the stability limit
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    plan_refresh_period: int = 20
    sparsify_threshold: float = 0.5
    init: str = "random-sample"
    final_sinkhorn_iters: int = 10000


@dataclass(frozen=True)
class OtSection:
    epsilon: float = 0.01
    sinkhorn_iters: int = 200
    fw_iters: int = 20
    gamma: float = 0.5


@dataclass(frozen=True)
class EvalSection:
    tasks: tuple = ("node-classification",)
    k: int = 2
    head_epochs: int = 200
    head_lr: float = 1.0


@dataclass(frozen=True)
class FinetuneSection:
    tau_up: int = 10
    decay: float = 0.9
    epochs: int = 200


@dataclass(frozen=True)
class SignificanceSection:
    h: int = 0  # 0 selects ceil(N / M)
    budget: int = -1  # -1 selects the size of the train split


@dataclass(frozen=True)
class RunSection:
    seed: int = 0
    output: str = "pregc-out"
    threads: int = 1


SECTIONS = {
    "data": DataConfig,
    "synthetic": SyntheticConfig,
    "condense": CondenseSection,
    "ot": OtSection,
    "eval": EvalSection,
    "finetune": FinetuneSection,
    "significance": SignificanceSection,
    "run": RunSection,
}


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    condense: CondenseSection = field(default_factory=CondenseSection)
    ot: OtSection = field(default_factory=OtSection)
    eval: EvalSection = field(default_factory=EvalSection)
    finetune: FinetuneSection = field(default_factory=FinetuneSection)
    significance: SignificanceSection = field(default_factory=SignificanceSection)
    run: RunSection = field(default_factory=RunSection)

    def validate_source(self) -> None:
        if self.data.present == self.synthetic.present:
            raise InvalidInputError("configure exactly one of [data] paths or a [synthetic] spec")
        if self.data.present and not (self.data.edges and self.data.features):
            raise InvalidInputError("[data] needs both edges and features")

    def condensed_size(self, n: int) -> int:
        c = self.condense
        if c.m > 0 and c.ratio > 0:
            raise InvalidInputError("set either condense.m or condense.ratio, not both")
        if c.m > 0:
            m = c.m
        elif 0 < c.ratio < 1:
            m = math.ceil(c.ratio * n)
        else:
            raise InvalidInputError("condense.ratio must lie in (0, 1) or condense.m must be set")
        if not 1 <= m < n:
            raise InvalidInputError(f"condensed size {m} must satisfy 1 <= m < n = {n}")
        return m

    def train_config(self) -> TrainConfig:
        c = self.condense
        return TrainConfig(
            xi=c.xi,
            ot=self.ot_config(),
            epochs=c.epochs,
            steps_k=c.steps_k,
            delta_t_min=c.delta_t_min or None,
            learning_rate=c.learning_rate,
            adam_betas=(c.beta1, c.beta2),
            seed=self.run.seed,
            plan_refresh_period=c.plan_refresh_period,
            sparsify_threshold=c.sparsify_threshold,
            init=c.init,
            final_sinkhorn_iters=c.final_sinkhorn_iters,
        )

    def ot_config(self) -> OtConfig:
        o = self.ot
        return OtConfig(epsilon=o.epsilon, sinkhorn_iters=o.sinkhorn_iters, fw_iters=o.fw_iters, gamma=o.gamma)

    def with_overrides(self, section: str, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        if not kw:
            return self
        return replace(self, **{section: replace(getattr(self, section), **kw)})

    def to_ini(self) -> str:
        lines = []
        for name in SECTIONS:
            lines.append(f"[{name}]")
            sec = getattr(self, name)
            for f in fields(sec):
                lines.append(f"{f.name} = {_render(getattr(sec, f.name))}")
            lines.append("")
        return "\n".join(lines)

    def digest(self) -> str:
        # the output location does not change any result
        text = replace(self, run=replace(self.run, output="")).to_ini()
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def _render(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(raw: str, default, key: str):
    try:
        if isinstance(default, bool):
            return configparser.ConfigParser.BOOLEAN_STATES[raw.strip().lower()]
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            if key.endswith("block_sizes"):
                return tuple(int(s) for s in items)
            return tuple(items)
    except (KeyError, ValueError):
        raise InvalidInputError(f"bad value {raw!r} for {key}") from None
    return raw.strip()


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise InvalidInputError(f"{source}: {exc}") from None
    cfg = RunConfig()
    for name in parser.sections():
        if name not in SECTIONS:
            raise InvalidInputError(f"{source}: unknown section [{name}]")
        sec = getattr(cfg, name)
        known = {f.name: f for f in fields(sec)}
        updates = {}
        for key, raw in parser.items(name):
            if key not in known:
                raise InvalidInputError(f"{source}: unknown key {key!r} in [{name}]")
            updates[key] = _coerce(raw, getattr(sec, key), f"{name}.{key}")
        cfg = replace(cfg, **{name: replace(sec, **updates)})
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read(), str(path))
    except OSError as exc:
        raise InvalidInputError(f"cannot read config {path}: {exc.strerror}") from None
