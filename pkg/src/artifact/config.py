"""Run configuration: a YAML key-value tree validated before any computation."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ValidationError
from .potential import RadialPotential, load_tabulated_csv, make_soft_sphere, zero_potential

_MOD = "config"


@dataclass
class PotentialConfig:
    kind: str = "soft_sphere"  # soft_sphere | tabulated | zero
    v0: float = 2.0
    R: float = 0.25
    table: str | None = None

    def build(self) -> RadialPotential:
        if self.kind == "soft_sphere":
            return make_soft_sphere(self.v0, self.R)
        if self.kind == "tabulated":
            if not self.table:
                raise ValidationError("tabulated potential needs 'table'", _MOD, "potential")
            return load_tabulated_csv(self.table)
        if self.kind == "zero":
            return zero_potential()
        raise ValidationError(f"unknown potential kind {self.kind!r}", _MOD, "potential")


@dataclass
class BornConfig:
    v0: float = 2.0
    R: float = 0.25
    N_values: list = field(default_factory=lambda: [40, 80, 160])
    k_max: int = 3
    fft_N: int = 4
    fft_M: int = 12


@dataclass
class MicrolabConfig:
    modes: list = field(default_factory=lambda: [[1, 0, 0], [2, 0, 0]])
    N_fock: int = 3
    eta: float = -0.05
    sweep_mode: list = field(default_factory=lambda: [1, 0, 0])
    sweep_N: list = field(default_factory=lambda: [10, 20, 40, 80])
    sweep_eta: float = -0.2
    F: float = 5.0
    G: float = 3.0
    n_max: int = 40
    random_vectors: int = 3


@dataclass
class RunConfig:
    potential: PotentialConfig = field(default_factory=PotentialConfig)
    N: int = 100
    ell: float = 0.25
    grid_size: int = 2000
    M_eta: int = 16
    M_sum: int = 80
    shell_cutoff: int = 40  # Lambda in units of 2 pi
    ell_values: list = field(default_factory=lambda: [0.2, 0.25, 0.4])
    zeta: float = 200.0
    spectrum_M: int = 2
    born: BornConfig = field(default_factory=BornConfig)
    microlab: MicrolabConfig = field(default_factory=MicrolabConfig)
    tolerance_adjudication: float = 5e-2

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict | None) -> "RunConfig":
        data = dict(data or {})
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(data) - known
        if extra:
            raise ValidationError(f"unknown config keys {sorted(extra)}", _MOD, "load")
        sub = {"potential": PotentialConfig, "born": BornConfig, "microlab": MicrolabConfig}
        kwargs = {}
        for k, v in data.items():
            if k in sub:
                fields = {f.name for f in dataclasses.fields(sub[k])}
                bad = set(v or {}) - fields
                if bad:
                    raise ValidationError(f"unknown keys {sorted(bad)} under {k}", _MOD, "load")
                kwargs[k] = sub[k](**(v or {}))
            else:
                kwargs[k] = v
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ValidationError(msg, _MOD, "validate")

        self.potential.build()
        need(isinstance(self.N, int) and self.N >= 2, "N must be an integer >= 2")
        need(0 < self.ell < 0.5, "ell must lie in (0, 1/2)")
        need(self.grid_size >= 1000, "grid_size must be >= 1000")
        need(isinstance(self.M_eta, int) and self.M_eta >= 1, "M_eta must be an integer >= 1")
        need(isinstance(self.M_sum, int) and self.M_sum >= 20, "M_sum must be an integer >= 20")
        need(isinstance(self.shell_cutoff, int) and self.shell_cutoff >= 10, "shell_cutoff must be >= 10")
        need(all(0 < e < 0.5 for e in self.ell_values), "ell_values must lie in (0, 1/2)")
        need(self.zeta > 0, "zeta must be positive")
        need(isinstance(self.spectrum_M, int) and self.spectrum_M >= 1, "spectrum_M must be >= 1")
        make_soft_sphere(self.born.v0, self.born.R)
        need(self.born.k_max in (1, 2, 3), "born.k_max must be 1, 2 or 3")
        need(len(self.born.N_values) == 3 and all(n >= 2 for n in self.born.N_values),
             "born.N_values needs three integers >= 2")
        m = self.microlab
        need(m.N_fock >= 1 and all(n >= 1 for n in m.sweep_N), "microlab particle caps must be >= 1")
        need(abs(m.G) < m.F, "microlab needs |G| < F")
        need(m.n_max >= 20, "microlab.n_max must be >= 20")
        need(all(len(x) == 3 for x in m.modes) and len(m.sweep_mode) == 3, "modes are integer triples")


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        cfg = RunConfig()
        cfg.validate()
        return cfg
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if data is not None and not isinstance(data, dict):
        raise ValidationError("config root must be a mapping", _MOD, "load")
    return RunConfig.from_dict(data)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)
