from dataclasses import dataclass

from components.base_problem import Problem
from components.enums import ProblemKind
from components.quadratic import make_quadratic_problem
from components.ridge import make_ridge_problem
from core.errors import ConfigError

# descriptor key -> (field name, type) per problem kind
PROBLEM_KEYS = {
    ProblemKind.RIDGE: {"p": ("p", int), "lambda": ("penalty", float)},
    ProblemKind.QUADRATIC: {
        "p": ("p", int),
        "mu": ("mu", float),
        "L": ("L", float),
        "sigma": ("sigma", float),
        "spread": ("spread", float),
    },
}

PROBLEM_DEFAULTS = {
    ProblemKind.RIDGE: {"p": 20, "penalty": 0.1},
    ProblemKind.QUADRATIC: {"p": 5, "mu": 1.0, "L": 4.0, "sigma": 1.0, "spread": 1.0},
}


@dataclass(frozen=True)
class ProblemSpec:
    """Parsed problem descriptor: `ridge:p=20,lambda=0.1` or `quad:mu=1,L=4,sigma=1[,p=5][,spread=1]`."""

    kind: ProblemKind
    p: int = 20
    penalty: float = 0.1
    mu: float = 1.0
    L: float = 4.0
    sigma: float = 1.0
    spread: float = 1.0

    @classmethod
    def parse(cls, text: str) -> "ProblemSpec":
        kind_text, _, params = text.strip().partition(":")
        try:
            kind = ProblemKind(kind_text)
        except ValueError:
            raise ConfigError(f"unknown problem kind '{kind_text}'") from None
        values = dict(PROBLEM_DEFAULTS[kind])
        keys = PROBLEM_KEYS[kind]
        for item in filter(None, (s.strip() for s in params.split(","))):
            key, eq, raw = item.partition("=")
            if not eq or key not in keys:
                raise ConfigError(f"unknown {kind.value} parameter '{item}'")
            name, cast = keys[key]
            try:
                values[name] = cast(raw)
            except ValueError:
                raise ConfigError(f"bad value for {kind.value} parameter '{key}': '{raw}'") from None
        spec = cls(kind, **values)
        spec.validate()
        return spec

    def validate(self):
        if self.p < 1:
            raise ConfigError("problem dimension p must be at least 1")
        if self.kind is ProblemKind.RIDGE and self.penalty <= 0:
            raise ConfigError("ridge lambda must be positive")
        if self.kind is ProblemKind.QUADRATIC:
            if not 0 < self.mu <= self.L:
                raise ConfigError(f"quad needs 0 < mu <= L, got mu={self.mu}, L={self.L}")
            if self.sigma < 0 or self.spread < 0:
                raise ConfigError("quad sigma and spread must be nonnegative")

    def render(self) -> str:
        parts = []
        for key, (name, _) in PROBLEM_KEYS[self.kind].items():
            parts.append(f"{key}={getattr(self, name)!r}")
        return f"{self.kind.value}:{','.join(parts)}"


def make_problem(spec: ProblemSpec, n: int, seed: int = 0) -> Problem:
    """Instantiate the described problem. Only the quadratic family draws from `seed`."""
    if spec.kind is ProblemKind.RIDGE:
        return make_ridge_problem(n, spec.p, spec.penalty)
    return make_quadratic_problem(n, spec.p, spec.mu, spec.L, spec.sigma, spec.spread, seed)
