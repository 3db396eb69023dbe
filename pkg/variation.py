"""
External variation factor processes, normalization and threshold selection.

The variation factor L_k weights the regret of episode k. It is drawn from its
own random stream so it never depends on the MDP or on the agent.
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, Mapping, Optional

import numpy as np
from scipy.optimize import bisect
from scipy.special import betainc

QUANTILE_XTOL = 1e-10


class VariationError(ValueError):
    """Raised for invalid variation processes or thresholds."""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


@dataclass(frozen=True)
class NormalizationThresholds:
    l_min: float
    l_max: float

    def __post_init__(self):
        if not self.l_min < self.l_max:
            raise VariationError(
                f'thresholds need l_min < l_max, got ({self.l_min}, {self.l_max})',
                key='variation.l_min')


class VariationProcess(ABC):
    """Generator of one nonnegative L_k per episode."""
    kind: str = ''

    @abstractmethod
    def sample(self, k: int, rng: np.random.Generator) -> float:
        """Draw L_k for episode k (1-based)."""

    def params(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


def _check_levels(eps0: float, eps1: float):
    if eps0 < 0:
        raise VariationError(f'eps0 must be >= 0, got {eps0}', key='variation.eps0')
    if eps1 < 0:
        raise VariationError(f'eps1 must be >= 0, got {eps1}', key='variation.eps1')
    if not eps0 < 1 - eps1:
        raise VariationError(f'need eps0 < 1 - eps1, got eps0={eps0}, eps1={eps1}',
                             key='variation.eps0')


@dataclass(frozen=True)
class BinaryIid(VariationProcess):
    """L_k = eps0 with probability rho, otherwise 1 - eps1."""
    eps0: float = 0.0
    eps1: float = 0.0
    rho: float = 0.5
    kind = 'binary'

    def __post_init__(self):
        _check_levels(self.eps0, self.eps1)
        if not 0.0 <= self.rho <= 1.0:
            raise VariationError(f'rho must lie in [0, 1], got {self.rho}', key='variation.rho')

    def sample(self, k: int, rng: np.random.Generator) -> float:
        return self.eps0 if rng.random() < self.rho else 1.0 - self.eps1


@dataclass(frozen=True)
class PeriodicSquareWave(VariationProcess):
    """L_k = eps0 on even episodes, 1 - eps1 on odd ones."""
    eps0: float = 0.0
    eps1: float = 0.0
    kind = 'periodic'

    def __post_init__(self):
        _check_levels(self.eps0, self.eps1)

    def sample(self, k: int, rng: np.random.Generator) -> float:
        return self.eps0 if k % 2 == 0 else 1.0 - self.eps1


@dataclass(frozen=True)
class BetaIid(VariationProcess):
    alpha: float = 2.0
    beta: float = 2.0
    kind = 'beta'

    def __post_init__(self):
        if self.alpha <= 0:
            raise VariationError(f'alpha must be > 0, got {self.alpha}', key='variation.alpha')
        if self.beta <= 0:
            raise VariationError(f'beta must be > 0, got {self.beta}', key='variation.beta')

    def sample(self, k: int, rng: np.random.Generator) -> float:
        return float(rng.beta(self.alpha, self.beta))

    def cdf(self, x: float) -> float:
        return float(betainc(self.alpha, self.beta, x))


@dataclass(frozen=True)
class Constant(VariationProcess):
    value: float = 1.0
    kind = 'constant'

    def __post_init__(self):
        if self.value < 0:
            raise VariationError(f'value must be >= 0, got {self.value}', key='variation.value')

    def sample(self, k: int, rng: np.random.Generator) -> float:
        return float(self.value)


PROCESS_KINDS = {cls.kind: cls for cls in (BinaryIid, PeriodicSquareWave, BetaIid, Constant)}


def sample_variation(process: VariationProcess, k: int, rng: np.random.Generator) -> float:
    """Draw L_k; only the stochastic kinds consume ``rng``."""
    if k < 1:
        raise VariationError(f'episode index must be >= 1, got {k}')
    return process.sample(k, rng)


def normalize(level: float, thresholds: NormalizationThresholds) -> float:
    """Clamp L to [l_min, l_max] and rescale affinely onto [0, 1]."""
    clamped = max(thresholds.l_min, min(level, thresholds.l_max))
    return (clamped - thresholds.l_min) / (thresholds.l_max - thresholds.l_min)


def quantile_thresholds(process: VariationProcess, rho: float) -> NormalizationThresholds:
    """
    Pick l_min, l_max so that P(L <= l_min) = rho and P(L >= l_max) = rho.

    Two-level processes use their support points regardless of ``rho``, so the
    normalized factor is exactly 0 or 1.

    Raises:
        VariationError: For Constant processes or rho outside (0, 0.5)
    """
    if isinstance(process, (BinaryIid, PeriodicSquareWave)):
        return NormalizationThresholds(process.eps0, 1.0 - process.eps1)

    if isinstance(process, BetaIid):
        if not 0.0 < rho < 0.5:
            raise VariationError(f'threshold rho must lie in (0, 0.5), got {rho}',
                                 key='variation.threshold_rho')
        l_min = bisect(lambda x: process.cdf(x) - rho, 0.0, 1.0, xtol=QUANTILE_XTOL)
        l_max = bisect(lambda x: process.cdf(x) - (1.0 - rho), 0.0, 1.0, xtol=QUANTILE_XTOL)
        return NormalizationThresholds(float(l_min), float(l_max))

    raise VariationError(f'quantile thresholds unsupported for {process.kind!r} processes',
                         key='variation.kind')


def resolve_thresholds(process: VariationProcess,
                       explicit: Optional[NormalizationThresholds] = None,
                       threshold_rho: float = 0.05) -> NormalizationThresholds:
    """Explicit thresholds win; Constant falls back to (0, 1)."""
    if explicit is not None:
        return explicit
    if isinstance(process, Constant):
        return NormalizationThresholds(0.0, 1.0)
    return quantile_thresholds(process, threshold_rho)


def variation_from_mapping(mapping: Mapping) -> VariationProcess:
    """Build a process from ``{'kind': ..., <params>}``; unknown keys are rejected."""
    params = dict(mapping)
    kind = params.pop('kind', None)
    if kind not in PROCESS_KINDS:
        raise VariationError(f'unknown variation kind {kind!r}; expected one of '
                             f'{sorted(PROCESS_KINDS)}', key='variation.kind')
    cls = PROCESS_KINDS[kind]
    allowed = set(cls.__dataclass_fields__)
    for key, value in params.items():
        if key not in allowed:
            raise VariationError(f'unknown parameter {key!r} for {kind} variation',
                                 key=f'variation.{key}')
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise VariationError(f'{key} must be a number, got {value!r}',
                                 key=f'variation.{key}')
    return cls(**{key: float(value) for key, value in params.items()})


def parse_variation_spec(spec: str) -> VariationProcess:
    """
    Parse the one-line ``kind:key=val,...`` grammar.

    Examples: ``binary:eps0=0,eps1=0,rho=0.5``, ``beta:alpha=2,beta=2``,
    ``periodic:eps0=0.1,eps1=0.2``, ``constant:value=1``.
    """
    kind, _, body = spec.strip().partition(':')
    mapping = {'kind': kind.strip()}
    for item in filter(None, (part.strip() for part in body.split(','))):
        key, sep, raw = item.partition('=')
        if not sep:
            raise VariationError(f'expected key=value in variation spec, got {item!r}',
                                 key='variation')
        try:
            mapping[key.strip()] = float(raw)
        except ValueError:
            raise VariationError(f'{key.strip()} must be a number, got {raw!r}',
                                 key=f'variation.{key.strip()}') from None
    return variation_from_mapping(mapping)
