"""Named parameter container with reproducible per-parameter initialization."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

from pairtopk.errors import ConfigError, StateError
from pairtopk.tensor.core import Tensor

EMBEDDING_STD = 0.02


@dataclass(frozen=True)
class InitSpec:
    scheme: str  # xavier_uniform | zeros | ones | normal
    seed: int


def _draw(shape: tuple[int, ...], spec: InitSpec, name: str) -> np.ndarray:
    # seeding by (seed, name) keeps a parameter's values independent of creation order
    rng = np.random.default_rng([spec.seed, zlib.crc32(name.encode())])
    if spec.scheme == "zeros":
        return np.zeros(shape)
    if spec.scheme == "ones":
        return np.ones(shape)
    if spec.scheme == "normal":
        return rng.normal(0.0, EMBEDDING_STD, size=shape)
    if spec.scheme == "xavier_uniform":
        if len(shape) < 2:
            raise ConfigError(f"xavier init needs >= 2 dims, {name} has shape {shape}")
        fan_in, fan_out = shape[-2], shape[-1]
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=shape)
    raise ConfigError(f"unknown init scheme {spec.scheme!r} for {name}")


class ParameterSet:
    def __init__(self, seed: int = 0):
        self.seed = seed
        self._tensors: dict[str, Tensor] = {}
        self._specs: dict[str, InitSpec] = {}

    def add(self, name: str, shape: tuple[int, ...], scheme: str = "xavier_uniform") -> Tensor:
        if name in self._tensors:
            raise ConfigError(f"duplicate parameter name {name!r}")
        spec = InitSpec(scheme, self.seed)
        t = Tensor(_draw(tuple(shape), spec, name), requires_grad=True, name=name)
        self._tensors[name] = t
        self._specs[name] = spec
        return t

    def reinitialize(self, seed: int | None = None) -> None:
        if seed is not None:
            self.seed = seed
        for name, t in self._tensors.items():
            spec = InitSpec(self._specs[name].scheme, self.seed)
            self._specs[name] = spec
            t.data = _draw(t.shape, spec, name)
            t.grad = None

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self):
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def spec(self, name: str) -> InitSpec:
        return self._specs[name]

    def num_parameters(self) -> int:
        return sum(t.size for t in self._tensors.values())

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.grad = None

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._tensors.items()}

    def load(self, arrays: dict[str, np.ndarray]) -> None:
        missing = set(self._tensors) - set(arrays)
        extra = set(arrays) - set(self._tensors)
        if missing or extra:
            raise StateError(f"parameter mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, t in self._tensors.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != t.shape:
                raise StateError(f"shape mismatch for {name}: {arr.shape} vs {t.shape}")
            t.data = arr.copy()
