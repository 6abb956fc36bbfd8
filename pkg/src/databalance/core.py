"""Domain types: examples, problem specs, hyperparameters, solver state.

All numeric state is 64-bit floating point; dual variables accumulate over
millions of steps and anything narrower drifts visibly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyStream,
    NonBinaryEntry,
    NonPositiveUtility,
)

DEFAULT_UTILITY = 1.0


def _as_binary_vector(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64).reshape(-1)
    if arr.size and not np.all((arr == 0.0) | (arr == 1.0)):
        raise NonBinaryEntry(f"{name} entries must be exactly 0 or 1, got {arr}")
    return arr


@dataclass
class Example:
    """A single record: sensitive-attribute indicators, label indicators, utility.

    ``s`` has one 0/1 entry per attribute category (categories may overlap),
    ``y`` one 0/1 entry per label, and ``u`` is a positive priority. Records
    with u <= 0 are rejected at ingestion.
    """

    id: str
    s: np.ndarray
    y: np.ndarray
    u: float = DEFAULT_UTILITY

    def __post_init__(self):
        self.s = _as_binary_vector(self.s, "s")
        self.y = _as_binary_vector(self.y, "y")
        self.u = float(self.u)
        if not self.u > 0.0:
            raise NonPositiveUtility(f"u must be > 0, got {self.u}")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Example):
            return NotImplemented
        return (
            self.id == other.id
            and np.array_equal(self.s, other.s)
            and np.array_equal(self.y, other.y)
            and self.u == other.u
        )

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "s": [int(v) for v in self.s],
            "y": [int(v) for v in self.y],
            "u": self.u,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Example":
        return cls(id=d["id"], s=d["s"], y=d["y"], u=d.get("u", DEFAULT_UTILITY))


@dataclass
class BalanceSpec:
    """Problem definition: dimensions, target distribution, tolerances.

    ``pi[k]`` is the target prevalence for attribute k. ``eps_d`` bounds the
    tolerated association (attribute x label) violation, ``eps_r`` the
    tolerated representation violation. ``c = 0`` means representation
    constraints only.
    """

    m: int
    c: int
    pi: np.ndarray
    eps_d: float = 0.0
    eps_r: float = 0.0

    def __post_init__(self):
        self.m = int(self.m)
        self.c = int(self.c)
        self.pi = np.asarray(self.pi, dtype=np.float64).reshape(-1)
        self.eps_d = float(self.eps_d)
        self.eps_r = float(self.eps_r)
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if self.c < 0:
            raise ValueError(f"c must be >= 0, got {self.c}")
        if self.pi.shape != (self.m,):
            raise DimensionMismatch(
                f"pi has length {self.pi.size}, expected m={self.m}"
            )
        if np.any(self.pi < 0.0) or np.any(self.pi > 1.0):
            raise ValueError(f"pi entries must lie in [0, 1], got {self.pi}")
        for name, val in (("eps_d", self.eps_d), ("eps_r", self.eps_r)):
            if not 0.0 <= val < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {val}")

    @property
    def bias_dim(self) -> int:
        """Length of the per-example constraint vector: 2m(c+1)."""
        return 2 * self.m * (self.c + 1)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BalanceSpec):
            return NotImplemented
        return (
            self.m == other.m
            and self.c == other.c
            and np.array_equal(self.pi, other.pi)
            and self.eps_d == other.eps_d
            and self.eps_r == other.eps_r
        )

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "c": self.c,
            "pi": [float(v) for v in self.pi],
            "eps_d": self.eps_d,
            "eps_r": self.eps_r,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BalanceSpec":
        return cls(m=d["m"], c=d["c"], pi=d["pi"], eps_d=d["eps_d"], eps_r=d["eps_r"])


class Schedule(str, enum.Enum):
    """Learning-rate schedule for the dual updates."""

    INVERSE_SQRT = "inverse_sqrt"
    CONSTANT = "constant"


@dataclass
class Hyperparams:
    """Solver hyperparameters.

    eta     target average weight; equals the subsampling rate when weights
            are used to subsample
    q_max   per-example weight ceiling Q (mean eta cannot exceed it)
    v_level enforcement level V: the price of violating a bias constraint
    tau0    base learning rate; per-step rate is tau0/sqrt(t) under the
            inverse-sqrt schedule
    """

    eta: float
    q_max: float = 1.0
    v_level: float = 100.0
    tau0: float = 0.1
    schedule: Schedule = Schedule.INVERSE_SQRT

    def __post_init__(self):
        self.eta = float(self.eta)
        self.q_max = float(self.q_max)
        self.v_level = float(self.v_level)
        self.tau0 = float(self.tau0)
        self.schedule = Schedule(self.schedule)
        if not 0.0 < self.eta <= self.q_max:
            raise ValueError(
                f"need 0 < eta <= q_max, got eta={self.eta}, q_max={self.q_max}"
            )
        if self.v_level <= 0.0:
            raise ValueError(f"v_level must be positive, got {self.v_level}")
        if self.tau0 <= 0.0:
            raise ValueError(f"tau0 must be positive, got {self.tau0}")

    def learning_rate(self, t: int) -> float:
        """Step size for update number t (t counts completed updates)."""
        if self.schedule is Schedule.CONSTANT:
            return self.tau0
        return self.tau0 / math.sqrt(max(t, 1))

    def to_dict(self) -> dict:
        return {
            "eta": self.eta,
            "q_max": self.q_max,
            "v_level": self.v_level,
            "tau0": self.tau0,
            "schedule": self.schedule.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        return cls(
            eta=d["eta"],
            q_max=d["q_max"],
            v_level=d["v_level"],
            tau0=d["tau0"],
            schedule=Schedule(d["schedule"]),
        )


@dataclass
class SolverState:
    """Dual variables of the balancing problem plus a step counter.

    ``v`` holds one multiplier per one-sided bias constraint (length
    2m(c+1)), box-constrained to [0, V]. ``mu`` is the multiplier of the
    mean-weight constraint. ``t`` counts completed updates.
    """

    spec: BalanceSpec
    hp: Hyperparams
    v: np.ndarray = None
    mu: float = 0.0
    t: int = 0

    def __post_init__(self):
        if self.v is None:
            self.v = np.zeros(self.spec.bias_dim, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64).reshape(-1)
        self.mu = float(self.mu)
        self.t = int(self.t)
        if self.v.shape != (self.spec.bias_dim,):
            raise DimensionMismatch(
                f"v has length {self.v.size}, expected 2m(c+1)={self.spec.bias_dim}"
            )
        if self.t < 0:
            raise ValueError(f"t must be non-negative, got {self.t}")
        if np.any(self.v < 0.0) or np.any(self.v > self.hp.v_level):
            raise ValueError("v entries must lie in [0, v_level]")

    def copy(self) -> "SolverState":
        return SolverState(
            spec=self.spec, hp=self.hp, v=self.v.copy(), mu=self.mu, t=self.t
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, SolverState):
            return NotImplemented
        return (
            self.spec == other.spec
            and self.hp == other.hp
            and np.array_equal(self.v, other.v)
            and self.mu == other.mu
            and self.t == other.t
        )

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "hp": self.hp.to_dict(),
            "v": [float(x) for x in self.v],
            "mu": self.mu,
            "t": self.t,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SolverState":
        return cls(
            spec=BalanceSpec.from_dict(d["spec"]),
            hp=Hyperparams.from_dict(d["hp"]),
            v=np.asarray(d["v"], dtype=np.float64),
            mu=d["mu"],
            t=d["t"],
        )


@dataclass
class WeightedExample:
    """An example together with its computed weight and hinge multipliers.

    Exactly one of alpha/beta can be nonzero; alpha > 0 pins q to q_max and
    beta > 0 pins q to 0.
    """

    example: Example
    q: float
    alpha: float = 0.0
    beta: float = 0.0
    kept: bool = False

    def to_dict(self) -> dict:
        d = self.example.to_dict()
        d.update({"q": self.q, "alpha": self.alpha, "beta": self.beta, "kept": self.kept})
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "WeightedExample":
        return cls(
            example=Example.from_dict(d),
            q=d["q"],
            alpha=d.get("alpha", 0.0),
            beta=d.get("beta", 0.0),
            kept=d.get("kept", False),
        )


def validate_example(e: Example, spec: BalanceSpec) -> Example:
    """Check an example against a spec; return it unchanged if valid.

    Raises DimensionMismatch, NonBinaryEntry or NonPositiveUtility.
    """
    if e.s.shape != (spec.m,):
        raise DimensionMismatch(f"s has length {e.s.size}, expected m={spec.m}")
    if e.y.shape != (spec.c,):
        raise DimensionMismatch(f"y has length {e.y.size}, expected c={spec.c}")
    if not np.all((e.s == 0.0) | (e.s == 1.0)):
        raise NonBinaryEntry(f"s entries must be 0 or 1: {e.s}")
    if not np.all((e.y == 0.0) | (e.y == 1.0)):
        raise NonBinaryEntry(f"y entries must be 0 or 1: {e.y}")
    if not e.u > 0.0:
        raise NonPositiveUtility(f"u must be > 0, got {e.u}")
    return e


class Dataset:
    """Column-oriented view of a finite example stream.

    Holds ids plus dense float64 arrays S (n x m), Y (n x c), U (n,). The
    array layout is what the solver kernels, the auditor and the oracle
    consume; `Example` objects are the record-at-a-time view.
    """

    def __init__(self, ids: Sequence[str], S: np.ndarray, Y: np.ndarray, U: np.ndarray):
        self.ids = list(ids)
        self.S = np.ascontiguousarray(S, dtype=np.float64)
        self.Y = np.ascontiguousarray(Y, dtype=np.float64)
        self.U = np.ascontiguousarray(U, dtype=np.float64)
        n = len(self.ids)
        if self.S.shape[0] != n or self.Y.shape[0] != n or self.U.shape != (n,):
            raise DimensionMismatch("ids/S/Y/U row counts disagree")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def m(self) -> int:
        return self.S.shape[1]

    @property
    def c(self) -> int:
        return self.Y.shape[1]

    def example(self, i: int) -> Example:
        return Example(id=self.ids[i], s=self.S[i], y=self.Y[i], u=float(self.U[i]))

    def __iter__(self) -> Iterator[Example]:
        return (self.example(i) for i in range(len(self)))

    @classmethod
    def from_examples(
        cls, stream: Iterable[Example], spec: BalanceSpec | None = None
    ) -> "Dataset":
        examples = list(stream)
        if not examples:
            raise EmptyStream("dataset requires at least one example")
        if spec is not None:
            for e in examples:
                validate_example(e, spec)
        m = examples[0].s.size
        c = examples[0].y.size
        n = len(examples)
        S = np.empty((n, m), dtype=np.float64)
        Y = np.empty((n, c), dtype=np.float64)
        U = np.empty(n, dtype=np.float64)
        ids = []
        for i, e in enumerate(examples):
            if e.s.size != m or e.y.size != c:
                raise DimensionMismatch(f"ragged record {e.id}")
            ids.append(e.id)
            S[i] = e.s
            Y[i] = e.y
            U[i] = e.u
        return cls(ids, S, Y, U)


def as_dataset(stream, spec: BalanceSpec | None = None) -> Dataset:
    """Coerce a Dataset or iterable of Example into a Dataset."""
    if isinstance(stream, Dataset):
        return stream
    return Dataset.from_examples(stream, spec)
