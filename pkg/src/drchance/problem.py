"""Problem specification: sets, constraint polynomials, family and run settings.

Configs are JSON documents with a versioned ``schema`` field.  Parsing
errors are raised as :class:`ConfigError` whose message starts with the
offending field name, e.g. ``epsilon: required``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from .distfamily import DistributionFamily, GaussianUnivariate, family_from_json
from .polycore import Polynomial, VariableSpace
from .semialg import SemialgebraicSet, box_set

SCHEMA = "drchance-problem/1"
VARIANTS = ("base", "stokes", "joint", "moment_box")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class StokesCaps:
    beta_max: int | None = None   # None -> 2d - deg f - 2
    gamma_max: int = 2


@dataclass(frozen=True)
class OracleSettings:
    x_steps: int = 201
    a_steps: int = 100
    samples: int = 1000


@dataclass(frozen=True)
class ProblemSpec:
    space: VariableSpace
    X: SemialgebraicSet
    A: SemialgebraicSet
    Omega: SemialgebraicSet
    f_list: tuple[Polynomial, ...]
    family: DistributionFamily | None
    epsilon: float
    degree: int = 4                 # moment degree 2d; relaxation order is degree // 2
    variant: str = "base"
    stokes: StokesCaps = field(default_factory=StokesCaps)
    seed: int = 0
    oracle: OracleSettings = field(default_factory=OracleSettings)
    name: str = ""

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError(f"epsilon: must lie in (0, 1), got {self.epsilon}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant: must be one of {', '.join(VARIANTS)}")
        if not self.f_list:
            raise ConfigError("f: at least one constraint polynomial required")
        if self.variant == "joint" and len(self.f_list) < 2:
            raise ConfigError("f_list: the joint variant needs at least two polynomials")
        if self.variant in ("base", "stokes", "moment_box") and len(self.f_list) != 1:
            raise ConfigError(f"f: the {self.variant} variant takes a single polynomial")
        if self.variant == "stokes" and not isinstance(self.family, GaussianUnivariate):
            raise ConfigError("family: the stokes variant needs a univariate Gaussian family")
        if self.variant == "moment_box":
            if self.space.p > 3:
                raise ConfigError("p: the moment_box variant supports p <= 3")
            want = self.space.p + self.space.p * (self.space.p + 1) // 2
            if self.space.t != want:
                raise ConfigError(f"t: the moment_box variant needs t = {want}")
        elif self.family is None:
            raise ConfigError("family: required")
        if self.degree < 1:
            raise ConfigError("degree: must be >= 1")

    @property
    def f(self) -> Polynomial:
        return self.f_list[0]

    @property
    def order(self) -> int:
        return self.degree // 2

    def with_(self, **changes) -> "ProblemSpec":
        return replace(self, **changes)

    # -- serialisation ---------------------------------------------------------
    def to_json(self) -> dict:
        out = {
            "schema": SCHEMA,
            "name": self.name,
            "n": self.space.n, "p": self.space.p, "t": self.space.t,
            "X": self.X.to_json(), "A": self.A.to_json(), "Omega": self.Omega.to_json(),
            "f_list": [f.to_json() for f in self.f_list],
            "family": self.family.to_json() if self.family is not None else None,
            "epsilon": self.epsilon,
            "degree": self.degree,
            "variant": self.variant,
            "stokes": {"beta_max": self.stokes.beta_max, "gamma_max": self.stokes.gamma_max},
            "seed": self.seed,
            "oracle": {"x_steps": self.oracle.x_steps, "a_steps": self.oracle.a_steps,
                       "samples": self.oracle.samples},
        }
        return out

    def canonical_hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _need(data: Mapping, key: str):
    if key not in data or data[key] is None:
        raise ConfigError(f"{key}: required")
    return data[key]


def _set_from(space: VariableSpace, data: Any, key: str, block: str) -> SemialgebraicSet:
    if data is None:
        return SemialgebraicSet(space, block)
    if not isinstance(data, Mapping):
        raise ConfigError(f"{key}: must be an object")
    if "moment_box" in data:
        mb = data["moment_box"]
        try:
            return moment_box_set(space, [tuple(b) for b in mb["mean"]], tuple(mb["delta"]))
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"{key}.moment_box: {exc}") from None
    data = {"block": block, **data}
    if data["block"] != block:
        raise ConfigError(f"{key}.block: must be {block!r}")
    try:
        return SemialgebraicSet.from_json(space, data)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"{key}: {exc}") from None


def spec_from_json(data: Mapping) -> ProblemSpec:
    if not isinstance(data, Mapping):
        raise ConfigError("config: top level must be an object")
    schema = data.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise ConfigError(f"schema: unsupported version {schema!r}")
    try:
        n, p, t = int(_need(data, "n")), int(_need(data, "p")), int(data.get("t", 0))
        space = VariableSpace(n, p, t)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"n: {exc}") from None
    X = _set_from(space, _need(data, "X"), "X", "x")
    A = _set_from(space, data.get("A"), "A", "a")
    Omega = _set_from(space, data.get("Omega"), "Omega", "omega")

    if "f_list" in data:
        raw = data["f_list"]
    elif "f" in data:
        raw = [data["f"]]
    else:
        raise ConfigError("f: required")
    try:
        f_list = tuple(Polynomial.from_json(space, f) for f in raw)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"f: {exc}") from None
    for f in f_list:
        if not f.uses_only(["x", "omega"]):
            raise ConfigError("f: constraint polynomials may only use x and omega")

    variant = data.get("variant", "base")
    fam_data = data.get("family")
    family = None
    if fam_data is not None:
        if A.is_unconstrained:
            raise ConfigError("A: required when a family is given")
        try:
            family = family_from_json(fam_data, A, p, t)
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"family: {exc}") from None

    eps = _need(data, "epsilon")
    try:
        eps = float(eps)
    except (TypeError, ValueError):
        raise ConfigError("epsilon: must be a number") from None

    st = data.get("stokes") or {}
    orc = data.get("oracle") or {}
    try:
        return ProblemSpec(
            space=space, X=X, A=A, Omega=Omega, f_list=f_list, family=family,
            epsilon=eps, degree=int(data.get("degree", 4)), variant=variant,
            stokes=StokesCaps(st.get("beta_max"), int(st.get("gamma_max", 2))),
            seed=int(data.get("seed", 0)),
            oracle=OracleSettings(int(orc.get("x_steps", 201)), int(orc.get("a_steps", 100)),
                                  int(orc.get("samples", 1000))),
            name=str(data.get("name", "")),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"config: {exc}") from None


def load_spec(path: str | Path) -> ProblemSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return spec_from_json(data)


def moment_box_set(space: VariableSpace, mean_bounds, delta_bounds) -> SemialgebraicSet:
    """Parameter set for the first/second-moment ambiguity model.

    a = (m_1..m_p, s_11, s_12, ..., s_pp).  Means lie in a box and the
    second-moment matrix S satisfies lo*I <= S <= hi*I, written through the
    elementary symmetric functions of (hi*I - S) and (S - lo*I): 4p
    inequalities in total.
    """
    p = space.p
    if p > 3:
        raise ValueError("moment-box sets are built for p <= 3")
    t = p + p * (p + 1) // 2
    if space.t != t:
        raise ValueError(f"moment-box parameters need t = {t}")
    lo, hi = map(float, delta_bounds)
    if not 0 < lo <= hi:
        raise ValueError("delta bounds need 0 < lo <= hi")
    means = box_set(space, "a", list(mean_bounds) + [(lo, hi)] * (t - p)).inequalities[: 2 * p]

    def s(i, j):
        i, j = min(i, j), max(i, j)
        return space.a(p + i * p - i * (i - 1) // 2 + (j - i))

    ineqs = list(means)
    for shift, sign in ((hi, -1.0), (-lo, 1.0)):
        mat = [[(sign * s(i, j)) + (shift if i == j else 0.0) for j in range(p)] for i in range(p)]
        ineqs.extend(_elementary_minors(mat, space))
    box = tuple((float(a), float(b)) for a, b in mean_bounds) + tuple(
        (-hi, hi) if i != j else (lo, hi) for i in range(p) for j in range(i, p))
    return SemialgebraicSet(space, "a", tuple(ineqs), (), None, box if p == 1 else None)


def _elementary_minors(mat, space) -> list[Polynomial]:
    """e_k(mat) = sum of k x k principal minors, k = 1..p."""
    from itertools import combinations, permutations

    p = len(mat)
    out = []
    for k in range(1, p + 1):
        total = space.zero()
        for rows in combinations(range(p), k):
            for perm in permutations(range(k)):
                sign = 1.0
                for i in range(k):
                    for j in range(i + 1, k):
                        if perm[i] > perm[j]:
                            sign = -sign
                term = space.const(sign)
                for i in range(k):
                    term = term * mat[rows[i]][rows[perm[i]]]
                total = total + term
        out.append(total)
    return out
