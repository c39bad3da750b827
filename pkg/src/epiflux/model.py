"""Model ingredients: trait grid, infectivity/susceptibility families, memory
kernel and initial law, plus the configuration document that declares them."""

from __future__ import annotations

import copy
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import families as fam
from .errors import BoundError, ConfigError, MomentError, NormalizationError, SchemaError
from .initial import AGE_LAWS, AgeLaw, Empirical

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import tomli_w

log = logging.getLogger(__name__)

REQUIRED_SECTIONS = ("traits", "lambda", "gamma", "kernel", "initial", "bounds")
KERNEL_TOL = 1e-10
WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class TraitGrid:
    nodes: tuple
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "nodes", tuple(self.nodes))
        if w.ndim != 1 or w.size < 1:
            raise SchemaError("trait grid needs at least one node")
        if len(self.nodes) != w.size:
            raise SchemaError("trait nodes and weights differ in length")
        if len(set(map(_hashable, self.nodes))) != len(self.nodes):
            raise SchemaError("trait node labels must be unique")
        if np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise NormalizationError("trait weights must be nonnegative and sum to 1")

    @property
    def size(self):
        return self.weights.size


def _hashable(x):
    return tuple(x) if isinstance(x, list) else x


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Validated, immutable model.  Build it with :func:`build_model`."""

    traits: TraitGrid
    lam: tuple
    gamma: tuple
    kernel: np.ndarray
    lambda_star: float
    age_law: AgeLaw
    trait_probs: np.ndarray
    alpha: float = 1.0
    probe_max: float = 20.0
    config: dict = field(default_factory=dict, repr=False)

    @property
    def n_traits(self):
        return self.traits.size

    @property
    def weights(self):
        return self.traits.weights

    @property
    def kernel_colmax(self):
        """``max_i K[i][j]`` for each landing trait ``j``."""
        return self.kernel.max(axis=0)

    @property
    def kappa_bar(self):
        return float(np.sum(self.kernel_colmax * self.weights))

    @property
    def envelope(self):
        """Landing-trait law of thinning candidates, ``max_i K[i][.] w / kappa_bar``."""
        p = self.kernel_colmax * self.weights
        return p / p.sum()

    @property
    def transition(self):
        """Row-stochastic matrix ``P[i, j] = K[i][j] w_j``."""
        return self.kernel * self.weights[None, :]

    def eval_lambda(self, a, j, side="right"):
        return self.lam[j](a, side)

    def eval_gamma(self, a, j, side="right"):
        return self.gamma[j](a, side)

    def to_config(self) -> dict:
        return copy.deepcopy(self.config)

    @property
    def digest(self) -> str:
        return config_digest(self.config)


def config_digest(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=_json_default)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _json_default(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"not serializable: {type(x)}")


def eval_lambda(model: ModelSpec, a, j):
    _check_trait(model, j)
    return model.eval_lambda(a, j)


def eval_gamma(model: ModelSpec, a, j):
    _check_trait(model, j)
    return model.eval_gamma(a, j)


def _check_trait(model, j):
    if not 0 <= int(j) < model.n_traits:
        raise IndexError(f"trait index {j} out of range for {model.n_traits} traits")


# ---------------------------------------------------------------- configuration


def load_config(path) -> dict:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            config = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise SchemaError(f"{path}: {exc}") from None
    config["_base_dir"] = str(path.resolve().parent)
    return config


def save_config(config: dict, path) -> None:
    clean = {k: v for k, v in config.items() if not k.startswith("_")}
    with open(path, "wb") as fh:
        tomli_w.dump(_plain(clean), fh)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def build_model(config) -> ModelSpec:
    """Validate a configuration (dict or path) and return a :class:`ModelSpec`."""
    if isinstance(config, (str, Path)):
        config = load_config(config)
    config = copy.deepcopy(config)
    base_dir = Path(config.pop("_base_dir", "."))
    config.pop("run", None)  # run settings are not part of the model
    for section in REQUIRED_SECTIONS:
        if section not in config:
            raise SchemaError(f"missing [{section}] section")

    t = config["traits"]
    weights = np.asarray(t.get("weights", []), dtype=float)
    nodes = t.get("nodes", list(range(weights.size)))
    traits = TraitGrid(tuple(_hashable(n) for n in nodes), weights)
    J = traits.size

    lam = _per_trait(config["lambda"], J, "lambda")
    gamma = _per_trait(config["gamma"], J, "gamma")

    kernel, renormalize = _read_kernel(config["kernel"], base_dir, J)
    rows = kernel @ traits.weights
    bad = np.flatnonzero(np.abs(rows - 1.0) > KERNEL_TOL)
    if np.any(kernel < 0):
        raise NormalizationError("kernel entries must be nonnegative")
    if bad.size:
        if not renormalize:
            i = int(bad[0])
            raise NormalizationError(
                f"kernel row {i} integrates to {rows[i]:.12g} against the trait weights, expected 1",
                row=i,
            )
        log.info("renormalizing kernel rows by factors %s", (1.0 / rows).tolist())
        kernel = kernel / rows[:, None]
    if not np.all(np.isfinite(kernel)):
        raise NormalizationError("kernel entries must be finite")

    b = config["bounds"]
    if "lambda_star" not in b:
        raise SchemaError("[bounds] needs lambda_star")
    lambda_star = float(b["lambda_star"])
    alpha = float(b.get("alpha", 1.0))
    probe_max = float(b.get("probe_max", 20.0))
    probe = np.arange(0.0, probe_max + 1e-9, 0.01)
    for j in range(J):
        lv, gv = lam[j](probe), gamma[j](probe)
        if np.any(lv < 0) or np.any(lv > lambda_star):
            raise BoundError(f"lambda for trait {j} leaves [0, lambda_star={lambda_star}]")
        if np.any(gv < 0) or np.any(gv > 1):
            raise BoundError(f"gamma for trait {j} leaves [0, 1]")

    age_law, trait_probs = _read_initial(config["initial"], base_dir, traits)
    if not age_law.moment_finite(2 * alpha):
        raise MomentError(f"initial age law has no finite moment of order 2*alpha = {2 * alpha}")

    config["kernel"] = {"matrix": kernel.tolist()}
    config["traits"] = {"nodes": [list(n) if isinstance(n, tuple) else n for n in traits.nodes],
                        "weights": traits.weights.tolist()}
    config["lambda"] = _families_config(lam)
    config["gamma"] = _families_config(gamma)
    initial = {"age": age_law.to_config()}
    if not isinstance(age_law, Empirical) or age_law.traits is None:
        initial["trait_probs"] = trait_probs.tolist()
    config["initial"] = initial
    config["bounds"] = {"lambda_star": lambda_star, "alpha": alpha, "probe_max": probe_max}

    return ModelSpec(
        traits=traits,
        lam=tuple(lam),
        gamma=tuple(gamma),
        kernel=kernel,
        lambda_star=lambda_star,
        age_law=age_law,
        trait_probs=trait_probs,
        alpha=alpha,
        probe_max=probe_max,
        config=_plain(config),
    )


def _per_trait(section, J, name):
    section = dict(section)
    if "per_trait" in section:
        entries = section["per_trait"]
        if len(entries) != J:
            raise SchemaError(f"[{name}] per_trait has {len(entries)} entries, expected {J}")
        return [fam.make_family(e) for e in entries]
    f = fam.make_family(section)
    return [f] * J


def _families_config(fs):
    if all(f == fs[0] for f in fs):
        return fs[0].to_config()
    return {"per_trait": [f.to_config() for f in fs]}


def _read_kernel(section, base_dir, J):
    renormalize = bool(section.get("renormalize", False))
    if "matrix" in section:
        kernel = np.asarray(section["matrix"], dtype=float)
    elif "file" in section:
        path = Path(section["file"])
        if not path.is_absolute():
            path = base_dir / path
        kernel = np.atleast_2d(np.loadtxt(path, dtype=float))
    else:
        raise SchemaError("[kernel] needs 'matrix' or 'file'")
    if kernel.shape != (J, J):
        raise SchemaError(f"kernel has shape {kernel.shape}, expected {(J, J)}")
    return kernel, renormalize


def _read_initial(section, base_dir, traits):
    if "age" not in section:
        raise SchemaError("[initial] needs an 'age' table")
    spec = dict(section["age"])
    name = spec.pop("family", None)
    J = traits.size
    if name == "empirical":
        if "file" in spec:
            path = Path(spec["file"])
            if not path.is_absolute():
                path = base_dir / path
            data = np.atleast_2d(np.loadtxt(path, dtype=float, delimiter=None, ndmin=2))
            ages = data[:, 0]
            tr = data[:, 1].astype(int) if data.shape[1] > 1 else None
            law = Empirical(ages, tr, path=spec["file"])
        else:
            law = Empirical(spec["ages"], spec.get("traits"))
        if law.traits is not None:
            if np.any((law.traits < 0) | (law.traits >= J)):
                raise SchemaError("empirical trait index out of range")
            probs = np.bincount(law.traits, minlength=J) / law.traits.size
            return law, probs
    elif name in AGE_LAWS:
        try:
            law = AGE_LAWS[name](**spec)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad initial age parameters: {exc}") from None
    else:
        raise ConfigError(f"unknown initial age family {name!r}")
    probs = np.asarray(section.get("trait_probs", traits.weights), dtype=float)
    if probs.shape != (J,) or np.any(probs < 0) or abs(probs.sum() - 1) > WEIGHT_TOL:
        raise NormalizationError("initial trait_probs must be a probability vector over the traits")
    return law, probs


# -------------------------------------------------------------------- sampling


def sample_initial(model: ModelSpec, n: int, stream: np.random.Generator):
    """``n`` i.i.d. draws of (age, trait index) from the initial law."""
    if n < 1:
        raise ValueError("n must be at least 1")
    law = model.age_law
    if isinstance(law, Empirical) and law.traits is not None:
        ages, tr = law.sample_pairs(n, stream)
        return np.asarray(ages, dtype=float), np.asarray(tr, dtype=np.int64)
    ages = law.sample(n, stream)
    tr = stream.choice(model.n_traits, size=n, p=model.trait_probs)
    return np.asarray(ages, dtype=float), np.asarray(tr, dtype=np.int64)


def sample_new_trait(model: ModelSpec, i: int, stream: np.random.Generator, size=None):
    _check_trait(model, i)
    return stream.choice(model.n_traits, size=size, p=model.transition[i])
