"""Experiment configuration: TOML file parsing with strict key validation.

Unknown keys are rejected rather than ignored, so a typo never silently
changes an experiment. Every config must carry an explicit seed; there are
no wall-clock defaults anywhere.
"""

import dataclasses
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .estimators import METHODS
from .exceptions import ConfigError
from .inference import TEST_KINDS
from .predictors import KINDS as MODEL_KINDS
from .samplers import KINDS as SAMPLER_KINDS

EXPERIMENT_KINDS = ("figure1", "poly_sim", "csv_analysis", "convergence", "oracle_check")

_EXPERIMENT_KEYS = {
    "kind", "n", "p", "rho", "beta", "noise_sd", "repetitions", "seed",
    "train_fraction", "loss", "n_grid", "n_joints",
}
_MODEL_KEYS = {
    "kind", "lam", "n_trees", "max_depth", "min_leaf", "mtry",
    "n_rounds", "learning_rate",
}
_INFERENCE_KEYS = {"test", "alpha", "bonferroni"}
_CSV_KEYS = {"path", "target"}
_OUTPUT_KEYS = {"path"}
_METHOD_KEYS = {"name", "n_perm", "n_cal", "n_draws", "n_permutations", "sampler"}
_SECTIONS = {"experiment", "model", "inference", "csv", "output", "methods"}


@dataclass(frozen=True)
class MethodConfig:
    name: str
    n_perm: int = 10
    n_cal: int = 100
    n_draws: int = 16
    n_permutations: int = 64
    sampler: str = None  # None: resolved per experiment kind

    def __post_init__(self):
        if self.name not in METHODS:
            raise ConfigError(f"unknown method {self.name!r}; choose from {METHODS}")
        for key in ("n_perm", "n_cal", "n_draws", "n_permutations"):
            if getattr(self, key) < 1:
                raise ConfigError(f"method {self.name}: {key} must be >= 1")
        if self.sampler is not None and self.sampler not in SAMPLER_KINDS:
            raise ConfigError(f"method {self.name}: unknown sampler {self.sampler!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int
    n: int = 2000
    p: int = 10
    rho: float = 0.6
    beta: float = 1.0
    noise_sd: float = 0.1
    repetitions: int = 1
    train_fraction: float = 0.7
    loss: str = "quadratic"
    n_grid: tuple = ()
    n_joints: int = 100
    model_kind: str = "boosted_trees"
    model_params: dict = field(default_factory=dict)
    test: str = "sign"
    alpha: float = 0.05
    bonferroni: bool = False
    csv_path: str = None
    csv_target: str = None
    out: str = None
    methods: tuple = ()

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.seed is None or int(self.seed) < 0:
            raise ConfigError("a nonnegative integer seed is required")
        if not (0.0 < self.train_fraction < 1.0):
            raise ConfigError("train_fraction must lie strictly between 0 and 1")
        if self.loss not in ("quadratic", "cross_entropy"):
            raise ConfigError(f"unknown loss {self.loss!r}")
        if self.model_kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.model_kind!r}")
        if self.test not in TEST_KINDS:
            raise ConfigError(f"unknown test {self.test!r}")
        if not (0.0 < self.alpha <= 1.0):
            raise ConfigError("alpha must lie in (0, 1]")
        if self.kind in ("figure1", "poly_sim", "csv_analysis", "convergence") and not self.methods:
            raise ConfigError(f"{self.kind} needs at least one [[methods]] entry")
        if self.kind == "csv_analysis" and (self.csv_path is None or self.csv_target is None):
            raise ConfigError("csv_analysis needs [csv] path and target")
        if self.kind == "convergence" and not self.n_grid:
            raise ConfigError("convergence needs a nonempty experiment.n_grid")
        if self.kind == "figure1" and self.p != 2:
            raise ConfigError("figure1 is a two-feature design; leave p at 2")
        if self.kind == "poly_sim" and self.p < 9:
            raise ConfigError("the polynomial response needs p >= 9")

    def resolved(self) -> dict:
        """Plain-dict view used for the JSON sidecar."""
        d = dataclasses.asdict(self)
        d["methods"] = [dataclasses.asdict(m) for m in self.methods]
        return d


def _check_keys(section, mapping, allowed):
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {sorted(unknown)}")


def config_from_mapping(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a table")
    _check_keys("<root>", raw, _SECTIONS)
    exp = raw.get("experiment", {})
    _check_keys("experiment", exp, _EXPERIMENT_KEYS)
    if "kind" not in exp:
        raise ConfigError("experiment.kind is required")
    if "seed" not in exp:
        raise ConfigError("experiment.seed is required (no wall-clock defaults)")

    model = dict(raw.get("model", {}))
    _check_keys("model", model, _MODEL_KEYS)
    model_kind = model.pop("kind", "boosted_trees")

    inf = raw.get("inference", {})
    _check_keys("inference", inf, _INFERENCE_KEYS)

    csv_sec = raw.get("csv", {})
    _check_keys("csv", csv_sec, _CSV_KEYS)

    out_sec = raw.get("output", {})
    _check_keys("output", out_sec, _OUTPUT_KEYS)

    methods = []
    raw_methods = raw.get("methods", [])
    if not isinstance(raw_methods, list):
        raise ConfigError("[[methods]] must be an array of tables")
    for i, entry in enumerate(raw_methods):
        _check_keys(f"methods[{i}]", entry, _METHOD_KEYS)
        if "name" not in entry:
            raise ConfigError(f"methods[{i}] needs a name")
        methods.append(MethodConfig(**entry))

    kwargs = dict(
        kind=exp["kind"],
        seed=exp["seed"],
        model_kind=model_kind,
        model_params=model,
        methods=tuple(methods),
    )
    if exp["kind"] == "figure1" and "p" not in exp:
        kwargs["p"] = 2
    for key in ("n", "p", "rho", "beta", "noise_sd", "repetitions", "train_fraction", "loss",
                "n_joints"):
        if key in exp:
            kwargs[key] = exp[key]
    if "n_grid" in exp:
        grid = exp["n_grid"]
        if not isinstance(grid, list) or not all(isinstance(v, int) and v > 0 for v in grid):
            raise ConfigError("experiment.n_grid must be a list of positive integers")
        kwargs["n_grid"] = tuple(grid)
    if "test" in inf:
        kwargs["test"] = inf["test"]
    if "alpha" in inf:
        kwargs["alpha"] = inf["alpha"]
    if "bonferroni" in inf:
        kwargs["bonferroni"] = bool(inf["bonferroni"])
    if "path" in csv_sec:
        kwargs["csv_path"] = csv_sec["path"]
    if "target" in csv_sec:
        kwargs["csv_target"] = csv_sec["target"]
    if "path" in out_sec:
        kwargs["out"] = out_sec["path"]
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}") from None
    return config_from_mapping(raw)
