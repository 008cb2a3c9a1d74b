"""The vimlab command line: experiment orchestration and serialized outputs.

Commands::

    vimlab simulate    --config cfg.toml [--out path] [--seed s] [--jobs k]
    vimlab analyze     --config cfg.toml [...]
    vimlab oracle-check --config cfg.toml [...]
    vimlab convergence --config cfg.toml [...]

Every command is a pure function of its resolved config: identical configs
produce byte-identical outputs. Simulation rows follow the fixed header
``repetition,method,feature,raw_score,normalized_score,std_error,p_value``;
convergence emits ``n,method,feature,mean_score,sd_score``. A JSON sidecar
with the resolved config is written next to every CSV so figures are
regenerable from artifacts alone.
"""

import argparse
import dataclasses
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import estimators as est
from . import oracle
from ._rng import rng_from
from .config import ExperimentConfig, load_config
from .data import QUADRATIC, Dataset, Loss, gen_linear_pair, gen_poly_response, gen_toeplitz_gaussian, load_csv, split
from .exceptions import VimlabError
from .inference import classify_features
from .predictors import PredictorSpec, fit
from .samplers import fit_sampler

SIM_HEADER = ("repetition", "method", "feature", "raw_score", "normalized_score",
              "std_error", "p_value")
CONV_HEADER = ("n", "method", "feature", "mean_score", "sd_score")

_COMMAND_KINDS = {
    "simulate": ("figure1", "poly_sim"),
    "analyze": ("csv_analysis",),
    "oracle-check": ("oracle_check",),
    "convergence": ("convergence",),
}


def _derive(seed, *key):
    ss = np.random.SeedSequence((int(seed),) + tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def _default_sampler_kind(kind):
    return "residual_permutation" if kind == "csv_analysis" else "gaussian_conditional"


def experiment_dataset(cfg: ExperimentConfig, rep, n=None) -> Dataset:
    """The dataset a given repetition runs on (regenerated, or reloaded for
    CSV analysis). Public so round-trip tests can export the exact data."""
    n = cfg.n if n is None else n
    if cfg.kind == "figure1":
        return gen_linear_pair(n, cfg.rho, cfg.beta, _derive(cfg.seed, rep, 0))
    if cfg.kind in ("poly_sim", "convergence"):
        x = gen_toeplitz_gaussian(n, cfg.p, cfg.rho, _derive(cfg.seed, rep, 0))
        y = gen_poly_response(x, cfg.noise_sd, _derive(cfg.seed, rep, 1))
        return Dataset(x=x, y=y)
    if cfg.kind == "csv_analysis":
        return load_csv(cfg.csv_path, cfg.csv_target)
    raise VimlabError(f"no dataset for kind {cfg.kind}")


def _method_label(mc):
    return f"SobolCPI({mc.n_cal})" if mc.name == "SobolCPI" else mc.name


def _run_method(mc, cfg, m_full, spec, data, train, test, loss, samplers, seed):
    kind = mc.sampler or _default_sampler_kind(cfg.kind)
    if kind not in samplers:
        samplers[kind] = fit_sampler(kind, train.x)
    s = samplers[kind]
    name = mc.name
    if name == "PFI":
        return est.estimate_pfi(m_full, test, loss, n_perm=mc.n_perm, seed=seed)
    if name == "CFI":
        return est.estimate_cfi(m_full, test, loss, s, n_draws=mc.n_draws, seed=seed)
    if name == "SobolCPI":
        return est.estimate_sobol_cpi(m_full, test, loss, s, n_cal=mc.n_cal, seed=seed)
    if name == "LOCO":
        return est.estimate_loco(spec, train, test, loss, seed=seed)
    if name == "LOCO_W":
        return est.estimate_loco_w(spec, data, loss, seed=seed)
    if name == "LOCI":
        return est.estimate_loci(spec, train, test, loss, seed=seed)
    if name == "cSAGE":
        return est.estimate_sage(m_full, test, loss, "conditional", s,
                                 n_permutations=mc.n_permutations, n_draws=mc.n_draws, seed=seed)
    if name == "mSAGE":
        return est.estimate_sage(m_full, test, loss, "marginal", None,
                                 n_permutations=mc.n_permutations, n_draws=mc.n_draws, seed=seed)
    if name == "cSAGEvf":
        return est.estimate_sage_vf(m_full, test, loss, "conditional", s,
                                    n_draws=mc.n_draws, seed=seed)
    if name == "mSAGEvf":
        return est.estimate_sage_vf(m_full, test, loss, "marginal", None,
                                    n_draws=mc.n_draws, seed=seed)
    if name == "scSAGE":
        return est.estimate_sc_sage(m_full, test, loss, s, n_draws=mc.n_draws, seed=seed)
    if name == "dTSI":
        return est.estimate_dtsi(spec, train, test, seed=seed)
    if name == "GLM":
        return est.estimate_glm(train, seed=seed)
    raise VimlabError(f"unhandled method {name}")


def _rep_rows(cfg: ExperimentConfig, rep, n=None):
    """All output rows for one repetition (sortable tuples)."""
    data = experiment_dataset(cfg, rep, n=n)
    train, test = split(data, [cfg.train_fraction, 1.0 - cfg.train_fraction],
                        _derive(cfg.seed, rep, 2))
    spec = PredictorSpec(kind=cfg.model_kind, seed=_derive(cfg.seed, rep, 3),
                         **cfg.model_params)
    loss = Loss(cfg.loss)
    needs_full = any(
        mc.name in ("PFI", "CFI", "SobolCPI", "cSAGE", "mSAGE", "cSAGEvf", "mSAGEvf", "scSAGE")
        for mc in cfg.methods
    )
    m_full = fit(spec, train) if needs_full else None
    samplers = {}
    rows = []
    for mi, mc in enumerate(cfg.methods):
        try:
            report = _run_method(mc, cfg, m_full, spec, data, train, test, loss,
                                 samplers, _derive(cfg.seed, rep, 4, mi))
        except VimlabError as exc:
            raise VimlabError(f"method {mc.name} (repetition {rep}): {exc}") from exc
        p_values = None
        if report.deltas is not None:
            p_values = classify_features(report, cfg.test, cfg.alpha,
                                         bonferroni=cfg.bonferroni).p_values
        normalized = est.normalize_scores(report.scores)
        label = _method_label(mc)
        for j in range(report.scores.shape[0]):
            rows.append((
                rep, label, j,
                float(report.scores[j]),
                float(normalized[j]),
                float(report.std_errors[j]),
                float(p_values[j]) if p_values is not None else None,
            ))
    return rows


def _collect_reps(cfg, jobs, n=None):
    reps = range(cfg.repetitions)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_rep_rows, [cfg] * cfg.repetitions, reps, [n] * cfg.repetitions))
    else:
        chunks = [_rep_rows(cfg, rep, n=n) for rep in reps]
    rows = [row for chunk in chunks for row in chunk]
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    return rows


def run_simulate(cfg: ExperimentConfig, jobs=1):
    """Seeded repetitions of a synthetic experiment; one row per
    (repetition, method, feature)."""
    if cfg.kind not in ("figure1", "poly_sim"):
        raise VimlabError(f"run_simulate expects figure1 or poly_sim, got {cfg.kind}")
    return _collect_reps(cfg, jobs)


def run_analyze(cfg: ExperimentConfig, jobs=1):
    """Same row schema as run_simulate, over seeded resplits of a CSV file."""
    if cfg.kind != "csv_analysis":
        raise VimlabError(f"run_analyze expects csv_analysis, got {cfg.kind}")
    load_csv(cfg.csv_path, cfg.csv_target)  # fail fast before spawning work
    return _collect_reps(cfg, jobs)


def run_convergence(cfg: ExperimentConfig, jobs=1):
    """Mean and spread of raw scores per method/feature over a grid of n."""
    if cfg.kind != "convergence":
        raise VimlabError(f"run_convergence expects convergence, got {cfg.kind}")
    out = []
    for n in cfg.n_grid:
        rows = _collect_reps(cfg, jobs, n=n)
        by_key = {}
        for rep, label, j, raw, _, _, _ in rows:
            by_key.setdefault((label, j), []).append(raw)
        for (label, j), vals in sorted(by_key.items()):
            arr = np.asarray(vals)
            sd = float(arr.std(ddof=1)) if arr.size > 1 else float("nan")
            out.append((n, label, j, float(arr.mean()), sd))
    out.sort(key=lambda r: (r[0], r[1], r[2]))
    return out


def _oracle_line(name, dev, tol, extra=""):
    ok = dev <= tol
    text = f"{'PASS' if ok else 'FAIL'} {name}: max_abs_deviation={dev:.3e} (tol {tol:.1e}){extra}"
    return ok, text


def run_oracle_check(cfg: ExperimentConfig):
    """Exact identity and axiom suites on enumerated joints. Returns
    (lines, all_ok)."""
    if cfg.kind != "oracle_check":
        raise VimlabError(f"run_oracle_check expects oracle_check, got {cfg.kind}")
    q = QUADRATIC
    lines = []
    all_ok = True

    dev = 0.0
    for i in range(cfg.n_joints):
        d = oracle.random_joint(2 + (i % 2), 3, _derive(cfg.seed, 1, i))
        for j in range(d.p):
            vals = [oracle.exact_tsi(d, j, q, f) for f in (1, 2, 3, 4, 5)]
            dev = max(dev, max(vals) - min(vals))
    ok, text = _oracle_line("total-index formulations (1)-(5) agree", dev, 1e-12)
    all_ok &= ok
    lines.append(text)

    dev = 0.0
    for i in range(max(1, cfg.n_joints // 2)):
        p = 2 + (i % 2)
        j = i % p
        d = oracle.factored_null_joint(p, j, 3, _derive(cfg.seed, 2, i))
        vals = [
            oracle.exact_tsi(d, j, q, 3),
            oracle.exact_pfi(d, j, q),
            oracle.exact_shapley(d, j, q, "marginal"),
            oracle.exact_value_function(d, [j], q, "marginal"),
            oracle.exact_value_function(d, range(p), q) - oracle.exact_value_function(
                d, [a for a in range(p) if a != j], q),
        ]
        dev = max(dev, max(abs(v) for v in vals))
    ok, text = _oracle_line("factored-null joints: conditional indices vanish", dev, 1e-10)
    all_ok &= ok
    lines.append(text)

    min_pos = math.inf
    for i in range(max(1, cfg.n_joints // 2)):
        d = oracle.random_joint(2 + (i % 2), 3, _derive(cfg.seed, 3, i))
        for j in range(d.p):
            if oracle.conditional_independence_gap(d, j) > 1e-6:
                min_pos = min(min_pos, oracle.exact_tsi(d, j, q, 3))
    ok = min_pos > 1e-10
    all_ok &= ok
    lines.append(
        f"{'PASS' if ok else 'FAIL'} conditionally dependent features score positive: "
        f"min_total_index={min_pos:.3e} (must exceed 1e-10)"
    )

    coins = oracle.correlated_coins(0.8)
    tsi0 = oracle.exact_tsi(coins, 0, q, 3)
    vf0 = oracle.exact_value_function(coins, [0], q)
    shap0 = oracle.exact_shapley(coins, 0, q, "conditional")
    mshap0 = oracle.exact_shapley(coins, 0, q, "marginal")
    dev = max(abs(tsi0), abs(vf0 - 0.09), abs(shap0 - 0.045), abs(mshap0))
    ok, text = _oracle_line(
        "correlated-coins witness", dev, 1e-12,
        extra=(f" [total_index(null)={tsi0:.6g}, value_fn(null)={vf0:.6g}, "
               f"shapley(null)={shap0:.6g}]"),
    )
    all_ok &= ok
    lines.append(text)

    dev = 0.0
    for i in range(max(1, cfg.n_joints // 2)):
        d = oracle.random_joint(2 + (i % 2), 3, _derive(cfg.seed, 4, i))
        for j in range(d.p):
            surplus = oracle.exact_value_function(d, range(d.p), q) - oracle.exact_value_function(
                d, [a for a in range(d.p) if a != j], q)
            dev = max(dev, abs(surplus - oracle.exact_tsi(d, j, q, 3)))
    ok, text = _oracle_line("surplus value function equals the total-index", dev, 1e-12)
    all_ok &= ok
    lines.append(text)

    dev = 0.0
    for i in range(max(1, cfg.n_joints // 2)):
        d = oracle.independence_fixture(2 + (i % 2), 3, _derive(cfg.seed, 5, i))
        dev = max(dev, abs(oracle.exact_pfi(d, 0, q)))
        dev = max(dev, oracle.conditional_independence_gap(d, 0))
    ok, text = _oracle_line(
        "independent-feature fixtures: zero marginal index forces the conditional factorization",
        dev, 1e-12,
    )
    all_ok &= ok
    lines.append(text)

    return lines, bool(all_ok)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        return repr(v)
    return str(v)


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_sidecar(out_path, cfg: ExperimentConfig):
    sidecar = str(out_path) + ".config.json"
    with open(sidecar, "w") as fh:
        json.dump(cfg.resolved(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return sidecar


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="vimlab",
        description="Variable-importance experiments: simulate, analyze, verify, converge.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "analyze", "oracle-check", "convergence"):
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="TOML experiment config")
        cmd.add_argument("--out", default=None, help="output CSV path (overrides config)")
        cmd.add_argument("--seed", type=int, default=None, help="override config seed")
        cmd.add_argument("--jobs", type=int, default=1, help="parallel repetitions")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        if cfg.kind not in _COMMAND_KINDS[args.command]:
            raise VimlabError(
                f"command {args.command!r} cannot run experiment kind {cfg.kind!r}"
            )
        if args.command == "oracle-check":
            lines, ok = run_oracle_check(cfg)
            for line in lines:
                print(line)
            out = args.out or cfg.out
            if out:
                with open(out, "w") as fh:
                    fh.write("\n".join(lines) + "\n")
                write_sidecar(out, cfg)
            return 0 if ok else 2
        jobs = max(1, args.jobs)
        if args.command == "simulate":
            rows, header = run_simulate(cfg, jobs), SIM_HEADER
        elif args.command == "analyze":
            rows, header = run_analyze(cfg, jobs), SIM_HEADER
        else:
            rows, header = run_convergence(cfg, jobs), CONV_HEADER
        out = args.out or cfg.out
        if out is None:
            raise VimlabError("no output path: set [output] path in the config or pass --out")
        write_rows(out, header, rows)
        sidecar = write_sidecar(out, cfg)
        print(f"wrote {len(rows)} rows to {out} (config sidecar: {sidecar})")
        return 0
    except VimlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
