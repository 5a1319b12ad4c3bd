"""Command-line entry points: fit, sample, compare, smooth, simulate, study.

All inputs are loaded and validated before any computation starts; outputs
are JSON-lines records plus human-readable summaries, written atomically.
Runs are pure functions of (inputs, config, seed, version): repeating a
command with the same config reproduces byte-identical machine outputs.
Exit codes: 0 success, 2 configuration or IO error, 3 all models failed.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import Dataset, load_dataset, load_forcing, save_dataset
from .errors import (
    AllStartsFailed,
    DegenerateEigensystem,
    DimensionMismatch,
    LayeredOUError,
    NonFiniteResult,
    NotStationary,
    UnstableEstimate,
)
from .evidence import BmlConfig, bml_estimate, property_weights
from .frame import (
    ModelFrame,
    enumerate_models,
    restrict_to_nonempty,
    standard_categorizations,
)
from .kalman import posterior_process_draws, smooth
from .mcmc import McmcConfig, mcmc_sample
from .mlfit import MLConfig, ml_fit
from .model import ModelSpec, parse_spec_name
from .params import make_params
from .priors import PriorSpec
from .report import (
    parameter_rows,
    parameter_table_text,
    weights_table_text,
    write_jsonl_atomic,
    write_text_atomic,
)
from .simulate import ObservationDesign, simulate_dataset
from .study import StudyConfig, run_selection_study


class ConfigError(LayeredOUError):
    """Invalid command configuration."""


@dataclass(frozen=True)
class RunConfig:
    command: str
    data: str | None = None
    forcing: str | None = None
    spec: str | None = None
    specs: tuple[str, ...] | None = None
    frame: dict | None = None
    params: str | None = None
    prior: str | None = None
    design: str | None = None
    study: str | None = None
    out_dir: str = "results"
    seed: int = 0
    jobs: int = 1
    restrict_pulls: bool = False
    ml_starts: int = 50
    ml_max_iter: int = 600
    mcmc_iterations: int = 3000
    mcmc_burn_in: int = 1000
    mcmc_chains: int = 2
    mcmc_thin: int = 1
    bml_samples: int = 4000
    no_bml: bool = False
    save_draws: bool = False
    time_range: tuple[float, float, int] | None = None
    max_draws: int = 200
    n_reps: int | None = None

    def ml_config(self) -> MLConfig:
        return MLConfig(
            n_starts=self.ml_starts,
            max_iter=self.ml_max_iter,
            restrict_pulls=self.restrict_pulls,
        )

    def mcmc_config(self) -> McmcConfig:
        return McmcConfig(
            iterations=self.mcmc_iterations,
            burn_in=self.mcmc_burn_in,
            thin=self.mcmc_thin,
            chains=self.mcmc_chains,
            restrict_pulls=self.restrict_pulls,
        )

    def bml_config(self) -> BmlConfig:
        return BmlConfig(n_samples=self.bml_samples)


@dataclass
class ResultBundle:
    records: list[dict] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)
    weights: list[dict] = field(default_factory=list)
    outputs: dict[str, str] = field(default_factory=dict)


@dataclass
class _Inputs:
    data: Dataset | None = None
    forcing: object = None
    prior: PriorSpec = field(default_factory=PriorSpec)
    specs: list[ModelSpec] = field(default_factory=list)
    params: object = None
    design: ObservationDesign | None = None
    study: dict | None = None


def _read_json(path, what: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {what} file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} file {path} is not valid JSON: {exc}") from exc


def _params_from_dict(spec: ModelSpec, data: dict):
    try:
        return make_params(
            spec,
            alpha=data["alpha"],
            sigma=data["sigma"],
            mu0=data["mu0"],
            beta=data.get("beta"),
            rho={int(k): float(v) for k, v in data.get("rho", {}).items()},
        )
    except (KeyError, DimensionMismatch, TypeError) as exc:
        raise ConfigError(f"invalid parameter file: {exc}") from exc


def _design_from_dict(data: dict) -> ObservationDesign:
    if "from_dataset" in data:
        return ObservationDesign.from_dataset(load_dataset(data["from_dataset"]))
    if "regular" in data:
        reg = dict(data["regular"])
        reg["sites"] = tuple(reg.get("sites", ("site1",)))
        return ObservationDesign.regular(**reg)
    try:
        sites = list(data["sites"])
        times = data["times"]
        if isinstance(times[0], (int, float)):
            times = [times] * len(sites)
        site_col, time_col = [], []
        for label, site_times in zip(sites, times):
            site_col.extend([label] * len(site_times))
            time_col.extend(site_times)
        m = len(time_col)
        s2 = data.get("s2", 0.0)
        n = data.get("n", 1.0)
        s2_col = np.full(m, float(s2)) if np.isscalar(s2) else np.asarray(s2, float)
        n_col = np.full(m, float(n)) if np.isscalar(n) else np.asarray(n, float)
        return ObservationDesign(
            site=tuple(site_col), time=np.asarray(time_col), s2=s2_col, n=n_col
        )
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid design: {exc}") from exc


def _load_inputs(config: RunConfig) -> _Inputs:
    """Fail-fast ingestion: every referenced file must exist and parse."""
    inputs = _Inputs()
    if config.data is not None:
        inputs.data = load_dataset(config.data)
    if config.forcing is not None:
        inputs.forcing = load_forcing(config.forcing)
    if config.prior is not None:
        inputs.prior = PriorSpec.from_dict(_read_json(config.prior, "prior"))
    if config.spec is not None:
        inputs.specs = [parse_spec_name(config.spec)]
    elif config.specs:
        inputs.specs = [parse_spec_name(name) for name in config.specs]
    elif config.frame is not None:
        inputs.specs = enumerate_models(ModelFrame.from_dict(config.frame))
    if config.design is not None:
        inputs.design = _design_from_dict(_read_json(config.design, "design"))
    if config.study is not None:
        inputs.study = _read_json(config.study, "study")
    if config.params is not None:
        if len(inputs.specs) != 1:
            raise ConfigError("--params needs a single --spec")
        inputs.params = _params_from_dict(
            inputs.specs[0], _read_json(config.params, "params")
        )
    return inputs


def _base_record(config: RunConfig, spec: ModelSpec) -> dict:
    return {
        "version": __version__,
        "command": config.command,
        "seed": config.seed,
        "spec": spec.name,
    }


def _fit_record(config, spec, inputs) -> dict:
    ml = ml_fit(
        spec,
        inputs.data,
        inputs.forcing,
        inputs.prior,
        config.ml_config(),
        seed=config.seed,
    )
    record = _base_record(config, spec)
    record.update(
        {
            "n_obs": ml.n_obs,
            "k": ml.k,
            "log_lik": ml.log_lik,
            "aic": ml.aic,
            "bic": ml.bic,
            "ml_converged": ml.converged,
            "params": parameter_rows(ml=ml, prior=inputs.prior),
        }
    )
    return record


def _sample_record(config, spec, inputs) -> tuple[dict, object]:
    chain = mcmc_sample(
        spec,
        inputs.data,
        inputs.forcing,
        inputs.prior,
        config.mcmc_config(),
        seed=config.seed,
    )
    record = _base_record(config, spec)
    record.update(
        {
            "n_obs": len(inputs.data) if inputs.data is not None else 0,
            "k": chain.transform.n_free,
            "mcmc_converged": chain.converged,
            "rhat_max": float(np.max(chain.rhat)) if chain.rhat.size else 1.0,
            "acceptance_mean": float(np.mean(chain.acceptance))
            if chain.acceptance.size
            else 1.0,
            "params": parameter_rows(chain=chain, prior=inputs.prior),
        }
    )
    if not config.no_bml:
        try:
            log_bml, mc_se = bml_estimate(
                spec,
                inputs.data,
                inputs.forcing,
                inputs.prior,
                chain,
                config.bml_config(),
                seed=config.seed,
            )
            record.update({"log_bml": log_bml, "bml_mc_se": mc_se})
        except UnstableEstimate as exc:
            record.update(
                {
                    "log_bml": exc.log_bml,
                    "bml_mc_se": exc.mc_se,
                    "bml_unstable": True,
                    "bml_ess": exc.ess,
                }
            )
    return record, chain


_MODEL_ERRORS = (
    AllStartsFailed,
    DegenerateEigensystem,
    DimensionMismatch,
    NonFiniteResult,
    NotStationary,
    UnstableEstimate,
)


def _compare_one(args) -> tuple[str, dict | None, str | None]:
    config, spec, inputs = args
    try:
        ml = ml_fit(
            spec,
            inputs.data,
            inputs.forcing,
            inputs.prior,
            config.ml_config(),
            seed=config.seed,
        )
        chain = mcmc_sample(
            spec,
            inputs.data,
            inputs.forcing,
            inputs.prior,
            config.mcmc_config(),
            seed=config.seed,
        )
        log_bml, mc_se = bml_estimate(
            spec,
            inputs.data,
            inputs.forcing,
            inputs.prior,
            chain,
            config.bml_config(),
            seed=config.seed,
        )
    except _MODEL_ERRORS as exc:
        return spec.name, None, repr(exc)
    record = _base_record(config, spec)
    record.update(
        {
            "n_obs": ml.n_obs,
            "k": ml.k,
            "log_lik": ml.log_lik,
            "aic": ml.aic,
            "bic": ml.bic,
            "ml_converged": ml.converged,
            "mcmc_converged": chain.converged,
            "rhat_max": float(np.max(chain.rhat)) if chain.rhat.size else 1.0,
            "log_bml": log_bml,
            "bml_mc_se": mc_se,
            "params": parameter_rows(ml=ml, chain=chain, prior=inputs.prior),
        }
    )
    return spec.name, record, None


def _run_compare(config: RunConfig, inputs: _Inputs, out: Path) -> ResultBundle:
    if not inputs.specs:
        raise ConfigError("compare needs --specs or --frame")
    if inputs.data is None:
        raise ConfigError("compare needs --data")
    jobs = [(config, spec, inputs) for spec in inputs.specs]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_compare_one, jobs))
    else:
        results = [_compare_one(j) for j in jobs]

    bundle = ResultBundle()
    records_by_name = {}
    for name, record, error in results:
        if record is None:
            bundle.failures.append({"spec": name, "error": error})
        else:
            bundle.records.append(record)
            records_by_name[name] = record
    write_jsonl_atomic(out / "models.jsonl", bundle.records)
    bundle.outputs["models"] = str(out / "models.jsonl")
    if bundle.failures:
        write_jsonl_atomic(out / "failures.jsonl", bundle.failures)
        bundle.outputs["failures"] = str(out / "failures.jsonl")
    if not bundle.records:
        return bundle

    fitted = [spec for spec in inputs.specs if spec.name in records_by_name]
    table = {spec: records_by_name[spec.name]["log_bml"] for spec in fitted}
    weight_objs = []
    for cat in standard_categorizations():
        cat = restrict_to_nonempty(cat, fitted)
        if len(cat.categories) < 2:
            continue
        weight_objs.append(property_weights(cat, table))
    bundle.weights = [pw.as_dict() for pw in weight_objs]
    write_jsonl_atomic(out / "weights.jsonl", bundle.weights)
    bundle.outputs["weights"] = str(out / "weights.jsonl")

    best = max(bundle.records, key=lambda r: r["log_bml"])
    lines = [
        f"model comparison over {len(inputs.specs)} specs "
        f"({len(bundle.failures)} failed), seed {config.seed}",
        "",
        "ranking by log model likelihood:",
    ]
    for rec in sorted(bundle.records, key=lambda r: -r["log_bml"]):
        lines.append(
            f"  {rec['spec']}: log-BML {rec['log_bml']:.3f} "
            f"+- {rec['bml_mc_se']:.3f}, AIC {rec['aic']:.2f}, BIC {rec['bic']:.2f}"
        )
    lines += ["", f"best model {best['spec']} parameter summary:"]
    lines.append(_rows_table(best["params"]))
    lines.append("")
    for pw in weight_objs:
        lines.append(weights_table_text(pw))
        lines.append("")
    write_text_atomic(out / "summary.txt", "\n".join(lines))
    bundle.outputs["summary"] = str(out / "summary.txt")
    return bundle


def _rows_table(rows: list[dict]) -> str:
    return parameter_table_text(rows)


def _query_times(config: RunConfig, data: Dataset | None) -> np.ndarray:
    if config.time_range is not None:
        t0, t1, n = config.time_range
        return np.linspace(t0, t1, int(n))
    if data is not None and len(data):
        t0, t1 = data.time.min(), data.time.max()
        pad = 0.05 * (t1 - t0 or 1.0)
        return np.linspace(t0 - pad, t1 + pad, 201)
    raise ConfigError("smooth needs --time-range when the dataset is empty")


def _run_smooth(config: RunConfig, inputs: _Inputs, out: Path) -> ResultBundle:
    if len(inputs.specs) != 1:
        raise ConfigError("smooth needs a single --spec")
    if inputs.data is None:
        raise ConfigError("smooth needs --data")
    spec = inputs.specs[0]
    times = _query_times(config, inputs.data)
    if inputs.params is not None:
        draws = [inputs.params]
        chain_info = {"source": "fixed-params"}
    else:
        chain = mcmc_sample(
            spec,
            inputs.data,
            inputs.forcing,
            inputs.prior,
            config.mcmc_config(),
            seed=config.seed,
        )
        draws = chain
        chain_info = {
            "source": "mcmc",
            "mcmc_converged": chain.converged,
            "rhat_max": float(np.max(chain.rhat)) if chain.rhat.size else 1.0,
        }
    post = posterior_process_draws(
        spec,
        draws,
        inputs.data,
        times,
        forcing=inputs.forcing,
        max_draws=config.max_draws,
        seed=config.seed,
    )
    site_labels = inputs.data.sites or tuple(
        f"site{j + 1}" for j in range(spec.n_sites)
    )
    lines = ["layer,site,time_my,mean,lower,upper"]
    for layer in range(1, spec.n_layers + 1):
        for j in range(spec.n_sites):
            mean, _, lo, hi = post.component(layer, j)
            for k, t in enumerate(post.times):
                lines.append(
                    f"{layer},{site_labels[j]},{float(t)!r},"
                    f"{float(mean[k])!r},{float(lo[k])!r},{float(hi[k])!r}"
                )
    write_text_atomic(out / "states.csv", "\n".join(lines) + "\n")
    record = _base_record(config, spec)
    record.update(chain_info)
    record.update({"n_query_times": int(post.times.size), "n_draws": len(draws) if isinstance(draws, list) else draws.n_draws})
    write_jsonl_atomic(out / "smooth.jsonl", [record])
    return ResultBundle(
        records=[record],
        outputs={"states": str(out / "states.csv"), "meta": str(out / "smooth.jsonl")},
    )


def _run_simulate(config: RunConfig, inputs: _Inputs, out: Path) -> ResultBundle:
    if len(inputs.specs) != 1 or inputs.params is None:
        raise ConfigError("simulate needs --spec and --params")
    if inputs.design is None:
        raise ConfigError("simulate needs --design")
    data = simulate_dataset(
        inputs.specs[0], inputs.params, inputs.design, inputs.forcing, seed=config.seed
    )
    save_dataset(data, out / "dataset.csv")
    record = _base_record(config, inputs.specs[0])
    record.update({"n_obs": len(data), "sites": list(data.sites)})
    write_jsonl_atomic(out / "simulate.jsonl", [record])
    return ResultBundle(
        records=[record],
        outputs={
            "dataset": str(out / "dataset.csv"),
            "meta": str(out / "simulate.jsonl"),
        },
    )


def _run_study(config: RunConfig, inputs: _Inputs, out: Path) -> ResultBundle:
    study = inputs.study
    if study is None:
        raise ConfigError("study needs --study config")
    try:
        generators = []
        for g in study["generators"]:
            spec = parse_spec_name(g["spec"])
            generators.append((spec, _params_from_dict(spec, g["params"])))
        candidates = [parse_spec_name(name) for name in study["candidates"]]
        design = _design_from_dict(study["design"])
        n_reps = int(config.n_reps or study.get("n_reps", 10))
        criteria = tuple(study.get("criteria", ("AIC", "BIC", "BML")))
    except KeyError as exc:
        raise ConfigError(f"study config missing {exc}") from exc
    study_config = StudyConfig(
        criteria=criteria,
        ml=config.ml_config(),
        mcmc=config.mcmc_config(),
        bml=config.bml_config(),
        prior=inputs.prior,
        jobs=config.jobs,
    )
    result = run_selection_study(
        generators,
        candidates,
        design,
        n_reps,
        criteria,
        seed=config.seed,
        config=study_config,
        forcing=inputs.forcing,
    )
    records = result.as_records()
    write_jsonl_atomic(out / "study.jsonl", records)
    write_text_atomic(out / "study.txt", result.summary_table() + "\n")
    return ResultBundle(
        records=records,
        outputs={"study": str(out / "study.jsonl"), "table": str(out / "study.txt")},
    )


def run(config: RunConfig) -> ResultBundle:
    """Execute one command; see the module docstring for the contract."""
    inputs = _load_inputs(config)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if config.command == "fit":
        if len(inputs.specs) != 1 or inputs.data is None:
            raise ConfigError("fit needs --data and a single --spec")
        record = _fit_record(config, inputs.specs[0], inputs)
        write_jsonl_atomic(out / "fit.jsonl", [record])
        return ResultBundle(records=[record], outputs={"fit": str(out / "fit.jsonl")})
    if config.command == "sample":
        if len(inputs.specs) != 1 or inputs.data is None:
            raise ConfigError("sample needs --data and a single --spec")
        record, chain = _sample_record(config, inputs.specs[0], inputs)
        write_jsonl_atomic(out / "sample.jsonl", [record])
        outputs = {"sample": str(out / "sample.jsonl")}
        if config.save_draws:
            np.save(out / "draws.npy", chain.draws)
            outputs["draws"] = str(out / "draws.npy")
        return ResultBundle(records=[record], outputs=outputs)
    if config.command == "compare":
        return _run_compare(config, inputs, out)
    if config.command == "smooth":
        return _run_smooth(config, inputs, out)
    if config.command == "simulate":
        return _run_simulate(config, inputs, out)
    if config.command == "study":
        return _run_study(config, inputs, out)
    raise ConfigError(f"unknown command {config.command!r}")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="layered-ou",
        description="Layered OU state-space modeling of irregular multi-site series",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("fit", "sample", "compare", "smooth", "simulate", "study"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file with RunConfig fields")
        p.add_argument("--data")
        p.add_argument("--forcing")
        p.add_argument("--spec")
        p.add_argument("--specs", nargs="+")
        p.add_argument("--frame", help="JSON file with ModelFrame fields")
        p.add_argument("--params", help="JSON file with parameter values")
        p.add_argument("--prior", help="JSON file with prior 95%% intervals")
        p.add_argument("--design", help="JSON file with an observation design")
        p.add_argument("--study", help="JSON file describing a selection study")
        p.add_argument("--out-dir")
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int)
        p.add_argument("--restrict-pulls", action="store_true", default=None)
        p.add_argument("--ml-starts", type=int)
        p.add_argument("--ml-max-iter", type=int)
        p.add_argument("--mcmc-iterations", type=int)
        p.add_argument("--mcmc-burn-in", type=int)
        p.add_argument("--mcmc-chains", type=int)
        p.add_argument("--mcmc-thin", type=int)
        p.add_argument("--bml-samples", type=int)
        p.add_argument("--no-bml", action="store_true", default=None)
        p.add_argument("--save-draws", action="store_true", default=None)
        p.add_argument("--n-reps", type=int)
        p.add_argument("--max-draws", type=int)
        p.add_argument(
            "--time-range",
            nargs=3,
            type=float,
            metavar=("T0", "T1", "N"),
            help="query grid for smooth: linspace(T0, T1, N)",
        )
    return parser


def build_config(argv=None) -> RunConfig:
    args = vars(_build_parser().parse_args(argv))
    config_path = args.pop("config", None)
    merged: dict = {}
    if config_path:
        merged.update(_read_json(config_path, "config"))
    for key, value in args.items():
        if value is not None:
            merged[key] = value
    if "specs" in merged and merged["specs"] is not None:
        merged["specs"] = tuple(merged["specs"])
    if "time_range" in merged and merged["time_range"] is not None:
        t0, t1, n = merged["time_range"]
        merged["time_range"] = (float(t0), float(t1), int(n))
    known = {f.name for f in fields(RunConfig)}
    unknown = set(merged) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    return RunConfig(**merged)


def main(argv=None) -> int:
    try:
        config = build_config(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        bundle = run(config)
    except (LayeredOUError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if config.command == "compare" and not bundle.records:
        print("error: every model failed to fit", file=sys.stderr)
        return 3
    for name, path in bundle.outputs.items():
        print(f"{name}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
