"""Layer-count recovery study: simulate, fit all candidates, tally winners.

Replicates get derived seeds (base seed + generator and replicate index),
so runs are reproducible and replicates can be fitted in parallel with the
tallies merged in a fixed order.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import AllStartsFailed, NonFiniteResult, UnstableEstimate
from .evidence import BmlConfig, bml_estimate
from .forcing import ForcingSeries
from .mcmc import McmcConfig, mcmc_sample
from .mlfit import MLConfig, ml_fit
from .model import ModelSpec
from .params import ParamVector
from .priors import PriorSpec
from .simulate import ObservationDesign, simulate_dataset

CRITERIA = ("AIC", "BIC", "BML")


@dataclass(frozen=True)
class StudyConfig:
    criteria: tuple[str, ...] = CRITERIA
    ml: MLConfig = field(default_factory=lambda: MLConfig(n_starts=12, max_iter=400))
    mcmc: McmcConfig = field(default_factory=lambda: McmcConfig(iterations=1200, burn_in=600))
    bml: BmlConfig = field(default_factory=lambda: BmlConfig(n_samples=2000))
    prior: PriorSpec = field(default_factory=PriorSpec)
    jobs: int = 1


@dataclass
class StudyResult:
    """Per (generator, criterion) tallies of the selected layer counts."""

    generator_names: tuple[str, ...]
    criteria: tuple[str, ...]
    n_reps: int
    seed: int
    counts: dict
    failures: dict

    def correct_counts(self) -> dict:
        out = {}
        for gen in self.generator_names:
            true_layers = int(gen.split(":", 1)[0][1:])
            out[gen] = {
                crit: self.counts[gen][crit].get(true_layers, 0)
                for crit in self.criteria
            }
        return out

    def summary_table(self) -> str:
        widths = max(len(g) for g in self.generator_names)
        head = "generating model".ljust(widths) + "".join(
            f"{c:>8}" for c in self.criteria
        )
        lines = [
            f"correct layer-count identifications out of {self.n_reps} replicates",
            head,
        ]
        correct = self.correct_counts()
        for gen in self.generator_names:
            row = gen.ljust(widths) + "".join(
                f"{correct[gen][c]:>8}" for c in self.criteria
            )
            lines.append(row)
        warn = sum(sum(v.values()) for v in self.failures.values())
        if warn:
            lines.append(f"warnings: {warn} replicate fits failed and were excluded")
        return "\n".join(lines)

    def as_records(self) -> list[dict]:
        recs = []
        for gen in self.generator_names:
            for crit in self.criteria:
                recs.append(
                    {
                        "generator": gen,
                        "criterion": crit,
                        "selected_layer_counts": {
                            str(k): v for k, v in sorted(self.counts[gen][crit].items())
                        },
                        "failures": self.failures[gen][crit],
                        "n_reps": self.n_reps,
                        "seed": self.seed,
                    }
                )
        return recs


def _fit_candidate(spec, data, forcing, config, seed, need_bml):
    """Partial results per stage: a BML failure leaves AIC/BIC usable."""
    out = {}
    errors = []
    try:
        ml = ml_fit(spec, data, forcing, config.prior, config.ml, seed=seed)
        out.update({"aic": ml.aic, "bic": ml.bic, "log_lik": ml.log_lik})
    except (AllStartsFailed, NonFiniteResult) as exc:
        errors.append(repr(exc))
    if need_bml:
        try:
            chain = mcmc_sample(
                spec, data, forcing, config.prior, config.mcmc, seed=seed
            )
            log_bml, _ = bml_estimate(
                spec, data, forcing, config.prior, chain, config.bml, seed=seed
            )
            out["log_bml"] = log_bml
        except (NonFiniteResult, UnstableEstimate) as exc:
            errors.append(repr(exc))
    return out, errors


def _run_replicate(payload):
    (gi, rep, gen_spec, gen_params, candidates, design, forcing, config, seed) = payload
    data_seed = np.random.SeedSequence([seed, gi, rep])
    data = simulate_dataset(gen_spec, gen_params, design, forcing, seed=data_seed)
    fits = {}
    errors = {}
    need_bml = "BML" in config.criteria
    for ci, cand in enumerate(candidates):
        fit_seed = int(np.random.SeedSequence([seed, gi, rep, ci]).generate_state(1)[0])
        fits[cand.name], cand_errors = _fit_candidate(
            cand, data, forcing, config, fit_seed, need_bml
        )
        if cand_errors:
            errors[cand.name] = cand_errors
    selections = {}
    layer_of = {c.name: c.n_layers for c in candidates}
    score_key = {"AIC": "aic", "BIC": "bic", "BML": "log_bml"}
    for crit in config.criteria:
        key = score_key[crit]
        sign = -1.0 if crit == "BML" else 1.0  # BML selects the maximum
        ranked = sorted(
            (sign * v[key], name) for name, v in fits.items() if key in v
        )
        complete = len(ranked) == len(candidates)
        pick = ranked[0][1] if complete else None
        selections[crit] = layer_of[pick] if pick is not None else None
    return gi, rep, selections, errors


def run_selection_study(
    generators: list[tuple[ModelSpec, ParamVector]],
    candidates: list[ModelSpec],
    design: ObservationDesign,
    n_reps: int,
    criteria: tuple[str, ...] = CRITERIA,
    seed: int = 0,
    config: StudyConfig | None = None,
    forcing: ForcingSeries | None = None,
) -> StudyResult:
    """Simulate ``n_reps`` datasets per generator, fit every candidate and
    count which layer numbers each criterion selects.

    Candidate fit failures are recorded per criterion and the replicate is
    excluded from that criterion's tally.
    """
    config = config or StudyConfig()
    if criteria != config.criteria:
        config = StudyConfig(
            criteria=tuple(criteria),
            ml=config.ml,
            mcmc=config.mcmc,
            bml=config.bml,
            prior=config.prior,
            jobs=config.jobs,
        )
    unknown = set(config.criteria) - set(CRITERIA)
    if unknown:
        raise ValueError(f"unknown criteria: {sorted(unknown)}")
    candidate_names = {c.name for c in candidates}
    for gen_spec, _ in generators:
        if gen_spec.name not in candidate_names:
            raise ValueError(f"generator {gen_spec.name} missing from candidates")

    payloads = [
        (gi, rep, gen_spec, gen_params, candidates, design, forcing, config, seed)
        for gi, (gen_spec, gen_params) in enumerate(generators)
        for rep in range(n_reps)
    ]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_run_replicate, payloads))
    else:
        results = [_run_replicate(p) for p in payloads]
    results.sort(key=lambda r: (r[0], r[1]))

    gen_names = tuple(spec.name for spec, _ in generators)
    counts = {g: {c: {} for c in config.criteria} for g in gen_names}
    failures = {g: {c: 0 for c in config.criteria} for g in gen_names}
    for gi, rep, selections, errors in results:
        gen = gen_names[gi]
        for crit in config.criteria:
            picked = selections[crit]
            if picked is None:
                failures[gen][crit] += 1
            else:
                counts[gen][crit][picked] = counts[gen][crit].get(picked, 0) + 1
    return StudyResult(
        generator_names=gen_names,
        criteria=config.criteria,
        n_reps=n_reps,
        seed=seed,
        counts=counts,
        failures=failures,
    )
