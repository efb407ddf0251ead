"""Command-line interface: fit, compare, simulate, diagnose, check.

A run is described by a JSON configuration file (nested sections; see the
README for the schema) plus optional command-line overrides.  All numeric
artifacts are written at full precision; the human-readable summary table
rounds for display only.

Artifacts per fit: ``summary.txt``, ``summary.csv``, ``chains_<k>.csv`` (one
row per retained draw: chain, iteration, parameters, deviance),
``diagnostics.json``, ``residuals.csv``, and the plot-ready
``geweke_segments.csv`` / ``bgr_trace.csv``.  ``compare`` adds
``comparison.csv`` and ``comparison.txt``.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from tbbreg import checks, diagnostics, mcmc, model_selection
from tbbreg import distributions as dist
from tbbreg import regression as reg
from tbbreg.mcmc import PosteriorSample, PriorSpec, SamplerConfig
from tbbreg.regression import Dataset, Family, ModelSpec, ParameterVector

__all__ = [
    "RunConfig",
    "FitReport",
    "load_dataset",
    "bundled_seeds_path",
    "cmd_fit",
    "cmd_compare",
    "cmd_simulate",
    "cmd_diagnose",
    "cmd_check",
    "main",
    "entry",
]

_FULL = "{:.17g}".format  # full-precision numeric output


class CliError(Exception):
    """User-facing configuration or data error."""


def bundled_seeds_path() -> Path:
    """Path of the packaged seed-germination dataset."""
    return Path(__file__).parent / "data" / "seeds.csv"


# ---------------------------------------------------------------------------
# Data ingestion
# ---------------------------------------------------------------------------


def load_dataset(path) -> Dataset:
    """Read a CSV with required integer columns y, n and real covariate columns.

    Malformed rows are reported with their file line number; y > n anywhere is
    fatal.
    """
    path = Path(path)
    try:
        text = path.read_text().splitlines()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc
    reader = csv.reader(text)
    try:
        header = next(reader)
    except StopIteration:
        raise CliError(f"{path}: file is empty") from None
    header = [h.strip() for h in header]
    if "y" not in header or "n" not in header:
        raise CliError(f"{path}: header must contain 'y' and 'n', got {header}")
    cols = {name: [] for name in header}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise CliError(
                f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
            )
        for name, cell in zip(header, row):
            try:
                cols[name].append(float(cell))
            except ValueError:
                raise CliError(
                    f"{path}:{lineno}: field {name!r} is not numeric: {cell!r}"
                ) from None
    if not cols["y"]:
        raise CliError(f"{path}: no data rows")
    y = np.asarray(cols["y"])
    n = np.asarray(cols["n"])
    if np.any(y != np.round(y)) or np.any(n != np.round(n)):
        bad = int(np.argmax((y != np.round(y)) | (n != np.round(n))))
        raise CliError(f"{path}:{bad + 2}: y and n must be integers")
    if np.any(y > n) or np.any(y < 0):
        bad = int(np.argmax((y > n) | (y < 0)))
        raise CliError(
            f"{path}:{bad + 2}: y={int(y[bad])} outside [0, n={int(n[bad])}]"
        )
    covs = {k: np.asarray(v) for k, v in cols.items() if k not in ("y", "n")}
    return Dataset(y=y.astype(int), m=n.astype(int), covariates=covs)


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------


def _model_spec_from_dict(d: dict) -> ModelSpec:
    try:
        family = Family.parse(d["family"])
    except KeyError:
        raise CliError("model block needs a 'family'") from None
    return ModelSpec(
        family=family,
        mu_b_terms=tuple(d.get("mu_b", ["1"])),
        phi_terms=tuple(d.get("phi", [])),
        theta_terms=tuple(d.get("theta", [])),
        mu_t=d.get("mu_t"),
    )


@dataclass
class RunConfig:
    """Everything one command needs: data, model(s), prior, sampler, output."""

    data_path: Path | None
    models: list
    prior: PriorSpec
    sampler: SamplerConfig
    out_dir: Path
    truth: dict | None = None
    simulate: dict | None = None

    @classmethod
    def load(cls, path, overrides: dict | None = None) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as exc:
            raise CliError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise CliError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(raw, overrides or {})

    @classmethod
    def from_dict(cls, raw: dict, overrides: dict | None = None) -> "RunConfig":
        overrides = overrides or {}
        if "models" in raw:
            models = [_model_spec_from_dict(m) for m in raw["models"]]
        elif "model" in raw:
            models = [_model_spec_from_dict(raw["model"])]
        else:
            models = []
        if overrides.get("family"):
            models = [
                _model_spec_from_dict(
                    {**(raw.get("model") or {}), "family": overrides["family"]}
                )
            ]
        prior = PriorSpec(**raw.get("prior", {}))
        samp = dict(raw.get("sampler", {}))
        for key, ov in (
            ("iterations", "iters"),
            ("burn_in", "burnin"),
            ("thin", "thin"),
            ("chains", "chains"),
            ("seed", "seed"),
        ):
            if overrides.get(ov) is not None:
                samp[key] = overrides[ov]
        sampler = SamplerConfig(**samp)
        data_path = overrides.get("data") or raw.get("data")
        out = Path(overrides.get("out") or raw.get("output", "tbbreg_out"))
        return cls(
            data_path=Path(data_path) if data_path else None,
            models=models,
            prior=prior,
            sampler=sampler,
            out_dir=out,
            truth=raw.get("truth"),
            simulate=raw.get("simulate"),
        )


# ---------------------------------------------------------------------------
# Artifact writers
# ---------------------------------------------------------------------------


def _write_chains(post: PosteriorSample, out_dir: Path):
    for c in range(post.n_chains):
        fname = out_dir / f"chains_{c}.csv"
        with fname.open("w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["chain", "iteration"] + post.parameter_names + ["deviance"])
            for i in range(post.draws.shape[1]):
                w.writerow(
                    [c, i]
                    + [_FULL(v) for v in post.draws[c, i]]
                    + [_FULL(post.deviance[c, i])]
                )


def _read_chains(out_dir: Path, config: SamplerConfig) -> PosteriorSample:
    files = sorted(out_dir.glob("chains_*.csv"), key=lambda p: int(p.stem.split("_")[1]))
    if not files:
        raise CliError(f"no chains_*.csv files found in {out_dir}")
    draws, devs, names = [], [], None
    for fname in files:
        with fname.open() as f:
            r = csv.reader(f)
            header = next(r)
            names = header[2:-1]
            body = np.array([[float(v) for v in row] for row in r])
        draws.append(body[:, 2:-1])
        devs.append(body[:, -1])
    return PosteriorSample(
        parameter_names=names,
        draws=np.stack(draws),
        deviance=np.stack(devs),
        acceptance={},
        scale_trace=np.zeros((len(files), 0, 0)),
        block_names=[],
        config=config,
    )


@dataclass
class FitReport:
    """Posterior summaries plus diagnostics and model-fit measures for one model."""

    spec: ModelSpec
    parameter_names: list
    means: dict
    sds: dict
    intervals: dict
    mc_errors: dict
    diagnostics: diagnostics.DiagnosticsReport
    deviance: model_selection.DevianceSummary
    dic: model_selection.DicResult
    acceptance: dict = field(default_factory=dict)

    def summary_rows(self):
        rows = []
        for name in self.parameter_names:
            lo, hi = self.intervals[name]
            rows.append(
                {
                    "parameter": name,
                    "mean": self.means[name],
                    "sd": self.sds[name],
                    "q2.5": lo,
                    "q97.5": hi,
                    "mc_error_naive": self.mc_errors[name].naive,
                    "mc_error_batch": self.mc_errors[name].batch_means,
                    "geweke_z": self.diagnostics.geweke[name],
                    "r_hat": self.diagnostics.r_hat.get(name, float("nan")),
                }
            )
        d = self.deviance
        rows.append(
            {
                "parameter": "deviance",
                "mean": d.mean,
                "sd": d.sd,
                "q2.5": d.q2_5,
                "q97.5": d.q97_5,
                "mc_error_naive": float("nan"),
                "mc_error_batch": float("nan"),
                "geweke_z": float("nan"),
                "r_hat": float("nan"),
            }
        )
        return rows

    def summary_text(self) -> str:
        lines = [
            f"family: {self.spec.family.value}   DIC = {self.dic.dic:.1f}   "
            f"pD = {self.dic.p_d:.2f}   Dbar = {self.dic.d_bar:.1f}",
            "",
            f"{'Parameter':<10} {'Mean':>9} {'S.D.':>8} {'95% Cred. Interval':>22} {'M.C. Error':>11}",
        ]
        for name in self.parameter_names:
            lo, hi = self.intervals[name]
            lines.append(
                f"{name:<10} {self.means[name]:>9.4f} {self.sds[name]:>8.4f} "
                f"{'(' + format(lo, '.4f') + ', ' + format(hi, '.4f') + ')':>22} "
                f"{self.mc_errors[name].batch_means:>11.5f}"
            )
        d = self.deviance
        lines.append(
            f"{'deviance':<10} {d.mean:>9.1f} {d.sd:>8.3f} "
            f"{'(' + format(d.q2_5, '.1f') + ', ' + format(d.q97_5, '.1f') + ')':>22}"
        )
        for note in self.diagnostics.notes:
            lines.append(f"note: {note}")
        return "\n".join(lines)


def _build_report(spec, data, post) -> FitReport:
    st = post.stacked()
    names = post.parameter_names
    means = {n: float(st[:, j].mean()) for j, n in enumerate(names)}
    sds = {n: float(st[:, j].std(ddof=1)) for j, n in enumerate(names)}
    intervals = {
        n: tuple(float(q) for q in np.quantile(st[:, j], [0.025, 0.975]))
        for j, n in enumerate(names)
    }
    mc_errors = {
        n: diagnostics.mc_error(st[:, j]) for j, n in enumerate(names)
    }
    diag = diagnostics.diagnostics_report(spec, data, post)
    return FitReport(
        spec=spec,
        parameter_names=names,
        means=means,
        sds=sds,
        intervals=intervals,
        mc_errors=mc_errors,
        diagnostics=diag,
        deviance=model_selection.deviance_summary(post.stacked_deviance()),
        dic=model_selection.dic(post, spec, data),
        acceptance={k: v.tolist() for k, v in post.acceptance.items()},
    )


def _write_fit_artifacts(report: FitReport, post: PosteriorSample, data, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_chains(post, out_dir)
    (out_dir / "summary.txt").write_text(report.summary_text() + "\n")
    rows = report.summary_rows()
    with (out_dir / "summary.csv").open("w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0]))
        w.writeheader()
        for row in rows:
            w.writerow({k: (v if isinstance(v, str) else _FULL(v)) for k, v in row.items()})
    payload = report.diagnostics.to_json_dict()
    payload["dic"] = {
        "dic": report.dic.dic,
        "p_d": report.dic.p_d,
        "d_bar": report.dic.d_bar,
        "d_hat": report.dic.d_hat,
    }
    payload["acceptance_rates"] = report.acceptance
    (out_dir / "diagnostics.json").write_text(json.dumps(payload, indent=1) + "\n")
    if report.diagnostics.residuals is not None:
        with (out_dir / "residuals.csv").open("w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["index", "y", "n", "pearson_residual"])
            for i, r in enumerate(report.diagnostics.residuals):
                w.writerow([i, int(data.y[i]), int(data.m[i]), _FULL(r)])
    # plot-ready convergence traces
    with (out_dir / "geweke_segments.csv").open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["parameter", "chain", "start_iteration", "z"])
        for j, name in enumerate(post.parameter_names):
            for c in range(post.n_chains):
                starts, zs = diagnostics.geweke_segments(post.draws[c, :, j])
                for s, z in zip(starts, zs):
                    w.writerow([name, c, int(s), _FULL(z)])
    if post.n_chains >= 2:
        with (out_dir / "bgr_trace.csv").open("w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["parameter", "end_iteration", "r"])
            for j, name in enumerate(post.parameter_names):
                ends, rs = diagnostics.gelman_rubin_trace(
                    [post.draws[c, :, j] for c in range(post.n_chains)]
                )
                for e, r in zip(ends, rs):
                    w.writerow([name, int(e), _FULL(r)])


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_fit(config: RunConfig) -> FitReport:
    if len(config.models) != 1:
        raise CliError("fit needs exactly one model block (use compare for several)")
    if config.data_path is None:
        raise CliError("fit needs a dataset (--data or config 'data')")
    data = load_dataset(config.data_path)
    spec = config.models[0]
    _check_covariates(spec, data)
    post = mcmc.run_chains(spec, data, config.prior, config.sampler)
    report = _build_report(spec, data, post)
    _write_fit_artifacts(report, post, data, config.out_dir)
    return report


def cmd_compare(config: RunConfig):
    if len(config.models) < 2:
        raise CliError("compare needs at least two model blocks under 'models'")
    if config.data_path is None:
        raise CliError("compare needs a dataset (--data or config 'data')")
    data = load_dataset(config.data_path)
    for spec in config.models:
        _check_covariates(spec, data)
    rows = model_selection.compare_families(
        config.models, data, config.prior, config.sampler
    )
    config.out_dir.mkdir(parents=True, exist_ok=True)
    table = model_selection.comparison_table(rows)
    (config.out_dir / "comparison.txt").write_text(table + "\n")
    with (config.out_dir / "comparison.csv").open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["model", "dic", "p_d", "dev_mean", "dev_sd", "dev_q2.5", "dev_q97.5", "dev_median", "error"])
        for r in rows:
            if r.failed:
                w.writerow([r.label, "", "", "", "", "", "", "", r.error])
            else:
                d = r.deviance
                w.writerow(
                    [r.label]
                    + [_FULL(v) for v in (r.dic, r.p_d, d.mean, d.sd, d.q2_5, d.q97_5, d.median)]
                    + [""]
                )
    return rows


def _check_covariates(spec: ModelSpec, data: Dataset):
    missing = [c for c in spec.covariate_names() if c not in data.covariates]
    if missing:
        raise CliError(
            f"model references covariates {missing} not present in the data "
            f"(columns: {sorted(data.covariates)})"
        )


def cmd_simulate(config: RunConfig, out_path) -> Dataset:
    """Draw a synthetic dataset from explicit true coefficients and write it as CSV."""
    if len(config.models) != 1:
        raise CliError("simulate needs exactly one model block")
    if not config.truth or not config.simulate:
        raise CliError("simulate needs 'truth' and 'simulate' config sections")
    spec = config.models[0]
    sim = config.simulate
    n_rows = int(sim.get("rows", 0))
    if n_rows < 1:
        raise CliError("simulate.rows must be >= 1")
    m_spec = sim.get("m", 20)
    seed = int(sim.get("seed", config.sampler.seed))
    rng = np.random.default_rng(seed)

    m = np.resize(np.asarray(m_spec, dtype=int), n_rows)
    covariates = {}
    for name, how in (sim.get("covariates") or {}).items():
        if isinstance(how, dict) and "bernoulli" in how:
            covariates[name] = rng.binomial(1, float(how["bernoulli"]), n_rows).astype(float)
        elif isinstance(how, dict) and "values" in how:
            covariates[name] = np.resize(np.asarray(how["values"], dtype=float), n_rows)
        else:
            raise CliError(f"covariate {name!r}: expected {{'bernoulli': p}} or {{'values': [...]}}")

    truth = config.truth
    params = ParameterVector(
        beta=np.asarray(truth.get("beta", []), dtype=float),
        gamma=np.asarray(truth.get("gamma", []), dtype=float),
        delta=np.asarray(truth.get("delta", []), dtype=float),
        mu_t=truth.get("mu_t"),
    )
    probe = Dataset(y=np.zeros(n_rows, dtype=int), m=m, covariates=covariates)
    lp = reg.linear_predictors(spec, probe, params)
    y = np.empty(n_rows, dtype=int)
    for i in range(n_rows):
        theta = float(lp.theta[i]) if lp.theta is not None else 0.0
        mu_t = lp.mu_t if lp.mu_t is not None else 0.5
        phi = float(lp.phi[i]) if lp.phi is not None else None
        if spec.family is Family.BINOMIAL:
            y[i] = rng.binomial(int(m[i]), float(lp.mu_b[i]))
        else:
            p = dist.tbb_params(mu_t, float(lp.mu_b[i]), phi, theta, int(m[i]))
            y[i] = dist.sample_tbb(p, rng)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["y", "n"] + sorted(covariates))
        for i in range(n_rows):
            w.writerow(
                [int(y[i]), int(m[i])] + [_FULL(covariates[k][i]) for k in sorted(covariates)]
            )
    return Dataset(y=y, m=m, covariates=covariates)


def cmd_diagnose(config: RunConfig) -> diagnostics.DiagnosticsReport:
    """Recompute diagnostics from persisted chains_<k>.csv files."""
    if len(config.models) != 1:
        raise CliError("diagnose needs exactly one model block")
    post = _read_chains(config.out_dir, config.sampler)
    data = load_dataset(config.data_path) if config.data_path else None
    report = diagnostics.diagnostics_report(config.models[0], data, post)
    payload = report.to_json_dict()
    (config.out_dir / "diagnostics.json").write_text(json.dumps(payload, indent=1) + "\n")
    return report


def cmd_check() -> checks.CheckReport:
    return checks.run_self_checks()


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _add_common(p):
    p.add_argument("--config", help="JSON run configuration file")
    p.add_argument("--data", help="dataset CSV (overrides config)")
    p.add_argument("--out", help="output directory (overrides config)")
    p.add_argument("--seed", type=int, help="RNG seed (overrides config)")
    p.add_argument("--chains", type=int, help="number of chains")
    p.add_argument("--iters", type=int, help="iterations per chain")
    p.add_argument("--burnin", type=int, help="burn-in iterations")
    p.add_argument("--thin", type=int, help="thinning stride")
    p.add_argument("--family", help="model family (bin, bb, brb, tbb)")


def _config_from_args(args) -> RunConfig:
    overrides = {
        k: getattr(args, k, None)
        for k in ("data", "out", "seed", "chains", "iters", "burnin", "thin", "family")
    }
    if args.config:
        return RunConfig.load(args.config, overrides)
    if not overrides.get("family"):
        raise CliError("without --config, --family is required")
    return RunConfig.from_dict({"model": {"family": overrides["family"]}}, overrides)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="tbbreg",
        description="Bayesian tilted beta binomial regression for overdispersed counts",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("fit", "fit one model and write posterior artifacts"),
        ("compare", "fit several families and rank them by DIC"),
        ("diagnose", "recompute diagnostics from persisted chains"),
    ):
        _add_common(sub.add_parser(name, help=helptext))
    sim = sub.add_parser("simulate", help="draw a synthetic dataset from true parameters")
    _add_common(sim)
    sim.add_argument("--output-csv", required=True, help="where to write the synthetic data")
    sub.add_parser("check", help="run the oracle self-verification battery")

    args = parser.parse_args(argv)
    try:
        if args.command == "check":
            report = cmd_check()
            print("\n".join(report.lines()))
            return 0 if report.passed else 1
        config = _config_from_args(args)
        if args.command == "fit":
            report = cmd_fit(config)
            print(report.summary_text())
            print(f"\nartifacts written to {config.out_dir}")
        elif args.command == "compare":
            rows = cmd_compare(config)
            print(model_selection.comparison_table(rows))
            print(f"\nartifacts written to {config.out_dir}")
            if all(r.failed for r in rows):
                return 1
        elif args.command == "simulate":
            data = cmd_simulate(config, args.output_csv)
            print(f"wrote {data.n} rows to {args.output_csv}")
        elif args.command == "diagnose":
            report = cmd_diagnose(config)
            print(json.dumps(report.to_json_dict(), indent=1))
    except (CliError, ValueError, mcmc.SamplerError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def entry():
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
