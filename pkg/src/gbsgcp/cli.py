"""Command-line front end: ``gbsgcp {simulate,exact,validate,fake,fit,moments} CONFIG``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 dataset ingestion error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time

import numpy as np

from . import exact_models
from .config import ConfigError, RunConfig
from .dataio import IngestionError, ingest_patterns, load_dataset, write_patterns  # noqa: F401
from .exact_models import ConvergenceError
from .fake_experiment import DetectorModel, generate_patterns
from .gcp import BinningSpec, bin_patterns, default_windows, estimate_gcp, permute_modes
from .phase_space import EnsemblePlan, PhaseSpaceEnsemble, mode_moments
from .report import (exact_to_dict, gcp_to_dict, provenance, write_exact_csv, write_json,
                     write_normalized_csv, write_plot_csv, write_tests)
from .stats import chi_square, fit_epsilon_t, format_table, moment_z_test, raw_moment_errors

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INGEST = 0, 2, 3, 4

_EXACT_KEYS = {"model", "M", "r", "t", "n", "m_cut", "threshold"}
_VALIDATE_KEYS = {"theory", "fit", "moments", "min_expected", "permutations", "permutation_seed"}
_FIT_KEYS = {"x0", "xatol", "max_iter", "fix_epsilon", "fix_t", "n_samples", "n_traj", "seed"}


def _ensemble(cfg: RunConfig, bank=None, matrix=None, plan=None):
    bank = cfg.bank() if bank is None else bank
    matrix = cfg.matrix() if matrix is None else matrix
    if matrix.n_modes < bank.n_inputs:
        raise ConfigError(f"network has {matrix.n_modes} modes but {bank.n_inputs} inputs are squeezed")
    return PhaseSpaceEnsemble.simulate(bank, matrix, plan or cfg.plan(), cfg.workers)


def _windows(cfg: RunConfig, ens, spec: BinningSpec) -> BinningSpec:
    if spec.windows is not None:
        return spec
    return default_windows(ens, spec, cfg.threshold, cfg.pilot_samples)


def cmd_simulate(cfg: RunConfig, out=None) -> list:
    """Positive-P GCPs for every configured binning; writes JSON and plot CSV per binning."""
    ens = _ensemble(cfg)
    out_dir = cfg.output_dir(out)
    results = []
    for spec in cfg.binnings(ens.n_modes):
        t0 = time.perf_counter()
        spec = _windows(cfg, ens, spec)
        est = estimate_gcp(ens, spec)
        elapsed = time.perf_counter() - t0
        stem = out_dir / f"{cfg.prefix}_gcp_d{spec.d}"
        prov = provenance(cfg, {"ensemble": ens.plan.seed}, runtime_s=elapsed)
        write_json(stem.with_suffix(".json"), {"provenance": prov, "gcp": gcp_to_dict(est)})
        write_plot_csv(stem.with_suffix(".csv"), est)
        print(f"d={spec.d} windows={list(spec.windows)} bins={spec.n_bins} "
              f"sum={est.total():.8f} max_sigma_T={est.sigma_T.max():.3g} ({elapsed:.1f} s)")
        results.append(est)
    return results


def _exact_distribution(cfg: RunConfig):
    sec = cfg.section("exact", _EXACT_KEYS)
    inputs = cfg.raw.get("inputs") or {}
    network = cfg.raw.get("network") or {}
    model = sec.get("model", "lossy-squeezed")
    M = int(sec.get("M", network.get("M", inputs.get("n_inputs", 0))))
    r = float(sec.get("r", inputs.get("r", 0.0)))
    m_cut = sec.get("m_cut")
    thr = float(sec.get("threshold", 1e-7))
    try:
        if model == "lossy-squeezed":
            t = float(sec.get("t", network.get("t_amp", 1.0)))
            return exact_models.lossy_squeezed_total_counts(M, r, t, m_cut, thr)
        if model == "lossless-squeezed":
            return exact_models.lossless_squeezed_total_counts(M, r, m_cut, thr)
        if model == "poisson-pair-limit":
            return exact_models.poisson_pair_limit(M, r, m_cut, thr)
        if model == "thermal-negative-binomial":
            return exact_models.thermal_negative_binomial(M, r, m_cut, thr)
        if model == "geometric":
            n = float(sec.get("n", math.sinh(r) ** 2))
            return exact_models.geometric(n, m_cut, thr)
    except ConvergenceError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[exact] {exc}") from exc
    raise ConfigError(f"[exact] unknown model {model!r}")


def cmd_exact(cfg: RunConfig, out=None):
    """Exact or limiting total-count distribution for the configured inputs."""
    dist = _exact_distribution(cfg)
    stem = cfg.output_dir(out) / f"{cfg.prefix}_exact_{dist.model}"
    write_json(stem.with_suffix(".json"), {"provenance": provenance(cfg), "distribution": exact_to_dict(dist)})
    write_exact_csv(stem.with_suffix(".csv"), dist)
    print(f"{dist.model}: m_cut={dist.m_cut} sum={dist.total():.10f} tail<={dist.tail_bound:.3g}")
    return dist


def cmd_fake(cfg: RunConfig, out=None):
    """Draw fake PNR count patterns from a classical phase-space ensemble."""
    sec = cfg.section("fake", {"c_max", "tail_policy", "seed", "output"})
    try:
        det = DetectorModel(int(sec.get("c_max", 13)), sec.get("tail_policy", "renormalize"))
    except ValueError as exc:
        raise ConfigError(f"[fake] {exc}") from exc
    ens = _ensemble(cfg)
    seed = int(sec.get("seed", ens.plan.seed))
    try:
        pats = generate_patterns(ens, det, seed)
    except ValueError as exc:
        raise ConfigError(f"[fake] {exc}") from exc
    out_dir = cfg.output_dir(out)
    path = cfg._path(sec["output"]) if "output" in sec and out is None else out_dir / f"{cfg.prefix}_patterns.txt"
    write_patterns(path, pats)
    write_json(path.with_suffix(".json"), {"provenance": provenance(cfg, {"ensemble": ens.plan.seed, "fake": seed}),
                                           "patterns": {"path": str(path), "M": pats.n_modes,
                                                        "N_E": pats.n_samples, **pats.metadata}})
    print(f"wrote {pats.n_samples} patterns of {pats.n_modes} modes to {path}")
    return pats


def _dataset(cfg: RunConfig, M: int):
    path, fmt = cfg.dataset_path()
    pats = load_dataset(path, fmt)
    if pats.n_modes != M:
        raise IngestionError(f"{path}: patterns have {pats.n_modes} modes but the network has {M}")
    return pats


def _fit(cfg: RunConfig, pats, bank, matrix):
    sec = cfg.section("fit", _FIT_KEYS)
    base = cfg.plan()
    plan = EnsemblePlan(int(sec.get("n_samples", base.n_samples)), int(sec.get("n_traj", min(base.n_traj, 800))),
                        int(sec.get("seed", base.seed)))
    spec = cfg.binnings(matrix.n_modes)[0]
    if spec.d != 1:
        spec = BinningSpec.contiguous(matrix.n_modes, 1)
    x0 = tuple(sec.get("x0", (bank.epsilon if bank.epsilon > 0 else 0.05, matrix.t_correction)))
    return fit_epsilon_t(pats, bank, matrix, spec, plan, x0, sec.get("fix_epsilon"), sec.get("fix_t"),
                         final_plan=base if base.seed != plan.seed else base.with_seed(base.seed + 1),
                         xatol=float(sec.get("xatol", 5e-4)),
                         max_iter=int(sec.get("max_iter", 200)), workers=cfg.workers)


def _moment_report(pats, ens, label):
    mm = mode_moments(ens)
    sig_E = raw_moment_errors(ens, 1, pats.n_samples)
    rep = moment_z_test(pats.mode_means(), mm.mean, mm.sigma_T, sig_E, label)
    rep.epsilon = ens.bank.epsilon
    rep.t = ens.matrix.t_correction
    return rep


def cmd_validate(cfg: RunConfig, out=None, fit: bool | None = None) -> list:
    """Bin the dataset, compare with each requested ground truth and report chi^2/k, k, Z."""
    sec = cfg.section("validate", _VALIDATE_KEYS)
    bank, matrix = cfg.bank(), cfg.matrix()
    pats = _dataset(cfg, matrix.n_modes)
    theories = sec.get("theory", ["ideal", "thermalized"])
    theories = theories if isinstance(theories, list) else [theories]
    min_expected = float(sec.get("min_expected", 10))
    do_fit = bool(sec.get("fit", False)) if fit is None else fit
    reports, fit_res = [], None
    if do_fit:
        fit_res = _fit(cfg, pats, bank, matrix)
        bank, matrix = bank.with_epsilon(fit_res.epsilon), matrix.with_correction(fit_res.t)
        print(f"fit: epsilon={fit_res.epsilon:.4f} +/- {fit_res.d_epsilon:.4f}, "
              f"t={fit_res.t:.4f} +/- {fit_res.d_t:.4f}, converged={fit_res.converged}")
    models = {}
    for name in theories:
        if name == "ideal":
            models[name] = ("EI", _ensemble(cfg, bank.with_epsilon(0.0), matrix.with_correction(1.0)))
        elif name == "thermalized":
            models[name] = ("ET", _ensemble(cfg, bank, matrix))
        elif name == "exact":
            models[name] = ("EX", _exact_distribution(cfg))
        else:
            raise ConfigError(f"[validate] unknown theory {name!r}")
    out_dir = cfg.output_dir(out)
    # windows follow the thermalized model when present, since it is the closer ground truth
    ordered = sorted(models.items(), key=lambda kv: kv[0] != "thermalized")
    first_ens = next((m for _, (_, m) in ordered if isinstance(m, PhaseSpaceEnsemble)), None)
    n_perm = int(sec.get("permutations", 0))
    perm_rng = np.random.default_rng(int(sec.get("permutation_seed", 0)))
    perms = [perm_rng.permutation(matrix.n_modes) for _ in range(n_perm)]
    for spec in cfg.binnings(matrix.n_modes):
        if spec.windows is None:
            if first_ens is None:
                dist = models["exact"][1]
                spec = spec.with_windows([(0, dist.m_cut)])
            else:
                spec = _windows(cfg, first_ens, spec)
        exp = bin_patterns(pats, spec)
        for name, (label, model) in models.items():
            if isinstance(model, PhaseSpaceEnsemble):
                theo = estimate_gcp(model, spec)
                eps, t = model.bank.epsilon, model.matrix.t_correction
            else:
                if spec.d != 1:
                    continue
                theo = model.to_estimate(spec)
                eps = t = None
            rep = chi_square(exp, theo, min_expected, label)
            rep.epsilon, rep.t = eps, t
            rep.mode_number = f"{spec.order} (d={spec.d})"
            if perms and spec.d > 1 and isinstance(model, PhaseSpaceEnsemble):
                zs = []
                for p in perms:
                    e_p = bin_patterns(permute_modes(pats, p), spec)
                    t_p = estimate_gcp(permute_modes(model, p), spec)
                    zs.append(chi_square(e_p, t_p, min_expected, label).Z)
                rep.extra["permutation_Z"] = zs
                rep.extra["mean_permutation_Z"] = float(np.mean(zs))
            reports.append(rep)
            write_normalized_csv(out_dir / f"{cfg.prefix}_{label}_d{spec.d}_normalized.csv", theo, rep)
    if sec.get("moments", True):
        for name, (label, model) in models.items():
            if isinstance(model, PhaseSpaceEnsemble):
                rep = _moment_report(pats, model, label)
                rep.mode_number = f"{matrix.n_modes} (moments)"
                reports.append(rep)
    prov = provenance(cfg, {"ensemble": cfg.plan().seed}, dataset=pats.metadata)
    if fit_res is not None:
        prov["fit"] = {"epsilon": fit_res.epsilon, "t": fit_res.t, "d_epsilon": fit_res.d_epsilon,
                       "d_t": fit_res.d_t, "converged": fit_res.converged}
    write_tests(out_dir / f"{cfg.prefix}_validate", reports, prov)
    print(format_table(reports))
    return reports


def cmd_fit(cfg: RunConfig, out=None):
    """Fit (epsilon, t) by minimising chi^2/k against the dataset."""
    bank, matrix = cfg.bank(), cfg.matrix()
    pats = _dataset(cfg, matrix.n_modes)
    res = _fit(cfg, pats, bank, matrix)
    prov = provenance(cfg, {"fit": cfg.section("fit", _FIT_KEYS).get("seed", cfg.plan().seed)},
                      fit={"d_epsilon": res.d_epsilon, "d_t": res.d_t, "converged": res.converged,
                           "iterations": res.n_iter, "evaluations": res.n_eval})
    write_tests(cfg.output_dir(out) / f"{cfg.prefix}_fit", [res.report], prov)
    print(format_table([res.report]))
    if not res.converged:
        print("warning: fit did not converge; best point reported", file=sys.stderr)
    return res


def cmd_moments(cfg: RunConfig, out=None):
    """Z-test of per-mode mean photon numbers against theory."""
    bank, matrix = cfg.bank(), cfg.matrix()
    pats = _dataset(cfg, matrix.n_modes)
    reports = [_moment_report(pats, _ensemble(cfg, bank, matrix), "ET")]
    reports[0].mode_number = str(matrix.n_modes)
    write_tests(cfg.output_dir(out) / f"{cfg.prefix}_moments", reports, provenance(cfg))
    print(format_table(reports))
    return reports


COMMANDS = {"simulate": cmd_simulate, "exact": cmd_exact, "validate": cmd_validate,
            "fake": cmd_fake, "fit": cmd_fit, "moments": cmd_moments}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gbsgcp", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=(fn.__doc__ or name).splitlines()[0])
        sp.add_argument("config", help="YAML run configuration")
        sp.add_argument("-o", "--out", help="output directory (overrides [output] dir)")
        if name == "validate":
            sp.add_argument("--fit", action="store_true", default=None, help="fit (epsilon, t) first")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = RunConfig.load(args.config)
        kwargs = {"fit": args.fit} if args.command == "validate" else {}
        COMMANDS[args.command](cfg, args.out, **kwargs)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IngestionError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_INGEST
    except (ConvergenceError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
