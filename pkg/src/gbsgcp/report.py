"""Report emission: JSON, aligned text tables and plot-data CSV."""

from __future__ import annotations

import csv
import itertools
import json
from importlib import metadata
from pathlib import Path

import numpy as np

from .exact_models import ExactDistribution
from .gcp import GcpEstimate
from .stats import TestReport, format_table


def package_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        from . import __version__

        return __version__


def provenance(config=None, seeds=None, **extra) -> dict:
    from . import _kernels

    out = {"version": package_version(), "kernel_backend": _kernels.BACKEND}
    if config is not None:
        out["config_hash"] = config.digest()
        out["config"] = config.raw
    if seeds is not None:
        out["seeds"] = seeds
    out.update(extra)
    return out


def _clean(x):
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x) if np.isfinite(x) else None
    return x


def gcp_to_dict(est: GcpEstimate) -> dict:
    d = {
        "kind": est.kind,
        "subsets": [list(s) for s in est.spec.subsets],
        "windows": [list(w) for w in est.spec.windows],
        "probabilities": est.probabilities,
        "sigma_T": est.sigma_T,
        "n_samples": est.n_samples,
        "outside": est.outside,
        "total": est.total(),
    }
    if est.plan is not None:
        d["plan"] = {"n_samples": est.plan.n_samples, "n_traj": est.plan.n_traj, "seed": est.plan.seed}
    d["meta"] = {k: v for k, v in est.meta.items() if k != "counts"}
    return _clean(d)


def exact_to_dict(dist: ExactDistribution) -> dict:
    return _clean({"kind": "exact", "model": dist.model, "params": dist.params,
                   "windows": [[0, dist.m_cut]], "probabilities": dist.probabilities,
                   "sigma_T": np.zeros_like(dist.probabilities), "total": dist.total(),
                   "tail_bound": dist.tail_bound, "tail_rigorous": dist.tail_rigorous})


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_clean(payload), indent=1) + "\n")
    return path


def write_plot_csv(path, est: GcpEstimate) -> Path:
    """Columns m_1..m_d, probability, sigma_T, lower, upper (the +/-1 sigma_T band)."""
    path = Path(path)
    axes = est.spec.axes()
    heads = [f"m_{j + 1}" for j in range(len(axes))]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(heads + ["probability", "sigma_T", "lower", "upper"])
        sig = np.nan_to_num(est.sigma_T)
        for idx in itertools.product(*(range(a.size) for a in axes)):
            p, s = float(est.probabilities[idx]), float(sig[idx])
            w.writerow([int(axes[j][i]) for j, i in enumerate(idx)]
                       + [repr(p), repr(s), repr(p - s), repr(p + s)])
    return path


def write_exact_csv(path, dist: ExactDistribution) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["m", "probability"])
        for m, p in enumerate(dist.probabilities):
            w.writerow([m, repr(float(p))])
    return path


def write_normalized_csv(path, est: GcpEstimate, report: TestReport) -> Path:
    """Per-bin normalized differences; non-admitted bins are kept and flagged."""
    path = Path(path)
    axes = est.spec.axes()
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"m_{j + 1}" for j in range(len(axes))] + ["normalized_difference", "admitted"])
        for idx in itertools.product(*(range(a.size) for a in axes)):
            v = report.normalized[idx]
            w.writerow([int(axes[j][i]) for j, i in enumerate(idx)]
                       + [repr(float(v)) if np.isfinite(v) else "nan", int(report.admitted[idx])])
    return path


def write_tests(path_stem, reports, prov: dict) -> tuple[Path, Path]:
    """``<stem>.json`` with every report and ``<stem>.txt`` with the aligned table."""
    stem = Path(path_stem)
    js = write_json(stem.with_suffix(".json"), {"provenance": prov, "tests": [r.to_dict() for r in reports]})
    txt = stem.with_suffix(".txt")
    txt.write_text(format_table(reports) + "\n")
    return js, txt
