"""Run pipelines shared by the HTTP service and the CLI.

Each pipeline takes a validated SimConfig, is deterministic given
(config, seed), and returns plain data; file writing is separated so the
service can return results inline while the CLI persists them.
"""

import io
import numpy as np
from dataclasses import dataclass

from .config import config_hash, render_config
from .errors import ConfigError
from .kernel import cov_blocks
from .mdgen import generate
from .oracle import build_oracle, sample_oracle
from .sheet import ensemble_summary_csv, grid_ensemble, points_ensemble, write_grid_ensemble
from .stats import (
    ConvergenceReport,
    FDDTestSpec,
    cov_error,
    cramer_wold_test,
    delta_n_quadrature,
    exact_sum_blocks,
    holder_slope,
    lindeberg_sum,
    lindeberg_threshold,
    projected_variance,
    qv_convergence,
    qv_matrix_report,
    real_diagonalizable,
    selfsim_residual,
)

HOLDER_SIDES = tuple(2.0 ** -k for k in range(2, 8))


def fdd_spec(cfg):
    a, b = cfg.fdd_weights()
    return FDDTestSpec(points=tuple(cfg.fdd_points), a=a, b=b)


# ---------------------------------------------------------------------------
# covariance
# ---------------------------------------------------------------------------


def run_cov(cfg):
    """Limit-field covariance blocks for the configured point set."""
    cfg.validate()
    spec = cfg.kernel_spec()
    if not cfg.points:
        return None
    return cov_blocks(cfg.points, spec)


def covariance_csv(tensor):
    """One row per block entry: k,l,t_k,s_k,t_l,s_l,row,col,value."""
    out = io.StringIO()
    out.write("k,l,t_k,s_k,t_l,s_l,row,col,value\n")
    if tensor is None:
        return out.getvalue()
    for k, (t, s) in enumerate(tensor.points):
        for l, (t2, s2) in enumerate(tensor.points):
            block = tensor.blocks[k, l]
            for r in range(tensor.d):
                for c in range(tensor.d):
                    out.write(
                        f"{k + 1},{l + 1},{t:.17g},{s:.17g},{t2:.17g},{s2:.17g},"
                        f"{r + 1},{c + 1},{block[r, c]:.17g}\n"
                    )
    return out.getvalue()


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------


@dataclass
class SimulateResult:
    config_hash: str
    files: list
    summary: dict


def run_simulate(cfg, out_dir=None, jobs=1):
    """Simulate the grid ensemble; write binary + CSV summary when out_dir given."""
    cfg.validate()
    values = grid_ensemble(cfg, jobs=jobs)
    summary = {
        "replicates": int(values.shape[0]),
        "grid_m": cfg.grid_m,
        "d": cfg.d,
        "mean_abs": float(np.abs(values.mean(axis=0)).mean()),
        "rms": float(np.sqrt((values * values).mean())),
        "max_abs": float(np.abs(values).max()),
    }
    files = []
    if out_dir is not None:
        from pathlib import Path

        out = Path(out_dir)
        ens = out / "ensemble.bin"
        write_grid_ensemble(ens, values, cfg.seed)
        files.append(str(ens))
        summary_path = out / "summary.csv"
        ensemble_summary_csv(values, cfg.grid_m, summary_path)
        files.append(str(summary_path))
        files.append(str(_write_hash(cfg, out)))
    return SimulateResult(config_hash=config_hash(cfg), files=files, summary=summary)


def _write_hash(cfg, out):
    path = out / "config.sha256"
    with open(path, "w") as fh:
        fh.write(config_hash(cfg) + "\n")
    with open(out / "config.canonical", "w") as fh:
        fh.write(render_config(cfg))
    return path


# ---------------------------------------------------------------------------
# verification battery
# ---------------------------------------------------------------------------


def run_verify(cfg, jobs=1):
    """Run every convergence metric and collect a self-consistent report."""
    exponent = cfg.validate()
    if not cfg.points:
        raise ConfigError("verify requires a nonempty point set")
    spec = cfg.kernel_spec()
    report = ConvergenceReport(
        meta={
            "config_hash": config_hash(cfg),
            "seed": cfg.seed,
            "replicates": cfg.replicates,
            "quad_order": cfg.quad_order,
        }
    )

    # covariance convergence ladder (the computable shadow of weak convergence)
    quad = cov_blocks(cfg.points, spec)
    errs = []
    for n in cfg.n_ladder:
        errs.append(cov_error(n, cfg.points, spec, quad=quad))
        report.add("cov_error", errs[-1], cfg.tol("cov_error"), n=n)
    worst_increase = max([0.0] + [b - a for a, b in zip(errs, errs[1:])])
    report.add("cov_error_monotone", worst_increase, cfg.tol("cov_monotone"))

    # operator self-similarity at covariance level
    for c in cfg.c_list:
        report.add(
            f"selfsim_c={c:g}",
            selfsim_residual(c, cfg.selfsim_points, spec),
            cfg.tol("selfsim"),
        )

    # increment scaling
    slopes = holder_slope(spec, HOLDER_SIDES)
    if cfg.d == 1:
        target = exponent.lambda_D + 0.5
        report.add(
            "holder_slope_dev",
            abs(float(slopes.per_component[0]) - target),
            cfg.tol("holder_scalar"),
        )
    else:
        D = np.atleast_2d(np.asarray(cfg.D, float))
        if np.allclose(D, np.diag(np.diag(D))):
            for comp in range(cfg.d):
                target = D[comp, comp] + 0.5
                report.add(
                    f"holder_slope_dev_c{comp + 1}",
                    abs(float(slopes.per_component[comp]) - target),
                    cfg.tol("holder_matrix"),
                )
        report.add(
            "holder_min_slope_dev",
            abs(float(slopes.per_component.min()) - (exponent.lambda_D + 0.5)),
            cfg.tol("holder_matrix"),
        )

    # Lindeberg truncation: analytic threshold plus the actual sum at level n
    fdd = fdd_spec(cfg)
    threshold = lindeberg_threshold(fdd, exponent, cfg.epsilon)
    threshold_indep = lindeberg_threshold(
        fdd, exponent, cfg.epsilon, delta_n=delta_n_quadrature
    )
    report.add("lindeberg_n0_route_gap", abs(threshold.n0 - threshold_indep.n0), 0.5)
    n_check = max(cfg.n, threshold.n0)
    arr = generate(cfg.generator, n_check, cfg.d, cfg.seed)
    report.add(
        "lindeberg_sum",
        lindeberg_sum(n_check, fdd, arr, cfg.epsilon, spec),
        cfg.tol("lindeberg"),
        n=n_check,
    )

    # quadratic variation: entrywise route when the exponent allows it
    if cfg.d == 1 or real_diagonalizable(cfg.D):
        qv = qv_convergence(
            cfg.n_ladder,
            cfg.qv_point_k,
            cfg.qv_point_l,
            cfg.qv_q - 1,
            cfg.qv_m - 1,
            cfg.seed,
            spec,
            generator=cfg.generator,
            qv_factor=cfg.tol("qv_factor"),
        )
    else:
        qv = qv_matrix_report(
            cfg.n_ladder, cfg.qv_point_k, cfg.qv_point_l, spec, qv_factor=cfg.tol("qv_factor")
        )
    report.extend(qv)

    # Cramer-Wold finite-dimensional projection
    model = build_oracle(cfg.fdd_points, spec)
    oracle_samples = sample_oracle(model, cfg.seed, cfg.replicates)
    xn_samples = points_ensemble(cfg, cfg.fdd_points, jobs=jobs)
    cw = cramer_wold_test(fdd, xn_samples, model, oracle_samples)
    report.add("cw_ks_pvalue_gap", 1.0 - cw.p_value, 1.0 - cfg.tol("cw_p_min"))
    band = cfg.tol("mc_band") * np.sqrt(2.0 / cfg.replicates)
    var_sum = projected_variance(exact_sum_blocks(cfg.n, cfg.fdd_points, spec), fdd)
    report.add("cw_var_rel_err_n", abs(cw.projected_variance_n / var_sum - 1.0), band)
    report.add(
        "cw_var_rel_err_oracle",
        abs(cw.projected_variance_oracle / cw.parametric_variance - 1.0),
        band,
    )
    return report


def write_verify_outputs(report, cfg, out_dir):
    from pathlib import Path

    out = Path(out_dir)
    files = []
    path = out / "report.csv"
    with open(path, "w") as fh:
        fh.write(report.to_csv())
    files.append(str(path))
    path = out / "report.txt"
    with open(path, "w") as fh:
        fh.write(report.to_text())
    files.append(str(path))
    files.append(str(_write_hash(cfg, out)))
    return files
