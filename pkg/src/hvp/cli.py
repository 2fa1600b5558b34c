"""Command-line entry point: ``hvp <subcommand> ...``.

Exit codes: 0 success, 1 a check failed or inputs were invalid, 2 a numerical
routine failed, 64 malformed command line or configuration.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import fem
from .config import ConvergenceConfig, FemSolveConfig, NNTrainConfig, thread_limit
from .energy import coercivity_coefficients_weak, params_for_domain, select_parameters
from .exceptions import ConfigError, NumericalError, ValidationError
from .geometry import Domain, diameter, star_shape_constant
from .grid import FieldGrid, fmt
from .identities import field_battery, low_order_morawetz_residual, rellich_residual
from .oracle import CASES, energy_minimiser_1d, exact_1d_constant_forcing
from .planewave import ObjectiveWeights, Samples, build_features, init_model, ls_init, objective_terms
from .training import Schedule, train

EXIT_OK, EXIT_FAILED, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2, 64

_BOXES = {
    "interval": lambda: Domain.interval(origin="center"),
    "square": lambda: Domain.unit_square(origin="center"),
    "cube": lambda: Domain.unit_cube(origin="center"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def _emit(report: dict, path=None):
    text = dumps(report)
    if path:
        Path(path).write_text(text)
    sys.stdout.write(text)


@contextlib.contextmanager
def _threads(deterministic: bool):
    n = thread_limit(deterministic)
    if n is None:
        yield
        return
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=n):
        yield


# ---------------------------------------------------------------------------
# subcommands


def cmd_verify_identities(args) -> int:
    domain = _BOXES[args.domain]()
    fields = field_battery(domain.dim, args.k)
    if args.case != "all":
        matches = {n: u for n, u in fields.items() if n == args.case or n.startswith(args.case + "-")}
        if not matches:
            raise ValidationError(f"unknown case {args.case!r}; choose from {sorted(fields)}")
        fields = matches
    cases = {}
    worst = 0.0
    for name, u in fields.items():
        r = rellich_residual(u, args.k, domain, args.quad_order)
        m = low_order_morawetz_residual(u, args.k, args.beta, domain, args.quad_order)
        cases[name] = {"rellich": r.to_dict(), "morawetz": m.to_dict()}
        worst = max(worst, r.relative_residual, m.relative_residual)
    report = {"domain": domain.to_dict(), "k": args.k, "beta": args.beta,
              "quad_order": args.quad_order, "tolerance": args.tol, "cases": cases,
              "max_relative_residual": worst, "pass": worst < args.tol}
    _emit(report, args.report)
    return EXIT_OK if report["pass"] else EXIT_FAILED


def cmd_coercivity_report(args) -> int:
    domain = _BOXES[args.domain]() if args.domain else _BOXES[("interval", "square", "cube")[args.dim - 1]]()
    if domain.dim != args.dim:
        raise ValidationError(f"--dim {args.dim} does not match domain {args.domain}")
    L, L0 = diameter(domain), star_shape_constant(domain)
    p = select_parameters(args.dim, L, L0, args.k, args.strategy)
    c = coercivity_coefficients_weak(p)
    coeffs = c.times_nu()
    powers = {"residual": 2, "grad": 0, "mass": 0, "bgrad": 1, "bmass": 1, "bimp": 1}
    report = {
        "domain": domain.to_dict(), "L": L, "L0": L0, "strategy": args.strategy,
        "params": p.to_dict(), "eps4": p.eps4,
        "coefficients": coeffs,
        "coefficients_in_L_units": {t: v / L ** powers[t] for t, v in coeffs.items()},
        "pass": c.coercive,
    }
    _emit(report, args.report)
    return EXIT_OK if c.coercive else EXIT_FAILED


def _fem_params(cfg: FemSolveConfig, domain):
    p = params_for_domain(domain, cfg.k)
    kw = {n: v for n, v in (("gamma1", cfg.gamma1), ("gamma2", cfg.gamma2)) if v is not None}
    return p.replace(**kw) if kw else p


def cmd_fem_solve(args) -> int:
    cfg = FemSolveConfig.load(args.config)
    if args.deterministic:
        cfg.deterministic = True
    domain = cfg.domain.domain()
    with _threads(cfg.deterministic):
        space = fem.build_space(domain, cfg.h, cfg.element)
        params = _fem_params(cfg, domain)
        mode = "lambda_over_h" if cfg.lam is not None else "energy"
        f = cfg.f.field(domain.dim, cfg.k)
        system = fem.assemble(space, params, f, penalty_mode=mode, lam=cfg.lam,
                              quad_order=cfg.quad_order)
        coeffs = fem.solve(system)
        uh = space.field(coeffs)
        grid = FieldGrid.from_field(uh, domain, cfg.grid)
    report = {
        "config": cfg.to_dict(), "meta": system.meta, "params": params.to_dict(),
        "coercive": coercivity_coefficients_weak(params).coercive,
        "hermitian_defect": system.hermitian_defect(),
        "discrete_energy": system.energy(coeffs),
        "max_abs_u": float(np.max(np.abs(grid.values))),
    }
    if domain.dim == 2 and grid.shape[0] == grid.shape[1]:
        report["xy_symmetry_defect"] = float(np.max(np.abs(grid.values - grid.values.T)))
    if cfg.export:
        grid.to_csv(cfg.export)
        report["export"] = cfg.export
    _emit(report, cfg.report)
    return EXIT_OK


def _snapshot_path(export: str, it: int) -> str:
    p = Path(export)
    return str(p.with_name(f"{p.stem}_iter{it:06d}{p.suffix or '.csv'}"))


def cmd_nn_train(args) -> int:
    cfg = NNTrainConfig.load(args.config)
    if args.deterministic:
        cfg.deterministic = True
    domain = cfg.domain.domain()
    k = cfg.k
    f = cfg.f.field(domain.dim, k)
    with _threads(cfg.deterministic):
        F = build_features(cfg.features.P, cfg.features.R, k, cfg.features.spread, domain.dim)
        W = None
        ls_info = None
        if cfg.ls_init:
            W, ls_info = ls_init(F, f, domain, k, cfg.weights.boundary_weight, cfg.weights.ridge,
                                 n_interior=cfg.ls_interior, n_boundary=cfg.ls_boundary,
                                 seed=cfg.seed, return_info=True)
        model = init_model(F, cfg.net.h_g, cfg.net.h_m, cfg.net.alpha_g, seed=cfg.seed, W=W)
        weights = ObjectiveWeights(cfg.weights.gamma1, cfg.weights.gamma_bnd, cfg.weights.physical)
        s = cfg.schedule
        schedule = Schedule(iterations=s.iterations, n_interior=s.n_interior, n_boundary=s.n_boundary,
                            lr=s.lr, lr_min=s.lr_min, horizon=s.horizon, freeze=s.freeze,
                            lbfgs_iters=s.lbfgs_iters, lbfgs_interior=s.lbfgs_interior,
                            lbfgs_boundary=s.lbfgs_boundary)
        snapshots = []

        def callback(state):
            if cfg.export and cfg.export_every and state.iteration % cfg.export_every == 0:
                path = _snapshot_path(cfg.export, state.iteration)
                FieldGrid.from_field(state.model.as_field(), domain, cfg.grid).to_csv(path)
                snapshots.append(path)

        state = train(model, f, k, weights, domain, schedule, seed=cfg.seed, callback=callback)
        # fixed evaluation batch, independent of the training stream
        held_out = Samples.draw(domain, s.n_interior, s.n_boundary, np.random.default_rng(cfg.seed + 1))
        final, terms = objective_terms(model, f, k, weights, held_out)
        if cfg.export:
            FieldGrid.from_field(model.as_field(), domain, cfg.grid).to_csv(cfg.export)
    smooth = state.smoothed_loss(50)
    report = {
        "config": cfg.to_dict(),
        "ls_init": None if ls_info is None else {"ridge": ls_info["ridge"], "rows": ls_info["rows"]},
        "iterations": state.iteration,
        "loss_history": state.loss_history,
        "smoothed_loss_final": float(smooth[-1]) if len(smooth) else None,
        "held_out_objective": final, "held_out_terms": terms,
        "lbfgs": state.lbfgs,
        "snapshots": snapshots,
    }
    if cfg.export:
        report["export"] = cfg.export
    _emit(report, cfg.report)
    return EXIT_OK


def cmd_oracle(args) -> int:
    if args.case not in CASES:
        raise ValidationError(f"unknown case {args.case!r}; choose from {sorted(CASES)}")
    domain = Domain.interval()
    u = CASES[args.case](args.k, args.f)
    x = np.linspace(0.0, 1.0, 2001)[:, None]
    xb = np.array([[0.0], [1.0]])
    nb = np.array([[-1.0], [1.0]])
    report = {
        "case": args.case, "k": args.k, "f": args.f,
        "u_mid": complex(u.value(np.array([[0.5]]))[0]),
        "max_pde_residual": float(np.max(np.abs(u.helmholtz(x, args.k) - args.f))),
        "max_impedance_residual": float(np.max(np.abs(u.impedance_residual(xb, nb, args.k)))),
    }
    if args.export:
        FieldGrid.from_field(u, domain, args.n).to_csv(args.export)
        report["export"] = args.export
    _emit(report, args.report)
    return EXIT_OK


def convergence_study(cfg: ConvergenceConfig) -> list[dict]:
    """Rows (h, k, v_error, rate, ratio) against the analytic Helmholtz solution.

    The ``min_*`` columns repeat the measurement against the exact minimiser of
    the discretised energy, which differs from the Helmholtz solution.
    """
    domain = cfg.domain.domain()
    if domain.dim != 1:
        raise ValidationError("convergence studies need a 1D domain with an analytic oracle")
    rows = []
    for k in cfg.k:
        hs = cfg.h if cfg.kh is None else [cfg.kh / k]
        params = params_for_domain(domain, k)
        u = exact_1d_constant_forcing(k, cfg.f, domain)
        u_min = energy_minimiser_1d(k, params.gamma1, 2.0 * params.gamma2, cfg.f, domain)
        prev = None
        for h in hs:
            space = fem.build_space(domain, h, cfg.element)
            system = fem.assemble(space, params, cfg.f, quad_order=cfg.quad_order)
            c = fem.solve(system)
            row = {"h": h, "k": k, "residual": system.meta["residual"]}
            for tag, ref in (("", u), ("min_", u_min)):
                e = fem.error_norms(c, ref, space, params, quad_order=cfg.quad_order)["v_norm_error_rescaled"]
                ei = fem.error_norms(space.interpolate(ref), ref, space, params,
                                     quad_order=cfg.quad_order)["v_norm_error_rescaled"]
                row[f"{tag}v_error"] = e
                row[f"{tag}interp_error"] = ei
                row[f"{tag}ratio"] = e / ei if ei > 0 else math.inf
                row[f"{tag}rate"] = (math.log(prev[f"{tag}v_error"] / e) / math.log(prev["h"] / h)
                                     if prev is not None else None)
            rows.append(row)
            prev = row
    return rows


TABLE_COLUMNS = ("h", "k", "v_error", "rate", "ratio", "interp_error", "min_v_error", "min_rate",
                 "min_ratio", "min_interp_error", "residual")


def write_table(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        for r in rows:
            w.writerow(["" if r[c] is None else fmt(r[c]) for c in TABLE_COLUMNS])


def cmd_convergence_study(args) -> int:
    cfg = ConvergenceConfig.load(args.config)
    if args.deterministic:
        cfg.deterministic = True
    with _threads(cfg.deterministic):
        rows = convergence_study(cfg)
    if cfg.export:
        write_table(rows, cfg.export)
    _emit({"config": cfg.to_dict(), "rows": rows}, cfg.report)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="hvp", description="Coercive Helmholtz energies: FEM and plane-wave network.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-identities", help="Rellich and low-order Morawetz residuals")
    p.add_argument("--case", default="all")
    p.add_argument("--k", type=float, default=5.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--domain", choices=("interval", "square"), default="square")
    p.add_argument("--quad-order", type=int, default=24)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--report")
    p.set_defaults(func=cmd_verify_identities)

    p = sub.add_parser("coercivity-report", help="parameter pack and coercivity coefficients")
    p.add_argument("--dim", type=int, choices=(1, 2, 3), default=2)
    p.add_argument("--domain", choices=tuple(_BOXES))
    p.add_argument("--k", type=float, default=1.0)
    p.add_argument("--strategy", choices=("paper_defaults", "custom"), default="paper_defaults")
    p.add_argument("--report")
    p.set_defaults(func=cmd_coercivity_report)

    for name, func, help_ in (("fem-solve", cmd_fem_solve, "assemble and solve the Galerkin system"),
                              ("nn-train", cmd_nn_train, "train the plane-wave network"),
                              ("convergence-study", cmd_convergence_study, "1D h-refinement table")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True)
        p.add_argument("--deterministic", action="store_true")
        p.set_defaults(func=func)

    p = sub.add_parser("oracle", help="export an analytic reference solution")
    p.add_argument("--case", default="1d-constant")
    p.add_argument("--k", type=float, required=True)
    p.add_argument("--f", type=float, default=1.0)
    p.add_argument("--n", type=int, default=1001)
    p.add_argument("--export")
    p.add_argument("--report")
    p.set_defaults(func=cmd_oracle)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, IsADirectoryError) as exc:
        sys.stderr.write(f"hvp {args.command}: configuration error: {exc}\n")
        return EXIT_USAGE
    except ValidationError as exc:
        sys.stderr.write(f"hvp {args.command}: {exc}\n")
        return EXIT_FAILED
    except NumericalError as exc:
        sys.stderr.write(f"hvp {args.command}: numerical failure: {exc}\n")
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
