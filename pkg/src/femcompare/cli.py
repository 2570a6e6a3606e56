"""Experiment harness: Lagrange vs mixed runs, CSV sweeps and plot data.

Each run solves ``-lap p = 1`` (or a manufactured problem) twice, with
H1 order ``k`` and with RT order ``k - 1`` / L2 order ``k - 1``, and reports
how far the two discrete solutions are from each other and from the
reference fields.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

from .assembly import POISSON_PROBLEM, assemble_lagrange, assemble_mixed, manufactured_problem
from .elements import H1, L2, MAX_ORDER, RT, FESpace
from .mesh import load_mesh, load_star_mesh, mesh_h, uniform_refine, unit_square_mesh
from .postprocess import (
    MANUFACTURED_REFERENCE,
    STAR_REFERENCE,
    GridFunction,
    combine_velocity_error,
    comparison_error,
    compute_l2_error,
    field_l2_norm,
    project_rt_components,
    recover_gradient,
    write_vtk,
)
from .quadrature import required_order
from .solvers import SolverConfig, cg_solve, minres_solve

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "order",
    "refinements",
    "h",
    "p_comp",
    "p_err",
    "pmx_err",
    "u_comp",
    "u_err",
    "umx_err",
    "u_err_normalized",
    "umx_err_normalized",
    "cg_iters",
    "minres_iters",
    "wall_ms",
    "p_ex_norm",
    "u_ex_norm",
    "cg_converged",
    "minres_converged",
)
METRICS = ("p_comp", "p_err", "pmx_err", "u_comp", "u_err", "umx_err")


@dataclass(frozen=True)
class ExperimentRow:
    """One (order, refinements) case.

    ``p_comp``, ``p_err`` and ``pmx_err`` are relative to ``||p_ex||`` and
    ``u_comp`` to ``||u_ex||``.  ``u_err`` and ``umx_err`` are absolute;
    their ``_normalized`` twins are relative to ``||u_ex||``.
    """

    order: int
    refinements: int
    h: float
    p_comp: float
    p_err: float
    pmx_err: float
    u_comp: float
    u_err: float
    umx_err: float
    u_err_normalized: float
    umx_err_normalized: float
    iterations_cg: int
    iterations_minres: int
    wall_time: float
    p_ex_norm: float
    u_ex_norm: float
    cg_converged: bool = True
    minres_converged: bool = True

    def csv_record(self) -> list[str]:
        d = asdict(self)
        out = [str(self.order), str(self.refinements)]
        out += [_fmt(d[c]) for c in CSV_COLUMNS[2:11]]
        out += [str(self.iterations_cg), str(self.iterations_minres), f"{1000 * self.wall_time:.1f}"]
        out += [_fmt(self.p_ex_norm), _fmt(self.u_ex_norm)]
        out += [str(self.cg_converged).lower(), str(self.minres_converged).lower()]
        return out


def _fmt(v: float) -> str:
    return f"{v:.5e}"


def _load(mesh_path, manufactured: bool):
    if mesh_path is None:
        return unit_square_mesh() if manufactured else load_star_mesh()
    return load_mesh(mesh_path)


def run_single(
    mesh_path,
    order: int,
    refinements: int,
    cfg: SolverConfig = SolverConfig(),
    *,
    manufactured: bool = False,
    h_metric: str = "diameter",
    vtk_dir=None,
) -> ExperimentRow:
    """Solve one case end to end and return its metrics.

    ``mesh_path=None`` selects the bundled star mesh, or the unit square in
    manufactured mode.  Solver failures are reported in the row, not raised.
    """
    if not 1 <= order <= MAX_ORDER[H1]:
        raise ValueError(f"order must be in [1, {MAX_ORDER[H1]}], got {order}")
    if refinements < 0:
        raise ValueError("refinements must be nonnegative")
    t0 = time.perf_counter()
    mesh = uniform_refine(_load(mesh_path, manufactured), refinements)
    problem = manufactured_problem() if manufactured else POISSON_PROBLEM
    ref = MANUFACTURED_REFERENCE if manufactured else STAR_REFERENCE

    h1 = FESpace(mesh, H1, order)
    rt = FESpace(mesh, RT, order - 1)
    l2 = FESpace(mesh, L2, order - 1)

    lag = assemble_lagrange(h1, problem)
    p_coef, cg_rep = cg_solve(lag.A, lag.b, cfg=cfg)
    log.info(cg_rep.describe("PCG"))
    mixed = assemble_mixed(rt, l2, problem)
    sol, mr_rep = minres_solve(mixed, mixed.rhs, cfg=cfg)
    log.info(mr_rep.describe("MINRES"))
    u_coef, pm_coef = mixed.split(sol)

    p = GridFunction(h1, p_coef)
    u_mx = GridFunction(rt, u_coef)
    p_mx = GridFunction(l2, pm_coef)
    u_lag = recover_gradient(p, l2)
    u_mx_comp = project_rt_components(u_mx, l2)

    acc = required_order(order)
    p_norm = field_l2_norm(mesh, ref.p, acc)
    u_norm = field_l2_norm(mesh, ref.u, acc, vector=True)
    u_err = combine_velocity_error(
        compute_l2_error(u_lag[0], ref.ux, acc), compute_l2_error(u_lag[1], ref.uy, acc)
    )
    umx_err = compute_l2_error(u_mx, ref.u, acc)

    if vtk_dir is not None:
        out = Path(vtk_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_vtk(
            out / f"solution_o{order}_r{refinements}.vtk",
            mesh,
            {"p_lagrange": p, "p_mixed": p_mx, "u_lagrange": u_lag, "u_mixed": u_mx},
        )

    return ExperimentRow(
        order=order,
        refinements=refinements,
        h=mesh_h(mesh, h_metric),
        p_comp=comparison_error(p, p_mx) / p_norm,
        p_err=compute_l2_error(p, ref.p, acc) / p_norm,
        pmx_err=compute_l2_error(p_mx, ref.p, acc) / p_norm,
        u_comp=comparison_error(u_lag, u_mx_comp) / u_norm,
        u_err=u_err,
        umx_err=umx_err,
        u_err_normalized=u_err / u_norm,
        umx_err_normalized=umx_err / u_norm,
        iterations_cg=cg_rep.iterations,
        iterations_minres=mr_rep.iterations,
        wall_time=time.perf_counter() - t0,
        p_ex_norm=p_norm,
        u_ex_norm=u_norm,
        cg_converged=cg_rep.converged,
        minres_converged=mr_rep.converged,
    )


def run_sweep(
    mesh_path,
    orders: Sequence[int],
    max_refinements: Sequence[int],
    cfg: SolverConfig = SolverConfig(),
    *,
    manufactured: bool = False,
    h_metric: str = "diameter",
    stream=None,
) -> str:
    """Run ``r = 0..max_refinements[i]`` for each ``orders[i]`` and return CSV text.

    Rows are ordered by order, then refinements.  When ``stream`` is given,
    each row is written and flushed as soon as it is computed, so a failing
    case leaves the finished rows behind.
    """
    if not orders or len(orders) != len(max_refinements):
        raise ValueError("orders and max_refinements must be nonempty and of equal length")
    buf = io.StringIO()
    sinks = [buf] if stream is None else [buf, stream]
    writers = [csv.writer(s, lineterminator="\n") for s in sinks]
    for w in writers:
        w.writerow(CSV_COLUMNS)
    for order, rmax in zip(orders, max_refinements):
        for r in range(rmax + 1):
            row = run_single(mesh_path, order, r, cfg, manufactured=manufactured, h_metric=h_metric)
            for w, s in zip(writers, sinks):
                w.writerow(row.csv_record())
                s.flush()
    return buf.getvalue()


def read_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


def emit_plot_data(csv_text: str, out_dir) -> list[Path]:
    """Write one whitespace-separated file per order: ``h`` then the six metrics.

    Values are copied from the CSV verbatim, rows sorted by decreasing ``h``.
    """
    rows = read_csv(csv_text)
    if not rows:
        raise ValueError("CSV contains no data rows")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    by_order: dict[int, list[dict]] = {}
    for row in rows:
        by_order.setdefault(int(row["order"]), []).append(row)
    paths = []
    for order in sorted(by_order):
        series = sorted(by_order[order], key=lambda r: -float(r["h"]))
        path = out / f"order_{order}.dat"
        with open(path, "w") as f:
            f.write(f"# order {order}\n")
            f.write("# " + " ".join(("h",) + METRICS) + "\n")
            for row in series:
                f.write(" ".join(row[c] for c in ("h",) + METRICS) + "\n")
        paths.append(path)
    return paths


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="femcompare",
        description="Compare Lagrange and Raviart-Thomas mixed solutions of -lap p = 1.",
    )
    ap.add_argument("-m", "--mesh", help="MFEM v1.0 mesh file (default: bundled star mesh)")
    ap.add_argument("-o", "--order", type=int, default=1, help="Lagrange order k; mixed uses k-1")
    ap.add_argument("-r", "--refinements", type=int, default=0, help="uniform refinements")
    ap.add_argument("--sweep", action="store_true", help="run every order in --orders")
    ap.add_argument("--orders", type=_int_list, default=[1, 2, 3], help="sweep orders, e.g. 1,2,3")
    ap.add_argument(
        "--max-refinements",
        type=_int_list,
        default=None,
        help="per-order maximum refinement count (default: 2 for each order)",
    )
    ap.add_argument("--csv", help="write the CSV here instead of stdout")
    ap.add_argument("--plot-dir", help="also write per-order plot data files here")
    ap.add_argument("--vtk", help="directory for VTK output (single runs)")
    ap.add_argument("--manufactured", action="store_true", help="sin(pi x) sin(pi y) test problem")
    ap.add_argument("--h-metric", choices=("diameter", "jacobian"), default="diameter")
    ap.add_argument("--rtol", type=float, default=1e-6)
    ap.add_argument("--atol", type=float, default=1e-10)
    ap.add_argument("--max-iter", type=int, default=10000)
    ap.add_argument("--jacobi", action="store_true", help="diagonal preconditioning (off for table runs)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point.  Returns 0 on success, 1 on a fatal run error, 2 on bad options."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = SolverConfig(args.rtol, args.atol, args.max_iter, args.jacobi)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    opts = dict(manufactured=args.manufactured, h_metric=args.h_metric)
    try:
        text = _run(args, cfg, opts)
    except (ValueError, OSError) as exc:
        # rows finished before the failure are already flushed
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for row in read_csv(text):
        for name in ("cg", "minres"):
            if row[f"{name}_converged"] != "true":
                print(
                    f"warning: {name.upper()} did not converge for order {row['order']}, "
                    f"refinements {row['refinements']}",
                    file=sys.stderr,
                )
    if args.plot_dir:
        emit_plot_data(text, args.plot_dir)
    return 0


def _run(args, cfg: SolverConfig, opts: dict) -> str:
    if args.sweep:
        refs = args.max_refinements or [2] * len(args.orders)
        if not args.csv:
            return run_sweep(args.mesh, args.orders, refs, cfg, stream=sys.stdout, **opts)
        with open(args.csv, "w", newline="") as f:
            return run_sweep(args.mesh, args.orders, refs, cfg, stream=f, **opts)
    row = run_single(args.mesh, args.order, args.refinements, cfg, vtk_dir=args.vtk, **opts)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    w.writerow(row.csv_record())
    text = buf.getvalue()
    if args.csv:
        Path(args.csv).write_text(text)
    else:
        sys.stdout.write(text)
    return text

if __name__ == "__main__":
    sys.exit(main())
