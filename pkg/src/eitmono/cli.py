"""
Command-line experiment runner.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 failed
``--check``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy

from eitmono import __version__
from eitmono.config import ConfigError, load_config, validate_config
from eitmono.errors import InconsistentDataError, NumericalError, ParameterError
from eitmono.forward import (
    ForwardSolver,
    analytic_disk_eigenvalues,
    assemble_frechet,
    calibrate_fem_tolerance,
    edge_indicator_basis,
    fourier_basis,
)
from eitmono.geometry import outer_closure
from eitmono.locpot import (
    conductivity_independence_check,
    locpot_dichotomy_sweep,
    region_from_shapes,
)
from eitmono.mesh import PixelGrid, build_disk_mesh
from eitmono.phantoms import add_noise, make_phantom
from eitmono.reconstruct import (
    INDEFINITE_ALPHAS_FULL,
    INDEFINITE_ALPHAS_LINEARIZED,
    DEFINITE_ALPHAS,
    default_family,
    indefinite_family_sweep,
    jaccard,
    metrics_row,
    definite_sweep,
    reconstruct_indefinite_shrink,
    write_metrics,
)

log = logging.getLogger("eitmono")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CHECK = 0, 2, 3, 4
U64_MAX = 2**64 - 1


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v <= U64_MAX:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


class Run:
    """Resolved config plus output directory and provenance record."""

    def __init__(self, args: argparse.Namespace, cfg: dict) -> None:
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.threads is not None:
            cfg["threads"] = args.threads
        self.cfg = cfg
        self.check = args.check
        self.out = Path(args.out or os.environ.get("EITMONO_OUT") or "eitmono_out")
        self.out.mkdir(parents=True, exist_ok=True)
        blob = json.dumps(cfg, sort_keys=True)
        self.prov: dict[str, object] = {
            "command": args.command,
            "config": getattr(args, "config", None),
            "config_sha256": hashlib.sha256(blob.encode()).hexdigest(),
            "resolved_config": blob,
            "version": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        }
        self._mesh = None

    @property
    def mesh(self):
        if self._mesh is None:
            self._mesh = build_disk_mesh(self.cfg["mesh"]["level"])
            self.prov.update(mesh_level=self._mesh.level, n_vertices=self._mesh.n_vertices,
                             n_triangles=self._mesh.n_triangles, mesh_h=self._mesh.h)
        return self._mesh

    def basis(self):
        b = self.cfg["basis"]
        kind = b.get("kind", "fourier")
        self.prov["basis"] = kind
        if kind == "edge":
            arc = tuple(b["arc"]) if "arc" in b else None
            self.prov["arc"] = arc
            return edge_indicator_basis(self.mesh, arc)
        if "arc" in b:
            raise ConfigError("config field 'basis/arc': only valid for the edge basis")
        self.prov["basis_order"] = b.get("order", 8)
        return fourier_basis(self.mesh, b.get("order", 8))

    def fem_tolerance(self) -> float:
        b = self.cfg["basis"]
        order = b.get("order", 8) if b.get("kind", "fourier") == "fourier" else 8
        eps = calibrate_fem_tolerance(self.mesh, order)
        self.prov.update(eps_fem=eps, eps_fem_order=order)
        return eps

    def write_provenance(self) -> None:
        lines = [f"{k}: {v}" for k, v in self.prov.items()]
        (self.out / "provenance.log").write_text("\n".join(lines) + "\n")


def _phantom(run: Run, spec: dict | None = None, grid: PixelGrid | None = None):
    spec = dict(run.cfg["phantom"] if spec is None else spec)
    cell_aligned = spec.pop("cell_aligned", True)
    grid = grid or PixelGrid(run.mesh, run.cfg["grid"])
    return make_phantom(spec, grid, run.mesh, cell_aligned=cell_aligned), grid


def _concentric(spec: dict) -> tuple[float, float] | None:
    shapes = spec.get("shapes", [])
    if not shapes:
        return 0.0, 1.0
    if len(shapes) == 1 and shapes[0]["kind"] == "disk" and np.allclose(shapes[0]["center"], 0):
        return float(shapes[0]["radius"]), float(shapes[0]["contrast"])
    return None


def cmd_forward(run: Run) -> int:
    mesh = run.mesh
    basis = run.basis()
    ph, _ = _phantom(run)
    a = ForwardSolver(mesh, ph.conductivity).ntd(basis)
    a.to_csv(run.out / "ntd.csv")
    ph.conductivity.to_csv(run.out / "conductivity.csv")
    rc = EXIT_OK
    conc = _concentric(run.cfg["phantom"])
    if conc is not None and basis.modes is not None:
        fem = np.sort(a.operator_eigenvalues())[::-1]
        order = np.argsort(-analytic_disk_eigenvalues(basis.modes, *conc), kind="stable")
        modes = basis.modes[order]
        exact = analytic_disk_eigenvalues(modes, *conc)
        rel = np.abs(fem - exact) / np.abs(exact)
        with open(run.out / "eigs.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["mode", "fem", "analytic", "rel_err"])
            for row in zip(modes, fem, exact, rel):
                w.writerow([int(row[0]), f"{row[1]:.17g}", f"{row[2]:.17g}", f"{row[3]:.6e}"])
        run.prov["max_rel_err"] = float(rel.max())
        limit = run.cfg.get("check", {}).get("max_rel_err", 0.02)
        if run.check and rel.max() > limit:
            log.error("max relative eigenvalue error %.3e exceeds %.3e", rel.max(), limit)
            rc = EXIT_CHECK
    elif run.check and "max_rel_err" in run.cfg.get("check", {}):
        raise ConfigError("check 'max_rel_err' needs a homogeneous or concentric phantom")
    run.write_provenance()
    return rc


def cmd_reconstruct(run: Run) -> int:
    rcfg = run.cfg.get("reconstruct")
    if rcfg is None:
        raise ConfigError("config field 'reconstruct' is required for this subcommand")
    mode = rcfg.get("mode", "definite-lin")
    mesh = run.mesh
    basis = run.basis()
    ph, grid = _phantom(run)
    exact = ForwardSolver(mesh, ph.conductivity).ntd(basis)
    delta = float(rcfg.get("delta", 0.0))
    measured = add_noise(exact, delta, run.cfg["seed"]).ntd
    eps = run.fem_tolerance()
    alpha_reg = rcfg.get("alpha_reg")
    alpha_reg = delta + eps if alpha_reg is None else float(alpha_reg)
    threads = run.cfg["threads"]
    run.prov.update(mode=mode, delta=delta, alpha_reg=alpha_reg, seed=run.cfg["seed"],
                    grid=grid.n, threads=threads)
    t0 = time.perf_counter()
    if mode.startswith("definite"):
        sub = "full" if mode == "definite-full" else "linearized"
        alphas = rcfg.get("alphas", DEFINITE_ALPHAS)
        sweep = definite_sweep(measured, mesh, basis, grid, alphas, alpha_reg, sub,
                               rcfg.get("sign", 1), threads)
        result = sweep.field
        run.prov.update(alphas=list(alphas), sign=rcfg.get("sign", 1),
                        min_margin=float(sweep.margins.min()))
    else:
        sub = "linearized" if rcfg.get("linearized", True) else "full"
        frechet = assemble_frechet(mesh, basis) if sub == "linearized" else None
        if mode == "indefinite-family":
            default = INDEFINITE_ALPHAS_FULL if sub == "full" else INDEFINITE_ALPHAS_LINEARIZED
            alphas = rcfg.get("alphas", default)
            family = default_family(grid, channels=rcfg.get("channels", True))
            res = indefinite_family_sweep(measured, family, alphas, alpha_reg, sub, mesh,
                                          frechet, threads)
            result = res.field
            run.prov.update(alphas=list(alphas), family_size=len(family),
                            family_passing=len(res.passing))
        else:
            alpha = rcfg.get("alpha", 2.0 if sub == "full" else 1.0)
            result = reconstruct_indefinite_shrink(measured, grid, alpha, alpha_reg, sub, mesh,
                                                   frechet).field
            run.prov["alpha"] = alpha
    log.info("sweep took %.2f s", time.perf_counter() - t0)
    truth = outer_closure(ph.truth)
    result.to_pgm(run.out / "reconstruction.pgm")
    result.to_csv(run.out / "reconstruction.csv")
    label = f"{mode}/{sub}" if not mode.startswith("definite") else mode
    row = metrics_row(ph.name or run.cfg.get("name", "phantom"), label, alpha_reg, result, truth)
    write_metrics(run.out / "metrics.csv", [row])
    run.prov["jaccard"] = row["jaccard"]
    run.write_provenance()
    need = run.cfg.get("check", {}).get("min_jaccard")
    if run.check and need is not None and jaccard(result, truth) < need:
        log.error("Jaccard %.3f below required %.3f", row["jaccard"], need)
        return EXIT_CHECK
    return EXIT_OK


def cmd_locpot(run: Run) -> int:
    lcfg = run.cfg.get("locpot")
    if lcfg is None:
        raise ConfigError("config field 'locpot' is required for this subcommand")
    mesh = run.mesh
    ph, _ = _phantom(run)
    d1 = region_from_shapes(mesh, lcfg["d1"])
    d2 = region_from_shapes(mesh, lcfg["d2"])
    orders = lcfg.get("orders", [4, 6, 8, 10, 12, 14, 16])
    eps = lcfg.get("eps", 1e-8)
    res = locpot_dichotomy_sweep(mesh, ph.conductivity, d1, d2, orders, eps)
    res.to_csv(run.out / "locpot.csv")
    cls = res.classification()
    lines = [f"classification: {cls}"]
    run.prov.update(orders=list(orders), eps=eps, classification=cls)
    agree = None
    if "tau" in lcfg:
        tau, _ = _phantom(run, lcfg["tau"])
        rep = conductivity_independence_check(mesh, ph.conductivity, tau.conductivity, d1, d2,
                                              orders, eps)
        with open(run.out / "independence.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["order", "E1_sigma", "E2_sigma", "E1_tau", "E2_tau"])
            for i, k in enumerate(rep.orders):
                w.writerow([k] + [f"{x[i]:.17g}" for x in
                                  (rep.e1_sigma, rep.e2_sigma, rep.e1_tau, rep.e2_tau)])
        agree = rep.agree
        lines += [f"classification_tau: {rep.class_tau}", f"agreement: {str(agree).lower()}",
                  f"e2_constant: {rep.e2_constant:.6g}"]
        run.prov.update(agreement=agree, e2_constant=rep.e2_constant)
    (run.out / "classification.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    run.write_provenance()
    chk = run.cfg.get("check", {})
    if run.check:
        if "expect" in chk and chk["expect"] != cls:
            log.error("classification %s, expected %s", cls, chk["expect"])
            return EXIT_CHECK
        if "agree" in chk and chk["agree"] != agree:
            log.error("agreement flag %s, expected %s", agree, chk["agree"])
            return EXIT_CHECK
    return EXIT_OK


def cmd_mesh_export(run: Run) -> int:
    run.mesh.export(run.out / "mesh.txt")
    run.write_provenance()
    return EXIT_OK


def cmd_phantom_render(run: Run) -> int:
    ph, _ = _phantom(run)
    ph.truth.to_pgm(run.out / "phantom.pgm")
    ph.d_plus.to_pgm(run.out / "phantom_plus.pgm")
    ph.d_minus.to_pgm(run.out / "phantom_minus.pgm")
    ph.conductivity.to_csv(run.out / "conductivity.csv")
    run.write_provenance()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--out", help="output directory (default: $EITMONO_OUT or ./eitmono_out)")
    common.add_argument("--seed", type=_u64, help="override the config seed")
    common.add_argument("--threads", type=int, help="worker threads for sweeps")
    common.add_argument("--check", action="store_true", help="exit 4 if the config's checks fail")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="eitmono", description="Monotonicity-based EIT shape reconstruction")
    p.add_argument("--version", action="version", version=f"eitmono {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, hlp in (
        ("forward", cmd_forward, "NtD matrix and eigenvalue comparison"),
        ("reconstruct", cmd_reconstruct, "shape reconstruction"),
        ("locpot", cmd_locpot, "localized-potential dichotomy sweep"),
    ):
        sp = sub.add_parser(name, parents=[common], help=hlp)
        sp.set_defaults(func=fn, needs_config=True)
    mesh = sub.add_parser("mesh", help="mesh utilities")
    msub = mesh.add_subparsers(dest="action", required=True)
    ex = msub.add_parser("export", parents=[common], help="write the mesh as plain text")
    ex.add_argument("--level", type=int, help="refinement level (overrides config)")
    ex.set_defaults(func=cmd_mesh_export, needs_config=False)
    ph = sub.add_parser("phantom", help="phantom utilities")
    psub = ph.add_subparsers(dest="action", required=True)
    rd = psub.add_parser("render", parents=[common], help="write phantom images and conductivity")
    rd.set_defaults(func=cmd_phantom_render, needs_config=True)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            cfg = load_config(args.config)
        elif args.needs_config:
            raise ConfigError(f"'{args.command}' needs --config")
        else:
            cfg = validate_config({"schema": 1})
        if getattr(args, "level", None) is not None:
            cfg["mesh"]["level"] = args.level
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        run = Run(args, cfg)
        return args.func(run)
    except (ConfigError, ParameterError) as exc:
        print(f"eitmono: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, InconsistentDataError) as exc:
        print(f"eitmono: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
