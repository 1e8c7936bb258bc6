"""Command-line driver: assemble, solve in stages, write reports.

Usage::

    ttvib run CONFIG [--verify] [--resume CHECKPOINT] [--seed N]

The config is an INI file; see ``config.py`` for the accepted keys.  A run
writes ``energies.csv``, ``history.csv``, ``report.txt`` and (optionally)
an eigenvector checkpoint ``eigenvectors.ttv`` to the output directory.

Exit codes: 0 all pairs converged, 1 some pair did not converge, 2 bad
configuration, 3 solver failure, 4 verification failure.
"""

import argparse
import csv
import math
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import container
from .blockvector import BlockVector
from .config import ConfigError, load_config
from .eigen import SolverConfig, mp_lobpcg, mp_sii
from .errors import TTError
from .models import (HamiltonianSpec, assemble_coupled_oscillator, assemble_hamiltonian,
                     coupled_oscillator_spec, dense_hamiltonian, harmonic_guess,
                     lowest_coupled_energies, read_coefficients)

EXIT_OK, EXIT_UNCONVERGED, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERIFY = 0, 1, 2, 3, 4
CHECKPOINT_NAME = "eigenvectors.ttv"
DENSE_VERIFY_LIMIT = 4000


def storage_report(X):
    """Bytes needed to store a block of TT tensors.

    Returns
    -------
    payload : int
        ``8 * sum over members of sum_k r_{k-1} n_k r_k``.
    overhead : int
        Extra bytes of the TTV1 container header.
    """
    members = list(X.members) if isinstance(X, BlockVector) else list(X)
    payload = container.payload_bytes(members)
    overhead = container.header_bytes(members[0].d, len(members))
    return payload, overhead


# ----------------------------------------------------------------- model

def build_model(cfg):
    """Return ``(spec, H)`` for the model described by ``cfg``."""
    m = cfg.model
    if m.kind == "coupled":
        spec = coupled_oscillator_spec(m.d, m.mode_sizes, m.alpha, m.omegas)
        H = assemble_coupled_oscillator(m.d, m.mode_sizes[0], m.alpha, m.omegas) \
            if len(set(m.mode_sizes)) == 1 else assemble_hamiltonian(spec)
        return spec, H
    omegas, cubic, quartic = read_coefficients(m.coefficients)
    if len(m.mode_sizes) != len(omegas):
        raise ConfigError(f"{len(m.mode_sizes)} mode sizes for {len(omegas)} frequencies")
    spec = HamiltonianSpec(m.mode_sizes, omegas, {}, cubic, quartic, m.rel_tol)
    return spec, assemble_hamiltonian(spec)


def _solver_config(cfg, stage, rank):
    s = cfg.solver
    st = cfg.lobpcg if stage == "lobpcg" else cfg.sii
    return SolverConfig(B=s.B, rank=rank, sigma=None, cluster_threshold=s.delta,
                        max_iter=st.max_iter, conv_tol=s.conv_tol, als=st.als,
                        deflation=cfg.lobpcg.deflation,
                        rank_increase_on_restart=cfg.lobpcg.rank_increase,
                        preconditioner=cfg.lobpcg.preconditioner,
                        block_method=cfg.lobpcg.block_method,
                        cross_tol=cfg.lobpcg.cross_tol, workers=s.workers, seed=s.seed)


# --------------------------------------------------------------- outputs

def _fmt(x):
    return "%.17g" % x


def write_energies(path, report):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "eigenvalue", "residual"])
        for i, (e, r) in enumerate(zip(report.eigenvalues, report.residuals)):
            w.writerow([i, _fmt(e), _fmt(r)])


class HistoryWriter:
    """CSV sink for iteration records; one row per member and iteration."""

    def __init__(self, path):
        self.fh = open(path, "w", newline="")
        self.writer = csv.writer(self.fh, lineterminator="\n")
        self.writer.writerow(["stage", "iteration", "index", "eigenvalue", "residual"])

    def __call__(self, rec):
        self.writer.writerow([rec.stage, rec.iteration, rec.index, _fmt(rec.eigenvalue),
                              _fmt(rec.residual)])

    def close(self):
        self.fh.close()


def _verify(spec, cfg, energies, lines):
    """Compare against dense and analytic references; returns success flag."""
    ok = True
    B = len(energies)
    tol = cfg.output.verify_tol
    N = math.prod(spec.mode_sizes)
    if N <= DENSE_VERIFY_LIMIT:
        from .oracle import dense_eigensolve
        ref, _ = dense_eigensolve(dense_hamiltonian(spec), B)
        err = float(np.max(np.abs(energies - ref) / np.abs(ref)))
        lines.append(f"verify dense: max relative error {err:.3e} (tol {tol:.1e})")
        ok &= err <= tol
    else:
        lines.append(f"verify dense: skipped, dimension {N} too large")
    if cfg.model.kind == "coupled":
        ref, _ = lowest_coupled_energies(spec.omegas, cfg.model.alpha, B)
        err = float(np.max(np.abs(energies - np.asarray(ref)) / np.abs(ref)))
        lines.append(f"verify analytic: max relative error {err:.3e} "
                     "(includes discretization error, not checked)")
    return ok


def run_solve(config_path, verify=False, resume=None, seed=None, out=sys.stdout):
    """Execute a configured run; returns ``(exit_code, final SpectrumReport)``."""
    cfg = load_config(config_path)
    if seed is not None:
        cfg = cfg.with_seed(seed)
    outdir = Path(cfg.output.directory)
    outdir.mkdir(parents=True, exist_ok=True)
    spec, H = build_model(cfg)
    B = cfg.solver.B
    lines = ["[config]", cfg.echo().rstrip(), "", "[run]"]
    history = HistoryWriter(outdir / "history.csv")
    reports = []
    try:
        if resume:
            X = BlockVector(container.read_block(resume))
            if len(X) != B or X.mode_sizes != spec.mode_sizes:
                raise ConfigError("checkpoint does not match the configured model")
            lines.append(f"resumed from {resume}; lobpcg stage skipped")
        else:
            E0, _, X = harmonic_guess(spec.omegas, spec.mode_sizes, B)
            sigma = E0[0] if cfg.solver.shift == "harmonic" else float(cfg.solver.shift)
            sc = replace(_solver_config(cfg, "lobpcg", cfg.lobpcg.rank), sigma=sigma)
            rep = mp_lobpcg(H, X, sc, history)
            reports.append(("lobpcg", cfg.lobpcg.rank, rep))
            X = rep.eigenvectors
        for rank in cfg.sii.ranks:
            rep = mp_sii(H, X, _solver_config(cfg, "sii", rank), history)
            reports.append(("sii", rank, rep))
            X = rep.eigenvectors
    finally:
        history.close()
    final = reports[-1][2] if reports else None
    if final is None:
        raise ConfigError("nothing to do: resumed run with no sii stages")

    write_energies(outdir / "energies.csv", final)
    for stage, rank, rep in reports:
        lines.append(f"stage {stage} rank {rank}: iterations {rep.iterations}, "
                     f"wall time {rep.wall_time:.2f} s, converged "
                     f"{int(rep.converged.sum())}/{len(rep.converged)}")
    payload, overhead = storage_report(final.eigenvectors)
    lines.append(f"storage: payload {payload} bytes, container overhead {overhead} bytes")
    if cfg.output.checkpoint:
        written = container.write_block(outdir / CHECKPOINT_NAME, final.eigenvectors.members)
        lines.append(f"checkpoint: {CHECKPOINT_NAME} ({written} bytes)")
    code = EXIT_OK if final.all_converged else EXIT_UNCONVERGED
    if verify and not _verify(spec, cfg, final.eigenvalues, lines):
        code = EXIT_VERIFY
    lines.append(f"exit code: {code}")
    (outdir / "report.txt").write_text("\n".join(lines) + "\n")
    for e in final.eigenvalues:
        print(_fmt(e), file=out)
    return code, final


def main(argv=None):
    parser = argparse.ArgumentParser(prog="ttvib", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a configured eigenvalue computation")
    run.add_argument("config", help="INI config file (or the name of a bundled one)")
    run.add_argument("--verify", action="store_true",
                     help="check eigenvalues against dense/analytic references")
    run.add_argument("--resume", metavar="CHECKPOINT",
                     help="start the sii stages from a TTV1 checkpoint")
    run.add_argument("--seed", type=int, help="override solver.seed")
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            code, _ = run_solve(args.config, args.verify, args.resume, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TTError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return code


if __name__ == "__main__":
    sys.exit(main())
