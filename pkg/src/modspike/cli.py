"""Command-line front end.

Subcommands: fig3a, fig3b, verify <lemma_id>, estimate, decode <name>.
Exit codes: 0 success, 2 usage error, 3 numeric failure, 4 failed verification.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import experiments as ex
from . import lattice, linalg, model
from .estimator import EstimationError, default_radius, estimate_spike
from .rngstat import NumericError

USAGE_EXIT = 2
NUMERIC_EXIT = 3
VERIFY_FAIL_EXIT = 4


def _parse_grid(text: str) -> list[float]:
    """Accept '0,1,3' or 'start:stop:step' (stop inclusive up to rounding)."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError("range grid must be start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise ValueError("grid step must be positive")
        out = []
        v = start
        while v <= stop + 1e-12:
            out.append(round(v, 10))
            v += step
        return out
    return [float(p) for p in text.split(",") if p.strip() != ""]


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--k", type=int, help="dimension")
    parser.add_argument("--n", type=int, help="samples per trial (default k^2)")
    parser.add_argument("--nu", type=float, help="absolute spike strength")
    parser.add_argument("--alpha", type=str,
                        help="spike exponent(s): value, comma list, or a:b:step")
    parser.add_argument("--delta-factor", type=float,
                        help="dynamic range as a multiple of sqrt(log k)")
    parser.add_argument("--delta", type=float, help="absolute dynamic range")
    parser.add_argument("--delta-exp", type=str,
                        help="dynamic-range exponent grid (fig3b)")
    parser.add_argument("--trials", type=int, help="trial count")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--radius", type=float, help="truncation radius override")
    parser.add_argument("--out", type=str, help="output CSV path (default stdout)")
    parser.add_argument("--config", type=str, help="flat key = value config file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modspike",
        description="Spike estimation from modulo-folded measurements: "
                    "experiments, verification checks, and one-shot tools.")
    sub = parser.add_subparsers(dest="command", required=True)

    p3a = sub.add_parser("fig3a", help="estimation error vs spike exponent")
    _add_common(p3a)
    p3a.add_argument("--plot", nargs="?", const="", metavar="PATH",
                     help="also render a figure (default <out>.png)")

    p3b = sub.add_parser("fig3b", help="decoder error rate vs dynamic range")
    _add_common(p3b)
    p3b.add_argument("--plot", nargs="?", const="", metavar="PATH",
                     help="also render a figure (default <out>.png)")

    pv = sub.add_parser("verify", help="run one Monte-Carlo lemma check")
    pv.add_argument("lemma_id", choices=ex.LEMMA_IDS)
    _add_common(pv)

    pe = sub.add_parser("estimate", help="estimate the spike direction from a Y CSV")
    pe.add_argument("--y", required=True, help="folded-sample CSV path")
    pe.add_argument("--radius", type=float, help="selection radius (default rule)")
    pe.add_argument("--out", type=str, help="output CSV path (default stdout)")

    pd = sub.add_parser("decode", help="unwrap a Y CSV and score against X")
    pd.add_argument("decoder", choices=["informed_if", "blind_if", "trivial", "map"])
    pd.add_argument("--x", required=True, help="clean-sample CSV path")
    pd.add_argument("--y", required=True, help="folded-sample CSV path")
    pd.add_argument("--delta", type=float, required=True, help="dynamic range")
    pd.add_argument("--nu", type=float, help="spike strength (IF/MAP decoders)")
    pd.add_argument("--u-file", type=str, help="true-direction CSV (informed/map)")
    pd.add_argument("--radius", type=float, help="selection radius (blind_if)")
    pd.add_argument("--coeff-bound", type=int, help="coset search bound (map)")
    pd.add_argument("--out", type=str, help="output CSV path (default stdout)")
    return parser


def _config_from_args(args) -> ex.ExperimentConfig:
    file_overrides = ex.parse_config_file(args.config) if args.config else None
    alpha = None
    if getattr(args, "alpha", None) is not None:
        grid = _parse_grid(args.alpha)
        alpha = grid[0] if len(grid) == 1 else None
    cli = {
        "k": args.k, "n": args.n, "trials": args.trials,
        "master_seed": args.seed, "delta_factor": args.delta_factor,
        "delta_abs": args.delta, "nu_abs": args.nu, "radius_abs": args.radius,
        "nu_power": alpha,
    }
    return ex.build_config(file_overrides, cli)


def _emit(text: str, out_path: str | None) -> None:
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _plot_path(args) -> str | None:
    if args.plot is None:
        return None
    if args.plot:
        return args.plot
    if not args.out:
        raise ValueError("--plot without a path requires --out")
    return args.out + ".png"


def _run_fig3a(args) -> int:
    cfg = _config_from_args(args)
    if cfg.k < 2:
        raise ValueError("fig3a needs k >= 2")
    grid = _parse_grid(args.alpha) if args.alpha else _parse_grid("0:5.6:0.4")
    rows = ex.run_figure3a(cfg, grid)
    _emit(ex.rows_to_csv(ex.FIG3A_HEADER, rows), args.out)
    plot = _plot_path(args)
    if plot:
        from .figures import render_fig3a
        render_fig3a(rows, plot)
    return 0


def _run_fig3b(args) -> int:
    cfg = _config_from_args(args)
    if cfg.k < 2:
        raise ValueError("fig3b needs k >= 2")
    grid = (_parse_grid(args.delta_exp) if args.delta_exp
            else _parse_grid("0.5:9.0:0.25"))
    rows = ex.run_figure3b(cfg, grid)
    _emit(ex.rows_to_csv(ex.FIG3B_HEADER, rows), args.out)
    plot = _plot_path(args)
    if plot:
        from .figures import render_fig3b
        render_fig3b(rows, plot)
    return 0


def _run_verify(args) -> int:
    cfg = _config_from_args(args)
    report = ex.verify(args.lemma_id, cfg)
    _emit(ex.rows_to_csv(ex.VERIFY_HEADER, [ex.report_to_row(report)]), args.out)
    return 0 if report.passed else VERIFY_FAIL_EXIT


def _run_estimate(args) -> int:
    y = model.read_matrix_csv(args.y)
    radius = args.radius if args.radius is not None else default_radius(y.shape[1])
    est = estimate_spike(y, radius)
    _emit_direction(est.u_hat, args.out)
    print(f"selected {est.n_selected} of {est.n_total} samples at radius "
          f"{radius:.6g}" + (" (rank deficient)" if est.rank_deficient else ""),
          file=sys.stderr)
    return 0


def _emit_direction(u: np.ndarray, out_path: str | None) -> None:
    header = "sample_id," + ",".join(f"coord_{j}" for j in range(u.shape[0]))
    line = "0," + ",".join(format(float(v), ".17g") for v in u)
    _emit(header + "\n" + line + "\n", out_path)


def _decode_sigma(args, k: int) -> np.ndarray:
    if args.nu is None:
        raise ValueError(f"decoder {args.decoder} requires --nu")
    if not args.u_file:
        raise ValueError(f"decoder {args.decoder} requires --u-file")
    u = model.read_matrix_csv(args.u_file)
    if u.shape != (1, k):
        raise ValueError("--u-file must hold one row of length k")
    u = u[0] / np.linalg.norm(u[0])
    return linalg.symmetrize(args.nu * np.outer(u, u) + np.eye(k))


def _run_decode(args) -> int:
    x = model.read_matrix_csv(args.x)
    y = model.read_matrix_csv(args.y)
    if x.shape != y.shape:
        raise ValueError("X and Y batches must have identical shape")
    k = y.shape[1]
    delta = args.delta
    name = args.decoder
    if name == "trivial":
        xhat = lattice.trivial_decode(y)
    elif name == "map":
        xhat = lattice.map_decode_batch(y, _decode_sigma(args, k), delta,
                                        args.coeff_bound)
    elif name == "informed_if":
        dec = lattice.integer_forcing_matrix(_decode_sigma(args, k), delta)
        xhat = lattice.if_decode(y, dec)
    else:  # blind_if
        if args.nu is None:
            raise ValueError("decoder blind_if requires --nu")
        radius = args.radius if args.radius is not None else default_radius(k)
        est = estimate_spike(y, radius)
        sigma = linalg.symmetrize(args.nu * np.outer(est.u_hat, est.u_hat)
                                  + np.eye(k))
        dec = lattice.integer_forcing_matrix(sigma, delta)
        xhat = lattice.if_decode(y, dec)
    rep = lattice.evaluate_unwrapping(x, xhat, delta, name)
    header = "decoder,n,n_errors,p_e_hat"
    line = f"{rep.decoder_name},{rep.n},{rep.n_errors},{format(rep.p_e_hat, '.17g')}"
    _emit(header + "\n" + line + "\n", args.out)
    return 0


_RUNNERS = {"fig3a": _run_fig3a, "fig3b": _run_fig3b, "verify": _run_verify,
            "estimate": _run_estimate, "decode": _run_decode}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _RUNNERS[args.command](args)
    except (ValueError, OSError, EstimationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT if isinstance(exc, (ValueError, OSError)) else NUMERIC_EXIT
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return NUMERIC_EXIT


if __name__ == "__main__":
    sys.exit(main())
