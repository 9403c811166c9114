"""Command-line front end: ``proxymt <subcommand> [options]``.

Exit codes: 0 success, 2 contract or domain violation, 3 numerical failure,
4 file or format error, 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.fft as sfft

from . import __version__
from .errors import ContractError, GridFileError, MultitaperError, NumericError

EXIT_OK = 0
EXIT_CONTRACT = 2
EXIT_NUMERIC = 3
EXIT_IO = 4
EXIT_USAGE = 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _common(p: argparse.ArgumentParser, out_required: bool = True) -> None:
    p.add_argument("--out", required=out_required, help="output file or directory")
    p.add_argument("--seed", type=int, help="default 0")
    p.add_argument("--threads", type=int, default=None, help="cap on worker threads")
    p.add_argument("--config", help="JSON run config or artifact sidecar; flags given here take precedence")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="proxymt", description="Multitaper spectral estimation on irregular domains.")
    ap.add_argument("--version", action="version", version=f"proxymt {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("mask", help="write a domain mask grid file")
    _common(p)
    p.add_argument("--shape", choices=["disk", "disk-complement", "full", "corners"])
    p.add_argument("--N", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--R", type=float)

    p = sub.add_parser("tapers", help="compute proxy tapers on a mask")
    _common(p)
    p.add_argument("--mask")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--K", type=int)
    g.add_argument("--W", type=float)
    p.add_argument("--T", type=int)

    p = sub.add_parser("window", help="accumulated spectral window of a taper bundle")
    _common(p)
    p.add_argument("--tapers")
    p.add_argument("--freq-dims", dest="freq_dims", type=_int_list)

    p = sub.add_parser("estimate", help="multitaper estimate of a field")
    _common(p)
    p.add_argument("--field")
    p.add_argument("--tapers", help="taper bundle; omit with --mask for the masked periodogram")
    p.add_argument("--mask")
    p.add_argument("--freq-dims", dest="freq_dims", type=_int_list)

    p = sub.add_parser("simulate", help="draw a stationary field")
    _common(p)
    p.add_argument("--N", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--density", choices=["triple_disk", "constant", "cryo_noise"])

    p = sub.add_parser("sweep-specwin", help="spectral window error versus disk radius")
    _common(p)
    p.add_argument("--N", type=int)
    p.add_argument("--W", type=float)
    p.add_argument("--radii", type=_float_list)
    p.add_argument("--T", type=int)

    p = sub.add_parser("sweep-mse", help="Monte-Carlo MSE versus disk radius")
    _common(p)
    p.add_argument("--N", type=int)
    p.add_argument("--radii", type=_float_list)
    p.add_argument("--M", type=int)
    p.add_argument("--T", type=int)

    p = sub.add_parser("compare-subgrid", help="tensor Slepian versus proxy tapers on a square")
    _common(p)
    p.add_argument("--N", type=int)
    p.add_argument("--W", type=float)
    p.add_argument("--T", type=int)
    p.add_argument("--K", type=int)

    p = sub.add_parser("compare-cryoem", help="MPER / CMT / PMT on synthetic cryo-EM images")
    _common(p)
    p.add_argument("--N", type=int)
    p.add_argument("--radii", type=_float_list)
    p.add_argument("--M", type=int)
    p.add_argument("--T", type=int)

    p = sub.add_parser("selftest", help="trace identity, span invariance and oracle checks")
    _common(p, out_required=False)
    return ap


_CONFIG_KEYS = ("N", "d", "R", "radii", "W", "K", "T", "M", "seed", "freq_dims")
_DEFAULTS = {
    "mask": {"N": 64, "d": 2, "R": 16.0},
    "tapers": {"T": 2},
    "simulate": {"N": 128, "d": 2},
    "sweep-specwin": {"N": 256, "W": 0.125, "radii": [16, 32, 64, 128], "T": 2},
    "sweep-mse": {"N": 256, "radii": [16, 32, 64, 128], "M": 32, "T": 2},
    "compare-subgrid": {"N": 128, "W": 1.0 / 16.0, "T": 2},
    "compare-cryoem": {"N": 128, "radii": list(range(48, 71, 2)), "M": 32, "T": 2},
}


def _resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, the config file and explicit flags, then validate."""
    from .io import load_config, validate_config

    cfg = {"command": args.command, "seed": 0, **_DEFAULTS.get(args.command, {})}
    if args.config:
        loaded = load_config(args.config)
        if loaded["command"] != args.command:
            raise ContractError(f"config is for {loaded['command']!r}, not {args.command!r}")
        cfg.update(loaded)
    for key in _CONFIG_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    paths = dict(cfg.get("paths", {}))
    for key in ("out", "mask", "tapers", "field"):
        v = getattr(args, key, None)
        if v is not None:
            paths[key] = str(v)
    if paths:
        cfg["paths"] = paths
    if args.command == "tapers" and args.K is not None:
        cfg.pop("W", None)
    if args.command == "tapers" and args.W is not None:
        cfg.pop("K", None)
    return validate_config(cfg)


def _workers(n: Optional[int]) -> int:
    if n is None:
        return os.cpu_count() or 1
    if n < 1:
        raise ContractError("--threads must be positive")
    return n


def _sidecar(path, cfg: dict, **extra) -> None:
    from .io import write_sidecar

    write_sidecar(path, {"config": cfg, "version": __version__, **extra})


def _path(cfg: dict, key: str) -> str:
    try:
        return cfg["paths"][key]
    except KeyError:
        raise ContractError(f"--{key} is required (flag or config paths.{key})") from None


def _cmd_mask(cfg):
    from .grid import corner_subgrids_mask, disk_complement_mask, disk_mask, full_mask
    from .io import save_mask

    shape = cfg.get("options", {}).get("shape", "disk")
    N, d = cfg["N"], cfg["d"]
    if shape == "disk":
        m = disk_mask(N, cfg["R"], d)
    elif shape == "disk-complement":
        m = disk_complement_mask(N, cfg["R"], d)
    elif shape == "corners":
        if d != 2:
            raise ContractError("corner subgrids are defined for d = 2")
        m = corner_subgrids_mask(N, cfg["R"]).mask
    else:
        m = full_mask((N,) * d)
    out = _path(cfg, "out")
    save_mask(out, m)
    _sidecar(out, cfg, n_omega=m.n_omega, n_boundary=m.n_boundary, digest=m.digest())
    return f"mask {shape} N={N} d={d}: n_omega={m.n_omega} n_boundary={m.n_boundary} -> {out}"


def _cmd_tapers(cfg):
    from .io import load_mask, save_tapers
    from .tapers import proxy_tapers

    mask = load_mask(_path(cfg, "mask"))
    tap = proxy_tapers(mask, K=cfg.get("K"), T=cfg["T"], seed=cfg["seed"], W=cfg.get("W"))
    out = _path(cfg, "out")
    save_tapers(out, tap, {"config": cfg})
    return (f"tapers K={tap.K} W={tap.meta['W']:.6g} T={cfg['T']} seed={cfg['seed']} "
            f"mean lambda={float(np.mean(tap.lambdas)):.6f} -> {out}")


def _cmd_window(cfg):
    from .io import load_tapers, write_grid
    from .tapers import accumulated_spectral_window, spectral_window_l1_error

    tap = load_tapers(_path(cfg, "tapers"))
    rho = accumulated_spectral_window(tap, cfg.get("freq_dims"))
    out = _path(cfg, "out")
    write_grid(out, rho.values)
    W = tap.meta.get("W")
    err = spectral_window_l1_error(tap, W, cfg.get("freq_dims")) if W else float("nan")
    _sidecar(out, cfg, integral=rho.integral(), l1_error_lattice=err)
    return f"window K={tap.K} integral={rho.integral():.9f} l1 error={err:.6g} -> {out}"


def _cmd_estimate(cfg):
    from .estimator import mper_estimate, multitaper_estimate
    from .io import load_mask, load_tapers, read_grid, write_grid

    x = read_grid(_path(cfg, "field"))
    fd = cfg.get("freq_dims")
    if "tapers" in cfg["paths"]:
        tap = load_tapers(_path(cfg, "tapers"))
        est = multitaper_estimate(x, tap, fd)
    elif "mask" in cfg["paths"]:
        est = mper_estimate(x, load_mask(_path(cfg, "mask")), fd)
    else:
        raise ContractError("estimate needs --tapers or --mask")
    out = _path(cfg, "out")
    write_grid(out, est.values)
    _sidecar(out, cfg, meta=est.meta)
    return f"estimate {est.meta['estimator']} K={est.meta['K']} mean={float(est.values.mean()):.6g} -> {out}"


def _cmd_simulate(cfg):
    from .io import write_grid
    from .simulate import constant_density, cryo_noise_density, sample_field, triple_disk_density

    kind = cfg.get("options", {}).get("density", "triple_disk")
    dims = (cfg["N"],) * cfg["d"]
    S = {"triple_disk": triple_disk_density, "constant": constant_density, "cryo_noise": cryo_noise_density}[kind](dims)
    x = sample_field(S, dims, cfg["seed"])
    out = _path(cfg, "out")
    write_grid(out, x.values)
    _sidecar(out, cfg, meta=x.meta)
    return f"simulate {kind} dims={dims} seed={cfg['seed']} var={float(x.values.var()):.6g} -> {out}"


def _write_curve(curve, cfg, summary: str):
    from .experiments import fit_loglog_slope

    out = _path(cfg, "out")
    curve.to_csv(out)
    fits = {}
    for s in curve.statistics:
        try:
            fits[s] = fit_loglog_slope(curve, s)
        except (MultitaperError, ValueError):
            continue
    _sidecar(out, cfg, meta=curve.meta, slopes=fits)
    return summary.format(**{k: v["slope"] for k, v in fits.items()}) + f" -> {out}"


def _cmd_sweep_specwin(cfg):
    from .experiments import run_specwin_sweep

    c = run_specwin_sweep(cfg["N"], cfg["W"], cfg["radii"], cfg["T"], cfg["seed"])
    return _write_curve(c, cfg, "sweep-specwin slope={l1_window_error:.4f} (lattice {l1_window_error_lattice:.4f})")


def _cmd_sweep_mse(cfg):
    from .experiments import run_mse_sweep

    c = run_mse_sweep(cfg["N"], cfg["radii"], cfg["M"], cfg["seed"], T=cfg["T"])
    return _write_curve(c, cfg, "sweep-mse slope of max-mse/log^2={mse_over_log2:.4f} (raw {max_mse:.4f})")


def _cmd_compare_subgrid(cfg):
    from .experiments import run_subgrid_comparison

    rep = run_subgrid_comparison(cfg["N"], cfg["W"], cfg["T"], cfg["seed"], K=cfg.get("K"))
    out = _path(cfg, "out")
    Path(out).write_text(json.dumps({"config": cfg, "report": rep}, indent=2, sort_keys=True))
    return (f"compare-subgrid K={rep['K']} nrmse tensor={rep['nrmse_tensor']:.4f} proxy={rep['nrmse_proxy']:.4f} "
            f"deviation={rep['deviation']:.3e} complement={rep['nrmse_complement']:.4f} -> {out}")


def _cmd_compare_cryoem(cfg):
    from .experiments import run_cryoem_synthetic

    curves = run_cryoem_synthetic(cfg["N"], cfg["radii"], cfg["M"], cfg["seed"], T=cfg["T"])
    out = Path(_path(cfg, "out"))
    out.mkdir(parents=True, exist_ok=True)
    for k, c in curves.items():
        c.to_csv(out / f"{k}.csv")
        _sidecar(out / f"{k}.csv", cfg, meta=c.meta)
    mse = curves["mse"]
    ratio = float(np.mean(mse.column("pmt")) / np.mean(mse.column("cmt")))
    return f"compare-cryoem mean MSE pmt/cmt={ratio:.3f} -> {out}"


def _cmd_selftest(cfg):
    from .selftest import run_selftest

    results = run_selftest(seed=cfg["seed"])
    failed = [r for r in results if not r["ok"]]
    for r in results:
        print(f"{'PASS' if r['ok'] else 'FAIL'} {r['name']}: {r['detail']}")
    if failed:
        raise NumericError(f"{len(failed)} of {len(results)} self-test checks failed")
    return f"selftest: {len(results)} checks passed"


_COMMANDS = {
    "mask": _cmd_mask,
    "tapers": _cmd_tapers,
    "window": _cmd_window,
    "estimate": _cmd_estimate,
    "simulate": _cmd_simulate,
    "sweep-specwin": _cmd_sweep_specwin,
    "sweep-mse": _cmd_sweep_mse,
    "compare-subgrid": _cmd_compare_subgrid,
    "compare-cryoem": _cmd_compare_cryoem,
    "selftest": _cmd_selftest,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        workers = _workers(args.threads)
        cfg = _resolve(args)
        for opt in ("shape", "density"):
            if getattr(args, opt, None) is not None:
                cfg.setdefault("options", {})[opt] = getattr(args, opt)
        if args.command != "selftest" and "out" not in cfg.get("paths", {}):
            raise ContractError("--out is required")
        with sfft.set_workers(workers):
            print(_COMMANDS[args.command](cfg))
        return EXIT_OK
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except GridFileError as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ContractError as exc:
        print(f"contract error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except MultitaperError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
