"""Command-line driver: ``modwave SUBCOMMAND [--config PATH] [--out DIR] ...``.

Every run writes into a fresh temporary directory next to the target and
renames it into place only after all artifacts are complete, so a failed
run leaves no partial output. Artifacts carry the config hash and contain
no timestamps; the same config hash reproduces them byte for byte.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .config import PRESETS, ConfigError, ExperimentConfig, load_config
from .evolution import (PropagatorConfig, dispersive_profile, free_evolve, full_evolve_fd,
                        full_evolve_spectral)
from .numerics_core import MomentumGrid, l2_distance, make_grid, wave_packet_from_bump
from .potential import admissibility_norm, make_potential
from .spectral import (UnresolvedLimit, generalized_transform, rk4_free_error, spectral_decomposition,
                       spectral_mass)
from .waveop_lab import (bound_state_overlaps, build_wave_limit, cesaro_discrepancy, lemma1_scan,
                         low_energy_mass, stationary_phase_check)

EXIT_OK, EXIT_CONFIG, EXIT_QUALITY = 0, 2, 3
SUBCOMMANDS = ("verify-free", "spectral-scan", "theorem", "cross-check", "lemma1",
               "stationary-phase", "low-energy", "all")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _clean(obj):
    """JSON-safe copy: numpy scalars/arrays to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    return obj


class Artifacts:
    """Collects files in a staging directory and records their digests."""

    def __init__(self, stage: Path, cfg_hash: str):
        self.stage = stage
        self.cfg_hash = cfg_hash
        self.files: dict[str, str] = {}

    def _put(self, name: str, data: bytes) -> None:
        (self.stage / name).write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def json(self, name: str, obj: dict) -> None:
        body = {"config_hash": self.cfg_hash, **_clean(obj)}
        self._put(name, (json.dumps(body, indent=2, sort_keys=True) + "\n").encode())

    def csv(self, name: str, header: list[str], rows) -> None:
        buf = io.StringIO()
        buf.write(f"# config_hash={self.cfg_hash}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
        self._put(name, buf.getvalue().encode())

    def svg(self, name: str, x, ys: dict, xlabel: str, ylabel: str, logy: bool = True) -> None:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        plt.rcParams["svg.hashsalt"] = self.cfg_hash
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for label, y in ys.items():
            ax.plot(x, y, marker="o", label=label)
        if logy:
            ax.set_xscale("log")
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.set_title(f"config {self.cfg_hash}", fontsize=8)
        ax.legend()
        buf = io.BytesIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
        self._put(name, buf.getvalue())


class Lab:
    """Lazily built shared objects for one configuration."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.grid = make_grid(cfg.x_max, cfg.n)
        self.kgrid = MomentumGrid(cfg.k_min, cfg.k_max, cfg.m)
        self.packet = wave_packet_from_bump(cfg.a, cfg.b, self.grid)
        self._spectral: dict = {}

    def potential(self, family=None, params=None):
        if family is None:
            family, params = self.cfg.family, self.cfg.params
        return make_potential(family, self.grid, **(params or {}))

    def spectral(self, p):
        key = (p.family, tuple(sorted(p.params.items())))
        if key not in self._spectral:
            self._spectral[key] = spectral_decomposition(p, self.kgrid, e_floor=self.cfg.e_floor)
        return self._spectral[key]


def cmd_verify_free(lab: Lab, art: Artifacts, svg: bool) -> bool:
    cfg, f = lab.cfg, lab.packet
    p = lab.potential("zero", {})
    sd, eigs = lab.spectral(p)
    k = lab.kgrid.k
    checks = []

    def check(name, value, limit, ok=None):
        ok = (value <= limit) if ok is None else ok
        checks.append({"name": name, "value": value, "limit": limit, "pass": bool(ok)})

    # the sweep's RK4 error is the only source; compare with twice its prediction
    phase_err, amp_err = rk4_free_error(cfg.x_max, cfg.k_max, lab.grid.h / eigs.s)
    check("jost_limit_is_one", float(np.max(np.abs(sd.jm_limit - 1))), 2 * (phase_err + amp_err) + 1e-12)
    check("density_is_k_over_pi", float(np.max(np.abs(sd.mu * math.pi / k - 1))), 4 * amp_err + 1e-12)
    breve, coeffs = generalized_transform(f, sd, eigs)
    check("parseval", abs(spectral_mass(breve.values, coeffs, sd) - f.norm() ** 2) / f.norm() ** 2, 1e-3)
    wl = build_wave_limit(f, sd, eigs, cfg.unresolved_tol)
    check("wave_limit_equals_f", l2_distance(wl.W, f) / f.norm(), 1e-3)

    rows, errs = [], []
    y2 = lab.grid.x ** 2
    for t in cfg.T_list:
        err = l2_distance(free_evolve(f, t), dispersive_profile(f, t)) / f.norm()
        # exact identity: the error equals ||(exp(i y^2/4t) - 1) f||
        ident = f.with_values((np.exp(1j * y2 / (4 * t)) - 1) * f.values).norm() / f.norm()
        rows.append((t, err, ident))
        errs.append(err)
    check("dispersive_error_decreasing", float(max(np.diff(errs), default=-1.0)), 0.0,
          ok=bool(np.all(np.diff(errs) < 0)))
    check("dispersive_error_identity", max(abs(r[1] - r[2]) for r in rows), 1e-8)

    ev_sp = full_evolve_spectral(f, sd, eigs, cfg.fd_t)
    ev_free = free_evolve(f, cfg.fd_t)
    check("spectral_vs_free", l2_distance(ev_sp, ev_free) / f.norm(), 2e-3)
    ev_fd = full_evolve_fd(f, p, cfg.fd_t, PropagatorConfig(dt=cfg.fd_dt, k_max=cfg.k_max,
                                                             method="finite-difference"))
    check("fd_vs_free", l2_distance(ev_fd, ev_free) / f.norm(), 1e-3)

    art.csv("dispersive.csv", ["t", "rel_error", "identity_value"], rows)
    all_ok = all(c["pass"] for c in checks)
    art.json("verify_free.json", {"checks": checks, "all_pass": all_ok,
                                  "dispersive_error_at_max_T": errs[-1]})
    if svg:
        art.svg("dispersive.svg", [r[0] for r in rows], {"||e^{-itH0}f - profile||": errs}, "t", "relative error")
    return all_ok


def _spectral_rows(sd):
    jm = sd.jm_limit
    return [(k, k * k, z.real, z.imag, mu, q) for k, z, mu, q in zip(sd.kgrid.k, jm, sd.mu, sd.quality)]


def cmd_spectral_scan(lab: Lab, art: Artifacts, svg: bool) -> bool:
    f = lab.packet
    p = lab.potential()
    sd, eigs = lab.spectral(p)
    art.csv("spectral.csv", ["k", "E", "re_jm", "im_jm", "mu", "quality"], _spectral_rows(sd))
    breve, coeffs = generalized_transform(f, sd, eigs)
    mass = spectral_mass(breve.values, coeffs, sd)
    adm = admissibility_norm(p)
    art.json("spectral.json", {
        "potential": p.describe(), "theta": sd.theta_flag,
        "bound_states": [{"kappa": b.kappa, "E": -b.kappa ** 2, "norm": b.e.norm()} for b in sd.bound],
        "bound_coefficients_abs": np.abs(coeffs),
        "unresolved_nodes": int((~sd.resolved).sum()),
        "parseval_rel_error": abs(mass - f.norm() ** 2) / f.norm() ** 2,
        "admissibility": {"value": adm.value, "convergent": adm.convergent, "slope": adm.slope,
                          "tail": adm.tail},
    })
    if svg:
        art.svg("density.svg", sd.kgrid.k, {"mu": sd.mu, "k/pi": sd.kgrid.k / math.pi}, "k", "mu", logy=False)
    return True


def cmd_theorem(lab: Lab, art: Artifacts, svg: bool) -> bool:
    cfg, f = lab.cfg, lab.packet
    p = lab.potential()
    sd, eigs = lab.spectral(p)
    wl = build_wave_limit(f, sd, eigs, cfg.unresolved_tol)
    rep = cesaro_discrepancy(f, p, sd, eigs, cfg.T_list, cfg.nodes_per_T0, wl=wl)
    ces = np.array(rep.cesaro)
    trend = bool(np.all(ces[1:] <= 1.1 * ces[:-1]))
    halved = bool(ces[-1] <= 0.5 * ces[0])
    body = rep.to_dict()
    body.update({"W_norm": wl.W.norm(), "f_norm": f.norm(), "nonincreasing_within_10pct": trend,
                 "last_at_most_half_first": halved})
    art.json("theorem.json", body)
    art.csv("theorem.csv", ["T", "cesaro", "dyadic"], zip(rep.T_list, rep.cesaro, rep.dyadic))
    art.csv("discrepancy_curve.csv", ["t", "discrepancy"], zip(rep.t, rep.curve))
    if svg:
        art.svg("theorem.svg", rep.T_list, {"[0,T]": rep.cesaro, "[T/2,T]": rep.dyadic}, "T", "Cesaro mean")
    return True


def cmd_cross_check(lab: Lab, art: Artifacts, svg: bool) -> bool:
    cfg, f = lab.cfg, lab.packet
    p = lab.potential()
    sd, eigs = lab.spectral(p)
    ts = [0.0, cfg.fd_t]
    sp = full_evolve_spectral(f, sd, eigs, ts)
    fd = full_evolve_fd(f, p, cfg.fd_t, PropagatorConfig(dt=cfg.fd_dt, t_list=(cfg.fd_t,), k_max=cfg.k_max,
                                                         method="finite-difference"))
    res = {"t": cfg.fd_t, "spectral_vs_fd": l2_distance(sp[1], fd) / f.norm(),
           "round_trip": l2_distance(sp[0], f) / f.norm(),
           "norm_drift_spectral": abs(sp[1].norm() - f.norm()) / f.norm(),
           "norm_drift_fd": abs(fd.norm() - f.norm()) / f.norm()}
    art.json("cross_check.json", res)
    x = lab.grid.x
    keep = np.abs(fd.values) + np.abs(sp[1].values) > 1e-12
    art.csv(f"snapshot_spectral_t{_fmt(cfg.fd_t)}.csv", ["x", "re", "im"],
            zip(x[keep], sp[1].values.real[keep], sp[1].values.imag[keep]))
    art.csv(f"snapshot_fd_t{_fmt(cfg.fd_t)}.csv", ["x", "re", "im"],
            zip(x[keep], fd.values.real[keep], fd.values.imag[keep]))
    return True


def cmd_lemma1(lab: Lab, art: Artifacts, svg: bool) -> bool:
    scan = lemma1_scan(lab.packet, lab.cfg.lemma1_t_list)
    art.json("lemma1.json", {k: v for k, v in scan.to_dict().items() if k != "rows"})
    art.csv("lemma1.csv", ["t", "k", "x", "abs_tail", "ratio"],
            ((r["t"], r["k"], r["x"], r["abs_tail"], r["ratio"]) for r in scan.rows))
    return True


def cmd_stationary_phase(lab: Lab, art: Artifacts, svg: bool) -> bool:
    cfg = lab.cfg
    rows = stationary_phase_check(lab.packet, cfg.stationary_k, cfg.sp_t_list)
    keys = ["t", "value_re", "value_im", "limit_re", "limit_im", "error"]
    art.csv("stationary_phase.csv", keys, ([r[k] for k in keys] for r in rows))
    if svg:
        art.svg("stationary_phase.svg", [r["t"] for r in rows], {"error": [r["error"] for r in rows]},
                "t", "distance to limit")
    return True


def cmd_low_energy(lab: Lab, art: Artifacts, svg: bool) -> bool:
    cfg, f = lab.cfg, lab.packet
    p = lab.potential()
    sd, eigs = lab.spectral(p)
    delta = cfg.low_energy_delta
    rows = [(t, delta, low_energy_mass(f, p, sd, eigs, t, delta)) for t in cfg.low_energy_times]
    art.csv("low_energy.csv", ["t", "delta", "mass"], rows)
    ov = bound_state_overlaps(f, p, sd, cfg.low_energy_times)
    art.csv("bound_overlaps.csv", ["t", "j", "kappa", "overlap"],
            ((r["t"], r["j"], r["kappa"], r["overlap"]) for r in ov))
    return True


COMMANDS = {
    "verify-free": cmd_verify_free,
    "spectral-scan": cmd_spectral_scan,
    "theorem": cmd_theorem,
    "cross-check": cmd_cross_check,
    "lemma1": cmd_lemma1,
    "stationary-phase": cmd_stationary_phase,
    "low-energy": cmd_low_energy,
}


def _publish(stage: Path, out: Path) -> None:
    if out.exists():
        old = Path(tempfile.mkdtemp(prefix=".old-", dir=out.parent))
        os.replace(out, old / "prev")
        os.replace(stage, out)
        shutil.rmtree(old)
    else:
        os.replace(stage, out)


def run(subcommand: str, cfg: ExperimentConfig, out: Path, svg: bool = False) -> int:
    """Execute one subcommand; returns the process exit status."""
    names = [c for c in COMMANDS] if subcommand == "all" else [subcommand]
    out = Path(out).resolve()
    out.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=f".{out.name}-", dir=out.parent))
    art = Artifacts(stage, cfg.hash())
    try:
        lab = Lab(cfg)
        status = {}
        for name in names:
            status[name] = bool(COMMANDS[name](lab, art, svg))
        ok = all(status.values())
        art.json("manifest.json", {
            "tool": "modwave", "version": __version__, "subcommand": subcommand,
            "config": cfg.to_dict(), "status": status,
            "artifacts": dict(sorted(art.files.items())),
        })
        _publish(stage, out)
    except BaseException:
        shutil.rmtree(stage, ignore_errors=True)
        raise
    return EXIT_OK if ok else EXIT_QUALITY


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="modwave", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", help="experiment config file (key = value)")
    ap.add_argument("--preset", choices=sorted(PRESETS), help="base preset (default: 'default')")
    ap.add_argument("--out", help="output directory (overrides output.dir)")
    ap.add_argument("--threads", type=int, default=0, help="worker threads, 0 = auto")
    ap.add_argument("--svg", action="store_true", help="also write SVG curves")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.preset)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads < 0:
        print("config error: --threads must be >= 0", file=sys.stderr)
        return EXIT_CONFIG
    if args.svg:
        try:
            import matplotlib  # noqa: F401
        except ImportError:
            print("config error: --svg needs matplotlib (install the 'svg' extra)", file=sys.stderr)
            return EXIT_CONFIG
    if args.threads:
        import numba
        numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
    out = Path(args.out or cfg.out_dir)
    try:
        code = run(args.subcommand, cfg, out, args.svg)
    except UnresolvedLimit as exc:
        print(f"numerical quality failure: {exc}", file=sys.stderr)
        return EXIT_QUALITY
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if code == EXIT_QUALITY:
        print(f"numerical quality failure: see {out / 'manifest.json'}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
