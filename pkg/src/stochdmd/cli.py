"""Command-line pipelines.

Each subcommand reads a JSON run configuration and/or files written by an
earlier step and writes CSV tables with ``.meta.json`` sidecars to ``--out``.

Exit codes: 0 success, 2 configuration or usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from . import io
from ._validation import ConfigError, NumericalError
from .coherence import envelope_deviation, extract_t2
from .dmd import build_snapshots, decompose, reconstruct, reconstruction_error, singular_values
from .extrapolation import extrapolate
from .noise_sim import (
    FluctuatorEnsembleConfig,
    QubitConfig,
    TimeGrid,
    WhiteNoiseConfig,
    coherence_envelope,
    ensemble_average,
    generate_ensemble,
)
from .oracle import run_validation
from .spectral import (
    TRANSFORMS,
    build_psd,
    fwhm_for_rank,
    gaussian_convolve,
    inverse_frequency_trend,
    oneoverf_spectrum,
    spectrum_discrepancy,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
PRESETS = ("oneoverf_paper", "white_weak", "white_strong")
REFERENCE_POINTS = 20001

log = logging.getLogger("stochdmd")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def _reject_unknown(section, data, allowed):
    if not isinstance(data, dict):
        raise ConfigError(f"section '{section}' must be an object")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown field(s) in '{section}': {', '.join(unknown)}")


@dataclass
class RunConfig:
    noise: dict
    qubit: QubitConfig
    grid: TimeGrid
    ensemble_size: int
    dmd_ranks: list = field(default_factory=lambda: [10])
    window_split: float | None = None
    transform: str = "softmax"
    seed: int = 0

    @classmethod
    def from_dict(cls, data):
        _reject_unknown("config", data, [f.name for f in fields(cls)])
        for key in ("noise", "qubit", "grid", "ensemble_size"):
            if key not in data:
                raise ConfigError(f"missing required field '{key}'")
        noise = dict(data["noise"])
        kind = noise.get("kind")
        if kind == "oneoverf":
            _reject_unknown("noise", noise, ["kind", "n_fluctuators", "coupling", "gamma_lo", "gamma_hi"])
        elif kind == "white":
            _reject_unknown("noise", noise, ["kind", "strength"])
        else:
            raise ConfigError(f"noise.kind must be 'oneoverf' or 'white', got {kind!r}")
        _reject_unknown("qubit", data["qubit"], ["f0", "initial_state"])
        _reject_unknown("grid", data["grid"], ["t_start", "dt", "m"])
        try:
            qubit = QubitConfig(**data["qubit"])
            grid = TimeGrid(**data["grid"])
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        cfg = cls(
            noise=noise,
            qubit=qubit,
            grid=grid,
            ensemble_size=data["ensemble_size"],
            dmd_ranks=list(data.get("dmd_ranks", [10])),
            window_split=data.get("window_split"),
            transform=data.get("transform", "softmax"),
            seed=data.get("seed", 0),
        )
        cfg.validate()
        return cfg

    def noise_config(self):
        params = {k: v for k, v in self.noise.items() if k != "kind"}
        try:
            if self.noise["kind"] == "oneoverf":
                return FluctuatorEnsembleConfig(**params)
            return WhiteNoiseConfig(**params)
        except TypeError as exc:
            raise ConfigError(f"noise: {exc}") from exc

    def validate(self):
        self.noise_config()
        if not isinstance(self.ensemble_size, int) or self.ensemble_size < 1:
            raise ConfigError("ensemble_size must be a positive integer")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        if self.transform not in TRANSFORMS:
            raise ConfigError(f"transform must be one of {TRANSFORMS}")
        limit = min(self.ensemble_size, self.grid.m - 1)
        for r in self.dmd_ranks:
            if not isinstance(r, int) or r < 1:
                raise ConfigError(f"dmd_ranks entries must be positive integers, got {r!r}")
            if r > limit:
                raise ConfigError(f"rank {r} exceeds min(n, m-1) = {limit}")
        if self.window_split is not None and not 0 < self.window_split < self.grid.span:
            raise ConfigError(f"window_split {self.window_split} outside (0, {self.grid.span})")

    def to_dict(self):
        out = asdict(self)
        out["qubit"] = self.qubit.to_dict()
        out["grid"] = self.grid.to_dict()
        return out


def load_preset(name):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}")
    text = resources.files("stochdmd").joinpath("presets", f"{name}.json").read_text(encoding="utf-8")
    return json.loads(text)


def load_config(path, seed=None):
    """Read a JSON run configuration (or ``preset:NAME``) and apply ``--seed``."""
    if str(path).startswith("preset:"):
        data = load_preset(str(path)[len("preset:"):])
    else:
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if seed is not None:
        data = dict(data, seed=seed)
    return RunConfig.from_dict(data)


def parse_ranks(text):
    if text is None:
        return None
    try:
        ranks = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"--rank expects comma-separated integers, got {text!r}") from exc
    if not ranks:
        raise ConfigError("rank list is empty")
    if any(r < 1 for r in ranks):
        raise ConfigError("ranks must be positive")
    return ranks


def _ranks(args, default=None):
    ranks = parse_ranks(args.rank)
    if ranks is None:
        ranks = default
    if not ranks:
        raise ConfigError("no ranks given; pass --rank R[,R...]")
    return ranks


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(args):
    cfg = load_config(args.config, args.seed)
    ens = generate_ensemble(
        cfg.noise["kind"], cfg.qubit, cfg.noise_config(), cfg.ensemble_size, cfg.grid, cfg.seed
    )
    out = Path(args.out)
    written = io.write_ensemble(out / "ensemble.csv", ens, config=cfg.to_dict())
    for p in written:
        log.info("wrote %s", p)
    return EXIT_OK


def cmd_dmd(args):
    ens = io.read_ensemble(args.ensemble)
    ranks = _ranks(args, default=_config_ranks(ens))
    out = Path(args.out)
    snaps = build_snapshots(ens)
    avg = ensemble_average(ens)
    rows_rank, rows_rmse, rows_status = [], [], []
    for r in ranks:
        try:
            decomp = decompose(snaps, r)
        except (ConfigError, NumericalError) as exc:
            log.error("rank %d: %s", r, exc)
            rows_rank.append(r)
            rows_rmse.append("nan")
            rows_status.append(_csv_text(f"error: {exc}"))
            continue
        io.write_decomposition(out / f"decomposition_r{r}.txt", decomp)
        rmse = reconstruction_error(avg, reconstruct(decomp, ens.grid).mean(axis=0))
        rows_rank.append(r)
        rows_rmse.append(io.FLOAT_FMT % rmse)
        rows_status.append("ok")
    io.write_table(out / "rank_study.csv", ["rank", "rmse", "status"],
                   [[str(r) for r in rows_rank], rows_rmse, rows_status])
    sigma = singular_values(ens)
    io.write_table(out / "singular_values.csv", ["index", "sigma"],
                   [[str(i) for i in range(sigma.size)], sigma])
    return EXIT_OK if "ok" in rows_status else EXIT_NUMERICAL


def _csv_text(text):
    return '"' + text.replace('"', '""') + '"'


def _config_ranks(ens):
    return (ens.metadata.get("config") or {}).get("dmd_ranks")


def cmd_psd(args):
    decomp = io.read_decomposition(args.decomposition)
    out = Path(args.out)
    stem = Path(args.decomposition).stem.replace("decomposition", "spectrum")
    extra = {"dt": decomp.dt, "source": Path(args.decomposition).name}
    spec = build_psd(decomp, args.transform)
    io.write_spectrum(out / f"{stem}_{args.transform}.csv", spec, extra)
    inset = build_psd(decomp, "simple")
    io.write_spectrum(out / f"{stem}_simple_inset.csv", inset, extra)
    trend = inverse_frequency_trend(decomp, anchor=spec)
    io.write_spectrum(out / f"{stem}_trend.csv", trend, dict(extra, rank=decomp.rank))
    return EXIT_OK


def cmd_convolve_compare(args):
    cfg = load_config(args.config, None)
    if cfg.noise["kind"] != "oneoverf":
        raise ConfigError("convolve-compare needs a oneoverf noise configuration")
    noise = cfg.noise_config()
    bandwidth = args.bandwidth if args.bandwidth is not None else cfg.grid.nyquist
    freqs = np.linspace(0.0, bandwidth, REFERENCE_POINTS)
    truth = oneoverf_spectrum(freqs, np.sqrt(noise.total_power), noise.gamma_lo, noise.gamma_hi)
    ranks, fwhms, discs = [], [], []
    for path in args.spectra:
        spec = io.read_spectrum(path)
        rank = spec.metadata.get("rank")
        if rank is None:
            raise ConfigError(f"{path}: sidecar carries no rank")
        fwhm = fwhm_for_rank(bandwidth, int(rank))
        smoothed = gaussian_convolve(truth, fwhm)
        ranks.append(str(rank))
        fwhms.append(fwhm)
        discs.append(spectrum_discrepancy(spec, smoothed))
    io.write_table(Path(args.out) / "discrepancy.csv", ["rank", "fwhm_MHz", "discrepancy"],
                   [ranks, fwhms, discs])
    return EXIT_OK


def cmd_t2(args):
    ens = io.read_ensemble(args.ensemble)
    ranks = _ranks(args)
    even = [r for r in ranks if r % 2 == 0]
    if even:
        raise ConfigError(
            f"T2* extraction needs odd DMD ranks; got even rank(s) {even}"
        )
    snaps = build_snapshots(ens)
    env = coherence_envelope(ens) if ens.data_y is not None else None
    report = {"schema_version": io.SCHEMA_VERSION, "ranks": {}}
    failed = False
    for r in ranks:
        try:
            ex = extract_t2(decompose(snaps, r), ens.grid)
        except NumericalError as exc:
            log.error("rank %d: %s", r, exc)
            report["ranks"][str(r)] = {"error": str(exc)}
            failed = True
            continue
        entry = ex.to_dict()
        entry["n_real_candidates"] = len(ex.candidates)
        if env is not None:
            entry["envelope_deviation"] = envelope_deviation(ex.decay_curve, env)
        report["ranks"][str(r)] = entry
        io.write_table(Path(args.out) / f"t2_curve_r{r}.csv", ["t", "t2_mode", "envelope"],
                       [ex.times, ex.decay_curve, env if env is not None else np.full(ex.times.size, np.nan)])
    io.write_json(Path(args.out) / "t2_report.json", report)
    return EXIT_NUMERICAL if failed else EXIT_OK


def cmd_predict(args):
    ens = io.read_ensemble(args.ensemble)
    cfg_split = (ens.metadata.get("config") or {}).get("window_split")
    split = args.window_split if args.window_split is not None else cfg_split
    if split is None:
        raise ConfigError("no window split given; pass --window-split T")
    if not ens.grid.t_start < split < ens.grid.t_end:
        raise ConfigError(f"window split {split} must lie inside ({ens.grid.t_start}, {ens.grid.t_end})")
    ranks = _ranks(args)
    window = ens.window(split)
    truth = ensemble_average(ens)
    for r in ranks:
        decomp = decompose(build_snapshots(window), r)
        result = extrapolate(decomp, ens.times, transform=args.transform)
        io.write_extrapolation(
            Path(args.out) / f"prediction_r{r}.csv", result, truth=truth,
            extra={"window_split": split, "rank": r},
        )
    return EXIT_OK


def cmd_validate(args):
    rows = run_validation(seed=args.seed if args.seed is not None else 0)
    io.write_validation_report(Path(args.out) / "validation.csv", rows)
    failed = [row["check"] for row in rows if not row["pass"]]
    for name in failed:
        log.error("validation check failed: %s", name)
    return EXIT_NUMERICAL if failed else EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser():
    parser = _Parser(prog="stochdmd", description="Stochastic dynamics via dynamic mode decomposition")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, *, config=False, rank=False):
        p.add_argument("--out", default=".", help="output directory")
        if config:
            p.add_argument("--config", required=True, help="JSON run config or preset:NAME")
        if rank:
            p.add_argument("--rank", help="comma-separated DMD ranks")
        return p

    p = common(sub.add_parser("simulate", help="generate a trajectory ensemble"), config=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = common(sub.add_parser("dmd", help="decompose an ensemble at one or more ranks"), rank=True)
    p.add_argument("ensemble")
    p.set_defaults(func=cmd_dmd)

    p = common(sub.add_parser("psd", help="noise spectrum from a decomposition"))
    p.add_argument("decomposition")
    p.add_argument("--transform", choices=TRANSFORMS, default="softmax")
    p.set_defaults(func=cmd_psd)

    p = common(sub.add_parser("convolve-compare", help="compare DMD trends with the smoothed 1/f spectrum"),
               config=True)
    p.add_argument("spectra", nargs="+")
    p.add_argument("--bandwidth", type=float, help="MHz (default: Nyquist of the config grid)")
    p.set_defaults(func=cmd_convolve_compare)

    p = common(sub.add_parser("t2", help="T2* from the real DMD mode at odd ranks"), rank=True)
    p.add_argument("ensemble")
    p.set_defaults(func=cmd_t2)

    p = common(sub.add_parser("predict", help="standard and constrained extrapolation"), rank=True)
    p.add_argument("ensemble")
    p.add_argument("--window-split", type=float)
    p.add_argument("--transform", choices=TRANSFORMS, default="softmax")
    p.set_defaults(func=cmd_predict)

    p = common(sub.add_parser("validate", help="simulator-versus-oracle report"))
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        if args.verbose:
            log.setLevel(logging.INFO)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
