"""Command-line experiment runner.

Subcommands read a YAML (or JSON) experiment config, write deterministic CSV
files, and log progress to standard error. Exit codes: 0 success, 1 config
error, 2 physics-validation failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from . import integrity as I
from . import mschannel
from .colorcode.faults import verify_all
from .noise import PRESETS, NoiseParams

log = logging.getLogger("trapqec")

EXIT_OK, EXIT_CONFIG, EXIT_PHYSICS = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class ChannelConfig:
    """Microscopic MS extraction settings; ``params`` is 'fig7', 'noiseless' or a dict."""

    params: object = "fig7"
    n_samples: int = 200
    p_trunc: float = 1e-8

    def micro(self) -> mschannel.MSMicroParams:
        if self.params == "fig7":
            return mschannel.FIG7_PARAMS
        if self.params == "noiseless":
            return mschannel.noiseless_micro_params()
        if isinstance(self.params, dict):
            return mschannel.MSMicroParams.from_dict(self.params)
        raise ConfigError(f"unknown channel params {self.params!r}")


@dataclass
class ExperimentConfig:
    seed: int
    preset: str = "anticipated"
    noise: dict | None = None
    schemes: list = field(default_factory=lambda: ["flag"])
    rounds: list = field(default_factory=lambda: [1])
    taus: list = field(default_factory=lambda: [0.05, 0.1, 0.2, 0.4])
    trials: int = 200
    leakage: str = "full"
    repump: str = "cycle"
    ideal_ms: bool = False
    include_bare: bool = True
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    channel_dir: str | None = None
    out: str | None = None
    figure: str | None = None

    def __post_init__(self):
        if isinstance(self.channel, dict):
            self.channel = _build(ChannelConfig, self.channel, "channel")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.preset not in PRESETS:
            raise ConfigError(f"preset must be one of {sorted(PRESETS)}")
        bad = [s for s in self.schemes if s not in I.SCHEMES]
        if bad or not self.schemes:
            raise ConfigError(f"schemes must be a non-empty subset of {I.SCHEMES}")
        if any(not isinstance(m, int) or m < 0 for m in self.rounds):
            raise ConfigError("rounds must be non-negative integers")
        self.taus = [float(t) for t in self.taus]
        if any(t < 0 for t in self.taus) or not self.taus:
            raise ConfigError("taus must be a non-empty list of non-negative times")
        if self.trials < I.MIN_TRIALS:
            raise ConfigError(f"trials must be at least {I.MIN_TRIALS}")
        if self.leakage not in I.LEAKAGE:
            raise ConfigError(f"leakage must be one of {sorted(I.LEAKAGE)}")
        if self.repump not in ("none", "cycle", "gate"):
            raise ConfigError("repump must be none, cycle or gate")
        try:
            self.noise_params()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"noise: {exc}") from exc

    def noise_params(self) -> NoiseParams | None:
        if self.noise is None:
            return None
        return PRESETS[self.preset].replace(**_checked(NoiseParams, self.noise, "noise"))

    def spec(self, scheme: str, m: int, tau: float, encoding: str = "encoded") -> I.MemoryChannelSpec:
        return I.MemoryChannelSpec(encoding=encoding, rounds=m, tau=tau, scheme=scheme,
                                   repump=self.repump, preset=self.preset, leakage=self.leakage,
                                   noise=self.noise_params(), ideal_ms=self.ideal_ms)

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        if "seed" not in d:
            raise ConfigError("seed is mandatory")
        return _build(cls, d, "config")


def _checked(cls, d: dict, where: str) -> dict:
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")
    return d


def _build(cls, d: dict, where: str):
    try:
        return cls(**_checked(cls, d, where))
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    try:
        doc = yaml.safe_load(Path(path).read_text()) if path else {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    doc = dict(doc or {})
    for k, v in (overrides or {}).items():
        if v is not None:
            doc[k] = v
    return ExperimentConfig.from_dict(doc)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)


# ---------------------------------------------------------------------------
# outputs


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def write_csv(path, columns, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])
    return path


def _row_key(r: dict) -> tuple:
    order = {"x": 0, "y": 1, "z": 2, "min": 3, "tau_min": 4}
    return (r["scheme"], r["m"], r["tau_seconds"], order.get(r["basis"], 9))


def _plot(rows, path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    curves = {}
    for r in rows:
        if r["basis"] == "min" and r["R"] == r["R"]:
            curves.setdefault((r["scheme"], r["m"]), []).append((r["tau_seconds"], r["R"], r["stderr"]))
    for (scheme, m), pts in sorted(curves.items()):
        t, R, se = map(np.array, zip(*sorted(pts)))
        label = scheme if scheme.startswith("bare") else f"{scheme} m={m}"
        if scheme == "bare-analytic":
            ax.plot(t, R, "--", label=label)
        else:
            ax.errorbar(t, R, yerr=se, marker="o", ms=3, capsize=2, label=label)
    ax.set_xlabel("memory time (s)")
    ax.set_ylabel("integrity R")
    ax.legend(fontsize=8)
    fig.tight_layout()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


# ---------------------------------------------------------------------------
# subcommands


def memory_rows(cfg: ExperimentConfig, threads: int = 1) -> tuple:
    """Integrity rows for every (scheme, m, tau), plus bare curves and tau_min rows.

    Returns (rows, series) where series[scheme] is the milestone input.
    """
    rows, series = [], {}
    bare_mc, bare_exact = [], []
    if cfg.include_bare:
        params = cfg.spec("flag", 0, 0.0).noise_params()
        for tau in cfg.taus:
            spec = cfg.spec("flag", 0, tau, "bare")
            log.info("bare tau=%.4g", tau)
            est = I.estimate_integrity(spec, cfg.trials, cfg.seed, threads)
            bare_mc.append(est)
            rows += est.rows(spec, cfg.seed)
            ex = I.bare_memory_integrity(tau, params)
            bare_exact.append(ex)
            for r in ex.rows(spec, cfg.seed):
                rows.append({**r, "scheme": "bare-analytic", "trials": 0})
    for scheme in cfg.schemes:
        series[scheme] = {"bare": bare_exact} if cfg.include_bare else {}
        for m in cfg.rounds:
            tmin = I.tau_min(cfg.spec(scheme, m, 0.0))
            rows.append({"scheme": scheme, "preset": cfg.preset, "m": m, "tau_seconds": tmin,
                         "basis": "tau_min", "p_g": math.nan, "R": math.nan,
                         "stderr": math.nan, "trials": 0, "seed": cfg.seed})
            curve = []
            for tau in cfg.taus:
                spec = cfg.spec(scheme, m, tau)
                log.info("%s m=%d tau=%.4g", scheme, m, tau)
                est = I.estimate_integrity(spec, cfg.trials, cfg.seed, threads)
                curve.append(est)
                rows += est.rows(spec, cfg.seed)
            series[scheme][m] = curve
    rows.sort(key=_row_key)
    return rows, series


def cmd_run_memory(cfg: ExperimentConfig, out: Path, threads: int = 1) -> int:
    rows, _ = memory_rows(cfg, threads)
    write_csv(out, I.CSV_COLUMNS, rows)
    log.info("wrote %s", out)
    if cfg.figure:
        _plot(rows, cfg.figure)
        log.info("wrote %s", cfg.figure)
    return EXIT_OK


MILESTONE_COLUMNS = ("scheme", "milestone", "holds", "witness", "window_lo", "window_hi")


def cmd_milestones(cfg: ExperimentConfig, out: Path, threads: int = 1) -> int:
    rows, series = memory_rows(cfg, threads)
    out_rows = []
    for scheme, s in series.items():
        for name, v in I.milestone_check(s).items():
            w = v.window or (math.nan, math.nan)
            out_rows.append({"scheme": scheme, "milestone": name, "holds": v.holds,
                             "witness": "" if v.witness is None else str(v.witness),
                             "window_lo": w[0], "window_hi": w[1]})
            log.info("%s %s: %s", scheme, name, v)
    write_csv(out, MILESTONE_COLUMNS, out_rows)
    write_csv(Path(out).with_name(Path(out).stem + "_curves.csv"), I.CSV_COLUMNS, rows)
    return EXIT_OK


KRAUS_COLUMNS = ("n", "p_n", "gate_error", "average_gate_infidelity", "params_hash", "seed")


def cmd_extract_channel(cfg: ExperimentConfig, out: Path, threads: int = 1) -> int:
    micro = cfg.channel.micro()
    log.info("extracting MS channel from %d trajectories", cfg.channel.n_samples)
    ch = mschannel.extract_channel(micro, cfg.channel.n_samples, cfg.seed,
                                   cfg.channel.p_trunc, threads)
    mschannel.save_channel(ch, out)
    m = ch.meta
    rows = [{"n": i + 1, "p_n": float(p), "gate_error": m["gate_error"],
             "average_gate_infidelity": m["average_gate_infidelity"],
             "params_hash": m["params_hash"], "seed": cfg.seed} for i, p in enumerate(ch.probs)]
    write_csv(Path(out).with_suffix(".csv"), KRAUS_COLUMNS, rows)
    log.info("gate error %.3e, p1 %.6f, %d Kraus operators", m["gate_error"], ch.probs[0], len(ch))
    ok = (ch.completeness_error() < 1e-10 and bool(np.all(np.diff(ch.probs) <= 0))
          and m["trace_preservation_error"] < 1e-10)
    if not ok:
        log.error("extracted channel failed CPTP/ordering checks")
        return EXIT_PHYSICS
    return EXIT_OK


FT_COLUMNS = ("protocol", "locations", "failures", "negative_control", "passed")


def cmd_verify_ft(cfg: ExperimentConfig, out: Path, threads: int = 1) -> int:
    reports = verify_all()
    rows, ok = [], True
    for i, r in enumerate(reports):
        control = i == len(reports) - 1
        passed = (r.failures > 0) if control else r.passed
        ok &= passed
        rows.append({"protocol": r.name, "locations": r.locations, "failures": r.failures,
                     "negative_control": control, "passed": passed})
        log.info("%s%s", r.line(), " (negative control)" if control else "")
    write_csv(out, FT_COLUMNS, rows)
    return EXIT_OK if ok else EXIT_PHYSICS


def cmd_validate_config(cfg: ExperimentConfig, out: Path | None, threads: int = 1) -> int:
    text = dump_config(cfg)
    if ExperimentConfig.from_dict(yaml.safe_load(text)) != cfg:
        log.error("config does not round-trip")
        return EXIT_CONFIG
    if out is not None:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    log.info("config ok")
    return EXIT_OK


COMMANDS = {
    "extract-channel": (cmd_extract_channel, "channel.json"),
    "run-memory": (cmd_run_memory, "integrity.csv"),
    "verify-ft": (cmd_verify_ft, "verify_ft.csv"),
    "milestones": (cmd_milestones, "milestones.csv"),
    "validate-config": (cmd_validate_config, None),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trapqec", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, help="YAML or JSON experiment config")
        s.add_argument("--seed", type=int, help="root seed (overrides the config)")
        s.add_argument("--threads", type=int, default=1, help="worker processes")
        s.add_argument("--out", type=Path, help="output path")
        s.add_argument("--preset", choices=sorted(PRESETS), help="noise and cost preset")
        s.add_argument("--figure", type=Path, help="optional PNG of the integrity curves")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(message)s")
    fn, default_out = COMMANDS[args.command]
    try:
        overrides = {"seed": args.seed, "preset": args.preset,
                     "figure": str(args.figure) if args.figure else None}
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads < 1:
        print("config error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or (Path(cfg.out) if cfg.out else (Path(default_out) if default_out else None))
    return fn(cfg, out, args.threads)


if __name__ == "__main__":
    sys.exit(main())
