"""Command-line front end: config parsing, experiment dispatch and table output.

Every run writes into ``--out``:

* ``trajectory.tsv`` (one per spin count for ``scaling``): columns
  ``t, ex, ey, ez, energy, total_ez, max_norm_drift``
* ``spectrum.tsv``: ``freq, amplitude``
* ``summary.txt``: flat ``key=value`` lines

The ``oracle`` experiment writes ``oracle.tsv`` and ``summary.txt`` instead.
Tables start with a ``#`` comment block holding the resolved config as YAML,
then a tab-separated header line, then rows. Floats are printed with 17
significant digits so parsing and re-emitting a file reproduces it exactly.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
import yaml

from . import analysis, oracle
from .dynamics import Mode, NormDriftError, Reversal, SimPlan, Trajectory
from .experiments import PLACEMENTS, InitialState, run_echo, run_fid, run_pake, run_scaling
from .geometry import MAGIC_ANGLE
from .integrators import Integrator

log = logging.getLogger(__name__)

EXPERIMENTS = ("fid", "echo", "pake", "scaling", "oracle")
TRAJECTORY_COLUMNS = ("t", "ex", "ey", "ez", "energy", "total_ez", "max_norm_drift")
SPECTRUM_COLUMNS = ("freq", "amplitude")
ORACLE_COLUMNS = (
    "theta_deg", "theta", "E1", "E2", "E3", "E4", "trace_minus_sum",
    "predicted_splitting", "closed_form_max_abs_diff",
)


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending key."""


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    out: str = "out"
    seed: int = 0
    # geometry
    dims: tuple[int, int, int] = (10, 10, 10)
    periodic: bool = True
    n_spins: int = 2
    theta_deg: float = 0.0
    counts: tuple[int, ...] = (2, 25, 50, 100, 200, 500, 1000)
    # physics
    p_d: float = 0.01
    mode: Optional[str] = None
    h: tuple[float, float] = (0.0, 0.0)
    # initial state
    polarization: Optional[float] = None
    axis: tuple[float, float, float] = (1.0, 0.0, 0.0)
    placement: str = "scattered"
    # integration
    t_end: Optional[float] = None
    dt: Optional[float] = None
    integrator: str = "RK4"
    rtol: Optional[float] = None
    atol: float = 1e-12
    sample_every: Optional[int] = None
    reversals: tuple[tuple[float, float], ...] = ()
    tau: float = 5.0
    k: float = 1.0
    workers: int = 1
    # analysis
    window: str = "none"
    zero_pad: int = 4
    # oracle
    omega_d: float = 0.01
    thetas_deg: tuple[float, ...] = (0.0, 30.0, 45.0, math.degrees(MAGIC_ANGLE), 60.0, 90.0)

    @property
    def theta(self) -> float:
        return math.radians(self.theta_deg)

    @property
    def initial_state(self) -> InitialState:
        return InitialState(self.polarization, tuple(self.axis), self.seed, self.placement)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = [list(x) if isinstance(x, tuple) else x for x in v]
            out[f.name] = v
        return out


# experiment-specific defaults for fields left unset
_DEFAULTS = {
    "fid": dict(mode="rotating-secular", polarization=0.7, t_end=6.0, sample_every=1),
    "echo": dict(mode="rotating-secular", polarization=0.98, sample_every=1),
    "pake": dict(mode="lab-full", polarization=0.7, t_end=30.0, sample_every=40, window="hann"),
    "scaling": dict(mode="rotating-secular", polarization=0.7, t_end=10.0, sample_every=1),
    "oracle": dict(),
}

_FIELD_TYPES = {
    "experiment": str, "out": str, "seed": int,
    "dims": (int, 3), "periodic": bool, "n_spins": int, "theta_deg": float,
    "counts": (int, None), "p_d": float, "mode": str, "h": (float, 2),
    "polarization": float, "axis": (float, 3), "placement": str,
    "t_end": float, "dt": float, "integrator": str, "rtol": float, "atol": float,
    "sample_every": int, "reversals": ("pair", None), "tau": float, "k": float,
    "workers": int, "window": str, "zero_pad": int,
    "omega_d": float, "thetas_deg": (float, None),
}


def _scalar(key: str, value: Any, kind: type):
    if kind is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{key}: expected true/false, got {value!r}")
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return int(value)
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigError(f"{key}: must be finite, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{key}: expected a string, got {value!r}")
    return value


def _coerce(key: str, value: Any):
    kind = _FIELD_TYPES[key]
    if value is None:
        return None
    if not isinstance(kind, tuple):
        return _scalar(key, value, kind)
    inner, length = kind
    if not isinstance(value, (list, tuple)):
        raise ConfigError(f"{key}: expected a list, got {value!r}")
    if length is not None and len(value) != length:
        raise ConfigError(f"{key}: expected {length} entries, got {len(value)}")
    if inner == "pair":
        pairs = []
        for i, item in enumerate(value):
            if not isinstance(item, (list, tuple)) or len(item) != 2:
                raise ConfigError(f"{key}[{i}]: expected [tau, k], got {item!r}")
            pairs.append((_scalar(f"{key}[{i}]", item[0], float), _scalar(f"{key}[{i}]", item[1], float)))
        return tuple(pairs)
    return tuple(_scalar(f"{key}[{i}]", v, inner) for i, v in enumerate(value))


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping of keys to values")
    unknown = sorted(set(data) - set(_FIELD_TYPES))
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown key")
    if "experiment" not in data:
        raise ConfigError("experiment: missing required key")
    exp = data["experiment"]
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment: must be one of {EXPERIMENTS}, got {exp!r}")
    values = {k: _coerce(k, v) for k, v in data.items()}
    for k, v in _DEFAULTS[exp].items():
        if values.get(k) is None:
            values[k] = v
    cfg = RunConfig(**values)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    """Check every field the experiment uses; raise :class:`ConfigError` naming the key."""

    def need(cond: bool, key: str, msg: str) -> None:
        if not cond:
            raise ConfigError(f"{key}: {msg}, got {getattr(cfg, key)!r}")

    need(cfg.seed >= 0, "seed", "must be non-negative")
    if cfg.experiment == "oracle":
        need(cfg.omega_d > 0, "omega_d", "must be positive")
        need(len(cfg.thetas_deg) > 0, "thetas_deg", "must not be empty")
        return

    need(cfg.p_d > 0, "p_d", "must be positive")
    try:
        Mode(cfg.mode)
    except ValueError:
        raise ConfigError(f"mode: must be one of {[m.value for m in Mode]}, got {cfg.mode!r}") from None
    try:
        Integrator(cfg.integrator)
    except ValueError:
        raise ConfigError(
            f"integrator: must be one of {[i.value for i in Integrator]}, got {cfg.integrator!r}"
        ) from None
    need(cfg.placement in PLACEMENTS, "placement", f"must be one of {PLACEMENTS}")
    need(cfg.window in ("none", "hann"), "window", "must be 'none' or 'hann'")
    need(cfg.zero_pad >= 1, "zero_pad", "must be >= 1")
    need(cfg.workers >= 1, "workers", "must be >= 1")
    need(0.0 <= cfg.polarization <= 1.0, "polarization", "must lie in [0, 1]")
    need(abs(math.sqrt(sum(a * a for a in cfg.axis)) - 1.0) < 1e-12, "axis", "must be a unit vector")
    if cfg.experiment in ("fid", "echo"):
        need(all(d >= 1 for d in cfg.dims), "dims", "must be positive")
    if cfg.experiment == "pake":
        need(cfg.n_spins >= 2, "n_spins", "must be >= 2")
    if cfg.experiment == "scaling":
        need(len(cfg.counts) > 0 and all(n >= 2 for n in cfg.counts), "counts", "every count must be >= 2")
    if cfg.experiment == "echo":
        need(cfg.tau > 0, "tau", "must be positive")
        need(0.0 < cfg.k <= 1.0, "k", "must lie in (0, 1]")
        need(cfg.mode == Mode.ROTATING_SECULAR.value, "mode", "echo runs only in rotating-secular mode")
        need(not cfg.reversals, "reversals", "echo sets its reversal from tau and k")
    elif cfg.reversals:
        need(cfg.experiment == "fid", "reversals", "only fid and echo accept reversals")
    for i, (tau, k) in enumerate(cfg.reversals):
        if not 0.0 < k <= 1.0:
            raise ConfigError(f"reversals[{i}]: k must lie in (0, 1], got {k!r}")
    try:
        _plan(cfg)
    except ValueError as exc:
        raise ConfigError(f"{_guess_key(str(exc))}: {exc}") from None


def _guess_key(msg: str) -> str:
    for key in ("reversal", "dt", "t_end", "p_d", "sample_every", "rtol", "h"):
        if msg.startswith(key) or f" {key} " in f" {msg} ":
            return "reversals" if key == "reversal" else key
    return "config"


def _t_end(cfg: RunConfig) -> float:
    if cfg.t_end is not None:
        return cfg.t_end
    if cfg.experiment == "echo":
        return cfg.tau + cfg.tau / cfg.k + cfg.tau
    raise ConfigError("t_end: missing")


def _plan(cfg: RunConfig) -> SimPlan:
    revs = cfg.reversals
    if cfg.experiment == "echo":
        revs = ((cfg.tau, cfg.k),)
    return SimPlan(
        mode=Mode(cfg.mode), p_d=cfg.p_d, t_end=_t_end(cfg), dt=cfg.dt, h=cfg.h,
        integrator=Integrator(cfg.integrator), reversals=tuple(Reversal(*r) for r in revs),
        rtol=cfg.rtol, atol=cfg.atol, sample_every=cfg.sample_every,
    )


def parse_config(text: str) -> RunConfig:
    """Parse a YAML (or JSON) document into a validated :class:`RunConfig`."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config: syntax error: {exc}") from None
    if data is None:
        data = {}
    return config_from_dict(data)


def apply_overrides(data: dict, sets: Sequence[str]) -> dict:
    out = dict(data)
    for item in sets:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        key = key.strip()
        try:
            out[key] = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{key}: cannot parse value {raw!r}: {exc}") from None
    return out


# ---------------------------------------------------------------- file formats

def format_float(x: float) -> str:
    return "%.17g" % x


@dataclass
class Table:
    columns: tuple[str, ...]
    data: np.ndarray
    comments: tuple[str, ...] = ()

    def dumps(self) -> str:
        lines = [f"# {c}".rstrip() for c in self.comments]
        lines.append("\t".join(self.columns))
        for row in np.atleast_2d(self.data):
            lines.append("\t".join(format_float(v) for v in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Table":
        comments, rows, columns = [], [], None
        for line in text.splitlines():
            if columns is None and line.startswith("#"):
                comments.append(line[2:] if line.startswith("# ") else line[1:])
            elif columns is None:
                columns = tuple(line.split("\t"))
            elif line:
                rows.append([float(v) for v in line.split("\t")])
        if columns is None:
            raise ValueError("table has no header line")
        data = np.array(rows, dtype=float).reshape(len(rows), len(columns))
        return cls(columns, data, tuple(comments))


def config_comments(cfg: RunConfig) -> tuple[str, ...]:
    text = yaml.safe_dump(cfg.to_dict(), sort_keys=True, default_flow_style=None, width=1000)
    return ("resolved config:",) + tuple(text.rstrip("\n").split("\n"))


def read_config_comments(table: Table) -> dict:
    lines = list(table.comments)
    if not lines or lines[0] != "resolved config:":
        raise ValueError("table does not carry a resolved config block")
    return yaml.safe_load("\n".join(lines[1:]))


def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(float(v))
    return str(v)


def _parse_value(s: str):
    if s == "none":
        return None
    if s in ("true", "false"):
        return s == "true"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def dumps_summary(summary: dict) -> str:
    return "".join(f"{k}={_format_value(v)}\n" for k, v in summary.items())


def loads_summary(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if not line or line.startswith("#"):
            continue
        key, _, val = line.partition("=")
        out[key] = _parse_value(val)
    return out


def trajectory_table(traj: Trajectory, cfg: RunConfig) -> Table:
    data = np.column_stack(
        [traj.times, traj.mean_moment, traj.energy, traj.total_ez, traj.max_norm_drift]
    )
    return Table(TRAJECTORY_COLUMNS, data, config_comments(cfg))


def spectrum_table(spec: analysis.Spectrum, cfg: RunConfig) -> Table:
    return Table(SPECTRUM_COLUMNS, np.column_stack([spec.freqs, spec.amps]), config_comments(cfg))


# ---------------------------------------------------------------- experiments

def _spectrum(traj: Trajectory, cfg: RunConfig) -> analysis.Spectrum:
    return analysis.spectrum(traj, window=cfg.window, zero_pad=cfg.zero_pad)


def _decay_summary(traj: Trajectory, spec: analysis.Spectrum) -> dict:
    s = {
        "ex0": float(traj.mean_moment[0, 0]),
        "transverse0": float(traj.transverse[0]),
        "half_life": analysis.half_life(traj),
        "max_norm_drift": float(traj.max_norm_drift.max()),
        "total_ez_drift": float(np.ptp(traj.total_ez)),
        "energy_rel_drift": float(np.ptp(traj.energy) / abs(traj.energy[0])) if traj.energy[0] else None,
    }
    try:
        fit = analysis.fit_abragam(traj)
        s.update(abragam_a=fit.a_param, abragam_b=fit.b_param, abragam_ratio=fit.ratio,
                 abragam_residual=fit.residual, abragam_converged=fit.converged)
    except analysis.FitError as exc:
        s.update(abragam_a=None, abragam_b=None, abragam_ratio=None, abragam_error=str(exc))
    # moments over +-10 omega_d about the line centre
    if spec.frame is Mode.LAB_FULL:
        center, band = 1.0, 10.0 * traj.p_d
    else:
        center, band = 0.0, 10.0
    m2, m4 = analysis.spectral_moments(spec, center, band)
    s.update(spectral_m2=m2, spectral_m4=m4, spectral_m4_over_m2sq=m4 / m2**2 if m2 else None)
    return s


def _run_fid(cfg: RunConfig):
    plan = _plan(cfg)
    traj = run_fid(
        dims=cfg.dims, periodic=cfg.periodic, p_d=cfg.p_d, init=cfg.initial_state,
        t_end=plan.t_end, mode=plan.mode, dt=cfg.dt, integrator=plan.integrator,
        h=cfg.h, reversals=plan.reversals, rtol=cfg.rtol, atol=cfg.atol,
        sample_every=plan.sample_every,
    )
    spec = _spectrum(traj, cfg)
    return {"trajectory": traj}, spec, _decay_summary(traj, spec)


def _run_echo(cfg: RunConfig):
    plan = _plan(cfg)
    traj = run_echo(
        dims=cfg.dims, p_d=cfg.p_d, init=cfg.initial_state, tau=cfg.tau, k=cfg.k,
        t_end=plan.t_end, periodic=cfg.periodic, dt=cfg.dt, integrator=plan.integrator,
        rtol=cfg.rtol, atol=cfg.atol, sample_every=plan.sample_every,
    )
    t_echo = cfg.tau + cfg.tau / cfg.k
    s = {
        "transverse0": float(traj.transverse[0]),
        "echo_time": t_echo,
        "recovery": analysis.recovery(traj, t_echo) if t_echo <= traj.times[-1] else None,
        "max_norm_drift": float(traj.max_norm_drift.max()),
    }
    try:
        s["echo_fwhm"] = analysis.echo_width(traj, t_echo)
    except ValueError as exc:
        s["echo_fwhm"] = None
        s["echo_fwhm_error"] = str(exc)
    return {"trajectory": traj}, _spectrum(traj, cfg), s


def _run_pake(cfg: RunConfig):
    plan = _plan(cfg)
    traj = run_pake(
        n_spins=cfg.n_spins, theta=cfg.theta, p_d=cfg.p_d, mode=plan.mode,
        init=cfg.initial_state, t_end=plan.t_end, dt=cfg.dt, integrator=plan.integrator,
        h=cfg.h, rtol=cfg.rtol, atol=cfg.atol, sample_every=plan.sample_every,
    )
    spec = _spectrum(traj, cfg)
    s = {"theta": cfg.theta, "max_norm_drift": float(traj.max_norm_drift.max())}
    if plan.mode is Mode.LAB_FULL:
        split = analysis.peak_split(spec)
        s["peak_split"] = split
        s["peak_split_over_p_d"] = None if split is None else split / cfg.p_d
        if cfg.n_spins == 2:
            pred = oracle.predicted_splitting(cfg.theta, cfg.p_d)
            s["oracle_splitting"] = pred
            s["split_over_oracle"] = None if split is None else split / pred
    s["n_peaks"] = len(spec.peaks)
    for i, (f, hgt, w) in enumerate(spec.peaks):
        s[f"peak{i}_freq"] = f
        s[f"peak{i}_height"] = hgt
    return {"trajectory": traj}, spec, s


def _run_scaling(cfg: RunConfig):
    plan = _plan(cfg)
    trajs = run_scaling(
        counts=cfg.counts, p_d=cfg.p_d, init=cfg.initial_state, t_end=plan.t_end,
        mode=plan.mode, dt=cfg.dt, integrator=plan.integrator, workers=cfg.workers,
        h=cfg.h, rtol=cfg.rtol, atol=cfg.atol, sample_every=plan.sample_every,
    )
    s: dict = {}
    ref = trajs[int(np.argmax(cfg.counts))]
    for n, tr in zip(cfg.counts, trajs):
        s[f"half_life_N{n}"] = analysis.half_life(tr)
        s[f"tail_rms_vs_largest_N{n}"] = analysis.tail_rms_difference(tr, ref, min(5.0, plan.t_end / 2))
    named = {f"trajectory_N{n}": tr for n, tr in zip(cfg.counts, trajs)}
    return named, _spectrum(ref, cfg), s


def oracle_table(cfg: RunConfig) -> tuple[Table, dict]:
    rows, summary = [], {"omega_d": cfg.omega_d}
    for deg in cfg.thetas_deg:
        th = math.radians(deg)
        h = oracle.build_hamiltonian(th, cfg.omega_d)
        vals = oracle.eigenvalues(h)
        try:
            ref = oracle.reference_eigenvalues(th, cfg.omega_d)
            diff = float(np.max(np.abs(vals - ref)))
        except ValueError:
            diff = float("nan")
        rows.append([deg, th, *vals, float(np.trace(h.matrix) - vals.sum()),
                     oracle.predicted_splitting(th, cfg.omega_d), diff])
    for th, name in ((0.0, "theta0"), (math.pi / 2, "theta90")):
        cmp = oracle.compare_with_reference(th, cfg.omega_d)
        summary[f"{name}_matrix_vs_quoted_max_abs_diff"] = cmp["matrix_max_abs_diff"]
        summary[f"{name}_eigen_vs_closed_form_max_abs_diff"] = cmp["eigenvalue_max_abs_diff"]
        summary[f"{name}_quoted_matrix_eigen_vs_closed_form"] = cmp["quoted_matrix_eig_diff"]
    summary["splitting_ratio_90_over_0"] = (
        oracle.predicted_splitting(math.pi / 2, cfg.omega_d) / oracle.predicted_splitting(0.0, cfg.omega_d)
    )
    summary["magic_max_abs_diff"] = float(np.max(np.abs(
        oracle.eigenvalues(oracle.build_hamiltonian(MAGIC_ANGLE, cfg.omega_d))
        - oracle.reference_eigenvalues(MAGIC_ANGLE, cfg.omega_d)
    )))
    return Table(ORACLE_COLUMNS, np.array(rows), config_comments(cfg)), summary


_RUNNERS = {"fid": _run_fid, "echo": _run_echo, "pake": _run_pake, "scaling": _run_scaling}


def run(cfg: RunConfig, out: Optional[Path] = None) -> dict:
    """Run ``cfg`` and write its artifact files; returns the summary."""
    out = Path(out if out is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.experiment == "oracle":
        table, summary = oracle_table(cfg)
        (out / "oracle.tsv").write_text(table.dumps())
    else:
        trajs, spec, summary = _RUNNERS[cfg.experiment](cfg)
        for name, traj in trajs.items():
            (out / f"{name}.tsv").write_text(trajectory_table(traj, cfg).dumps())
        (out / "spectrum.tsv").write_text(spectrum_table(spec, cfg).dumps())
    summary = {"experiment": cfg.experiment, "seed": cfg.seed, **summary}
    (out / "summary.txt").write_text(dumps_summary(summary))
    return summary


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dipspin", description="Classical dipolar spin dynamics experiments."
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", type=Path, help="YAML or JSON config file")
        p.add_argument("--out", type=str, help="output directory")
        p.add_argument("--seed", type=int, help="seed for the random part of the initial state")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        data = {}
        if args.config is not None:
            data = yaml.safe_load(args.config.read_text()) or {}
            if not isinstance(data, dict):
                raise ConfigError("config must be a mapping of keys to values")
        if data.get("experiment", args.experiment) != args.experiment:
            raise ConfigError(
                f"experiment: config says {data['experiment']!r} but the subcommand is {args.experiment!r}"
            )
        data["experiment"] = args.experiment
        if args.out is not None:
            data["out"] = args.out
        if args.seed is not None:
            data["seed"] = args.seed
        data = apply_overrides(data, args.set)
        cfg = config_from_dict(data)
        summary = run(cfg)
    except (ConfigError, NormDriftError, ValueError, OSError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1
    for k, v in summary.items():
        print(f"{k}={_format_value(v)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
