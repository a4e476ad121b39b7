"""Monte Carlo experiment driver.

A sweep runs ``num_drops`` independent drops at every sweep value and solves
each requested duplex mode on the same realization.  Drop ``i`` draws from a
Philox stream keyed by ``(base_seed, i)``; its topology and channel streams
are spawned children, so cellular positions do not depend on N and every
mode and every sweep value of a drop see the same geometry.

Three one-dimensional sweeps are provided:

* ``beta``: SIPR values ``beta_values_db`` at fixed N and A.
* ``n``: D2D links per cell ``N_values`` at fixed A and beta.
* ``gain``: the ``n`` sweep including the pure-cellular reference, for the
  spectral-efficiency gain series.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
import os

import numpy as np

from . import channel, topology
from .baselines import DuplexMode, run_hd, run_pure_cellular
from .fp_solver import SolverConfig, run_fp
from .metrics import NoiseModel

SWEEPS = ("beta", "n", "gain")
SWEEP_ALIASES = {"betasweep": "beta", "nsweep": "n", "gainsweep": "gain"}
SWEEP_COLUMN = {"beta": "beta_db", "n": "N", "gain": "N"}
DEFAULT_MODES = {"beta": ("FD", "HD"), "n": ("FD", "HD"), "gain": ("FD", "HD", "CellularOnly")}
RATIO_SERIES = (("FD", "HD"), ("FD", "CellularOnly"), ("HD", "CellularOnly"))
THREADS_ENV = "FDD2D_THREADS"


def db_to_linear(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def dbm_to_watts(x_dbm):
    return 10.0 ** ((np.asarray(x_dbm, dtype=float) - 30.0) / 10.0)


@dataclass(frozen=True)
class LinearParams:
    """Linear-scale physical constants derived once from an ExperimentConfig."""

    C: float
    P_c: float
    P_d: float
    sigma2: float
    beta: float
    gamma_c: float
    gamma_d: float
    cell_radius: float  # hexagon circumradius in meters


@dataclass(frozen=True)
class ExperimentConfig:
    # geometry
    B: int = 3
    cell_radius: float = 500.0  # cell area is pi * cell_radius**2
    A: int = 16
    P: int = 0  # angular dimensions; 0 selects A/2
    w: float = 0.3
    M: int = 4
    N: int = 20
    r: float = 50.0
    # propagation and radio
    alpha: float = 3.76
    C_db: float = -15.3
    P_c_dbm: float = 46.0
    P_d_dbm: float = 23.0
    carrier_ghz: float = 2.0  # informational; the path-loss model has no frequency term
    bandwidth_hz: float = 10e6
    noise_psd_dbm_hz: float = -174.0
    noise_figure_db: float = 9.0
    beta_db: float = -100.0
    gamma_c_db: float = 0.0
    gamma_d_db: float = 0.0
    # solver
    epsilon: float = 1e-5
    max_outer_iters: int = 200
    constraint_mode: str = "power"
    # experiment
    num_drops: int = 100
    base_seed: int = 20240601
    sweep: str = "beta"
    modes: tuple = ()  # empty selects the sweep's default modes
    beta_values_db: tuple = (-110.0, -105.0, -100.0, -95.0, -90.0, -85.0, -80.0)
    N_values: tuple = (10, 15, 20, 25, 30, 35, 40)
    workers: int = 1

    def __post_init__(self):
        sweep = SWEEP_ALIASES.get(str(self.sweep).lower(), str(self.sweep).lower())
        if sweep not in SWEEPS:
            raise ValueError(f"unknown sweep {self.sweep!r}; expected one of {SWEEPS}")
        object.__setattr__(self, "sweep", sweep)
        modes = self.modes
        if isinstance(modes, str):
            modes = [m.strip() for m in modes.split(",") if m.strip()]
        modes = tuple(DuplexMode(m).value for m in (modes or DEFAULT_MODES[sweep]))
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "beta_values_db", tuple(float(b) for b in self.beta_values_db))
        object.__setattr__(self, "N_values", tuple(int(n) for n in self.N_values))

        if self.num_drops < 1:
            raise ValueError("num_drops must be >= 1")
        if self.B < 1 or self.M < 1 or self.A < 1:
            raise ValueError("B, M and A must be >= 1")
        if not 0 <= self.P <= self.A:
            raise ValueError("P must lie in [0, A]")
        if self.N < 0 or any(n < 0 for n in self.N_values):
            raise ValueError("N values must be non-negative")
        if not self.beta_values_db or not self.N_values:
            raise ValueError("sweep value lists must be non-empty")
        if not (self.r > 0 and self.cell_radius > 0 and self.alpha > 0):
            raise ValueError("r, cell_radius and alpha must be positive")
        if not 0 <= int(self.base_seed) < 2 ** 64:
            raise ValueError("base_seed must be a 64-bit unsigned integer")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

        # the single dB -> linear conversion point
        noise_dbm = self.noise_psd_dbm_hz + 10 * np.log10(self.bandwidth_hz) + self.noise_figure_db
        lin = LinearParams(
            C=float(db_to_linear(self.C_db)),
            P_c=float(dbm_to_watts(self.P_c_dbm)),
            P_d=float(dbm_to_watts(self.P_d_dbm)),
            sigma2=float(dbm_to_watts(noise_dbm)),
            beta=float(db_to_linear(self.beta_db)),
            gamma_c=float(db_to_linear(self.gamma_c_db)),
            gamma_d=float(db_to_linear(self.gamma_d_db)),
            cell_radius=float(topology.hex_radius_for_area(self.cell_radius)),
        )
        object.__setattr__(self, "_linear", lin)

    @property
    def linear(self) -> LinearParams:
        return self._linear

    @property
    def angular_dims(self) -> int:
        return self.P if self.P else max(1, self.A // 2)

    @property
    def sweep_values(self) -> tuple:
        return self.beta_values_db if self.sweep == "beta" else self.N_values

    def solver_config(self) -> SolverConfig:
        lin = self.linear
        return SolverConfig(P_c=lin.P_c, P_d=lin.P_d, epsilon=self.epsilon,
                            max_outer_iters=self.max_outer_iters,
                            constraint_mode=self.constraint_mode,
                            gamma_c=lin.gamma_c, gamma_d=lin.gamma_d)

    def noise(self, beta_db=None) -> NoiseModel:
        beta = self.linear.beta if beta_db is None else float(db_to_linear(beta_db))
        return NoiseModel(self.linear.sigma2, beta)

    @classmethod
    def field_names(cls) -> tuple:
        return tuple(f.name for f in fields(cls))

    def to_dict(self) -> dict:
        return asdict(self)


# ----------------------------------------------------------------------------
# drops


def drop_rng(base_seed: int, drop_index: int) -> np.random.Generator:
    seq = np.random.SeedSequence(int(base_seed), spawn_key=(int(drop_index),))
    return np.random.Generator(np.random.Philox(seq))


def realize(config: ExperimentConfig, drop_index: int, N: int | None = None):
    """Scenario and channel set of one drop (N defaults to ``config.N``)."""
    N = config.N if N is None else int(N)
    topo_rng, chan_rng = drop_rng(config.base_seed, drop_index).spawn(2)
    layout = topology.generate_layout(config.B, config.linear.cell_radius)
    scenario = topology.drop_scenario(layout, config.M, N, config.r, topo_rng)
    steering = channel.SteeringConfig(config.A, config.angular_dims, config.w)
    chans = channel.build_channel_set(scenario, steering, chan_rng, config.linear.C, config.alpha)
    return scenario, chans


def _solve(mode, chans, noise, solver_cfg):
    if mode == "FD":
        return run_fp(chans, noise, solver_cfg)
    if mode == "HD":
        return run_hd(chans, noise, solver_cfg)
    return run_pure_cellular(chans, noise, solver_cfg)


def run_drop(config: ExperimentConfig, drop_index: int) -> dict:
    """Every requested mode solved on drop ``drop_index`` at ``config.N``, ``config.beta_db``."""
    _, chans = realize(config, drop_index)
    noise, cfg = config.noise(), config.solver_config()
    return {mode: _solve(mode, chans, noise, cfg) for mode in config.modes}


@dataclass(frozen=True)
class DropRecord:
    value: float  # sweep variable
    drop_index: int
    mode: str
    sum_rate: float
    converged: bool
    iterations: int
    status: str
    qos_violations: int


def _record(value, drop_index, mode, res) -> DropRecord:
    return DropRecord(value, int(drop_index), mode, float(res.final_sum_rate), bool(res.converged),
                      int(res.iterations), str(res.status), int(res.qos_violations))


def _beta_task(config: ExperimentConfig, drop_index: int) -> list:
    # HD and pure cellular do not depend on beta: solve them once per drop
    _, chans = realize(config, drop_index)
    cfg = config.solver_config()
    fixed = {m: _solve(m, chans, config.noise(), cfg) for m in config.modes if m != "FD"}
    out = []
    for beta_db in config.beta_values_db:
        for mode in config.modes:
            res = run_fp(chans, config.noise(beta_db), cfg) if mode == "FD" else fixed[mode]
            out.append(_record(beta_db, drop_index, mode, res))
    return out


def _n_task(config: ExperimentConfig, N: int, drop_index: int) -> list:
    _, chans = realize(config, drop_index, N)
    cfg, noise = config.solver_config(), config.noise()
    return [_record(N, drop_index, m, _solve(m, chans, noise, cfg)) for m in config.modes]


def _run_task(args):
    config, value, drop_index = args
    if config.sweep == "beta":
        return _beta_task(config, drop_index)
    return _n_task(config, value, drop_index)


def worker_count(config: ExperimentConfig) -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {env!r}") from exc
        if n < 1:
            raise ValueError(f"{THREADS_ENV} must be >= 1")
        return n
    return config.workers


def collect_records(config: ExperimentConfig, progress=None) -> list:
    """Solve every (sweep value, drop, mode) and return records in canonical order."""
    if config.sweep == "beta":
        tasks = [(config, None, i) for i in range(config.num_drops)]
    else:
        tasks = [(config, n, i) for n in config.N_values for i in range(config.num_drops)]
    workers = worker_count(config)
    records = []
    if workers == 1:
        for k, t in enumerate(tasks):
            records.extend(_run_task(t))
            if progress:
                progress(k + 1, len(tasks))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for k, recs in enumerate(pool.map(_run_task, tasks)):
                records.extend(recs)
                if progress:
                    progress(k + 1, len(tasks))
    # keyed reduction: the result never depends on completion order
    return sorted(records, key=_record_key(config))


def _record_key(config):
    values = {v: k for k, v in enumerate(config.sweep_values)}
    modes = {m: k for k, m in enumerate(config.modes)}
    return lambda r: (values[r.value], modes[r.mode], r.drop_index)


# ----------------------------------------------------------------------------
# aggregation


@dataclass(frozen=True)
class PointSummary:
    value: float
    mode: str
    mean_rate: float
    stderr: float
    n_converged: int
    n_drops: int
    mean_iters: float
    mean_qos_violations: float

    @property
    def missing(self) -> bool:
        return self.n_converged == 0


@dataclass(frozen=True)
class RatioSummary:
    value: float
    series: str  # "FD/HD", "FD/CellularOnly", ...
    mean_ratio: float  # mean of per-drop ratios
    stderr: float
    ratio_of_means: float
    n_pairs: int

    @property
    def missing(self) -> bool:
        return self.n_pairs == 0


@dataclass
class ExperimentResult:
    sweep: str
    column: str
    points: list
    ratios: list
    records: list = field(default_factory=list, repr=False)

    def point(self, value, mode) -> PointSummary:
        for p in self.points:
            if p.value == value and p.mode == mode:
                return p
        raise KeyError((value, mode))

    def ratio(self, value, series) -> RatioSummary:
        for r in self.ratios:
            if r.value == value and r.series == series:
                return r
        raise KeyError((value, series))


def mean_and_stderr(x):
    """Sample mean and standard error (ddof=1); a single sample has zero error."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return float("nan"), float("nan")
    if x.size == 1:
        return float(x[0]), 0.0
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.size))


def aggregate(records, sweep: str = "beta") -> ExperimentResult:
    """Means over converged drops per (value, mode) plus paired ratio series.

    Points are listed by ascending sweep value and in FD, HD, CellularOnly
    order, drops are matched by index, and all statistics are computed on
    drop-index-sorted arrays, so the outcome does not depend on record order.
    """
    sweep = SWEEP_ALIASES.get(sweep.lower(), sweep.lower())
    values = sorted({r.value for r in records})
    rank = {m.value: k for k, m in enumerate(DuplexMode)}
    modes = sorted({r.mode for r in records}, key=lambda m: rank.get(m, len(rank)))
    table = {}
    for r in records:
        table.setdefault((r.value, r.mode), {})[r.drop_index] = r

    points = []
    for v in values:
        for m in modes:
            recs = table.get((v, m))
            if not recs:
                continue
            ok = [recs[i] for i in sorted(recs) if recs[i].converged]
            mean, se = mean_and_stderr([r.sum_rate for r in ok])
            iters = float(np.mean([r.iterations for r in ok])) if ok else float("nan")
            qos = float(np.mean([r.qos_violations for r in ok])) if ok else float("nan")
            points.append(PointSummary(v, m, mean, se, len(ok), len(recs), iters, qos))

    ratios = []
    for v in values:
        for num, den in RATIO_SERIES:
            a, b = table.get((v, num)), table.get((v, den))
            if not a or not b:
                continue
            idx = [i for i in sorted(a) if i in b and a[i].converged and b[i].converged
                   and b[i].sum_rate > 0]
            xa = np.array([a[i].sum_rate for i in idx])
            xb = np.array([b[i].sum_rate for i in idx])
            mean, se = mean_and_stderr(xa / xb if idx else [])
            rom = float(xa.mean() / xb.mean()) if idx else float("nan")
            ratios.append(RatioSummary(v, f"{num}/{den}", mean, se, rom, len(idx)))
    return ExperimentResult(sweep, SWEEP_COLUMN[sweep], points, ratios, list(records))


def run_sweep(config: ExperimentConfig, progress=None) -> ExperimentResult:
    return aggregate(collect_records(config, progress), config.sweep)


def with_overrides(config: ExperimentConfig, **overrides) -> ExperimentConfig:
    unknown = set(overrides) - set(ExperimentConfig.field_names())
    if unknown:
        raise KeyError(f"unknown config keys: {sorted(unknown)}")
    return replace(config, **overrides)


# ----------------------------------------------------------------------------
# output


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if not np.isfinite(x):
        return "nan"
    return repr(x)


def _fmt_value(sweep, v) -> str:
    return _fmt(int(v)) if SWEEP_COLUMN[sweep] == "N" else _fmt(float(v))


def points_csv(result: ExperimentResult) -> str:
    lines = [f"{result.column},mode,mean_rate,stderr,n_converged,mean_iters"]
    for p in result.points:
        lines.append(",".join([_fmt_value(result.sweep, p.value), p.mode, _fmt(p.mean_rate),
                               _fmt(p.stderr), _fmt(p.n_converged), _fmt(p.mean_iters)]))
    return "\n".join(lines) + "\n"


def ratios_csv(result: ExperimentResult) -> str:
    lines = [f"{result.column},series,mean_ratio,stderr,ratio_of_means,n_pairs"]
    for r in result.ratios:
        lines.append(",".join([_fmt_value(result.sweep, r.value), r.series, _fmt(r.mean_ratio),
                               _fmt(r.stderr), _fmt(r.ratio_of_means), _fmt(r.n_pairs)]))
    return "\n".join(lines) + "\n"


def warnings_for(result: ExperimentResult) -> list:
    out = []
    for p in result.points:
        if p.missing:
            out.append(f"{result.column}={_fmt_value(result.sweep, p.value)} mode={p.mode}: "
                       f"no converged drops, point missing")
        elif p.n_converged < p.n_drops:
            out.append(f"{result.column}={_fmt_value(result.sweep, p.value)} mode={p.mode}: "
                       f"{p.n_drops - p.n_converged} of {p.n_drops} drops did not converge")
    return out


def summary_text(result: ExperimentResult, config: ExperimentConfig) -> str:
    col = result.column
    lines = [
        f"sweep: {result.sweep}  drops: {config.num_drops}  base_seed: {config.base_seed}",
        f"B={config.B} A={config.A} P={config.angular_dims} M={config.M} N={config.N} "
        f"r={config.r} beta_db={config.beta_db} modes={','.join(config.modes)}",
        "",
        f"{col:>9} {'mode':>13} {'mean_rate':>11} {'stderr':>9} {'conv':>8} {'iters':>7} {'qos_viol':>9}",
    ]
    for p in result.points:
        conv = f"{p.n_converged}/{p.n_drops}"
        lines.append(f"{_fmt_value(result.sweep, p.value):>9} {p.mode:>13} {p.mean_rate:11.4f} "
                     f"{p.stderr:9.4f} {conv:>8} {p.mean_iters:7.1f} {p.mean_qos_violations:9.2f}")
    if result.ratios:
        lines += ["", f"{col:>9} {'series':>16} {'mean_ratio':>11} {'stderr':>9} "
                      f"{'ratio_of_means':>15} {'pairs':>6}"]
        for r in result.ratios:
            lines.append(f"{_fmt_value(result.sweep, r.value):>9} {r.series:>16} "
                         f"{r.mean_ratio:11.4f} {r.stderr:9.4f} {r.ratio_of_means:15.4f} "
                         f"{r.n_pairs:6d}")
    n_conv = sum(p.n_converged for p in result.points)
    n_all = sum(p.n_drops for p in result.points)
    lines += ["", f"converged solves: {n_conv}/{n_all}"]
    warns = warnings_for(result)
    lines += [f"warning: {w}" for w in warns]
    return "\n".join(lines) + "\n"


def write_outputs(result: ExperimentResult, config: ExperimentConfig, output_dir) -> list:
    """Write ``<sweep>.csv``, ``<sweep>_ratios.csv`` and ``summary.txt``; return the paths."""
    os.makedirs(output_dir, exist_ok=True)
    files = {
        f"{result.sweep}.csv": points_csv(result),
        f"{result.sweep}_ratios.csv": ratios_csv(result),
        "summary.txt": summary_text(result, config),
    }
    paths = []
    for name, text in files.items():
        path = os.path.join(output_dir, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        paths.append(path)
    return paths
