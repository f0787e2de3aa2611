"""Experiment configuration, seeded multi-trial execution and CSV/SVG output.

The CSV starts with ``# config=<json>``, then the header
``algorithm,trial,episode,real_steps,sim_episodes,exact_suboptimality,mc_value_estimate,seed``
and one row per probe. Floats are written with 17 significant digits. The
config echo leaves out ``workers`` and ``output_dir`` so that the bytes
depend only on what was computed.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .instances import build_instance
from .regression import BUFFER_MODES
from .rng import derive_seed
from .transfer import (
    CoverTrajExplorer,
    DesignExplorer,
    FQIOptimizer,
    RunRecord,
    ZetaGreedyOptimizer,
    direct_transfer_protocol,
    exploration_transfer,
    meta_transfer,
    sim2explore,
    zeta_greedy_protocol,
)

CSV_COLUMNS = (
    "algorithm", "trial", "episode", "real_steps", "sim_episodes", "exact_suboptimality", "mc_value_estimate", "seed",
)

ALGORITHM_PARAMS = {
    "zeta_greedy": {"zeta": 0.1, "T": 1000, "refit_period": 1, "buffer_init": "one_per_sah", "default_value": 0.0},
    "direct_transfer": {"zeta": 0.1, "T": 1000, "default_value": 0.0},
    "exploration_transfer": {"epsilon": 0.1, "delta": 0.1, "T": 1000, "zeta": None, "mode": "practical",
                             "default_value": 0.0},
    "sim2explore": {"epsilon": 0.1, "delta": 0.1, "T": 1000, "log_f": None, "iota": None,
                    "cover_max_episodes": 2_000_000},
    "meta_transfer": {"T": 1000, "T_sim": 2_000_000, "A_exp": "design", "A_po": "fqi", "zeta": 0.1,
                      "design_zeta": 0.01, "beta": 0.5},
}
CONFIG_KEYS = {"instance", "algorithms", "trials", "master_seed", "output_dir", "eval_stride", "workers", "real",
               "plot"}
EXECUTION_ONLY = ("workers", "output_dir")


@dataclass(frozen=True)
class AlgorithmSpec:
    name: str
    label: str
    params: dict


@dataclass(frozen=True)
class ExperimentConfig:
    instance: str
    algorithms: tuple
    trials: int = 1
    master_seed: int = 0
    output_dir: str = "results"
    eval_stride: int = 50
    workers: int = 1
    real: str | None = None
    plot: bool = True

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigurationError("config must be a JSON object")
        unknown = set(doc) - CONFIG_KEYS
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        for key in ("instance", "algorithms"):
            if key not in doc:
                raise ConfigurationError(f"config needs {key!r}")
        build_instance(doc["instance"])  # fail early on a bad specifier
        algos = []
        for i, item in enumerate(doc["algorithms"]):
            if isinstance(item, str):
                item = {"name": item}
            if not isinstance(item, dict) or item.get("name") not in ALGORITHM_PARAMS:
                raise ConfigurationError(f"algorithm #{i} needs a name in {sorted(ALGORITHM_PARAMS)}")
            defaults = ALGORITHM_PARAMS[item["name"]]
            extra = set(item) - set(defaults) - {"name", "label"}
            if extra:
                raise ConfigurationError(f"unknown parameters for {item['name']}: {sorted(extra)}")
            params = {**defaults, **{k: v for k, v in item.items() if k not in ("name", "label")}}
            _check_params(item["name"], params)
            algos.append(AlgorithmSpec(item["name"], item.get("label", item["name"]), params))
        labels = [a.label for a in algos]
        if len(set(labels)) != len(labels):
            raise ConfigurationError("algorithm labels must be unique")
        cfg = cls(doc["instance"], tuple(algos), int(doc.get("trials", 1)), int(doc.get("master_seed", 0)),
                  str(doc.get("output_dir", "results")), int(doc.get("eval_stride", 50)),
                  int(doc.get("workers", 1)), doc.get("real"), bool(doc.get("plot", True)))
        if cfg.trials < 1 or cfg.eval_stride < 1 or cfg.workers < 1:
            raise ConfigurationError("trials, eval_stride and workers must be >= 1")
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(doc)

    def echo(self) -> dict:
        """Normalized config without execution-only keys."""
        return {
            "instance": self.instance,
            "real": self.real,
            "algorithms": [{"name": a.name, "label": a.label, **a.params} for a in self.algorithms],
            "trials": self.trials,
            "master_seed": self.master_seed,
            "eval_stride": self.eval_stride,
        }

    def echo_json(self) -> str:
        return json.dumps(self.echo(), sort_keys=True, separators=(",", ":"))


def _check_params(name: str, p: dict) -> None:
    if not isinstance(p["T"], int) or p["T"] < 1:
        raise ConfigurationError(f"{name}: T must be a positive integer")
    if "zeta" in p and p["zeta"] is not None and not 0 <= p["zeta"] <= 1:
        raise ConfigurationError(f"{name}: zeta must lie in [0, 1]")
    if name == "zeta_greedy":
        if p["buffer_init"] not in BUFFER_MODES:
            raise ConfigurationError(f"zeta_greedy: buffer_init must be one of {BUFFER_MODES}")
        if p["refit_period"] < 1:
            raise ConfigurationError("zeta_greedy: refit_period must be >= 1")
    if name in ("exploration_transfer", "sim2explore"):
        if not 0 < p["delta"] < 1 or not p["epsilon"] > 0:
            raise ConfigurationError(f"{name}: need 0 < delta < 1 and epsilon > 0")
    if name == "exploration_transfer" and p["mode"] not in ("practical", "faithful"):
        raise ConfigurationError("exploration_transfer: mode must be practical or faithful")
    if name == "meta_transfer":
        if p["A_exp"] not in ("design", "cover_traj") or p["A_po"] not in ("fqi", "zeta_greedy"):
            raise ConfigurationError("meta_transfer: A_exp in {design, cover_traj}, A_po in {fqi, zeta_greedy}")


def _pick_real(bundle, name):
    named = bundle.named_reals()
    if name is None:
        return bundle.real
    if name not in named:
        raise ConfigurationError(f"unknown real instance {name!r}; have {sorted(named)}")
    return named[name]


def run_trial(instance: str, real_name, spec: AlgorithmSpec, trial: int, seed: int, eval_stride: int) -> RunRecord:
    """One (algorithm, trial) cell. Pure given its arguments."""
    bundle = build_instance(instance)
    sim, real = bundle.sim, _pick_real(bundle, real_name)
    p = spec.params
    common = {"seed": seed, "eval_stride": eval_stride, "trial": trial}
    if spec.name == "zeta_greedy":
        rec = zeta_greedy_protocol(real, p["zeta"], p["T"], refit_period=p["refit_period"],
                                   buffer_init=p["buffer_init"], default_value=p["default_value"], **common)
    elif spec.name == "direct_transfer":
        rec = direct_transfer_protocol(sim, real, p["zeta"], p["T"], default_value=p["default_value"], **common)
    elif spec.name == "exploration_transfer":
        rec = exploration_transfer(sim, real, p["epsilon"], p["delta"], p["T"], zeta=p["zeta"], mode=p["mode"],
                                   default_value=p["default_value"], **common)
    elif spec.name == "sim2explore":
        rec = sim2explore(sim, real, p["T"], p["delta"], p["epsilon"], log_f=p["log_f"], iota=p["iota"],
                          cover_max_episodes=p["cover_max_episodes"], **common)
    else:
        H, S, A = real.horizon, real.num_states, real.num_actions
        a_exp = DesignExplorer(p["design_zeta"]) if p["A_exp"] == "design" else CoverTrajExplorer(p["beta"])
        a_po = FQIOptimizer(H, S, A) if p["A_po"] == "fqi" else ZetaGreedyOptimizer(H, S, A, p["zeta"])
        rec = meta_transfer(sim, real, a_exp, a_po, p["T_sim"], p["T"], **common)
    rec.algorithm = spec.label
    return rec


def _run_cell(args):
    return run_trial(*args)


@dataclass(frozen=True)
class AggregateCurve:
    """Per algorithm: probe episodes, mean suboptimality, standard error, trial count."""

    series: dict  # label -> dict(episodes, mean, se, n)

    @property
    def labels(self) -> list:
        return list(self.series)

    @classmethod
    def from_rows(cls, rows: list[dict]) -> "AggregateCurve":
        grouped: dict = {}
        for r in rows:
            grouped.setdefault(r["algorithm"], {}).setdefault(int(r["episode"]), []).append(
                float(r["exact_suboptimality"]))
        series = {}
        for label, by_ep in grouped.items():
            eps = sorted(by_ep)
            vals = [np.array(by_ep[e]) for e in eps]
            series[label] = {
                "episodes": np.array(eps, dtype=int),
                "mean": np.array([v.mean() for v in vals]),
                "se": np.array([v.std(ddof=1) / math.sqrt(len(v)) if len(v) > 1 else 0.0 for v in vals]),
                "n": np.array([len(v) for v in vals], dtype=int),
            }
        return cls(series)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list
    curve: AggregateCurve
    csv_text: str
    csv_path: Path | None = None
    svg_path: Path | None = None
    summary: dict = field(default_factory=dict)


def _fmt(x) -> str:
    return format(float(x), ".17g")


def records_to_rows(records: list[RunRecord]) -> list[dict]:
    rows = []
    for rec in records:
        for p in rec.probes:
            rows.append({
                "algorithm": rec.algorithm, "trial": rec.trial, "episode": p.episode, "real_steps": p.real_steps,
                "sim_episodes": p.sim_episodes, "exact_suboptimality": p.exact_suboptimality,
                "mc_value_estimate": p.mc_value_estimate, "seed": rec.seed,
            })
    return rows


def render_csv(config_echo: str, rows: list[dict]) -> str:
    buf = io.StringIO()
    buf.write(f"# config={config_echo}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([r["algorithm"], r["trial"], r["episode"], r["real_steps"], r["sim_episodes"],
                    _fmt(r["exact_suboptimality"]), _fmt(r["mc_value_estimate"]), r["seed"]])
    return buf.getvalue()


def read_csv(path) -> tuple[str, list[dict]]:
    """``(config echo, rows)`` from a harness CSV."""
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# config="):
        raise ConfigurationError(f"{path}: missing '# config=' first line")
    reader = csv.DictReader(lines[1:])
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ConfigurationError(f"{path}: columns {reader.fieldnames} differ from {CSV_COLUMNS}")
    return lines[0][len("# config="):], list(reader)


def run_experiment(config: ExperimentConfig, write: bool = True) -> ExperimentResult:
    cells = []
    for spec in config.algorithms:
        for trial in range(config.trials):
            seed = derive_seed(config.master_seed, trial)
            cells.append((config.instance, config.real, spec, trial, seed, config.eval_stride))
    if config.workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(_run_cell, cells))
    else:
        records = [_run_cell(c) for c in cells]
    order = {a.label: i for i, a in enumerate(config.algorithms)}
    records.sort(key=lambda r: (order[r.algorithm], r.trial))
    rows = records_to_rows(records)
    curve = AggregateCurve.from_rows(rows)
    echo = config.echo_json()
    text = render_csv(echo, rows)
    summary = {}
    for label in order:
        finals = [r.final_suboptimality for r in records if r.algorithm == label]
        summary[label] = {"median_final_suboptimality": float(np.median(finals)),
                          "mean_final_suboptimality": float(np.mean(finals)), "trials": len(finals)}
    result = ExperimentResult(config, records, curve, text, summary=summary)
    if write:
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        result.csv_path = out / "runs.csv"
        result.csv_path.write_text(text)
        if config.plot:
            result.svg_path = out / "curve.svg"
            emit_plot(curve, result.svg_path, title=config.instance, config_echo=echo)
    return result


# ---------------------------------------------------------------------------
# SVG


PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def render_svg(curve: AggregateCurve, title: str = "", config_echo: str = "") -> str:
    """Self-contained line chart: log-x probe episode, linear-y suboptimality, +-1 SE bands."""
    W, Hgt, L, R, T, B = 720, 440, 70, 170, 40, 50
    pw, ph = W - L - R, Hgt - T - B
    pts = [(e, m, s) for v in curve.series.values() for e, m, s in zip(v["episodes"], v["mean"], v["se"])]
    xs = [max(int(p[0]), 1) for p in pts] or [1, 10]
    lo_x, hi_x = math.log10(min(xs)), math.log10(max(xs))
    if hi_x - lo_x < 1e-9:
        lo_x, hi_x = lo_x - 0.5, hi_x + 0.5
    hi_y = max([p[1] + p[2] for p in pts] or [1.0])
    hi_y = hi_y * 1.05 if hi_y > 0 else 1.0

    def X(e):
        return L + (math.log10(max(e, 1)) - lo_x) / (hi_x - lo_x) * pw

    def Y(v):
        return T + ph - max(v, 0.0) / hi_y * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{Hgt}" viewBox="0 0 {W} {Hgt}">',
        f"<desc>{_esc(config_echo)}</desc>",
        f'<rect x="0" y="0" width="{W}" height="{Hgt}" fill="white"/>',
        f'<text x="{L}" y="24" font-family="sans-serif" font-size="14">{_esc(title)}</text>',
        f'<line x1="{L}" y1="{T + ph}" x2="{L + pw}" y2="{T + ph}" stroke="black"/>',
        f'<line x1="{L}" y1="{T}" x2="{L}" y2="{T + ph}" stroke="black"/>',
    ]
    for k in range(math.floor(lo_x), math.ceil(hi_x) + 1):
        if lo_x - 1e-9 <= k <= hi_x + 1e-9:
            x = X(10**k)
            out.append(f'<line x1="{x:.2f}" y1="{T + ph}" x2="{x:.2f}" y2="{T + ph + 5}" stroke="black"/>')
            out.append(f'<text x="{x:.2f}" y="{T + ph + 18}" font-family="sans-serif" font-size="11" '
                       f'text-anchor="middle">1e{k}</text>')
    for i in range(5):
        v = hi_y * i / 4
        y = Y(v)
        out.append(f'<line x1="{L - 5}" y1="{y:.2f}" x2="{L}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{L - 8}" y="{y + 4:.2f}" font-family="sans-serif" font-size="11" '
                   f'text-anchor="end">{v:.3g}</text>')
    out.append(f'<text x="{L + pw / 2:.2f}" y="{Hgt - 10}" font-family="sans-serif" font-size="12" '
               f'text-anchor="middle">real episodes (log scale)</text>')
    out.append(f'<text x="16" y="{T + ph / 2:.2f}" font-family="sans-serif" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 16 {T + ph / 2:.2f})">exact suboptimality</text>')
    for i, (label, v) in enumerate(curve.series.items()):
        color = PALETTE[i % len(PALETTE)]
        e, m, s = v["episodes"], v["mean"], v["se"]
        if len(e) > 1:
            upper = " ".join(f"{X(a):.2f},{Y(b + c):.2f}" for a, b, c in zip(e, m, s))
            lower = " ".join(f"{X(a):.2f},{Y(b - c):.2f}" for a, b, c in zip(e[::-1], m[::-1], s[::-1]))
            out.append(f'<polygon points="{upper} {lower}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
            line = " ".join(f"{X(a):.2f},{Y(b):.2f}" for a, b in zip(e, m))
            out.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="2"/>')
        elif len(e) == 1:
            out.append(f'<circle cx="{X(e[0]):.2f}" cy="{Y(m[0]):.2f}" r="4" fill="{color}"/>')
        ly = T + 16 + 18 * i
        out.append(f'<line x1="{L + pw + 12}" y1="{ly}" x2="{L + pw + 32}" y2="{ly}" stroke="{color}" '
                   f'stroke-width="3"/>')
        out.append(f'<text x="{L + pw + 38}" y="{ly + 4}" font-family="sans-serif" font-size="11">{_esc(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(curve: AggregateCurve, path, title: str = "", config_echo: str = "") -> Path:
    path = Path(path)
    path.write_text(render_svg(curve, title, config_echo))
    return path


def plot_csv(csv_path, svg_path) -> Path:
    echo, rows = read_csv(csv_path)
    return emit_plot(AggregateCurve.from_rows(rows), svg_path, title=Path(csv_path).name, config_echo=echo)


def lock_comparison_config(trials: int = 10, T: int = 20000, master_seed: int = 0, workers: int = 1,
                   output_dir: str = "results/lock_comparison", eval_stride: int = 50) -> ExperimentConfig:
    """The comparison on the combination lock (H=12, eps=1/8, zeroed variant)."""
    return ExperimentConfig.from_dict({
        "instance": "d1:H=12,eps=0.125,variant=zeroed",
        "real": "M1",
        "algorithms": [
            {"name": "exploration_transfer", "epsilon": 0.125 / 8, "delta": 0.1, "T": T},
            {"name": "zeta_greedy", "zeta": 0.1, "T": T, "buffer_init": "one_per_sah_adversarial"},
            {"name": "direct_transfer", "zeta": 0.1, "T": T},
        ],
        "trials": trials, "master_seed": master_seed, "workers": workers, "output_dir": output_dir,
        "eval_stride": eval_stride,
    })


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# Invariant battery

BATTERY_DEFAULTS = {"random": 100, "eps": 0.2, "seed": 0, "policies": 5, "subsets": 10, "covertraj": 1}


@dataclass(frozen=True)
class CheckLine:
    name: str
    runs: int
    violations: int
    worst_margin: float

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def __str__(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.name}: {self.violations}/{self.runs} violations, worst margin {self.worst_margin:.6g}"


@dataclass(frozen=True)
class CheckReport:
    lines: tuple

    @property
    def passed(self) -> bool:
        return all(line.passed for line in self.lines)

    def __str__(self) -> str:
        return "\n".join(str(line) for line in self.lines)


def parse_battery_spec(spec: str | None) -> dict:
    """``key=value`` pairs separated by commas, for example ``random=200,eps=0.2,seed=1``."""
    out = dict(BATTERY_DEFAULTS)
    if not spec:
        return out
    for part in spec.split(","):
        key, sep, val = part.partition("=")
        key = key.strip()
        if not sep or key not in out:
            raise ConfigurationError(f"bad battery entry {part!r}; keys are {sorted(out)}")
        try:
            out[key] = float(val) if key == "eps" else int(val)
        except ValueError:
            raise ConfigurationError(f"battery value for {key!r} is not a number: {val!r}") from None
    if out["random"] < 0 or not 0 <= out["eps"] <= 1:
        raise ConfigurationError("battery needs random >= 0 and eps in [0, 1]")
    return out


def random_battery(n: int, eps_max: float, seed: int, max_S: int = 8, max_A: int = 4, max_H: int = 10):
    """``n`` random factorized bundles with ``S <= max_S``, ``A <= max_A``, ``H <= max_H``, ``eps <= eps_max``."""
    from .instances import make_random_lowrank

    rng = np.random.default_rng(seed)
    for i in range(n):
        S = int(rng.integers(2, max_S + 1))
        A = int(rng.integers(2, max_A + 1))
        H = int(rng.integers(1, max_H + 1))
        d = int(rng.integers(1, min(S * A, 6) + 1))
        eps = float(rng.uniform(0, eps_max))
        yield make_random_lowrank(S, A, H, d, eps, seed=derive_seed(seed, i))


def random_policies(H: int, S: int, A: int, n: int, rng: np.random.Generator) -> list:
    """Half deterministic tables, half Dirichlet-stochastic tables."""
    from .policies import deterministic, stochastic

    out = []
    for j in range(n):
        if j % 2 == 0:
            out.append(deterministic(rng.integers(0, A, size=(H, S)), A))
        else:
            out.append(stochastic(rng.dirichlet(np.ones(A), size=(H, S))))
    return out


class _Tally:
    def __init__(self, name):
        self.name, self.runs, self.bad, self.worst = name, 0, 0, math.inf

    def add(self, check) -> None:
        self.runs += 1
        self.bad += not check.passed
        self.worst = min(self.worst, check.margin)

    def line(self) -> CheckLine:
        return CheckLine(self.name, self.runs, self.bad, self.worst if self.runs else 0.0)


def check_suite(battery_spec: str | None = None) -> CheckReport:
    """Run the exact bound checks on the named instances plus a random battery."""
    from .design import check_cover_traj, cover_traj
    from .instances import make_comb_lock_d1, make_didactic_f1, make_rand_exp_counterexample
    from .policies import QFunction
    from .theory import (
        check_q_gap,
        check_simulation_lemma,
        check_suboptimality_decomposition,
        check_visitation_gap,
    )

    cfg = parse_battery_spec(battery_spec)
    rng = np.random.default_rng(cfg["seed"])
    tallies = {k: _Tally(k) for k in ("simulation-lemma", "q-gap", "visitation-gap", "suboptimality-decomposition")}
    zero = _Tally("zero-gap-equality")
    named = [make_comb_lock_d1(6, 0.125, "zeroed"), make_comb_lock_d1(6, 0.125), make_didactic_f1(6),
             make_rand_exp_counterexample(0.25)]
    bundles = named + list(random_battery(cfg["random"], cfg["eps"], cfg["seed"]))
    for b in bundles:
        sim = b.sim
        H, S, A = sim.horizon, sim.num_states, sim.num_actions
        for real in b.reals:
            tallies["simulation-lemma"].add(check_simulation_lemma(sim, real))
            for pi in random_policies(H, S, A, cfg["policies"], rng):
                tallies["q-gap"].add(check_q_gap(sim, real, pi))
                masks = [rng.random((S, A)) < 0.5 for _ in range(cfg["subsets"])]
                tallies["visitation-gap"].add(check_visitation_gap(sim, real, pi, masks))
            f = QFunction(rng.random((H, S, A)) * (H - np.arange(H))[:, None, None])
            tallies["suboptimality-decomposition"].add(check_suboptimality_decomposition(real, f))
        # a bundle against itself: every gap bound collapses to 0 = 0
        for check in (check_simulation_lemma(sim, sim), check_q_gap(sim, sim, random_policies(H, S, A, 1, rng)[0])):
            zero.add(_Equality(check))
    lines = [t.line() for t in tallies.values()] + [zero.line()]
    if cfg["covertraj"]:
        ct = _Tally("cover-traj")
        d2 = make_rand_exp_counterexample(0.25).sim
        for h in range(1, d2.horizon + 1):
            out = cover_traj(d2, h, 0.25, seed=cfg["seed"])
            ct.add(_CoverCheck(check_cover_traj(d2, out)))
        lines.append(ct.line())
    return CheckReport(tuple(lines))


@dataclass(frozen=True)
class _Equality:
    inner: object

    @property
    def passed(self) -> bool:
        return self.inner.observed == 0.0 and self.inner.bound == 0.0

    @property
    def margin(self) -> float:
        return 0.0 - abs(self.inner.observed - self.inner.bound)


@dataclass(frozen=True)
class _CoverCheck:
    inner: object

    @property
    def passed(self) -> bool:
        return self.inner.passed

    @property
    def margin(self) -> float:
        return self.inner.beta - self.inner.uncovered_mass
