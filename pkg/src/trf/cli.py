"""Command-line front end: ``trf <subcommand> [options]``.

Subcommands write CSV/JSON (or binary kernel) artifacts; each artifact
carries a provenance record with the package version, the SHA-256 of the
effective configuration and the seeds used.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import subprocess
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import opcount
from .data import RejectedInput, gmm_spec_from_config, load_csv, sample_gmm, split
from .equivalent import build_equivalent, equivalence_gap
from .kernels import (
    ArcCos0,
    ArcCos1,
    GaussianRFF,
    MonteCarlo,
    TernaryExpected,
    center,
    center_matrix,
    expected_kernel,
)
from .moments import (
    QuadratureError,
    ReLU,
    RFFPair,
    Step,
    Ternary,
    UnsupportedActivation,
    activation_from_name,
    builtin_activations,
    moments_closed_form,
    moments_of,
    moments_quadrature,
)
from .regression import RESULT_COLUMNS, SweepConfig, sweep
from .spectral import EigenError, align, common_edges, sym_eig
from .ternary import (
    CalibrationError,
    TernaryWeightSpec,
    dense_transform,
    gram,
    sample_ternary_weights,
    solve_thresholds,
    ternary_transform,
)
from .weights import GAUSSIAN, WeightLaw, sample_dense

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# --------------------------------------------------------------------------
# provenance and output
# --------------------------------------------------------------------------


def package_version() -> str:
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    try:
        from importlib.metadata import version

        return version("artifact")
    except Exception:
        return "unknown"


def config_hash(cfg: Any) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class Provenance:
    version: str
    config_sha256: str
    seeds: list

    def lines(self) -> list[str]:
        return [f"trf {self.version}", f"config_sha256 {self.config_sha256}",
                "seeds " + " ".join(str(s) for s in self.seeds)]

    def as_dict(self) -> dict:
        return {"version": self.version, "config_sha256": self.config_sha256, "seeds": list(self.seeds)}


class Outputs:
    """Artifacts of one run; removed again if the run fails."""

    def __init__(self, out_dir: Optional[str], prov: Provenance, fmt: str):
        self.dir = Path(out_dir) if out_dir else None
        self.prov = prov
        self.fmt = fmt
        self.written: list[Path] = []
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)

    def _emit(self, name: str, data, binary: bool = False) -> None:
        if self.dir is None:
            if binary:
                sys.stdout.buffer.write(data)
            else:
                sys.stdout.write(data)
            return
        path = self.dir / name
        self.written.append(path)
        if binary:
            path.write_bytes(data)
        else:
            path.write_text(data)

    def csv(self, name: str, header, rows) -> None:
        buf = io.StringIO()
        for line in self.prov.lines():
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
        self._emit(name, buf.getvalue())

    def json(self, name: str, payload: dict) -> None:
        doc = {"provenance": self.prov.as_dict(), **payload}
        self._emit(name, json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n")

    def table(self, stem: str, header, rows, extra: Optional[dict] = None) -> None:
        if self.fmt == "json":
            self.json(stem + ".json", {"columns": list(header), "rows": [list(r) for r in rows], **(extra or {})})
        else:
            self.csv(stem + ".csv", header, rows)

    def binary(self, name: str, data: bytes) -> None:
        self._emit(name, data, binary=True)

    def rollback(self) -> None:
        for p in self.written:
            try:
                p.unlink()
            except OSError:
                pass


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"cannot serialize {type(x).__name__}")


# --------------------------------------------------------------------------
# configuration helpers
# --------------------------------------------------------------------------


def _load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(cfg, dict):
        raise ConfigError("$", "top level must be an object")
    return cfg


def _field(cfg: dict, key: str, kind, path: str, default=None, required=False):
    where = f"{path}.{key}"
    if key not in cfg:
        if required:
            raise ConfigError(where, "missing required field")
        return default
    val = cfg[key]
    try:
        if kind is list:
            if not isinstance(val, list):
                raise TypeError
            return val
        if kind is bool:
            if not isinstance(val, bool):
                raise TypeError
            return val
        if kind is int and isinstance(val, float) and val.is_integer():
            return int(val)
        if kind is int and not isinstance(val, int):
            raise TypeError
        return kind(val)
    except (TypeError, ValueError):
        raise ConfigError(where, f"expected {kind.__name__}, got {val!r}") from None


def _activation(name, path: str):
    try:
        return activation_from_name(str(name))
    except (KeyError, TypeError) as exc:
        raise ConfigError(path, str(exc.args[0])) from None


def _weight_law(entry, path: str) -> WeightLaw:
    if isinstance(entry, str):
        entry = {"name": entry}
    if not isinstance(entry, dict) or "name" not in entry:
        raise ConfigError(path, "weight law must be a name or an object with 'name'")
    params = {k: v for k, v in entry.items() if k != "name"}
    try:
        key = str(entry["name"]).lower().replace("-", "_")
        if key in ("t", "student"):
            key = "student_t"
        return WeightLaw(key, **params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None


def _gmm(cfg: dict, path: str):
    if not isinstance(cfg, dict):
        raise ConfigError(path, "expected an object")
    try:
        return gmm_spec_from_config(cfg)
    except (RejectedInput, ValueError, TypeError, KeyError) as exc:
        raise ConfigError(path, str(exc)) from None


def _seeds(cfg: dict, args) -> list:
    seeds = cfg.get("seeds")
    if seeds is None:
        return [int(args.seed)]
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("$.seeds", "seed list must be a nonempty list")
    try:
        return [int(s) for s in seeds]
    except (TypeError, ValueError):
        raise ConfigError("$.seeds", "seeds must be integers") from None


def resolve_threads(flag: Optional[int]) -> int:
    if flag is not None:
        k = int(flag)
    elif os.environ.get("TRF_THREADS"):
        try:
            k = int(os.environ["TRF_THREADS"])
        except ValueError:
            raise ConfigError("TRF_THREADS", "must be an integer") from None
    else:
        k = os.cpu_count() or 1
    if k < 1:
        raise ConfigError("--threads", "must be at least 1")
    return k


def _expected_kind_for(act):
    if isinstance(act, ReLU):
        return ArcCos1()
    if isinstance(act, Step):
        return ArcCos0()
    if isinstance(act, RFFPair):
        return GaussianRFF()
    if isinstance(act, Ternary):
        return TernaryExpected(act.s_minus, act.s_plus)
    return None


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_moments(args, cfg, out: Outputs) -> None:
    tau = float(cfg.get("tau", args.tau))
    if not tau > 0:
        raise ConfigError("$.tau", "tau must be positive")
    names = cfg.get("kinds", args.kinds.split(",") if args.kinds else None)
    kinds = builtin_activations() if names is None else [_activation(n, f"$.kinds[{i}]") for i, n in enumerate(names)]
    rows = []
    for act in kinds:
        cf = moments_closed_form(act, tau)
        q = moments_of(act, tau, nodes=args.nodes)
        rows.append((_label(act), tau, cf.d0, cf.d1, cf.d2, q.d0, q.d1, q.d2))
    header = ("kind", "tau", "d0", "d1", "d2", "d0_quad", "d1_quad", "d2_quad")
    out.table("moments", header, rows)


def _label(act) -> str:
    name = type(act).__name__.lower()
    if isinstance(act, Ternary):
        return f"ternary({act.s_minus:g},{act.s_plus:g})"
    return name


def cmd_thresholds(args, cfg, out: Outputs) -> None:
    tau = cfg.get("tau", args.tau)
    if "gmm" in cfg:
        spec = _gmm(cfg["gmm"], "$.gmm")
        data, _ = sample_gmm(spec, args.seed)
        from .data import estimate_tau

        tau = estimate_tau(data)
    if tau is None or not float(tau) > 0:
        raise ConfigError("$.tau", "need a positive tau (flag --tau or config)")
    tau = float(tau)
    match = cfg.get("match", args.match)
    if match is not None:
        d = moments_of(_activation(match, "$.match"), tau)
        t1, t2 = d.d1, d.d2
    else:
        t1 = cfg.get("d1", args.d1)
        t2 = cfg.get("d2", args.d2)
        if t1 is None or t2 is None:
            raise ConfigError("$.match", "give --match NAME or both --d1 and --d2")
    best_effort = bool(cfg.get("best_effort", args.best_effort))
    thr = solve_thresholds(float(t1), float(t2), tau, strict=not best_effort)
    q = moments_quadrature(thr.activation(), tau, nodes=512)
    payload = {
        "thresholds": thr.as_dict(),
        "target": {"d1": float(t1), "d2": float(t2)},
        "quadrature": {"d0": q.d0, "d1": q.d1, "d2": q.d2},
        "match": match,
    }
    out.json("thresholds.json", payload)


def _gram_matrix(law: WeightLaw, act, X, m: int, seed: int) -> np.ndarray:
    p = X.shape[0]
    if law.name == "ternary" and isinstance(act, Ternary):
        W = sample_ternary_weights(TernaryWeightSpec(m, p, law.epsilon, seed))
        from .ternary import Thresholds

        thr = Thresholds(act.s_minus, act.s_plus, 1.0, (0.0, 0.0), 0.0)
        return gram(ternary_transform(W, X, thr))
    W = sample_dense(law, m, p, seed)
    F = dense_transform(W, X, act, allow_ternary=True)
    return gram(F, m)


def cmd_spectra(args, cfg, out: Outputs, threads: int) -> None:
    spec = _gmm(_field(cfg, "gmm", dict, "$", required=True), "$.gmm")
    act = _activation(cfg.get("activation", "relu"), "$.activation")
    laws_cfg = _field(cfg, "weight_laws", list, "$", default=["gaussian"])
    laws = [_weight_law(e, f"$.weight_laws[{i}]") for i, e in enumerate(laws_cfg)]
    if not laws:
        raise ConfigError("$.weight_laws", "need at least one weight law")
    m = _field(cfg, "m", int, "$", default=8192)
    bins = _field(cfg, "bins", int, "$", default=50)
    k_top = _field(cfg, "k_top", int, "$", default=1)
    spike_factor = _field(cfg, "spike_factor", float, "$", default=10.0)
    seed = int(args.seed)
    data, stats = sample_gmm(spec, seed)

    kind = _expected_kind_for(act)
    if kind is None:
        kind = MonteCarlo(act, GAUSSIAN, _field(cfg, "m_mc", int, "$", default=100_000), seed)
    K = center(expected_kernel(kind, data))
    model = build_equivalent(stats, moments_of(act, stats.tau))
    gap = equivalence_gap(K, model)

    def one(i_law):
        i, law = i_law
        G = center_matrix(_gram_matrix(law, act, data.X, m, seed + 1 + i))
        return sym_eig(G, k_top, bins, spike_factor)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        summaries = list(pool.map(one, enumerate(laws)))
    SK = sym_eig(K, k_top, bins, spike_factor)
    SKt = sym_eig(model.Ktilde, k_top, bins, spike_factor)

    ref = summaries[0]
    per_law = []
    for i, (law, S) in enumerate(zip(laws, summaries)):
        edges = common_edges(ref, S, bins)
        ca, cb = ref.histogram(edges), S.histogram(edges)
        tv = float(0.5 * np.abs(ca / ca.sum() - cb / cb.sum()).sum())
        name = f"histogram_{i}_{law.describe().replace('(', '_').replace(')', '').replace('=', '')}.csv"
        out.csv(name, ("bin_left", "bin_right", "count_a", "count_b"),
                [(edges[j], edges[j + 1], int(ca[j]), int(cb[j])) for j in range(bins)])
        per_law.append({
            "law": law.describe(),
            "tv_vs_first": tv,
            "spikes": S.spikes.tolist(),
            "top_eigenvector_dots": [align(S.top_vectors[:, c], SK.top_vectors[:, c]) for c in range(k_top)],
            "histogram_file": name,
        })
    edges = common_edges(SK, SKt, bins)
    payload = {
        "activation": _label(act),
        "tau": stats.tau,
        "m": m,
        "gaps": gap.as_dict(),
        "expected_vs_equivalent": {
            "edges": edges,
            "counts_K": SK.histogram(edges),
            "counts_Ktilde": SKt.histogram(edges),
            "spikes_K": SK.spikes,
            "spikes_Ktilde": SKt.spikes,
            "top_eigenvector_dots": [align(SK.top_vectors[:, c], SKt.top_vectors[:, c]) for c in range(k_top)],
        },
        "weight_laws": per_law,
    }
    out.json("spectra.json", payload)


def _regress_data(cfg: dict, seed: int):
    if "gmm" in cfg:
        spec = _gmm(cfg["gmm"], "$.gmm")
        data, stats = sample_gmm(spec, seed)
        tau = stats.tau
    elif "dataset" in cfg:
        ds = cfg["dataset"]
        path = _field(ds, "path", str, "$.dataset", required=True)
        data = load_csv(path, _field(ds, "label_column", int, "$.dataset", default=-1),
                        _field(ds, "standardize", bool, "$.dataset", default=False))
        tau = None
    else:
        raise ConfigError("$", "need 'gmm' or 'dataset'")
    frac = _field(cfg, "train_fraction", float, "$", default=2.0 / 3.0)
    if not 0 < frac < 1:
        raise ConfigError("$.train_fraction", "must lie in (0, 1)")
    train, test = split(data, frac, seed)
    return train, test, tau


def cmd_regress(args, cfg, out: Outputs, threads: int) -> None:
    if not cfg:
        raise ConfigError("$", "regress needs --config")
    seeds = _seeds(cfg, args)
    kinds = tuple(_field(cfg, "kinds", list, "$", default=["rff", "trf"]))
    for i, k in enumerate(kinds):
        if k not in ("rff", "trf"):
            _activation(k, f"$.kinds[{i}]")
    m_grid = tuple(int(x) for x in _field(cfg, "m_grid", list, "$", default=[512]))
    eps = tuple(float(x) for x in _field(cfg, "epsilons", list, "$", default=[0.9]))
    gammas = tuple(float(x) for x in _field(cfg, "gammas", list, "$", default=list(10.0 ** np.arange(-7, 2.5, 0.5))))
    target = str(cfg.get("target", "rff"))
    _activation(target, "$.target")
    record_timing = _field(cfg, "record_timing", bool, "$", default=True)
    data_seed = _field(cfg, "data_seed", int, "$", default=None)

    def one(seed):
        train, test, tau = _regress_data(cfg, seed if data_seed is None else data_seed)
        return sweep(SweepConfig(train, test, kinds, m_grid, eps, gammas, (seed,), target, tau))

    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(one, seeds))
    rows = []
    for block in results:
        for r in block:
            t = r.as_tuple()
            if not record_timing:
                t = t[:6] + (0.0,) + t[7:]
            rows.append(t)
    out.table("results", RESULT_COLUMNS, rows)


@dataclass
class BenchRow:
    epsilon: float
    additions: int
    expected_additions: float
    relative_error: float
    multiplies: int
    scale_multiplies: int
    packed_bits: int
    dense_bits: int
    ternary_seconds: float
    dense_seconds: float

    def as_tuple(self):
        return tuple(self.__dict__.values())


def _best_time(fn, repeats: int) -> float:
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_complexity(p: int, n: int, m: int, epsilon_list, seed: int = 0, repeats: int = 7) -> list[BenchRow]:
    """Operation counts, storage and timing of the ternary transform against dense cos/sin features.

    ``packed_bits`` is the size of the packed ``(m, n)`` feature planes plus
    the serialization header; ``dense_bits`` is ``32 m n``. Timings are the
    best of ``repeats`` runs with op counting disabled.
    """
    from .ternary import Thresholds

    try:
        X = np.random.default_rng(seed).standard_normal((p, n)) / math.sqrt(p)
        Wd = sample_dense(GAUSSIAN, m, p, seed)
    except MemoryError:
        raise MemoryError(f"cannot allocate bench inputs of sizes p={p}, n={n}, m={m}") from None
    thr = Thresholds(-0.5, 0.5, 1.0, (0.0, 0.0), 0.0)
    dense_transform(Wd, X, RFFPair())
    t_dense = _best_time(lambda: dense_transform(Wd, X, RFFPair()), repeats)
    rows = []
    for eps in epsilon_list:
        W = sample_ternary_weights(TernaryWeightSpec(m, p, float(eps), seed))
        with opcount.counting() as ops:
            F = ternary_transform(W, X, thr)
        t_ter = _best_time(lambda: ternary_transform(W, X, thr), repeats)
        expected = (1.0 - float(eps)) * m * n * p
        rows.append(BenchRow(
            float(eps), ops.additions, expected,
            abs(ops.additions - expected) / expected if expected else 0.0,
            ops.multiplies, ops.scale_multiplies,
            8 * F.nbytes, 32 * m * n, t_ter, t_dense,
        ))
    return rows


def cmd_bench(args, cfg, out: Outputs) -> None:
    p = int(cfg.get("p", args.p))
    n = int(cfg.get("n", args.n))
    m = int(cfg.get("m", args.m))
    eps = cfg.get("epsilons", [float(x) for x in args.epsilons.split(",")])
    for i, e in enumerate(eps):
        if not 0 <= float(e) < 1:
            raise ConfigError(f"$.epsilons[{i}]", "must lie in [0, 1)")
    rows = bench_complexity(p, n, m, eps, seed=args.seed)
    header = tuple(BenchRow.__dataclass_fields__)
    out.table("bench", header, [r.as_tuple() for r in rows], {"p": p, "n": n, "m": m})


def cmd_kernels(args, cfg, out: Outputs) -> None:
    spec = _gmm(_field(cfg, "gmm", dict, "$", required=True), "$.gmm")
    kcfg = _field(cfg, "kernel", dict, "$", required=True)
    name = str(_field(kcfg, "kind", str, "$.kernel", required=True)).lower()
    data, stats = sample_gmm(spec, args.seed)
    if name == "gaussian_rff":
        kind = GaussianRFF()
    elif name == "arccos0":
        kind = ArcCos0()
    elif name == "arccos1":
        kind = ArcCos1()
    elif name == "ternary":
        if "match" in kcfg:
            d = moments_of(_activation(kcfg["match"], "$.kernel.match"), stats.tau)
            thr = solve_thresholds(d.d1, d.d2, stats.tau, strict=not kcfg.get("best_effort", False))
            kind = TernaryExpected(thr.s_minus, thr.s_plus)
        else:
            kind = TernaryExpected(_field(kcfg, "s_minus", float, "$.kernel", required=True),
                                   _field(kcfg, "s_plus", float, "$.kernel", required=True))
    elif name == "monte_carlo":
        act = _activation(_field(kcfg, "activation", str, "$.kernel", required=True), "$.kernel.activation")
        law = _weight_law(kcfg.get("law", "gaussian"), "$.kernel.law")
        kind = MonteCarlo(act, law, _field(kcfg, "m_mc", int, "$.kernel", default=100_000), args.seed)
    else:
        raise ConfigError("$.kernel.kind", f"unknown kernel {name!r}")
    K = expected_kernel(kind, data)
    if _field(cfg, "center", bool, "$", default=False):
        K = center(K)
    if args.format == "csv":
        out.csv("kernel.csv", [f"c{j}" for j in range(K.n)], K.values.tolist())
    else:
        out.binary("kernel.kmx", K.to_bytes())
        out.json("kernel.json", {"n": K.n, "kind": name, "centered": K.centered, "tau": stats.tau})


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--out", help="output directory (default: stdout)")
    common.add_argument("--seed", type=int, default=0, help="base seed (u64)")
    common.add_argument("--threads", type=int, default=None, help="worker threads (default: TRF_THREADS or CPU count)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    parser = argparse.ArgumentParser(prog="trf", description="Ternary random features toolkit.")
    sub = parser.add_subparsers(dest="command", metavar="subcommand")
    sub.required = True

    p = sub.add_parser("moments", parents=[common], help="(d0, d1, d2) table of built-in activations")
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--nodes", type=int, default=256)
    p.add_argument("--kinds", help="comma-separated activation names")

    p = sub.add_parser("thresholds", parents=[common], help="calibrate ternary thresholds")
    p.add_argument("--match", help="activation whose (d1, d2) to match")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--d1", type=float)
    p.add_argument("--d2", type=float)
    p.add_argument("--best-effort", action="store_true", help="return the closest pair when no exact match exists")

    sub.add_parser("spectra", parents=[common], help="kernel spectra, equivalent and universality data")
    sub.add_parser("regress", parents=[common], help="ridge regression sweep")

    p = sub.add_parser("bench", parents=[common], help="operation counts and timing of the ternary transform")
    p.add_argument("--p", type=int, default=512)
    p.add_argument("--n", type=int, default=512)
    p.add_argument("--m", type=int, default=512)
    p.add_argument("--epsilons", default="0,0.5,0.9")

    sub.add_parser("kernels", parents=[common], help="dump an expected kernel matrix")
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out = None
    try:
        cfg = _load_config(args.config)
        threads = resolve_threads(args.threads)
        effective = {"command": args.command, "config": cfg,
                     "args": {k: v for k, v in vars(args).items() if k not in ("config", "out", "threads")}}
        seeds = cfg.get("seeds", [args.seed]) if isinstance(cfg.get("seeds", None), list) else [args.seed]
        prov = Provenance(package_version(), config_hash(effective), seeds)
        out = Outputs(args.out, prov, args.format)
        if args.command == "moments":
            cmd_moments(args, cfg, out)
        elif args.command == "thresholds":
            cmd_thresholds(args, cfg, out)
        elif args.command == "spectra":
            cmd_spectra(args, cfg, out, threads)
        elif args.command == "regress":
            cmd_regress(args, cfg, out, threads)
        elif args.command == "bench":
            cmd_bench(args, cfg, out)
        elif args.command == "kernels":
            cmd_kernels(args, cfg, out)
        return EXIT_OK
    except ConfigError as exc:
        _fail(out, f"config error at {exc}")
        return EXIT_CONFIG
    except (RejectedInput, UnsupportedActivation) as exc:
        _fail(out, f"config error: {exc}")
        return EXIT_CONFIG
    except CalibrationError as exc:
        _fail(out, f"calibration failed: {exc}")
        return EXIT_NUMERIC
    except (EigenError, QuadratureError, ArithmeticError) as exc:
        _fail(out, f"numerical failure: {exc}")
        return EXIT_NUMERIC
    except (OSError, MemoryError) as exc:
        _fail(out, f"I/O error: {exc}")
        return EXIT_IO


def _fail(out: Optional[Outputs], message: str) -> None:
    if out is not None:
        out.rollback()
    print(f"trf: {message}", file=sys.stderr)


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
