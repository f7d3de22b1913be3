"""Command-line front end.

Each subcommand reads CSV or JSON inputs, calls the library, and writes its
outputs plus a run manifest (command, configuration digest, seed, version,
wall-clock timing and output paths). Exit codes: 0 success, 1 usage or
domain error, 2 data error, 3 numerical failure, 4 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dependence import rgcov_spec_test, rnlsd
from .errors import DataError, DomainError, RGCovError
from .estimator import EstimatorConfig, ShrinkageRegime, estimate
from .io import digest, dumps, read_json, read_series_csv, write_json, write_series_csv
from .montecarlo import StudyConfig, run_study, select_shrinkage
from .portfolio import AllocationRow, allocations_from_split, backtest, benchmark
from .var import VarModel, decompose, simulate

logger = logging.getLogger("rgcov")


class UsageError(DomainError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _estimator_config(args) -> EstimatorConfig:
    raw = read_json(args.config) if getattr(args, "config", None) else {}
    if "estimator" in raw:
        raw = raw["estimator"]
    cfg = EstimatorConfig.from_json(raw)
    if args.delta is not None and args.eta is not None:
        raise UsageError("--delta and --eta are mutually exclusive")
    if args.delta is not None:
        cfg = cfg.with_regime(ShrinkageRegime.fixed(args.delta))
    if args.eta is not None:
        cfg = cfg.with_regime(ShrinkageRegime.over_t(args.eta))
    changes = cfg.to_json()
    if args.lags is not None:
        changes["lags"] = args.lags
    if args.transforms is not None:
        changes["transforms"] = _parse_transforms(args.transforms)
    if args.seed is not None:
        changes["optimizer"]["seed"] = args.seed
    return EstimatorConfig.from_json(changes)


def _parse_transforms(text: str):
    text = text.strip()
    if text.startswith("["):
        return json.loads(text)
    return [t.strip() for t in text.split(",") if t.strip()]


def _emit(args, payload) -> list[str]:
    if args.out:
        path = Path(args.out)
        write_json(path, payload)
        return [str(path)]
    sys.stdout.write(dumps(payload))
    return []


# -- subcommands --------------------------------------------------------


def cmd_simulate(args) -> tuple[dict, list[str]]:
    if not args.config:
        raise UsageError("simulate needs --config model.json")
    model = VarModel.from_json(read_json(args.config))
    seed = 0 if args.seed is None else args.seed
    y = simulate(model, args.T, burn=args.burn, seed=seed)
    outputs = []
    if args.out:
        write_series_csv(args.out, y, index=list(range(1, args.T + 1)))
        outputs.append(args.out)
    else:
        write_series_csv(sys.stdout, y, index=list(range(1, args.T + 1)))
    return {"model": model.to_json(), "T": args.T, "burn": args.burn, "seed": seed}, outputs


def cmd_estimate(args) -> tuple[dict, list[str]]:
    data = read_series_csv(args.data)
    cfg = _estimator_config(args)
    res = estimate(data.values, args.order, cfg)
    payload = res.to_json()
    payload["variables"] = data.names
    if res.dim_theta and cfg.lags * res.transformed.K**2 > res.dim_theta:
        vanishing = cfg.regime.mode == "over_t" or res.delta == 0
        if vanishing or args.bootstrap > 0:
            test = rgcov_spec_test(res, data.values, bootstrap=max(args.bootstrap, 1), seed=cfg.seed)
            payload["spec_test"] = test.to_json()
        else:
            payload["spec_test"] = None
            payload["spec_test_note"] = "fixed delta > 0: pass --bootstrap B for a bootstrap p-value"
    return cfg.to_json(), _emit(args, payload)


def cmd_test(args) -> tuple[dict, list[str]]:
    data = read_series_csv(args.data)
    cfg = _estimator_config(args)
    seed = cfg.seed
    if args.order == 0:
        delta = cfg.regime.effective(data.values.shape[0])
        res = rnlsd(data.values, cfg.transforms, lags=cfg.lags, delta=delta, seed=seed)
    else:
        fit = estimate(data.values, args.order, cfg, compute_covariance=False)
        res = rgcov_spec_test(fit, data.values, bootstrap=args.bootstrap or 199, seed=seed)
    return cfg.to_json(), _emit(args, res.to_json())


def cmd_mc(args) -> tuple[dict, list[str]]:
    if not args.config:
        raise UsageError("mc needs --config study.json")
    raw = read_json(args.config)
    if args.seed is not None:
        raw = dict(raw, base_seed=args.seed)
    study = StudyConfig.from_json(raw)
    jobs = args.jobs if args.jobs is not None else (os.cpu_count() or 1)
    report = run_study(study, jobs=jobs)
    payload = report.to_json()
    payload["selected"] = {
        metric: [{"estimator": k[0], "T": k[1], "shrink": v} for k, v in sorted(select_shrinkage(report, metric).items())]
        for metric in ("bias_abs", "var", "mse", "identification")
    }
    outputs = []
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "report.json", payload)
        (out / "report.csv").write_text(report.to_csv())
        outputs = [str(out / "report.json"), str(out / "report.csv")]
    else:
        sys.stdout.write(dumps(payload))
    return study.to_json(), outputs


def _coefficients(raw) -> list:
    if isinstance(raw, dict) and "coefficients" in raw:
        return [np.asarray(m, dtype=float) for m in raw["coefficients"]]
    if isinstance(raw, dict) and "phi" in raw:
        return list(VarModel.from_json(raw).phi)
    raise DataError("coefficients file needs a 'coefficients' or 'phi' entry")


def cmd_decompose(args) -> tuple[dict, list[str]]:
    if not args.config:
        raise UsageError("decompose needs --config coefficients.json")
    raw = read_json(args.config)
    phi = _coefficients(raw)
    split = decompose(phi)
    rows = allocations_from_split(split)
    payload = {
        "n1": split.n1,
        "n2": split.n2,
        "eigenvalues": [[z.real, z.imag] for z in split.eigenvalues],
        "eigenvalue_moduli": sorted(abs(z) for z in split.eigenvalues),
        "A": split.A.tolist(),
        "A_inv": split.A_inv.tolist(),
        "J1": split.J1.tolist(),
        "J2": split.J2.tolist(),
        "allocations": [r.to_json() for r in rows],
    }
    outputs = []
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "decomposition.json", payload)
        outputs.append(str(out / "decomposition.json"))
    else:
        sys.stdout.write(dumps(payload))
    if args.data:
        data = read_series_csv(args.data)
        y = data.values
        if len(phi) > 1:
            y = np.hstack([y[len(phi) - 1 - k : y.shape[0] - k] for k in range(len(phi))])
        y1, y2 = split.components(y)
        if out is None:
            raise UsageError("component series need --out DIR")
        names = [f"causal{i + 1}" for i in range(split.n1)] + [f"noncausal{i + 1}" for i in range(split.n2)]
        write_series_csv(out / "components.csv", np.hstack([y1, y2]), names)
        outputs.append(str(out / "components.csv"))
    return {"coefficients": [m.tolist() for m in phi]}, outputs


def cmd_backtest(args) -> tuple[dict, list[str]]:
    if not args.config:
        raise UsageError("backtest needs --config allocations.json")
    panel = read_series_csv(args.data)
    raw = read_json(args.config)
    items = raw.get("allocations", raw) if isinstance(raw, dict) else raw
    rows = [AllocationRow.from_json(r) for r in items]
    prices = panel.values
    names = panel.names
    bench = None
    if args.index_column:
        if args.index_column not in names:
            raise DataError(f"no column named {args.index_column!r}")
        k = names.index(args.index_column)
        bench = prices[:, k]
        prices = np.delete(prices, k, axis=1)
    result = backtest(prices, rows, args.v1, panel.index)
    if bench is not None:
        result.portfolios.append(benchmark(bench, args.v1))
    if args.out:
        result.to_csv(args.out)
        outputs = [args.out]
    else:
        sys.stdout.write(result.to_frame().to_csv(index=False, float_format="%.17g"))
        outputs = []
    return {"allocations": [r.to_json() for r in rows], "v1": args.v1}, outputs


# -- wiring -------------------------------------------------------------


def _add_estimator_flags(p):
    p.add_argument("--config", help="estimator configuration JSON")
    p.add_argument("--delta", type=float, help="fixed shrinkage delta")
    p.add_argument("--eta", type=float, help="shrinkage eta with delta_T = eta / T")
    p.add_argument("--lags", type=int, help="number of autocovariance lags H")
    p.add_argument("--transforms", help="comma separated names or a JSON list")
    p.add_argument("--bootstrap", type=int, default=0, help="bootstrap replications for a fixed-delta test")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rgcov", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rgcov {__version__}")
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int)
    common.add_argument("--out")
    common.add_argument("--manifest", help="where to write the run manifest")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="simulate a VAR model")
    p.add_argument("--config", help="model JSON")
    p.add_argument("--T", type=int, default=500)
    p.add_argument("--burn", type=int, default=200)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", parents=[common], help="estimate a VAR(p) by (R)GCov")
    p.add_argument("data")
    p.add_argument("--order", type=int, default=1)
    _add_estimator_flags(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("test", parents=[common], help="RNLSD test (order 0) or specification test")
    p.add_argument("data")
    p.add_argument("--order", type=int, default=0)
    _add_estimator_flags(p)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("mc", parents=[common], help="run a Monte Carlo study")
    p.add_argument("--config", help="study JSON")
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("decompose", parents=[common], help="causal/noncausal decomposition")
    p.add_argument("--config", help="coefficients JSON (an estimate output or a model)")
    p.add_argument("--data", help="series CSV to split into components")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("backtest", parents=[common], help="backtest allocation rows on a price panel")
    p.add_argument("data", help="price CSV")
    p.add_argument("--config", help="allocations JSON")
    p.add_argument("--v1", type=float, default=100.0)
    p.add_argument("--index-column", help="price column to hold as the benchmark")
    p.set_defaults(func=cmd_backtest)
    return parser


def _manifest_path(args) -> Path | None:
    if args.manifest:
        return Path(args.manifest)
    if not args.out:
        return None
    out = Path(args.out)
    if args.command in ("mc", "decompose"):
        return out / "manifest.json"
    return out.with_name(out.name + ".manifest.json")


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("RGCOV_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = None
    try:
        args = build_parser().parse_args(argv)
        start = time.perf_counter()
        config, outputs = args.func(args)
        manifest = {
            "command": args.command,
            "config_digest": digest(config),
            "seed": args.seed,
            "version": __version__,
            "elapsed_seconds": time.perf_counter() - start,
            "outputs": outputs,
        }
        path = _manifest_path(args)
        if path is None:
            sys.stderr.write(dumps({"manifest": manifest}))
        else:
            path.parent.mkdir(parents=True, exist_ok=True)
            write_json(path, manifest)
        return 0
    except RGCovError as exc:
        code = exc.exit_code
        err = exc
    except FileNotFoundError as exc:
        code, err = 2, exc
    except (ValueError, KeyError, TypeError) as exc:
        # malformed configuration content that slipped past validation
        code, err = (1, exc) if isinstance(exc, (KeyError, TypeError)) else (2, exc)
    except Exception as exc:  # pragma: no cover - last resort
        logger.exception("internal error")
        code, err = 4, exc
    record = {"error": type(err).__name__, "message": str(err), "exit_code": code}
    if args is not None:
        record["command"] = args.command
    sys.stderr.write(json.dumps(record) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
