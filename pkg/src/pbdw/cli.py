"""Command-line front end.

Heavy imports happen inside main() after --threads is handled, so the
thread environment variables take effect before numpy initializes its
BLAS backend.

Exit codes: 0 success, 1 task failure (structured error JSON on
stderr), 2 configuration or usage error (with a key path when known).
"""

import argparse
import json
import os
import sys


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="pbdw",
        description="Certified state and parameter estimation from "
                    "reduced models: greedy bases, affine recovery maps, "
                    "parameter partitions, and brute-force benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override seeds.master")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=None,
                       help="BLAS/OpenMP thread cap")

    p_run = sub.add_parser("run", help="run the task named in the config")
    common(p_run)
    p_run.add_argument("--task", default=None,
                       help="override the config's task")
    p_run.add_argument("--competitor", default=None,
                       help="fit_affine only: also evaluate this "
                            "reference method (poor-mans)")

    p_est = sub.add_parser("estimate",
                           help="recover states from an observation CSV")
    common(p_est)
    p_est.add_argument("--observations", required=True,
                       help="CSV with header sensor_id,value")
    p_est.add_argument("--pw", action="store_true",
                       help="use a piecewise model (built per config)")
    p_est.add_argument("--map", dest="map_dir", default=None,
                       help="directory of a persisted affine map")

    p_inv = sub.add_parser("invert",
                           help="estimate parameters from states or data")
    common(p_inv)
    p_inv.add_argument("--state", default=None,
                       help="state CSV (node,value)")
    p_inv.add_argument("--from-observation", dest="from_observation",
                       default=None, help="observation CSV")
    p_inv.add_argument("--map", dest="map_dir", default=None,
                       help="persisted affine map used to recover states")

    p_orc = sub.add_parser("oracle", help="brute-force benchmarks")
    orc_sub = p_orc.add_subparsers(dest="oracle_command", required=True)
    p_bench = orc_sub.add_parser("bench",
                                 help="emit a benchmark report JSON")
    common(p_bench)

    return parser


def _apply_threads(n):
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(n)


def _load(args):
    from .config import load_config

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seeds["master"] = int(args.seed)
    if getattr(args, "task", None):
        from .config import TASKS

        from .exceptions import ConfigError
        if args.task not in TASKS:
            raise ConfigError(f"unknown task '{args.task}'",
                              key_path="task")
        cfg.task = args.task
    return cfg


def _out_dir(args, cfg):
    out = args.out or cfg.output_dir
    if not out:
        from .exceptions import ConfigError
        raise ConfigError("no output directory: pass --out or set "
                          "output_dir", key_path="output_dir")
    return out


def _cmd_run(args):
    from . import tasks

    cfg = _load(args)
    out = _out_dir(args, cfg)
    summary = tasks.execute(cfg, out, competitor=args.competitor)
    json.dump(summary, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


def _cmd_estimate(args):
    import numpy as np

    from . import persist, tasks
    from .greedy import greedy_hierarchy, poor_mans_select
    from .model import build_model
    from .piecewise import recover_pw
    from .sensing import build_system

    cfg = _load(args)
    out = _out_dir(args, cfg)
    os.makedirs(out, exist_ok=True)
    model = build_model(cfg.model)
    system = build_system(model, cfg.sensors)
    observations = persist.ingest_observations(args.observations, system)

    records = []
    if args.pw:
        pm = tasks._build_pw(model, system, cfg)
        for k, obs in enumerate(observations):
            rec = recover_pw(pm, obs.w_coords)
            persist.export_state_csv(
                os.path.join(out, f"state_{k:03d}.csv"), rec.u_star)
            records.append({"index": k, "cell": rec.k_star,
                            "s_value": float(rec.s_values[rec.k_star]),
                            "certificate": pm.worst_certificate})
        method = "piecewise"
    elif args.map_dir:
        est = persist.load_affine_map(args.map_dir, system)
        W = np.vstack([obs.w_coords for obs in observations])
        states = est.predict(W)
        for k in range(states.shape[0]):
            persist.export_state_csv(
                os.path.join(out, f"state_{k:03d}.csv"), states[k])
            records.append({"index": k, "certificate": est.certificate()})
        method = "affine"
    else:
        pick, _, _ = tasks._poor_mans(model, system, cfg)
        cert = pick.rows[pick.n_star - 1]["product"]
        for k, obs in enumerate(observations):
            u_star = pick.map.predict(obs.w_coords[None, :])[0]
            persist.export_state_csv(
                os.path.join(out, f"state_{k:03d}.csv"), u_star)
            records.append({"index": k, "certificate": cert})
        method = "one-space"

    summary = {"method": method, "observations": len(observations),
               "records": records}
    json.dump(summary, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


def _cmd_invert(args):
    from . import persist, tasks
    from .exceptions import ConfigError
    from .inverse import LsConfig, estimate_parameter
    from .model import build_model
    from .sensing import build_system

    cfg = _load(args)
    model = build_model(cfg.model)
    ls_cfg = LsConfig(tol=float(cfg.tolerances.get("ls_tol", 1e-8)))

    wc = None
    if args.state:
        states = [persist.import_state_csv(args.state,
                                           expected_dim=model.space.dim)]
    elif args.from_observation:
        system = build_system(model, cfg.sensors)
        observations = persist.ingest_observations(args.from_observation,
                                                   system)
        if args.map_dir:
            est = persist.load_affine_map(args.map_dir, system)
            wc = est.certificate()
            states = [est.predict(o.w_coords[None, :])[0]
                      for o in observations]
        else:
            pick, _, _ = tasks._poor_mans(model, system, cfg)
            wc = pick.rows[pick.n_star - 1]["product"]
            states = [pick.map.predict(o.w_coords[None, :])[0]
                      for o in observations]
    else:
        raise ConfigError("pass --state or --from-observation",
                          key_path="state")

    records = []
    for k, u_bar in enumerate(states):
        res = estimate_parameter(model, u_bar, wc_certificate=wc,
                                 ls_cfg=ls_cfg)
        records.append({
            "index": k,
            "y_bar": [float(v) for v in res.y_bar],
            "s_value": res.s_value,
            "chain_bound": res.chain_bound,
            "kkt_residual": res.projection.kkt_residual,
        })
    json.dump({"records": records}, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


def _cmd_oracle_bench(args):
    from . import tasks

    cfg = _load(args)
    cfg.task = "bench_oracle"
    out = _out_dir(args, cfg)
    summary = tasks.execute(cfg, out)
    json.dump(summary, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


def main(argv=None):
    args = _build_parser().parse_args(argv)
    _apply_threads(getattr(args, "threads", None))

    from .exceptions import ConfigError, IngestError, PbdwError
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "estimate":
            return _cmd_estimate(args)
        if args.command == "invert":
            return _cmd_invert(args)
        if args.command == "oracle":
            return _cmd_oracle_bench(args)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as err:
        _emit_error("config_error", err, key_path=err.key_path)
        return 2
    except IngestError as err:
        _emit_error("ingest_error", err, line=err.line)
        return 1
    except FileNotFoundError as err:
        _emit_error("file_not_found", err)
        return 1
    except PbdwError as err:
        _emit_error(type(err).__name__, err)
        return 1


def _emit_error(kind, err, **extra):
    payload = {"error": kind, "message": str(err)}
    payload.update({k: v for k, v in extra.items() if v is not None})
    json.dump(payload, sys.stderr, sort_keys=True)
    sys.stderr.write("\n")


if __name__ == "__main__":
    sys.exit(main())
