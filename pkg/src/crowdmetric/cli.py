"""Command-line harness: data generation, identifiability checks, fitting,
evaluation, theory validation, and experiment sweeps with CSV output.

Commands: gen, check, fit, eval, validate-theory, experiment. All commands are
deterministic given the seed in their config. Experiment trials derive
independent RNG streams from (master_seed, trial); every CSV row is
recomputable from the config and those keys alone.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import evaluation, kernels
from .estimation import (
    ConstraintScheme,
    Loss,
    SolverConfig,
    fit_erm,
    fit_single_user,
    oracle_hyperparameters,
    oracle_single_user_radius,
    recover_ideal_points,
)
from .identifiability import (
    check_conjectured,
    check_necessary,
    check_sufficient_incremental,
    is_identifiable,
)
from .linalg import nu, kron_sym
from .model import (
    CrowdModel,
    LinkFunction,
    ResponseDataset,
    delta_spread,
    load_items_csv,
    load_responses_csv,
    make_crowd_model,
    sample_user_pool,
    save_items_csv,
    save_responses_csv,
    spawn_rng,
    split_blocked_by_user,
)
from .selection import (
    SelectionMatrix,
    UserScheme,
    complete_selection,
    sample_uniform_pairs,
    sample_until_rank,
    randrank_bound,
    newspan_probability,
    selection_rank,
)

EXPERIMENT_SCHEMES = (
    "frobenius_metric",
    "nuclear_full",
    "nuclear_metric",
    "nuclear_split",
    "psd_only",
    "identity_metric",
    "single_user",
    "oracle",
)

METRIC_FIELDS = (
    "test_accuracy",
    "rel_metric_error",
    "rel_ideal_point_error",
    "rel_pseudo_error",
)


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _dump_json(obj, path=None):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _link_from_config(cfg: dict) -> LinkFunction:
    cfg = cfg or {}
    return LinkFunction(kind=cfg.get("kind", "logistic"), beta=float(cfg.get("beta", 1.0)))


def _loss_from_config(cfg: dict) -> Loss:
    cfg = cfg or {}
    kind = cfg.get("kind", "logistic")
    if kind == "nll":
        return Loss(kind="nll", link=_link_from_config(cfg.get("link", {})))
    return Loss(kind=kind, beta=float(cfg.get("beta", 1.0)))


def _fmt(value) -> str:
    if value is None:
        return "nan"
    value = float(value)
    if math.isnan(value):
        return "nan"
    return repr(value)


# ---------------------------------------------------------------------------
# gen


def cmd_gen(args) -> int:
    cfg = _load_json(args.config)
    d = int(cfg["d"])
    n = int(cfg["n"])
    K = int(cfg["K"])
    r = int(cfg.get("r", d))
    seed = int(cfg.get("seed", 0))
    link = _link_from_config(cfg.get("link", {}))
    train_per_user = int(cfg.get("train_per_user", 100))
    test_per_user = int(cfg.get("test_per_user", 100))
    deterministic = bool(cfg.get("deterministic", False))

    rng = spawn_rng(seed, 0)
    model = make_crowd_model(d, n, K, r, rng, cfg.get("metric_mode", "low_rank"))
    pools = [
        sample_user_pool(model, link, k, train_per_user + test_per_user, rng, deterministic)
        for k in range(K)
    ]
    train, test = split_blocked_by_user(pools, train_per_user, rng)

    out = args.out_dir.rstrip("/")
    save_items_csv(f"{out}/items.csv", model.X)
    save_responses_csv(f"{out}/train.csv", train)
    save_responses_csv(f"{out}/test.csv", test)
    truth = {
        "d": d,
        "n": n,
        "K": K,
        "r": r,
        "seed": seed,
        "link": {"kind": link.kind, "beta": link.beta},
        "M": model.M_star.tolist(),
        "U": model.U_star.tolist(),
        "V": model.V_star.tolist(),
        "delta_stats": delta_spread(model),
    }
    _dump_json(truth, f"{out}/truth.json")
    print(f"wrote items.csv, train.csv ({len(train)}), test.csv ({len(test)}), truth.json to {out}")
    return 0


# ---------------------------------------------------------------------------
# check


def _load_scheme(paths, partition_d=None) -> UserScheme:
    users = []
    for p in paths:
        with open(p) as fh:
            users.append(SelectionMatrix.from_text(fh.read()))
    part = None
    if partition_d is not None:
        part = tuple(tuple(range(partition_d)) for _ in users)
    return UserScheme(tuple(users), part1_rows=part)


def cmd_check(args) -> int:
    X = load_items_csv(args.items, center=args.center, maxnorm=args.maxnorm)
    scheme = _load_scheme(args.scheme, args.partition_d)
    report = {
        "d": X.shape[0],
        "n": X.shape[1],
        "users": scheme.n_users,
        "rows_per_user": list(scheme.row_counts),
        "selection_ranks": [selection_rank(S) for S in scheme.users],
        "necessary": check_necessary(X, scheme).as_dict(),
        "identifiable": bool(is_identifiable(X, scheme)),
    }
    if scheme.part1_rows is not None:
        try:
            report["sufficient_incremental"] = bool(check_sufficient_incremental(scheme))
        except ValueError as exc:
            report["sufficient_incremental"] = None
            report["sufficient_incremental_error"] = str(exc)
        report["conjectured"] = bool(check_conjectured(scheme))
    _dump_json(report, args.out)
    return 0


# ---------------------------------------------------------------------------
# fit


def _model_from_truth(truth: dict) -> CrowdModel:
    raise_keys = [k for k in ("M", "U") if k not in truth]
    if raise_keys:
        raise ValueError(f"truth file missing {raise_keys}")
    X = np.asarray(truth["X"], dtype=float) if "X" in truth else None
    if X is None:
        raise ValueError("truth file lacks items; pass X via truth['X'] or use explicit radii")
    return CrowdModel(X=X, M_star=np.asarray(truth["M"]), U_star=np.asarray(truth["U"]))


def _scheme_from_config(cfg: dict, model_for_oracle: CrowdModel | None) -> ConstraintScheme:
    kind = cfg["scheme"]
    radii = cfg.get("radii")
    if radii:
        return ConstraintScheme(kind, **{k: float(v) for k, v in radii.items()})
    if model_for_oracle is None:
        raise ValueError("no radii given and no ground truth available for oracle radii")
    return oracle_hyperparameters(model_for_oracle, kind)


def cmd_fit(args) -> int:
    X = load_items_csv(args.items, center=args.center, maxnorm=args.maxnorm)
    cfg = _load_json(args.config)
    train = load_responses_csv(args.train, n_items=X.shape[1], n_users=cfg.get("K"))
    loss = _loss_from_config(cfg.get("loss", {}))
    solver = SolverConfig.from_dict(cfg)

    truth_model = None
    if args.truth:
        truth = _load_json(args.truth)
        truth["X"] = X.tolist()
        truth_model = _model_from_truth(truth)

    kind = cfg["scheme"]
    result_payload = {
        "d": X.shape[0],
        "K": train.n_users,
        "scheme": kind,
        "loss": cfg.get("loss", {}),
        "backend": kernels.BACKEND,
    }
    if kind == "single_user":
        if truth_model is not None:
            radii = [oracle_single_user_radius(truth_model, k) for k in range(train.n_users)]
        else:
            radii = [float(cfg["radii"]["lambda_star"])] * train.n_users
        fits = fit_single_user(train, X, loss, radii, solver)
        result_payload["per_user"] = [
            None
            if fr is None
            else {
                "M": fr.M_hat.tolist(),
                "v": fr.V_hat[:, 0].tolist(),
                "objective": fr.objective,
                "iterations": fr.iterations,
            }
            for fr in fits
        ]
    else:
        scheme = _scheme_from_config(cfg, truth_model)
        fit = fit_erm(train, X, loss, scheme, solver)
        result_payload.update(
            {
                "radii": scheme.radii(),
                "M": fit.M_hat.tolist(),
                "V": fit.V_hat.tolist(),
                "objective": fit.objective,
                "iterations": fit.iterations,
                "constraint_residuals": fit.constraint_residuals,
            }
        )
    _dump_json(result_payload, args.out)
    print(f"fit written to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    X = load_items_csv(args.items, center=args.center, maxnorm=args.maxnorm)
    payload = _load_json(args.model)
    test = load_responses_csv(args.test, n_items=X.shape[1], n_users=payload.get("K"))

    if "per_user" in payload:
        acc = _single_user_accuracy(payload["per_user"], test, X)
        report = {"test_accuracy": acc}
    else:
        M = np.asarray(payload["M"], dtype=float)
        V = np.asarray(payload["V"], dtype=float)
        report = {"test_accuracy": evaluation.test_accuracy(M, V, test, X)}
        if args.truth:
            truth = _load_json(args.truth)
            model = CrowdModel(X=X, M_star=np.asarray(truth["M"]), U_star=np.asarray(truth["U"]))
            alpha = args.alpha if args.alpha is not None else float(X.shape[0])
            U_hat = recover_ideal_points(M, V, alpha)
            metrics = evaluation.relative_errors(M, V, U_hat, model, report["test_accuracy"])
            report.update(metrics.as_dict())
    _dump_json(report, args.out)
    return 0


def _single_user_accuracy(per_user, test: ResponseDataset, X) -> float:
    correct = 0
    total = 0
    for k, entry in enumerate(per_user):
        mask = test.k_idx == k
        count = int(mask.sum())
        if count == 0:
            continue
        if entry is None:
            continue
        sub = ResponseDataset(
            test.n_items, 1, test.i_idx[mask], test.j_idx[mask],
            np.zeros(count, dtype=np.int64), test.y[mask],
        )
        M = np.asarray(entry["M"], dtype=float)
        v = np.asarray(entry["v"], dtype=float).reshape(-1, 1)
        acc = evaluation.test_accuracy(M, v, sub, X)
        correct += acc * count
        total += count
    return correct / total if total else float("nan")


# ---------------------------------------------------------------------------
# validate-theory


def cmd_validate_theory(args) -> int:
    cfg = _load_json(args.config) if args.config else {}
    report = run_theory_validation(cfg)
    failed = [name for name, entry in report.items() if not entry["pass"]]
    for name, entry in report.items():
        status = "PASS" if entry["pass"] else "FAIL"
        print(f"[{status}] {name}: {entry['detail']}")
    _dump_json(report, args.out)
    return 1 if failed else 0


def run_theory_validation(cfg: dict) -> dict:
    seed = int(cfg.get("seed", 0))
    rng = spawn_rng(seed, 1)
    report: dict[str, dict] = {}

    def record(name, ok, detail):
        report[name] = {"pass": bool(ok), "detail": detail}

    # centering identity: S'S == n J exactly
    n_max = int(cfg.get("centering_max_items", 50))
    worst = 0.0
    for n in range(2, n_max + 1):
        S = complete_selection(n).to_dense()
        lhs = S.T @ S
        rhs = n * np.eye(n) - np.ones((n, n))
        worst = max(worst, float(np.abs(lhs - rhs).max()))
    record("centering_identity", worst == 0.0, f"max abs deviation {worst} over n<=%d" % n_max)

    # span-probability bracket for random selection matrices
    violations = 0
    trials = int(cfg.get("newspan_trials", 200))
    for _ in range(trials):
        n = int(rng.integers(3, 8))
        m = int(rng.integers(1, n))
        S = sample_uniform_pairs(n, m, rng)
        r = selection_rank(S)
        prob = float(newspan_probability(S))
        lo = 2 * r / (n * (n - 1))
        hi = (r + 1) * r / (n * (n - 1))
        if prob < lo - 1e-12 or prob > hi + 1e-12:
            violations += 1
    record("newspan_bracket", violations == 0, f"{violations} violations in {trials} draws")

    # random rank-growth bounds
    trials = int(cfg.get("randrank_trials", 2000))
    ok_all = True
    details = []
    for n, r0, r in ((6, 1, 3), (8, 1, 4)):
        seed_matrix = sample_uniform_pairs(n, 1, rng)
        expected, tail = randrank_bound(r0, r, n, 0.1)
        counts = np.array(
            [sample_until_rank(seed_matrix, r, rng)[1] for _ in range(trials)], dtype=float
        )
        mean_ok = counts.mean() <= expected
        tail_ok = float(np.mean(counts > tail)) <= 0.1
        ok_all = ok_all and mean_ok and tail_ok
        details.append(f"n={n}: mean {counts.mean():.4f}<={expected:.4f} tail {np.mean(counts > tail):.4f}")
    record("randrank_bounds", ok_all, "; ".join(details))

    # closed-form measurement moments vs enumeration
    worst = 0.0
    for _ in range(int(cfg.get("moment_trials", 20))):
        d = int(rng.integers(1, 4))
        n = int(rng.integers(2, 11))
        K = int(rng.integers(1, 5))
        X = rng.standard_normal((d, n))
        zz_c, zt_c = evaluation.expected_second_moments(X, K)
        zz_e, zt_e = evaluation.enumerate_second_moments(X, K)
        worst = max(worst, float(np.abs(zz_c - zz_e).max()), float(np.abs(zt_c - zt_e).max()))
    record("moment_identity", worst <= 1e-10, f"max abs deviation {worst:.2e}")

    # Bernoulli KL quadratic lower bound
    pq = rng.uniform(1e-6, 1 - 1e-6, size=(int(cfg.get("kl_trials", 10000)), 2))
    gaps = [evaluation.kl_bernoulli(p, q) - 2 * (p - q) ** 2 for p, q in pq]
    record("kl_lower_bound", min(gaps) >= -1e-12, f"min gap {min(gaps):.3e}")

    # excess risk: direct difference vs KL decomposition
    link = LinkFunction("logistic", beta=float(cfg.get("beta", 2.0)))
    model = make_crowd_model(3, 8, 2, 3, rng, "full_rank")
    loss = Loss(kind="nll", link=link)
    M_p = model.M_star + 0.1 * _random_symmetric(3, rng)
    V_p = model.V_star + 0.1 * rng.standard_normal(model.V_star.shape)
    direct = evaluation.true_risk_exact(M_p, V_p, model, link, loss) - evaluation.true_risk_exact(
        model.M_star, model.V_star, model, link, loss
    )
    via_kl = evaluation.excess_risk_kl(M_p, V_p, model, link)
    record("excess_risk_identity", abs(direct - via_kl) <= 1e-10, f"|diff| {abs(direct - via_kl):.2e}")

    # recovery inequality slack
    worst_slack = math.inf
    model2 = make_crowd_model(3, 15, 3, 1, rng, "low_rank")
    for _ in range(int(cfg.get("recovery_trials", 50))):
        M_p = model2.M_star + 0.2 * _random_symmetric(3, rng)
        V_p = model2.V_star + 0.2 * rng.standard_normal(model2.V_star.shape)
        rep = evaluation.recovery_bound_report(M_p, V_p, model2, link)
        worst_slack = min(worst_slack, rep.slack)
    record("recovery_inequality", worst_slack >= -1e-9, f"min slack {worst_slack:.3e}")

    # quadratic-form identity of the half-vectorized parametrization
    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(1, 7))
        A = _random_symmetric(d, rng)
        x = rng.standard_normal(d)
        worst = max(worst, abs(float(nu(A) @ kron_sym(x)) - float(x @ A @ x)))
    record("quadratic_form_identity", worst <= 1e-10, f"max abs deviation {worst:.2e}")

    return report


def _random_symmetric(d: int, rng) -> np.ndarray:
    A = rng.standard_normal((d, d))
    return 0.5 * (A + A.T)


# ---------------------------------------------------------------------------
# experiment


@dataclass
class TrialRow:
    trial: int
    scheme: str
    pairs_per_user: int
    test_accuracy: float
    rel_metric_error: float
    rel_ideal_point_error: float
    rel_pseudo_error: float
    wall_time: float


def _trial_data(config: dict, trial: int):
    """Deterministic ground truth, split pools, and oracle radii for a trial."""
    d, n, K, r = (int(config[k]) for k in ("d", "n", "K", "r"))
    link = _link_from_config(config.get("link", {}))
    master_seed = int(config.get("master_seed", 0))
    train_pool = max(int(g) for g in config["pairs_per_user"])
    test_per_user = int(config.get("test_per_user", 300))

    rng = spawn_rng(master_seed, trial)
    model = make_crowd_model(d, n, K, r, rng, config.get("metric_mode", "low_rank"))
    pools = [
        sample_user_pool(model, link, k, train_pool + test_per_user, rng)
        for k in range(K)
    ]
    train, test = split_blocked_by_user(pools, train_pool, rng)
    # per-user row ranges inside the concatenated training set; the split's
    # shuffle is the random order used for incremental prefixes
    user_slices = []
    start = 0
    for k in range(K):
        user_slices.append((start, start + train_pool))
        start += train_pool
    return model, train, test, user_slices


def _train_prefix(train: ResponseDataset, user_slices, g: int) -> ResponseDataset:
    keep = np.concatenate([np.arange(s, s + g) for s, _ in user_slices])
    return train.subset(keep)


def _evaluate_scheme(
    scheme_name: str,
    model: CrowdModel,
    train_g: ResponseDataset,
    test: ResponseDataset,
    loss: Loss,
    solver: SolverConfig,
    alpha: float,
):
    X = model.X
    if scheme_name == "oracle":
        M, V = model.M_star, model.V_star
        acc = evaluation.test_accuracy(M, V, test, X)
        U_hat = recover_ideal_points(M, V, alpha)
        rep = evaluation.relative_errors(M, V, U_hat, model, acc)
        return rep
    if scheme_name == "single_user":
        radii = [oracle_single_user_radius(model, k) for k in range(model.K)]
        fits = fit_single_user(train_g, X, loss, radii, solver)
        payload = [
            None if fr is None else {"M": fr.M_hat.tolist(), "v": fr.V_hat[:, 0].tolist()}
            for fr in fits
        ]
        acc = _single_user_accuracy(payload, test, X)
        M_err = []
        V_hat = np.zeros_like(model.V_star)
        U_hat = np.zeros_like(model.U_star)
        for k, fr in enumerate(fits):
            if fr is None:
                continue
            M_err.append(
                float(np.linalg.norm(fr.M_hat - model.M_star)) / float(np.linalg.norm(model.M_star))
            )
            V_hat[:, k] = fr.V_hat[:, 0]
            U_hat[:, k : k + 1] = recover_ideal_points(fr.M_hat, fr.V_hat, alpha)
        base = evaluation.relative_errors(np.zeros_like(model.M_star), V_hat, U_hat, model, acc)
        return evaluation.MetricsReport(
            test_accuracy=acc,
            rel_metric_error=float(np.mean(M_err)) if M_err else None,
            rel_ideal_point_error=base.rel_ideal_point_error,
            rel_pseudo_error=base.rel_pseudo_error,
            undefined=base.undefined,
        )
    scheme = oracle_hyperparameters(model, scheme_name)
    fit = fit_erm(train_g, X, loss, scheme, solver)
    acc = evaluation.test_accuracy(fit.M_hat, fit.V_hat, test, X)
    U_hat = recover_ideal_points(fit.M_hat, fit.V_hat, alpha)
    return evaluation.relative_errors(fit.M_hat, fit.V_hat, U_hat, model, acc)


def run_experiment(config: dict) -> tuple[list[TrialRow], list[dict]]:
    """Execute the sweep; returns per-trial rows and aggregated rows."""
    schemes = config.get("schemes", list(EXPERIMENT_SCHEMES[:5]))
    for s in schemes:
        if s not in EXPERIMENT_SCHEMES:
            raise ValueError(f"unknown scheme {s!r}")
    grid = [int(g) for g in config["pairs_per_user"]]
    trials = int(config.get("trials", 1))
    loss = _loss_from_config(config.get("loss", config.get("link", {})))
    solver = SolverConfig.from_dict(config.get("solver", {}))
    alpha = config.get("alpha")
    alpha = float(alpha) if alpha is not None else float(int(config["d"]))

    rows: list[TrialRow] = []
    for trial in range(trials):
        model, train, test, user_slices = _trial_data(config, trial)
        for g in grid:
            train_g = _train_prefix(train, user_slices, g)
            for scheme_name in schemes:
                t0 = time.perf_counter()
                rep = _evaluate_scheme(scheme_name, model, train_g, test, loss, solver, alpha)
                wall = time.perf_counter() - t0
                rows.append(
                    TrialRow(
                        trial=trial,
                        scheme=scheme_name,
                        pairs_per_user=g,
                        test_accuracy=_nan_if_none(rep.test_accuracy),
                        rel_metric_error=_nan_if_none(rep.rel_metric_error),
                        rel_ideal_point_error=_nan_if_none(rep.rel_ideal_point_error),
                        rel_pseudo_error=_nan_if_none(rep.rel_pseudo_error),
                        wall_time=wall,
                    )
                )
    aggregated = aggregate_rows(rows)
    return rows, aggregated


def _nan_if_none(v):
    return float("nan") if v is None else float(v)


def aggregate_rows(rows: list[TrialRow]) -> list[dict]:
    """Mean and standard error per (scheme, pairs_per_user), trial-ordered."""
    cells: dict[tuple[str, int], list[TrialRow]] = {}
    for row in rows:
        cells.setdefault((row.scheme, row.pairs_per_user), []).append(row)
    out = []
    for (scheme, g) in sorted(cells):
        block = sorted(cells[(scheme, g)], key=lambda r: r.trial)
        entry = {"scheme": scheme, "pairs_per_user": g, "trials": len(block)}
        for fieldname in METRIC_FIELDS:
            vals = np.array([getattr(r, fieldname) for r in block], dtype=float)
            entry[f"{fieldname}_mean"] = float(np.mean(vals))
            if len(vals) > 1:
                entry[f"{fieldname}_se"] = float(np.std(vals, ddof=1) / math.sqrt(len(vals)))
            else:
                entry[f"{fieldname}_se"] = 0.0
        out.append(entry)
    return out


def write_aggregated_csv(aggregated: list[dict], path) -> None:
    header = ["scheme", "pairs_per_user", "trials"]
    for fieldname in METRIC_FIELDS:
        header += [f"{fieldname}_mean", f"{fieldname}_se"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for entry in aggregated:
            w.writerow(
                [entry["scheme"], entry["pairs_per_user"], entry["trials"]]
                + [_fmt(entry[h]) for h in header[3:]]
            )


def write_trial_csv(rows: list[TrialRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["trial", "scheme", "pairs_per_user"] + list(METRIC_FIELDS) + ["wall_time"]
        )
        for r in sorted(rows, key=lambda r: (r.trial, r.scheme, r.pairs_per_user)):
            w.writerow(
                [r.trial, r.scheme, r.pairs_per_user]
                + [_fmt(getattr(r, f)) for f in METRIC_FIELDS]
                + [_fmt(r.wall_time)]
            )


def cmd_experiment(args) -> int:
    config = _load_json(args.config)
    rows, aggregated = run_experiment(config)
    write_aggregated_csv(aggregated, args.out)
    if args.per_trial:
        write_trial_csv(rows, args.per_trial)
    print(f"experiment complete: {len(rows)} trial rows -> {args.out}")
    return 0


# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="crowdmetric", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate synthetic items, responses, and ground truth")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("check", help="identifiability condition checks for a scheme")
    p.add_argument("--items", required=True)
    p.add_argument("--scheme", required=True, nargs="+")
    p.add_argument("--partition-d", type=int, default=None,
                   help="treat the first d rows of every user file as their point block")
    p.add_argument("--center", action="store_true")
    p.add_argument("--maxnorm", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("fit", help="fit a constrained ERM model to responses")
    p.add_argument("--items", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--truth", default=None, help="ground-truth JSON enabling oracle radii")
    p.add_argument("--center", action="store_true")
    p.add_argument("--maxnorm", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="evaluate a fitted model on held-out responses")
    p.add_argument("--model", required=True)
    p.add_argument("--items", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--truth", default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--center", action="store_true")
    p.add_argument("--maxnorm", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("validate-theory", help="run the numerical theory checks")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_validate_theory)

    p = sub.add_parser("experiment", help="seeded sweep over schemes and query counts")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--per-trial", default=None)
    p.set_defaults(func=cmd_experiment)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
