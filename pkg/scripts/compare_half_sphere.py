"""Compare mu- and lambda-driven AFEM on the half sphere at the same final tolerance."""
import argparse
import time

from surfafem.afem import afem_run, experiment_config, loglog_slope, write_records


def run_one(indicator, final_eps):
    t0 = time.perf_counter()
    records, _ = afem_run(experiment_config("half_sphere", indicator=indicator, final_eps=final_eps), "half_sphere")
    return records, time.perf_counter() - t0


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--final-eps", type=float, default=3 / 2**8)
    p.add_argument("--csv-prefix", default=None, help="write <prefix>_mu.csv and <prefix>_lambda.csv")
    args = p.parse_args(argv)
    rows = {}
    for ind in ("mu", "lambda"):
        recs, sec = run_one(ind, args.final_eps)
        if args.csv_prefix:
            write_records(f"{args.csv_prefix}_{ind}.csv", recs, timing=False)
        dof = [r.dof for r in recs]
        rows[ind] = (
            recs[-1].dof, sum(r.surf_loops for r in recs), sum(r.pde_loops for r in recs),
            loglog_slope(dof, [r.eta for r in recs], 5), loglog_slope(dof, [r.h1_error for r in recs], 5), sec,
        )
    print(f"{'indicator':>9} {'DOF':>8} {'surf loops':>10} {'pde loops':>9} {'eta slope':>9} {'err slope':>9} {'sec':>6}")
    for ind, (n, sl, pl, se, sr, sec) in rows.items():
        print(f"{ind:>9} {n:8d} {sl:10d} {pl:9d} {se:+9.3f} {sr:+9.3f} {sec:6.1f}")
    mu, lam = rows["mu"], rows["lambda"]
    print(f"DOF ratio mu/lambda {mu[0] / lam[0]:.3f}; loop ratio lambda/mu {lam[1] / max(mu[1], 1):.1f}")


if __name__ == "__main__":
    main()
