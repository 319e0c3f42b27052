"""Watch per-audience thresholds drift apart under a mixed moderator pool.

Runs the closed-loop simulation (synthetic corpus -> model -> queue ->
simulated moderators -> threshold calibration) and prints the trajectory.
With ``--population homogeneous`` everyone shares one tolerance and the
cutoffs never move; with the default mixed pool the permissive group's
cutoff climbs as strict flags collide with permissive rejections.
"""

import argparse

from printmod.simulation import standard_run


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rounds", type=int, default=60)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--population", choices=["mixed", "homogeneous"], default="mixed")
    parser.add_argument("--pos", type=int, default=40, help="synthetic positives in the corpus")
    parser.add_argument("--neg", type=int, default=40, help="synthetic negatives in the corpus")
    parser.add_argument("--every", type=int, default=10, help="print every Nth round")
    args = parser.parse_args()

    _, metrics = standard_run(
        rounds=args.rounds,
        rng_seed=args.seed,
        n_pos=args.pos,
        n_neg=args.neg,
        population=args.population,
    )

    groups = sorted(metrics["final_thresholds"])
    print(f"{'round':>5s} {'thing':12s} {'max_p':>6s} {'acc':>5s} {'dis':>4s}  " +
          "  ".join(f"theta[{g}]" for g in groups))
    for row in metrics["rows"]:
        if row["round"] % args.every and row["round"] != args.rounds:
            continue
        thetas = "  ".join(
            f"{max(row['thresholds'][g]['thresholds'].values()):.2f}".rjust(6 + len(g))
            for g in groups
        )
        print(f"{row['round']:5d} {row['thing_id']:12s} {row['max_p']:6.3f} "
              f"{row['accuracy_so_far']:5.2f} {row['disagreements_total']:4d}  {thetas}")

    print(f"\nfinal model accuracy on the corpus: {metrics['accuracy']:.3f}")
    print(f"disagreements recorded: {metrics['disagreements_total']}")
    for group in groups:
        cuts = metrics["final_thresholds"][group]["thresholds"]
        pretty = ", ".join(f"{cat}={theta:.2f}" for cat, theta in sorted(cuts.items()))
        print(f"  {group:12s} {pretty}")


if __name__ == "__main__":
    main()
