"""Decorated densities on the two-part graphon, exact and sampled."""

from graphonforge.density import example_decorated_graphs, example_two_part_graphon, tau_rooted


def main():
    W = example_two_part_graphon()
    for D, target in example_decorated_graphs():
        roots = [0.1 + 0.2 * i for i in range(D.m)]
        exact = tau_rooted(D, W, roots, method="exact").value
        mc = tau_rooted(D, W, roots, method="mc", samples=200_000, seed=0)
        print(f"{D}\n  target {target:.10f}  exact {exact:.10f}  mc {mc.value:.5f} +- {mc.error:.1e}")


if __name__ == "__main__":
    main()
