"""Build W_P(z), print per-part degrees, recover z and write a picture."""

import sys

from graphonforge import bounding, graphons, wpz


def main(out="wpz.pgm"):
    P = bounding.random_bounding_sequence(0)
    z = wpz.random_z(0, P.z_dim)
    W = wpz.build_wpz(P, z)
    prof = wpz.part_degree_profile(W, samples=8)
    for row in wpz.degree_crosscheck(prof):
        ref = row["table"] if isinstance(row["table"], str) else f"{row['table'] * 2500:.0f}/2500"
        print(f"{row['part']:>4}: {row['computed_x2500']:10.4f}/2500   reference {ref}")
    print("z       ", z.round(6))
    print("decoded ", wpz.decode_z(W, P.z_dim).round(6))
    graphons.render(W, 500, out)
    print("picture written to", out)


if __name__ == "__main__":
    main(*sys.argv[1:])
