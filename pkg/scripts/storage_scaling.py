"""Vector vs grid vs point-cloud storage as the campus grows.

Sector length doubles at each step; the vector map keeps the same element
count while raster and point-cloud sizes follow the floor area.
"""

import argparse

from osmagnav.bench import storage_report
from osmagnav.model import parse_osmag
from osmagnav.synthetic import CampusSpec, generate_synthetic_campus


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--steps", type=int, default=4)
    ap.add_argument("--resolution", type=float, default=0.05)
    args = ap.parse_args()

    print(f"{'sector m':>9}{'vector KB':>11}{'grid KB':>11}{'cloud KB':>11}{'grid/vec':>10}")
    length = 24.0
    for _ in range(args.steps):
        xml, _ = generate_synthetic_campus(args.seed, CampusSpec(sector_length=length))
        rep = storage_report(parse_osmag(xml), args.resolution, vector_text=xml)
        print(
            f"{length:>9.0f}{rep['vector_bytes'] / 1e3:>11.1f}{rep['grid_bytes'] / 1e3:>11.1f}"
            f"{rep['pointcloud_bytes_estimate'] / 1e3:>11.1f}{rep['grid_over_vector']:>10.1f}"
        )
        length *= 2


if __name__ == "__main__":
    main()
