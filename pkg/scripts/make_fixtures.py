"""Regenerate the bundled test fixtures (synthetic campus map and manifest)."""

import json
from pathlib import Path

from osmagnav.synthetic import generate_synthetic_campus

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    xml, manifest = generate_synthetic_campus(1)
    (OUT / "campus_seed1.osm").write_text(xml, encoding="utf-8")
    (OUT / "campus_seed1.manifest.json").write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    print(f"wrote {OUT}: {manifest['areas']} areas, {manifest['passages']} passages, {manifest['leaf_areas']} leaves")


if __name__ == "__main__":
    main()
