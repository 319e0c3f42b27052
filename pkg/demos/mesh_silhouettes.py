"""Parse an STL, report its shape, and draw silhouettes as ASCII art.

Without arguments the script builds its own two-part dumbbell (a pair of
cubes joined by a thin bar) so there is something interesting to project.
Point ``--stl`` at a real file to inspect your own model.
"""

import argparse
from pathlib import Path

import numpy as np

from printmod.mesh import (
    DEFAULT_VIEWS,
    box_mesh,
    compute_stats,
    mesh_from_soup,
    parse_stl,
    render_silhouettes,
    serialize_stl,
)

SHADES = " .:-=+*#%@"


def dumbbell() -> "np.ndarray":
    parts = [
        box_mesh(size=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)),
        box_mesh(size=(1.0, 1.0, 1.0), origin=(2.4, 0.0, 0.0)),
        box_mesh(size=(1.4, 0.25, 0.25), origin=(1.0, 0.375, 0.375)),
    ]
    return np.concatenate([m.vertices[m.triangles] for m in parts])


def ascii_view(view: np.ndarray) -> str:
    lines = []
    # Row 0 is the lowest view-up coordinate; print top-down like a screen.
    for row in view[::-1]:
        lines.append("".join(SHADES[min(int(v * (len(SHADES) - 1) + 0.5), len(SHADES) - 1)] for v in row))
    return "\n".join(lines)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--stl", type=Path, help="binary or ascii STL to inspect")
    parser.add_argument("--grid", type=int, default=24, help="silhouette grid resolution")
    parser.add_argument("--views", type=int, default=3, help="how many distinct view directions to draw")
    args = parser.parse_args()

    if args.stl:
        mesh = parse_stl(args.stl.read_bytes())
        name = str(args.stl)
    else:
        mesh = mesh_from_soup(dumbbell())
        name = "built-in dumbbell"
        # Round-trip through the binary writer, because we can.
        mesh = parse_stl(serialize_stl(mesh))

    stats = compute_stats(mesh)
    print(f"{name}: {stats.triangle_count} triangles, {stats.component_count} component(s)")
    print(f"bbox extents {tuple(round(e, 3) for e in stats.bbox_extents)}, "
          f"aspect ratios {tuple(round(r, 3) for r in stats.aspect_ratios)}")

    sil = render_silhouettes(mesh, grid=args.grid)
    # Skip the mirror-image -x/-y/-z duplicates when picking what to draw.
    distinct = [0, 2, 4, 6][: min(args.views, 4)]
    for i in distinct:
        direction = tuple(round(d, 3) for d in DEFAULT_VIEWS[i])
        occupancy = float(sil.views[i].mean())
        print(f"\nview {i} along {direction} (fill {occupancy:.1%})")
        print(ascii_view(sil.views[i]))


if __name__ == "__main__":
    main()
