import functools

import pytest

from finslerkit import manifold


@functools.lru_cache(maxsize=None)
def gallery(name):
    return manifold.load_gallery(name)


def manifest(F=None, G=None, n=2, box=(-1.0, 1.0), name="test", extra=""):
    lines = ["[geometry]", f'name = "{name}"', f"dim = {n}"]
    if F is not None:
        lines += ['kind = "finsler"', f'F = "{F}"']
    else:
        lines += ['kind = "spray"'] + [f'G{i + 1} = "{g}"' for i, g in enumerate(G)]
    lines += ["", "[domain]"] + [f"x{i + 1} = [{box[0]}, {box[1]}]" for i in range(n)]
    lines += ["y_annulus = [0.5, 2.0]", extra]
    return "\n".join(lines) + "\n"


@pytest.fixture
def write_manifest(tmp_path):
    def _write(text, fname="m.toml"):
        p = tmp_path / fname
        p.write_text(text)
        return str(p)
    return _write
