"""Scene text format and exact serialisation of phase points.

Scenes are TOML: top-level ``name``, ``rho`` and ``a`` keys followed by one
``[[body]]`` table per body::

    name = "two_spheres"
    rho = 3.0
    a = 4.0

    [[body]]
    kind = "sphere"
    center = [-2.0, 0.0, 0.0]
    radius = 1.0

Ellipsoids give ``radii = [r1, r2, r3]`` instead of ``radius``. Floats are
written with ``repr`` so that parsing the emitted text restores every field
bit for bit.
"""
from __future__ import annotations

import json
import re
from fractions import Fraction
from importlib import resources
from pathlib import Path

import gmpy2

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .billiard import PhasePoint
from .errors import ParseError, ValidationError
from .geometry import Body, Scene

REFERENCE_SCENES = ("unit_sphere", "two_spheres")
_TOP_KEYS = {"name", "rho", "a", "body"}
_BODY_KEYS = {"kind", "center", "radius", "radii"}
_POS = re.compile(r"line (\d+), column (\d+)")


def _locate(text, key):
    """1-based (line, column) of the first assignment to ``key``, or (0, 0)."""
    pat = re.compile(rf"^\s*{re.escape(key)}\s*=", re.M)
    m = pat.search(text)
    if not m:
        return 0, 0
    line = text.count("\n", 0, m.start()) + 1
    col = m.start() - (text.rfind("\n", 0, m.start()) + 1) + 1
    return line, col + len(m.group(0)) - len(m.group(0).lstrip())


def _error_position(exc, text):
    line, col = getattr(exc, "lineno", None), getattr(exc, "colno", None)
    if line is None:
        m = _POS.search(str(exc))
        if m:
            line, col = int(m.group(1)), int(m.group(2))
    if line is None:
        # reported "at end of document"
        lines = text.split("\n")
        line, col = len(lines), len(lines[-1]) + 1
    return line, col


def _body_line(text, k):
    starts = [m.start() for m in re.finditer(r"^\s*\[\[body\]\]", text, re.M)]
    if k < len(starts):
        return text.count("\n", 0, starts[k]) + 1
    return 0


def _number(value, what, text, key):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{what} must be a number", *_locate(text, key))
    return float(value)


def _vector(value, what, text, key, n=3):
    if not isinstance(value, list) or len(value) != n:
        raise ParseError(f"{what} must be a list of {n} numbers", *_locate(text, key))
    return tuple(_number(v, what, text, key) for v in value)


def parse_scene(text: str) -> Scene:
    """Parse scene text; raises ParseError (with position) or ValidationError."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(str(exc).split(" (at")[0], *_error_position(exc, text)) from None
    extra = set(doc) - _TOP_KEYS
    if extra:
        raise ParseError(f"unknown key {sorted(extra)[0]!r}", *_locate(text, sorted(extra)[0]))
    raw = doc.get("body")
    if not isinstance(raw, list) or not raw:
        raise ParseError("scene needs at least one [[body]] table", 1, 1)
    bodies = []
    for k, spec in enumerate(raw):
        line = _body_line(text, k)
        bad = set(spec) - _BODY_KEYS
        if bad:
            raise ParseError(f"unknown body key {sorted(bad)[0]!r}", line, 1)
        kind = spec.get("kind")
        if "center" not in spec:
            raise ParseError(f"body {k} has no center", line, 1)
        center = _vector(spec["center"], "center", text, "center")
        if kind == "sphere":
            if "radius" not in spec:
                raise ParseError(f"sphere {k} has no radius", line, 1)
            bodies.append(Body.sphere(center, _number(spec["radius"], "radius", text, "radius")))
        elif kind == "ellipsoid":
            if "radii" not in spec:
                raise ParseError(f"ellipsoid {k} has no radii", line, 1)
            bodies.append(Body.ellipsoid(center, _vector(spec["radii"], "radii", text, "radii")))
        else:
            raise ParseError(f"unknown body kind {kind!r}", *_locate(text, "kind"))
    rho = _number(doc["rho"], "rho", text, "rho") if "rho" in doc else None
    a = _number(doc["a"], "a", text, "a") if "a" in doc else None
    name = doc.get("name", "")
    if not isinstance(name, str):
        raise ParseError("name must be a string", *_locate(text, "name"))
    return Scene(tuple(bodies), rho=rho, a=a, name=name)


def _f(x):
    return repr(float(x))


def emit_scene(scene: Scene) -> str:
    out = [f"name = {json.dumps(scene.name)}", f"rho = {_f(scene.rho)}", f"a = {_f(scene.a)}"]
    for b in scene.bodies:
        out += ["", "[[body]]", f'kind = "{b.kind}"',
                "center = [" + ", ".join(_f(c) for c in b.center) + "]"]
        if b.kind == "sphere":
            out.append(f"radius = {_f(b.radii[0])}")
        else:
            out.append("radii = [" + ", ".join(_f(r) for r in b.radii) + "]")
    return "\n".join(out) + "\n"


def load_scene(path) -> Scene:
    p = Path(path)
    if p.suffix == "" and not p.exists() and str(path) in REFERENCE_SCENES:
        return reference_scene(str(path))
    return parse_scene(p.read_text(encoding="utf-8"))


def reference_text(name: str) -> str:
    if name not in REFERENCE_SCENES:
        raise ValidationError(f"unknown reference scene {name!r}")
    return resources.files("raylength.data").joinpath(f"{name}.toml").read_text(encoding="utf-8")


def reference_scene(name: str) -> Scene:
    """``unit_sphere`` or ``two_spheres`` (unit spheres at (+-2, 0, 0), rho 3, a 4)."""
    return parse_scene(reference_text(name))


# ---------------------------------------------------------------------------
# exact phase points

def _exact(v):
    if isinstance(v, type(gmpy2.mpfr(0))):
        n, d = v.as_integer_ratio()
    else:
        n, d = Fraction(float(v)).as_integer_ratio()
    return f"{n}/{d}"


def phase_point_to_dict(z: PhasePoint, precision_bits: int = 53) -> dict:
    """Exact rational form of a (possibly multiprecision) phase point."""
    x, xi = z.hp if z.hp is not None else (z.x, z.xi)
    return {"precision_bits": int(precision_bits), "x": [_exact(v) for v in x],
            "xi": [_exact(v) for v in xi]}


def phase_point_from_dict(doc: dict) -> PhasePoint:
    prec = int(doc["precision_bits"])
    if prec <= 53:
        return PhasePoint([float(Fraction(s)) for s in doc["x"]],
                          [float(Fraction(s)) for s in doc["xi"]])
    with gmpy2.context(gmpy2.get_context(), precision=prec):
        x = [gmpy2.mpfr(gmpy2.mpq(s)) for s in doc["x"]]
        xi = [gmpy2.mpfr(gmpy2.mpq(s)) for s in doc["xi"]]
        return PhasePoint.from_mpfr(x, xi)


def reference_trapped_point() -> PhasePoint:
    """A frozen initial condition on C of ``two_spheres`` censored at budget 1000."""
    doc = json.loads(resources.files("raylength.data").joinpath("two_spheres_trapped.json")
                     .read_text(encoding="utf-8"))
    return phase_point_from_dict(doc)
