"""Text formats: measure files, CSV tables and experiment configs.

Measure file: one atom per line, ``x_1 ... x_k w``, ``#`` starts a comment.
Signed-measure file: the same lines grouped under a ``+`` line and a ``-`` line.
"""

from __future__ import annotations

import configparser
import csv
import re
from pathlib import Path

import numpy as np

from .measures import DiscreteMeasure, SignedMeasure


class FormatError(ValueError):
    def __init__(self, path, line: int | None, msg: str):
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {msg}")
        self.path, self.line = path, line


def _atom_lines(path):
    with open(path) as fh:
        for no, raw in enumerate(fh, 1):
            text = raw.split("#", 1)[0].strip()
            if text:
                yield no, text


def _parse_atoms(path, lines) -> DiscreteMeasure | None:
    pts, ws, dim = [], [], None
    for no, text in lines:
        fields = text.split()
        try:
            vals = [float(f) for f in fields]
        except ValueError:
            bad = next(f for f in fields if not _is_float(f))
            raise FormatError(path, no, f"not a number: {bad!r}") from None
        if len(vals) < 2:
            raise FormatError(path, no, "expected coordinates followed by a weight")
        if dim is None:
            dim = len(vals) - 1
        elif len(vals) - 1 != dim:
            raise FormatError(path, no, f"expected {dim} coordinates, found {len(vals) - 1}")
        if not np.all(np.isfinite(vals)):
            raise FormatError(path, no, "non-finite value")
        if vals[-1] < 0:
            raise FormatError(path, no, f"negative weight {vals[-1]}")
        pts.append(vals[:-1])
        ws.append(vals[-1])
    if dim is None:
        return None
    return DiscreteMeasure(np.array(pts), np.array(ws))


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def read_measure(path) -> DiscreteMeasure:
    m = _parse_atoms(path, _atom_lines(path))
    if m is None:
        raise FormatError(path, None, "no atoms found")
    return m


def read_signed_measure(path) -> SignedMeasure:
    sections: dict[str, list] = {"+": [], "-": []}
    current = None
    for no, text in _atom_lines(path):
        if text in ("+", "-"):
            current = text
            continue
        if current is None:
            raise FormatError(path, no, "atom line before a '+' or '-' section header")
        sections[current].append((no, text))
    if not sections["+"] and not sections["-"]:
        raise FormatError(path, None, "no atoms found")
    plus = _parse_atoms(path, sections["+"])
    minus = _parse_atoms(path, sections["-"])
    dim = (plus if plus is not None else minus).dim
    plus = plus if plus is not None else DiscreteMeasure.empty(dim)
    minus = minus if minus is not None else DiscreteMeasure.empty(dim)
    if plus.dim != minus.dim:
        raise FormatError(path, None, "'+' and '-' sections have different dimensions")
    return SignedMeasure(plus, minus)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def write_measure(m: DiscreteMeasure, path) -> None:
    with open(path, "w") as fh:
        for x, w in zip(m.points, m.weights):
            fh.write(" ".join(_fmt(v) for v in (*x, w)) + "\n")


def write_signed_measure(nu: SignedMeasure, path) -> None:
    with open(path, "w") as fh:
        for sign, part in (("+", nu.plus), ("-", nu.minus)):
            fh.write(sign + "\n")
            for x, w in zip(part.points, part.weights):
                fh.write(" ".join(_fmt(v) for v in (*x, w)) + "\n")


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for row in rows:
            out.writerow([_fmt(v) for v in row])


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(path, None, "empty CSV")
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(header))
    return header, data


PLAN_HEADER = ["i", "j", "mass", "cost"]
SCALING_HEADER = ["eps", "w", "scaled", "critical_ratio"]
TELE_LIMIT_HEADER = ["eps", "w", "estimate", "lower_bound"]
POTENTIAL_HEADER = ["vertex", "nu_bar", "z"]
FLUX_HEADER = ["from", "to", "flux"]
CURVE_HEADER = ["gap", "w"]


def emit_csv(result, path) -> list[Path]:
    """Write a result as CSV; graph results produce a potentials and a flux file.

    Returns the paths written.
    """
    from .asymptotics import CurveResult, ScalingResult, TeleportLimitReport
    from .component_graph import GraphTransportResult
    from .ot_exact import TransportPlan

    path = Path(path)
    if isinstance(result, TransportPlan):
        write_csv(path, PLAN_HEADER, zip(result.rows, result.cols, result.mass, result.entry_costs()))
        return [path]
    if isinstance(result, ScalingResult):
        eps = np.asarray(result.eps)
        write_csv(path, SCALING_HEADER, zip(eps, result.w, result.scaled, result.critical_ratio))
        return [path]
    if isinstance(result, TeleportLimitReport):
        eps = np.asarray(result.eps)
        write_csv(path, TELE_LIMIT_HEADER, zip(eps, result.w, result.estimates, result.lower_bounds))
        return [path]
    if isinstance(result, CurveResult):
        write_csv(path, CURVE_HEADER, zip(result.gaps, result.distances))
        return [path]
    if isinstance(result, GraphTransportResult):
        stem = path.with_suffix("")
        pot = stem.parent / (stem.name + "_potentials.csv")
        flux = stem.parent / (stem.name + "_fluxes.csv")
        write_csv(pot, POTENTIAL_HEADER,
                  ((k, nb, z) for k, (nb, z) in enumerate(zip(result.charges.nu_bar, result.dual_z))))
        write_csv(flux, FLUX_HEADER, ((k, l, f) for (k, l), f in sorted(result.edge_flux.items())))
        return [pot, flux]
    raise TypeError(f"no CSV layout for {type(result).__name__}")


# --------------------------------------------------------------------------- config


def _line_of(path, section: str, key: str | None = None) -> int | None:
    current = None
    with open(path) as fh:
        for no, raw in enumerate(fh, 1):
            s = raw.strip()
            m = re.fullmatch(r"\[(.+)\]", s)
            if m:
                current = m.group(1).strip()
                if key is None and current == section:
                    return no
                continue
            if key is not None and current == section and re.match(rf"{re.escape(key)}\s*[=:]", s):
                return no
    return None


_REQUIRED = object()


def _to_bool(v: str) -> bool:
    v = v.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(v)


class Config:
    """INI-style config: one section per command, plain ``key = value`` entries."""

    def __init__(self, path):
        self.path = path
        self._cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            with open(path) as fh:
                self._cp.read_file(fh)
        except configparser.Error as exc:
            line = getattr(exc, "lineno", None)
            raise FormatError(path, line, exc.message.splitlines()[0]) from None

    def has(self, section: str) -> bool:
        return self._cp.has_section(section)

    def section(self, name: str) -> "ConfigSection":
        if not self._cp.has_section(name):
            raise FormatError(self.path, None, f"missing section [{name}]")
        return ConfigSection(self, name)


class ConfigSection:
    def __init__(self, cfg: Config, name: str):
        self.cfg, self.name = cfg, name
        self._sec = cfg._cp[name]
        self._used: set[str] = set()

    def _err(self, key, msg):
        return FormatError(self.cfg.path, _line_of(self.cfg.path, self.name, key), msg)

    def _raw(self, key, required):
        self._used.add(key)
        if key not in self._sec:
            if required:
                raise FormatError(self.cfg.path, _line_of(self.cfg.path, self.name),
                                  f"[{self.name}] is missing key {key!r}")
            return None
        return self._sec[key]

    def _convert(self, key, default, conv, what):
        raw = self._raw(key, default is _REQUIRED)
        if raw is None:
            return default
        try:
            return conv(raw.strip())
        except ValueError:
            raise self._err(key, f"{key} must be {what}, got {raw!r}") from None

    def get_str(self, key, default=_REQUIRED):
        return self._convert(key, default, str, "a string")

    def get_float(self, key, default=_REQUIRED):
        return self._convert(key, default, float, "a real number")

    def get_int(self, key, default=_REQUIRED):
        return self._convert(key, default, int, "an integer")

    def get_floats(self, key, default=_REQUIRED):
        return self._convert(key, default, lambda r: tuple(float(v) for v in re.split(r"[,\s]+", r) if v),
                             "a list of reals")

    def get_bool(self, key, default=_REQUIRED):
        return self._convert(key, default, _to_bool, "a boolean")

    def check_unused(self) -> None:
        extra = [k for k in self._sec if k not in self._used]
        if extra:
            raise self._err(extra[0], f"unknown key {extra[0]!r} in [{self.name}]")
