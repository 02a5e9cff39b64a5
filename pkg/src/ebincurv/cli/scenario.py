"""Scenario files: an INI-style text format with a canonical serializer.

See ``docs/scenario-format.md`` for the complete grammar. ``parse`` and
``serialize`` are inverse on canonical text, and ``parse(serialize(s)) == s``
for every valid scenario.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..cluster import BlockFrame, EPS_DIVISOR
from ..field import (EndoField, FrameField, MetricField, Region, TorusGrid, antisym_generator,
                     assemble_endo, conformal_metric, flat_metric, frame_from_generator,
                     gram_schmidt_frame, load_field)
from ..symcore import check_multiplicity
from .expr import Expression, ExpressionError


class ScenarioError(ValueError):
    """Malformed or inconsistent scenario; maps to exit code 2."""


_GEN_KEY = re.compile(r"j(\d+)_(\d+)$")
_BLOCK_KEY = re.compile(r"s(\d+)_(\d+)_(\d+)$")
_ENTRY_KEY = re.compile(r"h(\d+)_(\d+)$")
_LAMBDA_KEY = re.compile(r"lambda(\d+)$")
AUTO = "auto"


@dataclass(frozen=True)
class MetricSpec:
    kind: str = "flat"  # flat | conformal | file
    phi: str | None = None
    path: str | None = None


@dataclass(frozen=True)
class FrameSpec:
    kind: str = "identity"  # identity | generator | file
    generators: tuple[tuple[tuple[int, int], str], ...] = ()
    path: str | None = None


@dataclass(frozen=True)
class EndoSpec:
    kind: str = "blocks"  # blocks | matrix | file
    m: tuple[int, ...] | None = None
    lambdas: tuple[str, ...] = ()
    blocks: tuple[tuple[tuple[int, int, int], str], ...] = ()
    entries: tuple[tuple[tuple[int, int], str], ...] = ()
    path: str | None = None


@dataclass(frozen=True)
class RegionSpec:
    name: str
    lo: tuple[int, ...]
    hi: tuple[int, ...]


@dataclass(frozen=True)
class Tolerances:
    gap_tol: float | None = None
    margin_tol: float | None = None
    fit_window: tuple[float, float] = (3.0, 6.0)
    eps_divisor: float = EPS_DIVISOR
    order: int = 4


@dataclass(frozen=True)
class Scenario:
    name: str
    dimension: int
    res: int
    metric: MetricSpec = MetricSpec()
    frame: FrameSpec = FrameSpec()
    endo: EndoSpec = EndoSpec()
    times: tuple[float, ...] = (0.0,)
    regions: tuple[RegionSpec, ...] = ()
    tolerances: Tolerances = Tolerances()
    seed: int = 0

    def with_res(self, res: int) -> "Scenario":
        """Same scenario on another grid; regions are rescaled proportionally."""
        scale = res / self.res
        regs = tuple(RegionSpec(r.name, tuple(int(round(a * scale)) for a in r.lo),
                                tuple(int(round(b * scale)) for b in r.hi)) for r in self.regions)
        return Scenario(self.name, self.dimension, res, self.metric, self.frame, self.endo, self.times,
                        regs, self.tolerances, self.seed)


# --- parsing ---------------------------------------------------------------

def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.replace(" ", "").split(",") if v)
    except ValueError:
        raise ScenarioError(f"expected comma-separated integers, got {text!r}") from None


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.replace(" ", "").split(",") if v)
    except ValueError:
        raise ScenarioError(f"expected comma-separated numbers, got {text!r}") from None


def _expr(text: str, n: int) -> str:
    try:
        return str(Expression(" ".join(text.split()), n))
    except ExpressionError as exc:
        raise ScenarioError(str(exc)) from None


def _opt_float(sec, key):
    v = sec.get(key)
    if v is None or v.strip().lower() == "none":
        return None
    try:
        return float(v)
    except ValueError:
        raise ScenarioError(f"{key} must be a number, got {v!r}") from None


def _known(sec, allowed: set[str], patterns=()) -> None:
    for key in sec:
        if key in allowed or any(p.match(key) for p in patterns):
            continue
        raise ScenarioError(f"unknown key {key!r} in [{sec.name}]")


def parse(text: str) -> Scenario:
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",), inline_comment_prefixes=None,
                                   strict=True)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from None
    if "scenario" not in cp:
        raise ScenarioError("missing [scenario] section")
    allowed_sections = {"scenario", "metric", "frame", "endo", "times", "tolerances"}
    for s in cp.sections():
        if s not in allowed_sections and not s.startswith("region "):
            raise ScenarioError(f"unknown section [{s}]")
    sc = cp["scenario"]
    _known(sc, {"name", "dimension", "res", "seed"})
    try:
        name = sc["name"].strip()
        n = int(sc["dimension"])
        res = int(sc["res"])
        seed = int(sc.get("seed", "0"))
    except (KeyError, ValueError) as exc:
        raise ScenarioError(f"[scenario] needs name, dimension, res: {exc}") from None
    if not 1 <= n <= 10:
        raise ScenarioError("dimension must be between 1 and 10")
    if res < 8:
        raise ScenarioError("res must be at least 8")

    metric = MetricSpec()
    if "metric" in cp:
        s = cp["metric"]
        _known(s, {"kind", "phi", "path"})
        kind = s.get("kind", "flat").strip()
        if kind == "flat":
            metric = MetricSpec()
        elif kind == "conformal":
            metric = MetricSpec("conformal", phi=_expr(s.get("phi", "0"), n))
        elif kind == "file":
            metric = MetricSpec("file", path=s.get("path", "").strip() or _missing("metric path"))
        else:
            raise ScenarioError(f"unknown metric kind {kind!r}")

    frame = FrameSpec()
    if "frame" in cp:
        s = cp["frame"]
        _known(s, {"kind", "path"}, (_GEN_KEY,))
        kind = s.get("kind", "identity").strip()
        if kind == "identity":
            frame = FrameSpec()
        elif kind == "generator":
            gens = []
            for key in s:
                mt = _GEN_KEY.match(key)
                if mt:
                    a, b = int(mt.group(1)), int(mt.group(2))
                    if not 1 <= a < b <= n:
                        raise ScenarioError(f"generator key {key} needs 1 <= a < b <= {n}")
                    gens.append(((a, b), _expr(s[key], n)))
            frame = FrameSpec("generator", tuple(sorted(gens)))
        elif kind == "file":
            frame = FrameSpec("file", path=s.get("path", "").strip() or _missing("frame path"))
        else:
            raise ScenarioError(f"unknown frame kind {kind!r}")

    if "endo" not in cp:
        raise ScenarioError("missing [endo] section")
    s = cp["endo"]
    _known(s, {"kind", "m", "path"}, (_LAMBDA_KEY, _BLOCK_KEY, _ENTRY_KEY))
    kind = s.get("kind", "blocks").strip()
    if kind == "blocks":
        try:
            m = check_multiplicity(_ints(s.get("m", ",".join(["1"] * n))), n)
        except ValueError as exc:
            raise ScenarioError(str(exc)) from None
        lams = []
        for i in range(1, len(m) + 1):
            key = f"lambda{i}"
            if key not in s:
                raise ScenarioError(f"[endo] missing {key}")
            v = s[key].strip()
            lams.append(AUTO if v == AUTO and i == len(m) else _expr(v, n))
        extra = [k for k in s if _LAMBDA_KEY.match(k) and int(k[6:]) > len(m)]
        if extra:
            raise ScenarioError(f"[endo] has more eigenvalues than clusters: {extra}")
        blocks = []
        for key in s:
            mt = _BLOCK_KEY.match(key)
            if mt:
                i, a, b = (int(g) for g in mt.groups())
                if not (1 <= i <= len(m) and 1 <= a <= b <= m[i - 1]) or m[i - 1] == 1:
                    raise ScenarioError(f"block key {key} does not fit m = {m}")
                blocks.append(((i, a, b), _expr(s[key], n)))
        if any(_ENTRY_KEY.match(k) for k in s):
            raise ScenarioError("matrix entries need kind = matrix")
        endo = EndoSpec("blocks", m, tuple(lams), tuple(sorted(blocks)))
    elif kind == "matrix":
        entries = []
        for key in s:
            mt = _ENTRY_KEY.match(key)
            if mt:
                a, b = int(mt.group(1)), int(mt.group(2))
                if not 1 <= a <= b <= n:
                    raise ScenarioError(f"entry key {key} needs 1 <= a <= b <= {n}")
                entries.append(((a, b), _expr(s[key], n)))
            elif key not in ("kind",):
                raise ScenarioError(f"key {key} not allowed with kind = matrix")
        endo = EndoSpec("matrix", entries=tuple(sorted(entries)))
    elif kind == "file":
        endo = EndoSpec("file", m=_ints(s["m"]) if "m" in s else None,
                        path=s.get("path", "").strip() or _missing("endo path"))
    else:
        raise ScenarioError(f"unknown endo kind {kind!r}")

    times: tuple[float, ...] = (0.0,)
    if "times" in cp:
        s = cp["times"]
        _known(s, {"values", "range"})
        if "values" in s and "range" in s:
            raise ScenarioError("[times] takes values or range, not both")
        if "values" in s:
            times = _floats(s["values"])
        elif "range" in s:
            r = _floats(s["range"])
            if len(r) != 3 or r[2] <= 0:
                raise ScenarioError("range = start, stop, step with step > 0")
            count = int(np.floor((r[1] - r[0]) / r[2] + 1e-9)) + 1
            times = tuple(float(round(r[0] + k * r[2], 12)) for k in range(count))
    if any(b <= a for a, b in zip(times, times[1:])) or any(t < 0 for t in times):
        raise ScenarioError("times must be nonnegative and strictly increasing")

    regions = []
    for sec in cp.sections():
        if sec.startswith("region "):
            rname = sec[len("region "):].strip()
            s = cp[sec]
            _known(s, {"lo", "hi"})
            reg = RegionSpec(rname, _ints(s.get("lo", "")), _ints(s.get("hi", "")))
            try:
                Region(reg.name, reg.lo, reg.hi).validate(TorusGrid(n, res))
            except ValueError as exc:
                raise ScenarioError(str(exc)) from None
            regions.append(reg)
    if len({r.name for r in regions}) != len(regions):
        raise ScenarioError("duplicate region names")

    tol = Tolerances()
    if "tolerances" in cp:
        s = cp["tolerances"]
        _known(s, {"gap_tol", "margin_tol", "fit_window", "eps_divisor", "order"})
        fw = _floats(s.get("fit_window", "3, 6"))
        if len(fw) != 2 or fw[1] <= fw[0]:
            raise ScenarioError("fit_window = lo, hi with hi > lo")
        try:
            order = int(s.get("order", "4"))
            eps_div = float(s.get("eps_divisor", repr(EPS_DIVISOR)))
        except ValueError as exc:
            raise ScenarioError(str(exc)) from None
        if order not in (2, 4):
            raise ScenarioError("order must be 2 or 4")
        tol = Tolerances(_opt_float(s, "gap_tol"), _opt_float(s, "margin_tol"), (fw[0], fw[1]), eps_div, order)

    return Scenario(name, n, res, metric, frame, endo, times, tuple(regions), tol, seed)


def _missing(what: str):
    raise ScenarioError(f"missing {what}")


def load(path: str | Path) -> Scenario:
    try:
        return parse(Path(path).read_text())
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc}") from None


# --- serialization ---------------------------------------------------------

def _num(x: float) -> str:
    return repr(float(x))


def serialize(s: Scenario) -> str:
    """Canonical text: fixed section and key order, shortest round-trip floats."""
    out = ["[scenario]", f"name = {s.name}", f"dimension = {s.dimension}", f"res = {s.res}",
           f"seed = {s.seed}", ""]
    out.append("[metric]")
    out.append(f"kind = {s.metric.kind}")
    if s.metric.kind == "conformal":
        out.append(f"phi = {s.metric.phi}")
    if s.metric.kind == "file":
        out.append(f"path = {s.metric.path}")
    out += ["", "[frame]", f"kind = {s.frame.kind}"]
    for (a, b), e in s.frame.generators:
        out.append(f"j{a}_{b} = {e}")
    if s.frame.kind == "file":
        out.append(f"path = {s.frame.path}")
    out += ["", "[endo]", f"kind = {s.endo.kind}"]
    if s.endo.m is not None:
        out.append("m = " + ", ".join(str(k) for k in s.endo.m))
    for i, e in enumerate(s.endo.lambdas, 1):
        out.append(f"lambda{i} = {e}")
    for (i, a, b), e in s.endo.blocks:
        out.append(f"s{i}_{a}_{b} = {e}")
    for (a, b), e in s.endo.entries:
        out.append(f"h{a}_{b} = {e}")
    if s.endo.kind == "file":
        out.append(f"path = {s.endo.path}")
    out += ["", "[times]", "values = " + ", ".join(_num(t) for t in s.times)]
    for r in s.regions:
        out += ["", f"[region {r.name}]", "lo = " + ", ".join(map(str, r.lo)), "hi = " + ", ".join(map(str, r.hi))]
    t = s.tolerances
    out += ["", "[tolerances]",
            f"gap_tol = {'none' if t.gap_tol is None else _num(t.gap_tol)}",
            f"margin_tol = {'none' if t.margin_tol is None else _num(t.margin_tol)}",
            f"fit_window = {_num(t.fit_window[0])}, {_num(t.fit_window[1])}",
            f"eps_divisor = {_num(t.eps_divisor)}",
            f"order = {t.order}", ""]
    return "\n".join(out)


# --- building fields -------------------------------------------------------

@dataclass
class Built:
    scenario: Scenario
    grid: TorusGrid
    g0: MetricField
    H: EndoField
    regions: dict[str, Region] = field(default_factory=dict)

    @property
    def times(self) -> tuple[float, ...]:
        return self.scenario.times

    def region(self, name: str | None) -> Region:
        if name is None:
            return Region.full(self.grid)
        try:
            return self.regions[name]
        except KeyError:
            raise ScenarioError(f"no region named {name!r}") from None

    def block_frame(self) -> BlockFrame | None:
        """Block data read straight from the scenario when it is given in block form."""
        if self.scenario.endo.kind != "blocks":
            return None
        return BlockFrame.from_endo(self.H, self.scenario.endo.m)


def _load_checked(path: Path, grid: TorusGrid, comps: tuple[int, ...]) -> np.ndarray:
    try:
        g2, data = load_field(path)
    except (OSError, ValueError, KeyError) as exc:
        raise ScenarioError(f"cannot load field {path}: {exc}") from None
    if g2 != grid or data.shape != grid.shape + comps:
        raise ScenarioError(f"field {path} has shape {data.shape}, expected {grid.shape + comps}")
    return data


def build(s: Scenario, base_dir: str | Path = ".") -> Built:
    base = Path(base_dir)
    grid = TorusGrid(s.dimension, s.res)
    n = grid.n
    x = grid.coords()

    def ev(e: str) -> np.ndarray:
        try:
            return Expression(e, n).evaluate(x)
        except ExpressionError as exc:
            raise ScenarioError(str(exc)) from None

    if s.metric.kind == "flat":
        g0 = flat_metric(grid)
    elif s.metric.kind == "conformal":
        g0 = conformal_metric(grid, ev(s.metric.phi))
    else:
        g0 = MetricField(grid, _load_checked(base / s.metric.path, grid, (n, n)))
        try:
            g0.check()
        except ValueError as exc:
            raise ScenarioError(f"metric file: {exc}") from None

    if s.frame.kind == "identity":
        frame = gram_schmidt_frame(g0)
    elif s.frame.kind == "generator":
        V = np.zeros(grid.shape + (n, n))
        for (a, b), e in s.frame.generators:
            V += ev(e)[..., None, None] * antisym_generator(n, a - 1, b - 1)
        frame = frame_from_generator(grid, g0, V)
    else:
        frame = FrameField(grid, _load_checked(base / s.frame.path, grid, (n, n)))
        res_ = frame.orthonormality_residual(g0.G)
        if res_ > 1e-8:
            raise ScenarioError(f"frame file is not orthonormal (residual {res_:.3g})")

    e = s.endo
    try:
        if e.kind == "blocks":
            m = e.m
            lams = [None if v == AUTO else ev(v) for v in e.lambdas]
            if lams[-1] is None:
                partial = sum(k * l for k, l in zip(m[:-1], lams[:-1]))
                lams[-1] = -partial / m[-1]
            blocks = [None] * len(m)
            for (i, a, b), ex in e.blocks:
                if blocks[i - 1] is None:
                    blocks[i - 1] = np.zeros(grid.shape + (m[i - 1], m[i - 1]))
                v = ev(ex)
                blocks[i - 1][..., a - 1, b - 1] = v
                blocks[i - 1][..., b - 1, a - 1] = v
            for i, B in enumerate(blocks):
                if B is not None and np.max(np.abs(np.trace(B, axis1=-2, axis2=-1))) > 1e-12:
                    raise ScenarioError(f"block {i + 1} is not trace free")
            H = assemble_endo(frame, lams, blocks, m)
        elif e.kind == "matrix":
            Hf = np.zeros(grid.shape + (n, n))
            for (a, b), ex in e.entries:
                v = ev(ex)
                Hf[..., a - 1, b - 1] = v
                Hf[..., b - 1, a - 1] = v
            tr = np.trace(Hf, axis1=-2, axis2=-1)
            if np.max(np.abs(tr)) > 1e-10 * (1 + np.max(np.abs(Hf))):
                raise ScenarioError("matrix entries are not trace free")
            H = EndoField(grid, frame, Hf)
        else:
            Hf = _load_checked(base / e.path, grid, (n, n))
            if not np.allclose(Hf, np.swapaxes(Hf, -1, -2), rtol=0, atol=1e-12):
                raise ScenarioError("endomorphism file is not symmetric")
            H = EndoField(grid, frame, Hf, e.m)
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(str(exc)) from None
    regions = {r.name: Region(r.name, r.lo, r.hi) for r in s.regions}
    return Built(s, grid, g0, H, regions)
