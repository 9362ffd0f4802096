"""Problem files, switching-signal files, JSON reports, CSV output and the
on-disk certificate cache used by the command-line front end.

Problem files are TOML::

    A  = [[0, 1], [-1, -0.5]]
    A0 = [[0, 0], [-1, 0]]
    B  = [0, 1]          # optional, impulse response only
    C  = [1, 0]          # optional

    [defaults]           # optional; every key is optional
    i_max = 7
    epsilon = 0.01
    increment = 0.01
    x0 = [[1, 1], [-0.2, 0.8]]
    t_f = 20.0

``n`` may be given explicitly and is then checked against the matrices.
"""

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .exceptions import SwitchMarginError
from .hierarchy import SwitchedLinearSystem
from .lyapunov import LyapunovCertificate
from .switching import ImpulseSetup, SwitchingSignal

__all__ = [
    "ProblemFileError",
    "ProblemFile",
    "load_problem",
    "parse_problem",
    "load_signal",
    "save_signal",
    "write_trajectory_csv",
    "read_csv",
    "to_jsonable",
    "dump_report",
    "load_report",
    "CertificateCache",
    "matrix_hash",
    "certificate_to_dict",
    "certificate_from_dict",
]

DEFAULT_KEYS = {
    "epsilon", "i_max", "order", "increment", "tol_unit", "x0", "t_f", "delta",
    "sdp_tol", "definiteness_tol", "margin_rel", "delta_max",
}


class ProblemFileError(SwitchMarginError):
    """Malformed problem or signal file; the message names the file and field."""


@dataclass
class ProblemFile:
    system: SwitchedLinearSystem
    impulse: ImpulseSetup | None = None
    defaults: dict = field(default_factory=dict)
    path: Path | None = None

    @property
    def n(self):
        return self.system.n

    def x0_list(self):
        x0 = self.defaults.get("x0")
        if x0 is None:
            return [np.ones(self.n)]
        x0 = np.asarray(x0, dtype=float)
        return [x0] if x0.ndim == 1 else list(x0)


def _where(source, key):
    return f"{source}: field '{key}'"


def _matrix(data, key, n, source):
    if key not in data:
        raise ProblemFileError(f"{source}: missing required field '{key}'")
    try:
        m = np.array(data[key], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ProblemFileError(f"{_where(source, key)}: not a numeric matrix ({exc})") from None
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ProblemFileError(f"{_where(source, key)}: expected a square matrix, got shape {m.shape}")
    if n is not None and m.shape[0] != n:
        raise ProblemFileError(f"{_where(source, key)}: expected {n}x{n}, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ProblemFileError(f"{_where(source, key)}: non-finite entries")
    return m


def _vector(data, key, n, source):
    try:
        v = np.array(data[key], dtype=float).ravel()
    except (TypeError, ValueError) as exc:
        raise ProblemFileError(f"{_where(source, key)}: not a numeric vector ({exc})") from None
    if len(v) != n:
        raise ProblemFileError(f"{_where(source, key)}: expected length {n}, got {len(v)}")
    return v


def parse_problem(text, source="<string>"):
    """Parse problem-file text.  Errors carry the source name and the
    offending field (or TOML line/column)."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ProblemFileError(f"{source}: {exc}") from None
    n = data.get("n")
    if n is not None and (not isinstance(n, int) or n < 1):
        raise ProblemFileError(f"{_where(source, 'n')}: must be a positive integer")
    a = _matrix(data, "A", n, source)
    a0 = _matrix(data, "A0", a.shape[0], source)
    n = a.shape[0]
    impulse = None
    if ("B" in data) != ("C" in data):
        raise ProblemFileError(f"{source}: B and C must be given together")
    if "B" in data:
        impulse = ImpulseSetup(_vector(data, "B", n, source), _vector(data, "C", n, source))
    defaults = dict(data.get("defaults", {}))
    unknown = set(defaults) - DEFAULT_KEYS
    if unknown:
        raise ProblemFileError(f"{source}: unknown defaults {sorted(unknown)}")
    if "x0" in defaults:
        x0 = np.asarray(defaults["x0"], dtype=float)
        if x0.shape[-1] != n or x0.ndim > 2:
            raise ProblemFileError(f"{_where(source, 'defaults.x0')}: states must have length {n}")
    return ProblemFile(SwitchedLinearSystem(a, a0), impulse, defaults)


def load_problem(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ProblemFileError(f"{path}: {exc.strerror}") from None
    problem = parse_problem(text, str(path))
    problem.path = path
    return problem


def load_signal(path):
    """Read a switching signal from JSON ``{"times": [...], "values": [...]}``."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
        return SwitchingSignal(np.array(data["times"]), np.array(data["values"]))
    except OSError as exc:
        raise ProblemFileError(f"{path}: {exc.strerror}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise ProblemFileError(f"{path}: malformed signal file ({exc})") from None


def save_signal(path, signal):
    data = {"times": signal.times.tolist(), "values": signal.values.tolist()}
    Path(path).write_text(json.dumps(data, indent=1) + "\n")


def trajectory_header(n, extra=()):
    return ["t", *(f"x{k + 1}" for k in range(n)), "delta", "indicator", *extra]


def write_trajectory_csv(path, traj, extra=None):
    """Write ``t,x1..xn,delta,indicator`` plus any `extra` named columns."""
    extra = extra or {}
    n = traj.x.shape[1]
    ind = traj.indicator if traj.indicator is not None else np.full(len(traj.t), np.nan)
    cols = [traj.t[:, None], traj.x, traj.delta[:, None], ind[:, None]]
    cols += [np.asarray(v, dtype=float)[:, None] for v in extra.values()]
    table = np.hstack(cols)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(trajectory_header(n, extra))
        for row in table:
            w.writerow([repr(float(v)) for v in row])


def read_csv(path):
    """Read a CSV written by :func:`write_trajectory_csv` into a dict of columns."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    return {name: body[:, k] for k, name in enumerate(header)}


def to_jsonable(obj):
    """Convert numpy containers and scalars to plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return {"re": obj.real.tolist(), "im": obj.imag.tolist()}
        return obj.tolist()
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dump_report(report, path=None):
    text = json.dumps(to_jsonable(report), indent=1, sort_keys=True) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def load_report(path):
    return json.loads(Path(path).read_text())


def matrix_hash(system):
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(system.a).tobytes())
    h.update(np.ascontiguousarray(system.a0).tobytes())
    return h.hexdigest()[:16]


def certificate_to_dict(cert):
    return {
        "level": cert.level,
        "order": cert.order,
        "delta_certified": cert.delta_certified,
        "feasibility_margin": cert.feasibility_margin,
        "p": cert.p.tolist(),
        "transform": None if cert.transform is None else cert.transform.tolist(),
    }


def certificate_from_dict(d):
    t = d.get("transform")
    return LyapunovCertificate(
        level=int(d["level"]),
        p=np.array(d["p"], dtype=float),
        delta_certified=float(d["delta_certified"]),
        feasibility_margin=float(d["feasibility_margin"]),
        transform=None if t is None else np.array(t, dtype=float),
    )


class CertificateCache:
    """JSON file of certificates keyed by ``(matrix hash, level, δ)``.

    Lives next to the problem file as ``<stem>.certs.json``.
    """

    def __init__(self, path):
        self.path = Path(path)

    @classmethod
    def for_problem(cls, problem_path):
        p = Path(problem_path)
        return cls(p.with_name(p.stem + ".certs.json"))

    def _load(self):
        if not self.path.exists():
            return {}
        try:
            return json.loads(self.path.read_text())
        except (OSError, ValueError):
            return {}

    def store(self, system, cert):
        entries = self._load()
        key = f"{matrix_hash(system)}:{cert.level}:{float(cert.delta_certified)!r}"
        entries[key] = certificate_to_dict(cert)
        self.path.write_text(json.dumps(entries, indent=1, sort_keys=True) + "\n")
        return key

    def best(self, system, level=None):
        """Certificate with the largest certified δ, optionally at one level."""
        prefix = matrix_hash(system) + ":"
        found = [
            v for k, v in self._load().items()
            if k.startswith(prefix) and (level is None or v["level"] == level)
        ]
        if not found:
            return None
        return certificate_from_dict(max(found, key=lambda v: v["delta_certified"]))
