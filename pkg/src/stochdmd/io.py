"""Plain-text persistence: CSV tables with JSON sidecars.

All numbers are written with ``%.17g`` (round-trips any double, independent of
locale) and every file uses LF line endings, so reruns with the same inputs
produce byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ._validation import ConfigError
from .dmd import DmdDecomposition
from .noise_sim import TimeGrid, TrajectoryEnsemble
from .spectral import Spectrum

SCHEMA_VERSION = "1.0"
FLOAT_FMT = "%.17g"
DECOMP_MAGIC = "# stochdmd decomposition"


def _fmt(x):
    return FLOAT_FMT % x


def _write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def dumps_json(obj):
    """Canonical JSON: sorted keys, two-space indent, trailing newline."""
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def write_json(path, obj):
    return _write_text(path, dumps_json(obj))


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def sidecar_path(path):
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def write_table(path, header, columns):
    """Columns of equal length under a header row."""
    cols = [np.asarray(c) for c in columns]
    if len(header) != len(cols):
        raise ConfigError("header and column count differ")
    if len({c.shape[0] for c in cols}) > 1:
        raise ConfigError("columns differ in length")
    lines = [",".join(header)]
    for row in zip(*cols):
        lines.append(",".join(v if isinstance(v, str) else _fmt(v) for v in row))
    return _write_text(path, "\n".join(lines) + "\n")


def read_table(path):
    """``(header, {name: float array})`` for a numeric table."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, {name: data[:, i] for i, name in enumerate(header)}


def _write_matrix(path, header_values, matrix):
    lines = [",".join(_fmt(v) for v in header_values)]
    lines.extend(",".join(_fmt(v) for v in row) for row in np.atleast_2d(matrix))
    return _write_text(path, "\n".join(lines) + "\n")


def _read_matrix(path):
    with open(path, encoding="utf-8") as fh:
        header = np.array([float(v) for v in fh.readline().split(",")])
    return header, np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------


def _y_path(path):
    path = Path(path)
    return path.with_name(path.stem + "_sy" + path.suffix)


def write_ensemble(path, ens, config=None):
    """Trajectory CSV (header row = times) plus ``.meta.json`` sidecar.

    When ``<sigma_y>`` is present it goes to a companion ``*_sy.csv`` of the
    same layout. Returns the list of written paths.
    """
    path = Path(path)
    written = [_write_matrix(path, ens.times, ens.data)]
    if ens.data_y is not None:
        written.append(_write_matrix(_y_path(path), ens.times, ens.data_y))
    meta = {
        "schema_version": SCHEMA_VERSION,
        "kind": ens.metadata.get("kind"),
        "seed": ens.seed,
        "grid": ens.grid.to_dict(),
        "shape": list(ens.data.shape),
        "has_sigma_y": ens.data_y is not None,
        "simulation": ens.metadata,
    }
    if config is not None:
        meta["config"] = config
    written.append(write_json(sidecar_path(path), meta))
    return written


def read_ensemble(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"ensemble file not found: {path}")
    times, data = _read_matrix(path)
    meta_path = sidecar_path(path)
    meta = read_json(meta_path) if meta_path.exists() else {}
    if "grid" in meta:
        grid = TimeGrid(**meta["grid"])
    else:
        if times.size < 2:
            raise ConfigError("cannot infer a time grid from fewer than two columns")
        grid = TimeGrid(float(times[0]), float(times[1] - times[0]), times.size)
    data_y = None
    if _y_path(path).exists():
        _, data_y = _read_matrix(_y_path(path))
    metadata = dict(meta.get("simulation", {}))
    if "config" in meta:
        metadata["config"] = meta["config"]
    return TrajectoryEnsemble(data, grid, meta.get("seed"), data_y, metadata)


# ---------------------------------------------------------------------------
# decompositions
# ---------------------------------------------------------------------------


def _complex_block(name, values):
    lines = [f"[{name}]", "re,im"]
    lines.extend(f"{_fmt(z.real)},{_fmt(z.imag)}" for z in np.asarray(values, dtype=np.complex128))
    return lines


def write_decomposition(path, decomp):
    """Single text file: a JSON header followed by CSV blocks.

    Round-trips losslessly through :func:`read_decomposition`.
    """
    meta = {
        "schema_version": SCHEMA_VERSION,
        "rank": decomp.rank,
        "dt": decomp.dt,
        "t_start": decomp.t_start,
        "n_rows": int(decomp.modes.shape[0]),
        "metadata": decomp.metadata,
    }
    lines = [DECOMP_MAGIC, "[meta]", json.dumps(meta, sort_keys=True, default=_json_default)]
    lines += _complex_block("eigenvalues", decomp.eigenvalues)
    lines += _complex_block("amplitudes", decomp.amplitudes)
    lines += ["[singular_values]", "value"]
    lines += [_fmt(s) for s in decomp.sigma_full]
    r = decomp.modes.shape[1]
    lines += ["[modes]", ",".join(f"re_{i},im_{i}" for i in range(r))]
    for row in decomp.modes:
        lines.append(",".join(f"{_fmt(z.real)},{_fmt(z.imag)}" for z in row))
    return _write_text(path, "\n".join(lines) + "\n")


def read_decomposition(path):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if not lines or lines[0] != DECOMP_MAGIC:
        raise ConfigError(f"{path} is not a decomposition file")
    blocks, name = {}, None
    for line in lines[1:]:
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1]
            blocks[name] = []
        elif line and name is not None:
            blocks[name].append(line)
    meta = json.loads(blocks["meta"][0])

    def complex_rows(rows):
        arr = np.array([[float(v) for v in r.split(",")] for r in rows[1:]]).reshape(-1, 2)
        return arr[:, 0] + 1j * arr[:, 1]

    modes_rows = np.array([[float(v) for v in r.split(",")] for r in blocks["modes"][1:]])
    modes_rows = modes_rows.reshape(meta["n_rows"], -1)
    modes = modes_rows[:, 0::2] + 1j * modes_rows[:, 1::2]
    return DmdDecomposition(
        rank=meta["rank"],
        eigenvalues=complex_rows(blocks["eigenvalues"]),
        modes=modes,
        amplitudes=complex_rows(blocks["amplitudes"]),
        dt=meta["dt"],
        sigma_full=np.array([float(v) for v in blocks["singular_values"][1:]]),
        t_start=meta["t_start"],
        metadata=meta.get("metadata", {}),
    )


# ---------------------------------------------------------------------------
# spectra, predictions, reports
# ---------------------------------------------------------------------------


def write_spectrum(path, spec, extra=None):
    """Two-column ``frequency_MHz,weight`` CSV plus sidecar."""
    written = [write_table(path, ["frequency_MHz", "weight"], [spec.frequencies, spec.weights])]
    meta = {"schema_version": SCHEMA_VERSION, "kind": spec.kind, **spec.metadata}
    if extra:
        meta.update(extra)
    written.append(write_json(sidecar_path(path), meta))
    return written


def read_spectrum(path):
    _, cols = read_table(path)
    meta_path = sidecar_path(path)
    meta = read_json(meta_path) if meta_path.exists() else {"kind": "dmd_psd"}
    kind = meta.pop("kind", "dmd_psd")
    meta.pop("schema_version", None)
    return Spectrum(cols["frequency_MHz"], cols["weight"], kind, meta)


def write_extrapolation(path, result, truth=None, extra=None):
    header = ["t", "standard", "constrained", "envelope_bound"]
    columns = [result.times, result.standard, result.constrained, result.envelope_bound]
    if truth is not None:
        header.append("truth")
        columns.append(truth)
    written = [write_table(path, header, columns)]
    meta = {
        "schema_version": SCHEMA_VERSION,
        "lambda_t2": result.lambda_t2,
        "clamped_mode_count": int(np.sum(result.clamped_mask)),
        "eigenvalue_bound": abs(result.lambda_t2),
        "imag_residual": result.imag_residual,
        **result.metadata,
    }
    if extra:
        meta.update(extra)
    written.append(write_json(sidecar_path(path), meta))
    return written


VALIDATION_HEADER = ["check", "configuration", "simulator", "oracle", "sigma", "pass"]


def write_validation_report(path, rows):
    """Rows are dicts keyed by :data:`VALIDATION_HEADER`."""
    lines = [",".join(VALIDATION_HEADER)]
    for row in rows:
        cells = []
        for key in VALIDATION_HEADER:
            v = row[key]
            if isinstance(v, bool):
                cells.append("PASS" if v else "FAIL")
            elif isinstance(v, str):
                if "," in v or '"' in v:
                    v = '"' + v.replace('"', '""') + '"'
                cells.append(v)
            else:
                cells.append(_fmt(v))
        lines.append(",".join(cells))
    return _write_text(path, "\n".join(lines) + "\n")
