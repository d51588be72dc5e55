"""Signal stream and results CSV I/O.

Float streams are CSV with the sample rate in a leading comment and a
column-name row; integer code streams are one code per line with a
bit-width header. Both are deliberately plain text: inspectable with
head, diff-friendly for golden tests. Floats are printed with 9
significant digits everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .signals import SignalFrame

__all__ = [
    "StreamFormatError",
    "CodeStream",
    "write_float_stream",
    "read_float_stream",
    "write_code_stream",
    "read_code_stream",
    "write_table",
]

FLOAT_FMT = "%.9g"


class StreamFormatError(ValueError):
    """Malformed stream file; the message names the offending path/line."""


@dataclass
class CodeStream:
    """Integer codes plus the bit width (and sample rate, if recorded)."""

    codes: np.ndarray
    bits: int
    sample_rate: float | None = None


def _parse_meta(path: str, max_lines: int = 8) -> dict[str, str]:
    # leading "# key=value" comment lines only
    meta: dict[str, str] = {}
    with open(path) as fh:
        for _ in range(max_lines):
            line = fh.readline()
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if "=" in body:
                key, _, value = body.partition("=")
                meta[key.strip()] = value.strip()
    return meta


def _locate_bad_line(path: str, kind: str) -> StreamFormatError:
    # slow rescan, only on the error path, to name the offending line
    conv = int if kind == "int" else float
    seen_header = False
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            if not seen_header:  # column-name row
                seen_header = True
                continue
            try:
                conv(text)
            except ValueError:
                return StreamFormatError(
                    f"{path}:{lineno}: cannot parse {text!r} as {kind}"
                )
    return StreamFormatError(f"{path}: truncated or empty stream")


def write_float_stream(path: str, frame: SignalFrame) -> None:
    """One sample per row under a 'sample' header; rate in a comment."""
    with open(path, "w") as fh:
        fh.write(f"# sample_rate_hz={frame.sample_rate:.9g}\n")
        fh.write("sample\n")
        np.savetxt(fh, frame.samples, fmt=FLOAT_FMT)


def read_float_stream(path: str) -> SignalFrame:
    meta = _parse_meta(path)
    if "sample_rate_hz" not in meta:
        raise StreamFormatError(f"{path}:1: missing '# sample_rate_hz=' header")
    rate = float(meta["sample_rate_hz"])
    try:
        frame = pd.read_csv(path, comment="#", dtype=np.float64)
    except (ValueError, pd.errors.ParserError):
        raise _locate_bad_line(path, "float") from None
    if frame.shape[1] != 1 or frame.columns[0] != "sample":
        raise StreamFormatError(
            f"{path}: expected a single 'sample' column, got {list(frame.columns)}"
        )
    if frame.empty:
        raise StreamFormatError(f"{path}: stream has a header but no samples")
    samples = frame["sample"].to_numpy()
    if not np.all(np.isfinite(samples)):
        bad = int(np.flatnonzero(~np.isfinite(samples))[0])
        raise StreamFormatError(f"{path}: non-finite sample at row {bad}")
    return SignalFrame(samples, rate)


def write_code_stream(
    path: str, codes: np.ndarray, bits: int, sample_rate: float | None = None
) -> None:
    """One code per line under a 'code' header; bit width in a comment."""
    codes = np.asarray(codes)
    if not np.issubdtype(codes.dtype, np.integer):
        raise TypeError(f"codes must be an integer array, got {codes.dtype}")
    with open(path, "w") as fh:
        fh.write(f"# bits={bits}\n")
        if sample_rate is not None:
            fh.write(f"# sample_rate_hz={sample_rate:.9g}\n")
        fh.write("code\n")
        np.savetxt(fh, codes, fmt="%d")


def read_code_stream(path: str) -> CodeStream:
    meta = _parse_meta(path)
    if "bits" not in meta:
        raise StreamFormatError(
            f"{path}:1: missing '# bits=' header (not an integer-code stream)"
        )
    bits = int(meta["bits"])
    rate = float(meta["sample_rate_hz"]) if "sample_rate_hz" in meta else None
    try:
        frame = pd.read_csv(path, comment="#", dtype=np.int64)
    except (ValueError, pd.errors.ParserError, OverflowError):
        raise _locate_bad_line(path, "int") from None
    if frame.shape[1] != 1 or frame.columns[0] != "code":
        raise StreamFormatError(
            f"{path}: expected a single 'code' column, got {list(frame.columns)}"
        )
    if frame.empty:
        raise StreamFormatError(f"{path}: stream has a header but no codes")
    codes = frame["code"].to_numpy()
    hi = 1 << bits
    if codes.min() < 0 or codes.max() >= hi:
        bad = int(np.flatnonzero((codes < 0) | (codes >= hi))[0])
        raise StreamFormatError(
            f"{path}: code {codes[bad]} at row {bad} outside [0, {hi})"
        )
    return CodeStream(codes, bits, rate)


def write_table(path: str, columns: dict, meta: dict | None = None) -> None:
    """Generic results CSV: optional '# k=v' comments, header row, rows.

    Column arrays must share one length. Integer columns print as %d,
    everything else with 9 significant digits.
    """
    names = list(columns)
    if not names:
        raise ValueError("write_table needs at least one column")
    arrays = [np.asarray(columns[n]) for n in names]
    n_rows = arrays[0].shape[0]
    for name, arr in zip(names, arrays):
        if arr.shape != (n_rows,):
            raise ValueError(f"column {name!r} has shape {arr.shape}, expected ({n_rows},)")
    with open(path, "w") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key}={value}\n")
        fh.write(",".join(names) + "\n")
        for i in range(n_rows):
            cells = []
            for arr in arrays:
                v = arr[i]
                if np.issubdtype(arr.dtype, np.integer) or isinstance(v, (bool, np.bool_)):
                    cells.append(str(int(v)))
                elif np.issubdtype(arr.dtype, np.floating):
                    cells.append(FLOAT_FMT % v)
                else:
                    cells.append(str(v))
            fh.write(",".join(cells) + "\n")
