"""Matrix Market and spectrum-file input/output."""
from __future__ import annotations

import io
import math

import numpy as np
import scipy.io

from .errors import FormatError


def read_matrix(path) -> np.ndarray:
    """Dense float array from a Matrix Market file (array or coordinate)."""
    try:
        M = scipy.io.mmread(path)
    except (ValueError, IndexError) as exc:
        raise FormatError(f"{path}: not a valid Matrix Market file: {exc}") from exc
    if hasattr(M, "toarray"):
        M = M.toarray()
    M = np.asarray(M)
    if np.iscomplexobj(M):
        raise FormatError(f"{path}: complex matrices are not supported")
    M = np.atleast_2d(M.astype(float))
    if not np.all(np.isfinite(M)):
        raise FormatError(f"{path}: non-finite entries")
    return M


def write_matrix(target, M, comment: str = "") -> None:
    """Write a dense array in Matrix Market array format.

    ``target`` is a path or a binary file object.  Output is byte-stable for
    identical input.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    scipy.io.mmwrite(target, M, comment=comment, field="real", precision=17, symmetry="general")


def format_matrix(M, comment: str = "") -> bytes:
    buf = io.BytesIO()
    write_matrix(buf, M, comment)
    return buf.getvalue()


def read_spectrum(path) -> np.ndarray:
    """Nonnegative nonincreasing values, one decimal per line.

    Blank lines and lines starting with ``#`` are skipped.
    """
    values = []
    with open(path) as fh:
        for num, line in enumerate(fh, 1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            try:
                x = float(text)
            except ValueError:
                raise FormatError(f"{path}:{num}: not a number: {text!r}") from None
            if not math.isfinite(x) or x < 0:
                raise FormatError(f"{path}:{num}: value must be finite and nonnegative, got {text}")
            if values and x > values[-1]:
                raise FormatError(f"{path}:{num}: spectrum must be nonincreasing ({x} > {values[-1]})")
            values.append(x)
    if not values:
        raise FormatError(f"{path}: empty spectrum file")
    return np.array(values)


def format_spectrum(s) -> str:
    return "".join(f"{float(x)!r}\n" for x in s)


def write_spectrum(path, s) -> None:
    with open(path, "w") as fh:
        fh.write(format_spectrum(s))
