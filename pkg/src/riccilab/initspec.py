"""Tiny expression language for initial data on grids.

Accepted expressions are sums of cosine products:

    0.1*cos(x) + 0.05*cos(2*x)*cos(y)        (torus fields, variables x, y)
    0.05*cos(theta)                           (zonal sphere fields)
    0.1*cos(x1) + 0.08*cos(x2)                (complex 2-torus, x1,y1,x2,y2)

Each term is  coef * cos(k*var) [* cos(l*var2) ...]  with integer
frequencies (the '*' after a leading coefficient may be omitted around
whitespace-free forms like '0.1cos(x)' is NOT accepted; keep the stars).
A bare numeric term adds a constant.
"""

from __future__ import annotations

import re

import numpy as np

from .errors import InvalidInputError

_COS = re.compile(r"^cos\(\s*(?:(\d+)\s*\*\s*)?([a-zA-Z]\w*)\s*\)$")
_NUM = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


def parse_init(expr):
    """Parse to a list of terms [(coef, [(var, freq), ...]), ...]."""
    if not isinstance(expr, str) or not expr.strip():
        raise InvalidInputError("empty initial-data expression")
    # normalize 'a - b' into 'a + -b' for splitting
    s = expr.replace("-", "+-")
    terms = []
    for chunk in s.split("+"):
        chunk = chunk.strip()
        if not chunk:
            continue
        sign = 1.0
        if chunk.startswith("-"):
            sign = -1.0
            chunk = chunk[1:].strip()
        factors = [p.strip() for p in chunk.split("*")]
        # re-join splits that broke 'cos(2*x)' apart
        merged, buf = [], ""
        for p in factors:
            buf = p if not buf else buf + "*" + p
            if buf.count("(") == buf.count(")"):
                merged.append(buf)
                buf = ""
        if buf:
            raise InvalidInputError("unbalanced parentheses in %r" % expr)
        coef = sign
        cosines = []
        for p in merged:
            m = _COS.match(p)
            if m:
                freq = int(m.group(1)) if m.group(1) else 1
                cosines.append((m.group(2), freq))
            elif _NUM.match(p):
                coef *= float(p)
            else:
                raise InvalidInputError(
                    "cannot parse factor %r in initial-data expression %r" % (p, expr)
                )
        terms.append((coef, cosines))
    if not terms:
        raise InvalidInputError("empty initial-data expression")
    return terms


def evaluate_init(expr, coords):
    """Evaluate an expression on a dict of (broadcastable) coordinate arrays."""
    terms = parse_init(expr)
    shape = np.broadcast_shapes(*(np.shape(c) for c in coords.values()))
    out = np.zeros(shape)
    for coef, cosines in terms:
        val = np.full(shape, coef)
        for var, freq in cosines:
            if var not in coords:
                raise InvalidInputError(
                    "unknown variable %r (have %s)" % (var, sorted(coords))
                )
            val = val * np.cos(freq * coords[var])
        out = out + val
    return out
