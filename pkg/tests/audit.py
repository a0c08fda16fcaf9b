"""Static audit of the bitwise noise path.

Walks the source of every function the bitwise generator runs and lists
anything that is not integer bit manipulation: true or floor division,
modulo, float literals, or calls to transcendental / division routines.
"""

from __future__ import annotations

import ast
import inspect
import textwrap

from gaussws import noise, prng

BITWISE_PATH = (
    noise.gen_gauss_bitwise,
    noise._lane_nibbles,
    noise._words_from_lanes,
    prng.random_words,
    prng._mix64_array,
)

FORBIDDEN_CALLS = {
    "log", "log2", "log10", "log1p", "exp", "exp2", "expm1", "sqrt", "cbrt", "sin", "cos", "tan",
    "arcsin", "arccos", "arctan", "sinh", "cosh", "tanh", "power", "float_power", "divide",
    "true_divide", "floor_divide", "mod", "remainder", "fmod", "divmod", "reciprocal", "erf", "rint",
}


def violations(funcs=BITWISE_PATH) -> list[str]:
    found = []
    for fn in funcs:
        tree = ast.parse(textwrap.dedent(inspect.getsource(fn)))
        for node in ast.walk(tree):
            where = f"{fn.__module__}.{fn.__name__}:{getattr(node, 'lineno', '?')}"
            if isinstance(node, (ast.BinOp, ast.AugAssign)) and isinstance(node.op, (ast.Div, ast.FloorDiv, ast.Mod, ast.Pow)):
                found.append(f"{where} {type(node.op).__name__}")
            elif isinstance(node, ast.Constant) and isinstance(node.value, float):
                found.append(f"{where} float literal {node.value}")
            elif isinstance(node, ast.Call):
                name = node.func.attr if isinstance(node.func, ast.Attribute) else getattr(node.func, "id", "")
                if name in FORBIDDEN_CALLS:
                    found.append(f"{where} call {name}")
    return found
