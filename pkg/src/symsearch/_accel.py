"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Set ``SYMSEARCH_NUMBA=0`` in the environment before import to force the
numpy implementations (useful for debugging and for the kernel benchmark).
"""
import os

import numpy as np

# opcodes shared by the expression compiler and the kernels
ADD, SUB, MUL, DIV, POW = 0, 1, 2, 3, 4
SIN, COS, EXP, SQRT, LOG = 5, 6, 7, 8, 9
NEG, INV, POW2, POW3, POW4, EXPNEG, ABS = 10, 11, 12, 13, 14, 15, 16
VAR, CONST = 20, 21
N_BINARY = 5  # opcodes below this are binary

_WANT_NUMBA = os.environ.get("SYMSEARCH_NUMBA", "1").lower() not in ("0", "false", "no", "off")

try:
    if not _WANT_NUMBA:
        raise ImportError("numba disabled by SYMSEARCH_NUMBA")
    from numba import njit
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


# ---------------------------------------------------------------- numpy path


def _apply_np(op, a, b):
    if op == ADD:
        return a + b
    if op == SUB:
        return a - b
    if op == MUL:
        return a * b
    if op == DIV:
        return a / b
    if op == POW:
        return np.power(a, b)
    if op == SIN:
        return np.sin(a)
    if op == COS:
        return np.cos(a)
    if op == EXP:
        return np.exp(a)
    if op == SQRT:
        return np.sqrt(a)
    if op == LOG:
        return np.log(a)
    if op == NEG:
        return -a
    if op == INV:
        return 1.0 / a
    if op == POW2:
        return a * a
    if op == POW3:
        return a * a * a
    if op == POW4:
        return (a * a) * (a * a)
    if op == EXPNEG:
        return np.exp(-a)
    if op == ABS:
        return np.abs(a)
    raise ValueError(f"unknown opcode {op}")


def eval_prefix_numpy(ops, args, X):
    """Evaluate a preorder program over the rows of X.

    Returns ``(values, ok)``; ``ok`` is False as soon as any intermediate
    value is non-finite.
    """
    n = X.shape[0]
    stack = []
    with np.errstate(all="ignore"):
        for k in range(len(ops) - 1, -1, -1):
            op = ops[k]
            if op == VAR:
                stack.append(X[:, int(args[k])].astype(np.float64, copy=True))
                continue
            if op == CONST:
                stack.append(np.full(n, args[k], dtype=np.float64))
                continue
            if op < N_BINARY:
                left = stack.pop()
                right = stack.pop()
                res = _apply_np(op, left, right)
            else:
                res = _apply_np(op, stack.pop(), None)
            if not np.all(np.isfinite(res)):
                return np.full(n, np.nan), False
            stack.append(res)
    out = stack[-1]
    if not np.all(np.isfinite(out)):
        return np.full(n, np.nan), False
    return out, True


_GELU_K = float(np.sqrt(2.0 / np.pi))
_GELU_C = 0.044715


def gelu_numpy(u):
    """Tanh-approximate GELU; returns ``(gelu(u), t)`` with ``t`` the tanh for the backward."""
    t = np.tanh(_GELU_K * (u + _GELU_C * u * u * u))
    return 0.5 * u * (1.0 + t), t


def gelu_backward_numpy(dg, u, t):
    return dg * (0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * _GELU_K * (1.0 + 3 * _GELU_C * u * u))


def uct_select_numpy(W, N, P, parent_n, c_puct):
    q = np.where(N > 0, W / np.maximum(N, 1), 0.0)
    score = q + c_puct * P * np.sqrt(parent_n) / (1.0 + N)
    return int(np.argmax(score))


# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:

    @njit(cache=True, error_model="numpy")
    def _eval_prefix_nb(ops, args, X):
        n = X.shape[0]
        length = ops.shape[0]
        stack = np.empty((length, n))
        sp = 0
        for k in range(length - 1, -1, -1):
            op = ops[k]
            if op == VAR:
                col = int(args[k])
                for i in range(n):
                    stack[sp, i] = X[i, col]
                sp += 1
                continue
            if op == CONST:
                for i in range(n):
                    stack[sp, i] = args[k]
                sp += 1
                continue
            if op < N_BINARY:
                top = sp - 1
                dst = sp - 2
                for i in range(n):
                    a = stack[top, i]
                    b = stack[dst, i]
                    if op == ADD:
                        r = a + b
                    elif op == SUB:
                        r = a - b
                    elif op == MUL:
                        r = a * b
                    elif op == DIV:
                        r = a / b
                    else:
                        r = a ** b
                    if not np.isfinite(r):
                        return stack[0] * np.nan, False
                    stack[dst, i] = r
                sp -= 1
            else:
                top = sp - 1
                for i in range(n):
                    a = stack[top, i]
                    if op == SIN:
                        r = np.sin(a)
                    elif op == COS:
                        r = np.cos(a)
                    elif op == EXP:
                        r = np.exp(a)
                    elif op == SQRT:
                        r = np.sqrt(a)
                    elif op == LOG:
                        r = np.log(a)
                    elif op == NEG:
                        r = -a
                    elif op == INV:
                        r = 1.0 / a
                    elif op == POW2:
                        r = a * a
                    elif op == POW3:
                        r = a * a * a
                    elif op == POW4:
                        r = (a * a) * (a * a)
                    elif op == EXPNEG:
                        r = np.exp(-a)
                    else:
                        r = np.abs(a)
                    if not np.isfinite(r):
                        return stack[0] * np.nan, False
                    stack[top, i] = r
        return stack[0].copy(), True

    @njit(cache=True)
    def _uct_select_nb(W, N, P, parent_n, c_puct):
        sq = np.sqrt(parent_n)
        best = 0
        best_score = -np.inf
        for i in range(W.shape[0]):
            q = W[i] / N[i] if N[i] > 0 else 0.0
            s = q + c_puct * P[i] * sq / (1.0 + N[i])
            if s > best_score:
                best_score = s
                best = i
        return best

    @njit(cache=True)
    def _gelu_backward_nb(dg, u, t):
        out = np.empty_like(u)
        for i in range(u.shape[0]):
            x = u[i]
            th = t[i]
            out[i] = dg[i] * (0.5 * (1.0 + th)
                              + 0.5 * x * (1.0 - th * th) * _GELU_K * (1.0 + 3 * _GELU_C * x * x))
        return out

    gelu = gelu_numpy  # numpy's vectorized tanh beats a scalar libm loop
    SMALL = 4096  # below this the dispatch overhead outweighs the fused loop

    def gelu_backward(dg, u, t):
        if u.size < SMALL:
            return gelu_backward_numpy(dg, u, t)
        flat = [np.ascontiguousarray(a).reshape(-1) for a in (dg, u, t)]
        return _gelu_backward_nb(*flat).reshape(u.shape)

    def eval_prefix(ops, args, X):
        return _eval_prefix_nb(ops, args, X)

    def uct_select(W, N, P, parent_n, c_puct):
        return int(_uct_select_nb(W, N, P, float(parent_n), float(c_puct)))

else:
    eval_prefix = eval_prefix_numpy
    uct_select = uct_select_numpy
    gelu = gelu_numpy
    gelu_backward = gelu_backward_numpy
