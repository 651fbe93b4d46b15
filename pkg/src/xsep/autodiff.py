"""Reverse-mode differentiation over the fixed op set used by the
separation network.

Eager forward with an explicit tape: every primitive application appends
a node in creation order (which is topological), and one backward pass
visits the nodes once in reverse, accumulating gradients in a fixed
order.  Values are float64 planes (2-D arrays), channel stacks (3-D
arrays) or python floats; no broadcasting.

Subgradient choices at non-smooth points:
  * soft threshold: derivative 0 on the dead zone |x| <= t; derivative
    w.r.t. the threshold is -sign(output) where |x| > t, else 0;
  * |x|, the l1 reduction and the gradient magnitude use 0 at 0;
  * sqrt uses 0 at 0.

Each non-smooth op appends its activity count (active shrinkage
coefficients, nonzero magnitudes, ...) to the tape fingerprint; the
finite-difference checker compares fingerprints between perturbed
evaluations and skips coordinates whose perturbation flips any activity,
i.e. coordinates lying within the perturbation's reach of a kink.
"""

import numpy as np

from .backend import (
    conv2d_raw,
    conv_bank_raw,
    filter_grad_bank_shared_raw,
    filter_grad_bank_stack_raw,
    filter_grad_raw,
    frob_sq_raw,
    inner_raw,
    l1_raw,
    stack_conv_sum_raw,
)
from .kernels import (
    bilinear_downsample,
    bilinear_downsample_adjoint,
    gradient_magnitude,
    gradient_magnitude_vjp,
)


class Var:
    """A tape entry: forward value plus the saved backward rule."""

    __slots__ = ("value", "grad", "tape", "requires", "name", "_parents", "_vjp", "_idx")

    def __init__(self, value, tape, requires, name=None, parents=(), vjp=None):
        self.value = value
        self.grad = None
        self.tape = tape
        self.requires = requires
        self.name = name
        self._parents = parents
        self._vjp = vjp
        self._idx = len(tape.nodes)
        tape.nodes.append(self)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    def __repr__(self):
        shape = getattr(self.value, "shape", "scalar")
        return f"Var(idx={self._idx}, shape={shape}, name={self.name})"


class Tape:
    """Ordered record of primitive applications for one forward pass."""

    def __init__(self):
        self.nodes = []
        self.fingerprint = []

    def leaf(self, value, name=None):
        """Register a differentiable leaf (a learnable parameter)."""
        return Var(_own(value), self, requires=True, name=name)

    def constant(self, value):
        """Register a non-differentiable input."""
        return Var(_own(value), self, requires=False)

    def note_activity(self, count):
        self.fingerprint.append(count)

    def backward(self, root):
        """Accumulate d(root)/d(leaf) into .grad of every node that needs it.

        The root must be a scalar.  Visits nodes in reverse creation
        order exactly once; accumulation order is deterministic.
        """
        if not isinstance(root.value, float):
            raise ValueError("backward root must be a scalar node")
        root.grad = 1.0
        for node in reversed(self.nodes[: root._idx + 1]):
            if node.grad is None or node._vjp is None:
                continue
            node._vjp(node.grad)


def _own(value):
    if isinstance(value, np.ndarray):
        return np.ascontiguousarray(value, dtype=np.float64)
    return float(value)


def _acc(parent, contrib, owned):
    # Storing the reference without a copy is safe: a node's grad is fully
    # accumulated before its own vjp runs (reverse creation order), and
    # accumulation rebinds (grad = grad + c) instead of mutating, so shared
    # arrays are never written.  `owned` is kept for documentation.
    if not parent.requires:
        return
    if parent.grad is None:
        parent.grad = contrib
    else:
        parent.grad = parent.grad + contrib


def _plane(v):
    if not isinstance(v.value, np.ndarray):
        raise ValueError("expected a plane-valued node")
    return v.value


def _same_shape(a, b):
    if a.value.shape != b.value.shape:
        raise ValueError(f"shape mismatch: {a.value.shape} vs {b.value.shape}")


def _unary(x, value, vjp_fn):
    def vjp(g):
        _acc(x, vjp_fn(g), owned=True)

    return Var(value, x.tape, x.requires, parents=(x,), vjp=vjp if x.requires else None)


# ---------------------------------------------------------------------------
# elementwise / arithmetic


def add(a, b):
    _check_pair(a, b)
    out_val = a.value + b.value

    def vjp(g):
        _acc(a, g, owned=False)
        _acc(b, g, owned=False)

    req = a.requires or b.requires
    return Var(out_val, a.tape, req, parents=(a, b), vjp=vjp if req else None)


def sub(a, b):
    _check_pair(a, b)
    out_val = a.value - b.value

    def vjp(g):
        _acc(a, g, owned=False)
        _acc(b, -g, owned=True)

    req = a.requires or b.requires
    return Var(out_val, a.tape, req, parents=(a, b), vjp=vjp if req else None)


def neg(a):
    return _unary(a, -a.value, lambda g: -g)


def mul(a, b):
    """Elementwise product of two planes, or product of two scalars."""
    _check_pair(a, b)
    out_val = a.value * b.value

    def vjp(g):
        _acc(a, g * b.value, owned=True)
        _acc(b, g * a.value, owned=True)

    req = a.requires or b.requires
    return Var(out_val, a.tape, req, parents=(a, b), vjp=vjp if req else None)


def scale(x, s):
    """Node times scalar.  A Var scalar requires a plane-valued x (its
    gradient is the inner product); a python float scales any node."""
    if isinstance(s, Var):
        xv = _plane(x)
        sv = s.value
        req = x.requires or s.requires

        def vjp(g):
            _acc(x, g * sv, owned=True)
            _acc(s, inner_raw(np.ascontiguousarray(g), xv), owned=True)

        return Var(xv * sv, x.tape, req, parents=(x, s), vjp=vjp if req else None)
    sv = float(s)
    return _unary(x, x.value * sv, lambda g: g * sv)


def _check_pair(a, b):
    if isinstance(a.value, np.ndarray) != isinstance(b.value, np.ndarray):
        raise ValueError("cannot combine a plane with a scalar node")
    if isinstance(a.value, np.ndarray):
        _same_shape(a, b)
    if a.tape is not b.tape:
        raise ValueError("operands recorded on different tapes")


# ---------------------------------------------------------------------------
# convolution


def conv2d(x, w):
    """Same-size zero-padded convolution; gradients flow to both operands."""
    xv, wv = _plane(x), _plane(w)
    out_val = conv2d_raw(xv, wv)
    req = x.requires or w.requires

    def vjp(g):
        g = np.ascontiguousarray(g)
        if x.requires:
            _acc(x, conv2d_raw(g, np.ascontiguousarray(wv[::-1, ::-1])), owned=True)
        if w.requires:
            _acc(w, filter_grad_raw(xv, g, wv.shape[0]), owned=True)

    return Var(out_val, x.tape, req, parents=(x, w), vjp=vjp if req else None)


def rot180(w):
    """180-degree filter rotation (a permutation, hence self-adjoint-ish)."""
    return _unary(w, np.ascontiguousarray(w.value[::-1, ::-1]),
                  lambda g: np.ascontiguousarray(g[::-1, ::-1]))


def adjoint_conv2d(y, w):
    """Transposed-filter application: convolution with the rotated filter."""
    return conv2d(y, rot180(w))


def conv_bank(x, w):
    """Plane x convolved with every filter of a (K, f, f) bank Var;
    the output is a (K, H, W) stack."""
    xv, wv = x.value, w.value
    out_val = conv_bank_raw(xv, wv)
    req = x.requires or w.requires

    def vjp(g):
        g = np.ascontiguousarray(g)
        if x.requires:
            _acc(x, stack_conv_sum_raw(g, np.ascontiguousarray(wv[:, ::-1, ::-1])), owned=True)
        if w.requires:
            _acc(w, filter_grad_bank_shared_raw(xv, g, wv.shape[1]), owned=True)

    return Var(out_val, x.tape, req, parents=(x, w), vjp=vjp if req else None)


def stack_conv_sum(z, w):
    """sum_k conv(z_k, w_k) of a (K, H, W) stack Var with a (K, f, f)
    filter-bank Var; the output is a plane."""
    zv, wv = z.value, w.value
    out_val = stack_conv_sum_raw(zv, wv)
    req = z.requires or w.requires

    def vjp(g):
        g = np.ascontiguousarray(g)
        if z.requires:
            _acc(z, conv_bank_raw(g, np.ascontiguousarray(wv[:, ::-1, ::-1])), owned=True)
        if w.requires:
            _acc(w, filter_grad_bank_stack_raw(zv, g, wv.shape[1]), owned=True)

    return Var(out_val, z.tape, req, parents=(z, w), vjp=vjp if req else None)


# ---------------------------------------------------------------------------
# nonlinearities


def soft_threshold(x, t):
    """sign(x) * max(|x| - t, 0); t is a float, a scalar Var, or a plane Var."""
    xv = _plane(x)
    t_is_var = isinstance(t, Var)
    tv = t.value if t_is_var else float(t)
    mag = np.abs(xv) - tv
    active = mag > 0.0
    out_val = np.where(active, np.sign(xv) * mag, 0.0)
    x.tape.note_activity(int(np.count_nonzero(active)))
    req = x.requires or (t_is_var and t.requires)

    def vjp(g):
        _acc(x, np.where(active, g, 0.0), owned=True)
        if t_is_var:
            contrib = np.where(active, -np.sign(xv) * g, 0.0)
            if isinstance(tv, np.ndarray):
                _acc(t, contrib, owned=True)
            else:
                _acc(t, float(np.add.accumulate(contrib.ravel())[-1]), owned=True)

    parents = (x, t) if t_is_var else (x,)
    return Var(out_val, x.tape, req, parents=parents, vjp=vjp if req else None)


def absval(x):
    xv = _plane(x)
    x.tape.note_activity(int(np.count_nonzero(xv)))
    return _unary(x, np.abs(xv), lambda g: g * np.sign(xv))


def tanh(x):
    out_val = np.tanh(x.value) if isinstance(x.value, np.ndarray) else float(np.tanh(x.value))
    return _unary(x, out_val, lambda g: g * (1.0 - out_val * out_val))


# ---------------------------------------------------------------------------
# linear transforms


def wavelet_fwd(x, bank, i):
    xv = _plane(x)
    if xv.shape[0] % 2 or xv.shape[1] % 2:
        raise ValueError("taped wavelet ops require even plane dimensions")
    return _unary(x, bank.forward(i, xv), lambda g: bank.inverse(i, g))


def wavelet_inv(c, bank, i):
    cv = _plane(c)
    return _unary(c, bank.inverse(i, cv), lambda g: bank.forward(i, g))


def downsample(x, level):
    xv = _plane(x)
    return _unary(
        x,
        bilinear_downsample(xv, level),
        lambda g: bilinear_downsample_adjoint(g, level, xv.shape),
    )


def grad_magnitude(x):
    xv = _plane(x)
    out_val = gradient_magnitude(xv)
    x.tape.note_activity(int(np.count_nonzero(out_val)))
    return _unary(x, out_val, lambda g: gradient_magnitude_vjp(xv, g))


# ---------------------------------------------------------------------------
# reductions (plane -> scalar)


def frobenius_sq(x):
    xv = _plane(x)
    return _unary(x, frob_sq_raw(xv), lambda g: (2.0 * g) * xv)


def l1(x):
    xv = _plane(x)
    x.tape.note_activity(int(np.count_nonzero(xv)))
    return _unary(x, l1_raw(xv), lambda g: g * np.sign(xv))


def inner(a, b):
    _same_shape(a, b)
    av, bv = _plane(a), _plane(b)
    out_val = inner_raw(av, bv)
    req = a.requires or b.requires

    def vjp(g):
        _acc(a, g * bv, owned=True)
        _acc(b, g * av, owned=True)

    return Var(out_val, a.tape, req, parents=(a, b), vjp=vjp if req else None)


# ---------------------------------------------------------------------------
# scalar-only ops


def sqrt(s):
    sv = float(s.value)
    if sv < 0.0:
        raise ValueError("sqrt of a negative scalar")
    out_val = float(np.sqrt(sv))
    s.tape.note_activity(1 if sv > 0.0 else 0)
    return _unary(s, out_val, lambda g: g / (2.0 * out_val) if out_val > 0.0 else 0.0)


def divide(a, b):
    out_val = a.value / b.value

    def vjp(g):
        _acc(a, g / b.value, owned=True)
        _acc(b, -g * a.value / (b.value * b.value), owned=True)

    req = a.requires or b.requires
    return Var(out_val, a.tape, req, parents=(a, b), vjp=vjp if req else None)


# ---------------------------------------------------------------------------
# gradient collection and verification


class GradientSet(dict):
    """Gradients keyed by parameter name (arrays for filters, floats for
    scalars).  Tied parameters reused across layers accumulate naturally,
    since every reuse shares one leaf node."""

    def accumulate(self, other):
        for key, val in other.items():
            if key in self:
                self[key] = self[key] + val
            else:
                self[key] = val.copy() if isinstance(val, np.ndarray) else val

    def scaled(self, factor):
        out = GradientSet()
        for key, val in self.items():
            out[key] = val * factor
        return out


def collect_gradients(leaves):
    """Extract a GradientSet from {name: leaf Var}; unused leaves get zeros."""
    out = GradientSet()
    for name, var in leaves.items():
        if var.grad is None:
            out[name] = (
                np.zeros_like(var.value) if isinstance(var.value, np.ndarray) else 0.0
            )
        else:
            out[name] = var.grad
    return out


def finite_diff_check(loss_fn, params, epsilon=1e-5, coords=200, seed=0):
    """Compare reverse-mode gradients against central finite differences.

    ``loss_fn(params, compute_grad)`` must be deterministic and return
    ``(value, fingerprint)`` or ``(value, fingerprint, grads)`` when
    ``compute_grad`` is true, where fingerprint is the tape's non-smooth
    activity record.  ``params`` maps names to float64 arrays or floats.

    Coordinates are sampled uniformly over the flattened parameter space
    until ``coords`` of them have been tested; a coordinate is excluded
    when its +/-epsilon evaluations disagree with the center fingerprint
    (its perturbation reaches across a kink, where central differences
    are meaningless).

    Returns the max relative error over tested coordinates, where the
    relative error uses max(|ad|, |fd|, floor) as denominator with a
    floor tied to the largest gradient entry (guards against comparing
    pure round-off noise on near-zero gradients).
    """
    if not 1e-7 <= epsilon <= 1e-4:
        raise ValueError(f"epsilon must lie in [1e-7, 1e-4], got {epsilon}")
    v1, f1, grads = loss_fn(params, True)
    v2, _ = loss_fn(params, False)
    if v1 != v2:
        raise RuntimeError(f"loss is not deterministic: {v1!r} != {v2!r}")

    gmax = 0.0
    for g in grads.values():
        gmax = max(gmax, float(np.max(np.abs(g))) if isinstance(g, np.ndarray) else abs(g))
    floor = max(1e-12, 1e-4 * gmax)

    names = sorted(params)
    sizes = [params[n].size if isinstance(params[n], np.ndarray) else 1 for n in names]
    total = sum(sizes)
    rng = np.random.default_rng(seed)

    max_rel = 0.0
    tested = 0
    attempts = 0
    while tested < coords:
        attempts += 1
        if attempts > 50 * coords:
            raise RuntimeError(
                f"could not find {coords} kink-free coordinates "
                f"({tested} tested after {attempts} attempts)"
            )
        name, index = _locate(names, sizes, int(rng.integers(0, total)))
        fplus, fp = loss_fn(_perturbed(params, name, index, epsilon), False)
        fminus, fm = loss_fn(_perturbed(params, name, index, -epsilon), False)
        if fp != f1 or fm != f1:
            continue
        tested += 1
        fd = (fplus - fminus) / (2.0 * epsilon)
        ad = grads[name]
        if isinstance(ad, np.ndarray):
            ad = float(ad.ravel()[index])
        rel = abs(ad - fd) / max(abs(ad), abs(fd), floor)
        if rel > max_rel:
            max_rel = rel
    return max_rel


def _locate(names, sizes, flat):
    for name, size in zip(names, sizes):
        if flat < size:
            return name, flat
        flat -= size
    raise IndexError("coordinate out of range")


def _perturbed(params, name, index, delta):
    out = dict(params)
    val = params[name]
    if isinstance(val, np.ndarray):
        val = val.copy()
        val.ravel()[index] += delta
        out[name] = val
    else:
        out[name] = val + delta
    return out
