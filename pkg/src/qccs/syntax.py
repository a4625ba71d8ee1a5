"""Process terms: constructors, free-variable functions, substitution, validity.

Terms are immutable; structural equality and hashing work on every node, so
terms can be used directly as dictionary keys.  Gate and measurement payloads
compare by name plus a matrix fingerprint (see linalg.Gate).
"""

from __future__ import annotations

from dataclasses import dataclass

from .linalg import Gate, Observable


class SyntaxError_(Exception):
    pass


class UnboundVariable(SyntaxError_):
    pass


class BadRelabeling(SyntaxError_):
    pass


class WellformednessError(SyntaxError_):
    def __init__(self, violations):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


@dataclass(frozen=True)
class Chan:
    """A channel name tagged with its kind; classical and quantum channels
    live in separate namespaces."""

    name: str
    quantum: bool = False

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class RelabelFn:
    """Finite channel renaming, identity outside the listed pairs."""

    pairs: tuple  # ((Chan, Chan), ...), sorted for canonical equality

    def __init__(self, mapping):
        items = tuple(sorted(mapping.items() if isinstance(mapping, dict) else mapping,
                             key=lambda p: (p[0].quantum, p[0].name)))
        for src, dst in items:
            if src.quantum != dst.quantum:
                raise BadRelabeling(f"relabeling {src} -> {dst} crosses channel kinds")
        object.__setattr__(self, "pairs", items)

    def apply(self, chan: Chan) -> Chan:
        for src, dst in self.pairs:
            if src == chan:
                return dst
        return chan

    def __str__(self) -> str:
        return "{" + ", ".join(f"{s}->{d}" for s, d in self.pairs) + "}"


# -- classical value and boolean expressions --


@dataclass(frozen=True)
class Const:
    value: float

    def __str__(self) -> str:
        v = self.value
        return str(int(v)) if float(v).is_integer() else repr(v)


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Arith:
    op: str  # '+', '-', '*'
    left: "ValueExpr"
    right: "ValueExpr"

    def __str__(self) -> str:
        def wrap(e):
            return f"({e})" if isinstance(e, Arith) and self.op == "*" else str(e)

        return f"{wrap(self.left)} {self.op} {wrap(self.right)}"


ValueExpr = Const | Var | Arith


@dataclass(frozen=True)
class Cmp:
    op: str  # '=', '<', '<='
    left: ValueExpr
    right: ValueExpr

    def __str__(self) -> str:
        return f"{self.left} {self.op} {self.right}"


@dataclass(frozen=True)
class BoolOp:
    op: str  # '&&', '||'
    left: "BoolExpr"
    right: "BoolExpr"

    def __str__(self) -> str:
        return f"{self.left} {self.op} {self.right}"


@dataclass(frozen=True)
class Not:
    body: "BoolExpr"

    def __str__(self) -> str:
        return f"!{self.body}"


BoolExpr = Cmp | BoolOp | Not


def eval_expr(e: ValueExpr, env: dict | None = None) -> float:
    match e:
        case Const(value=v):
            return float(v)
        case Var(name=x):
            if env and x in env:
                return float(env[x])
            raise UnboundVariable(f"classical variable {x} is unbound")
        case Arith(op=op, left=l, right=r):
            a, b = eval_expr(l, env), eval_expr(r, env)
            if op == "+":
                return a + b
            if op == "-":
                return a - b
            if op == "*":
                return a * b
    raise SyntaxError_(f"bad value expression {e!r}")


def eval_bool(b: BoolExpr, env: dict | None = None) -> bool:
    match b:
        case Cmp(op=op, left=l, right=r):
            a, c = eval_expr(l, env), eval_expr(r, env)
            if op == "=":
                return a == c
            if op == "<":
                return a < c
            if op == "<=":
                return a <= c
        case BoolOp(op=op, left=l, right=r):
            if op == "&&":
                return eval_bool(l, env) and eval_bool(r, env)
            if op == "||":
                return eval_bool(l, env) or eval_bool(r, env)
        case Not(body=e):
            return not eval_bool(e, env)
    raise SyntaxError_(f"bad boolean expression {b!r}")


def expr_vars(e) -> frozenset:
    match e:
        case Const():
            return frozenset()
        case Var(name=x):
            return frozenset([x])
        case Arith(left=l, right=r) | Cmp(left=l, right=r) | BoolOp(left=l, right=r):
            return expr_vars(l) | expr_vars(r)
        case Not(body=b):
            return expr_vars(b)
    raise SyntaxError_(f"bad expression {e!r}")


def subst_expr(e, x: str, v: float):
    match e:
        case Const():
            return e
        case Var(name=y):
            return Const(v) if y == x else e
        case Arith(op=op, left=l, right=r):
            return Arith(op, subst_expr(l, x, v), subst_expr(r, x, v))
        case Cmp(op=op, left=l, right=r):
            return Cmp(op, subst_expr(l, x, v), subst_expr(r, x, v))
        case BoolOp(op=op, left=l, right=r):
            return BoolOp(op, subst_expr(l, x, v), subst_expr(r, x, v))
        case Not(body=b):
            return Not(subst_expr(b, x, v))
    raise SyntaxError_(f"bad expression {e!r}")


# -- process terms --


@dataclass(frozen=True)
class Nil:
    pass


@dataclass(frozen=True)
class CInput:
    chan: Chan
    var: str
    body: "ProcessExpr"


@dataclass(frozen=True)
class COutput:
    chan: Chan
    expr: ValueExpr
    body: "ProcessExpr"


@dataclass(frozen=True)
class QbitNew:
    qvar: str
    body: "ProcessExpr"


@dataclass(frozen=True)
class QInput:
    chan: Chan
    qvar: str
    body: "ProcessExpr"


@dataclass(frozen=True)
class QOutput:
    chan: Chan
    qvar: str
    body: "ProcessExpr"


@dataclass(frozen=True)
class Unitary:
    gate: Gate
    qvars: tuple
    body: "ProcessExpr"


@dataclass(frozen=True)
class Measure:
    obs: Observable
    qvars: tuple
    var: str
    body: "ProcessExpr"


@dataclass(frozen=True)
class Sum:
    left: "ProcessExpr"
    right: "ProcessExpr"


@dataclass(frozen=True)
class Parallel:
    left: "ProcessExpr"
    right: "ProcessExpr"


@dataclass(frozen=True)
class Relabel:
    body: "ProcessExpr"
    fn: RelabelFn


@dataclass(frozen=True)
class Restrict:
    body: "ProcessExpr"
    chans: frozenset


@dataclass(frozen=True)
class If:
    cond: BoolExpr
    body: "ProcessExpr"


ProcessExpr = (
    Nil | CInput | COutput | QbitNew | QInput | QOutput | Unitary | Measure
    | Sum | Parallel | Relabel | Restrict | If
)


def qv(e: ProcessExpr) -> frozenset:
    """Free quantum variables, one clause per constructor."""
    match e:
        case Nil():
            return frozenset()
        case CInput(body=b) | COutput(body=b):
            return qv(b)
        case QbitNew(qvar=q, body=b):
            return qv(b) - {q}
        case QInput(qvar=q, body=b):
            return qv(b) - {q}
        case QOutput(qvar=q, body=b):
            return qv(b) | {q}
        case Unitary(qvars=qs, body=b) | Measure(qvars=qs, body=b):
            return qv(b) | frozenset(qs)
        case Sum(left=l, right=r) | Parallel(left=l, right=r):
            return qv(l) | qv(r)
        case Relabel(body=b) | Restrict(body=b) | If(body=b):
            return qv(b)
    raise SyntaxError_(f"bad process term {e!r}")


def fv_classical(e: ProcessExpr) -> frozenset:
    """Free classical variables; input and measurement prefixes bind."""
    match e:
        case Nil():
            return frozenset()
        case CInput(var=x, body=b):
            return fv_classical(b) - {x}
        case COutput(expr=ve, body=b):
            return expr_vars(ve) | fv_classical(b)
        case QbitNew(body=b) | QInput(body=b) | QOutput(body=b) | Unitary(body=b):
            return fv_classical(b)
        case Measure(var=x, body=b):
            return fv_classical(b) - {x}
        case Sum(left=l, right=r) | Parallel(left=l, right=r):
            return fv_classical(l) | fv_classical(r)
        case Relabel(body=b) | Restrict(body=b):
            return fv_classical(b)
        case If(cond=c, body=b):
            return expr_vars(c) | fv_classical(b)
    raise SyntaxError_(f"bad process term {e!r}")


@dataclass(frozen=True)
class Violation:
    kind: str  # 'output-then-use' | 'parallel-overlap' | 'duplicate-qvar'
    path: tuple
    detail: str

    def __str__(self) -> str:
        where = "/".join(map(str, self.path)) or "root"
        return f"{self.kind} at {where}: {self.detail}"


def check_wellformed(e: ProcessExpr) -> list:
    """Validity constraints of the no-cloning discipline.

    Returns the violations found (empty list means the term is valid);
    each one carries the child-index path of the offending subterm.
    """
    out = []

    def walk(t, path):
        match t:
            case QOutput(qvar=q, body=b):
                if q in qv(b):
                    out.append(Violation("output-then-use", path, f"{q} used after output"))
                walk(b, path + (0,))
            case Parallel(left=l, right=r):
                shared = qv(l) & qv(r)
                if shared:
                    out.append(
                        Violation("parallel-overlap", path,
                                  f"components share {{{', '.join(sorted(shared))}}}")
                    )
                walk(l, path + (0,))
                walk(r, path + (1,))
            case Unitary(qvars=qs, body=b) | Measure(qvars=qs, body=b):
                if len(set(qs)) != len(qs):
                    out.append(Violation("duplicate-qvar", path, f"repeated name in [{', '.join(qs)}]"))
                walk(b, path + (0,))
            case Sum(left=l, right=r):
                walk(l, path + (0,))
                walk(r, path + (1,))
            case CInput(body=b) | COutput(body=b) | QbitNew(body=b) | QInput(body=b) \
                | Relabel(body=b) | Restrict(body=b) | If(body=b):
                walk(b, path + (0,))
            case Nil():
                pass

    walk(e, ())
    return out


def assert_wellformed(e: ProcessExpr) -> None:
    violations = check_wellformed(e)
    if violations:
        raise WellformednessError(violations)


def is_classical(e: ProcessExpr) -> bool:
    """True iff the term never changes a quantum context: no allocation,
    quantum input, unitary or measurement anywhere (quantum output is fine)."""
    match e:
        case Nil():
            return True
        case QbitNew() | QInput() | Unitary() | Measure():
            return False
        case CInput(body=b) | COutput(body=b) | QOutput(body=b) | Relabel(body=b) \
            | Restrict(body=b) | If(body=b):
            return is_classical(b)
        case Sum(left=l, right=r) | Parallel(left=l, right=r):
            return is_classical(l) and is_classical(r)
    raise SyntaxError_(f"bad process term {e!r}")


def subst_classical(e: ProcessExpr, x: str, v: float) -> ProcessExpr:
    """Instantiate the free classical variable x with the value v."""
    match e:
        case Nil():
            return e
        case CInput(chan=c, var=y, body=b):
            return e if y == x else CInput(c, y, subst_classical(b, x, v))
        case COutput(chan=c, expr=ve, body=b):
            return COutput(c, subst_expr(ve, x, v), subst_classical(b, x, v))
        case QbitNew(qvar=q, body=b):
            return QbitNew(q, subst_classical(b, x, v))
        case QInput(chan=c, qvar=q, body=b):
            return QInput(c, q, subst_classical(b, x, v))
        case QOutput(chan=c, qvar=q, body=b):
            return QOutput(c, q, subst_classical(b, x, v))
        case Unitary(gate=g, qvars=qs, body=b):
            return Unitary(g, qs, subst_classical(b, x, v))
        case Measure(obs=m, qvars=qs, var=y, body=b):
            return e if y == x else Measure(m, qs, y, subst_classical(b, x, v))
        case Sum(left=l, right=r):
            return Sum(subst_classical(l, x, v), subst_classical(r, x, v))
        case Parallel(left=l, right=r):
            return Parallel(subst_classical(l, x, v), subst_classical(r, x, v))
        case Relabel(body=b, fn=f):
            return Relabel(subst_classical(b, x, v), f)
        case Restrict(body=b, chans=ch):
            return Restrict(subst_classical(b, x, v), ch)
        case If(cond=c, body=b):
            return If(subst_expr(c, x, v), subst_classical(b, x, v))
    raise SyntaxError_(f"bad process term {e!r}")


def _fresh_qvar(base: str, avoid) -> str:
    cand = base + "'"
    while cand in avoid:
        cand += "'"
    return cand


def subst_quantum(e: ProcessExpr, q: str, r: str) -> ProcessExpr:
    """Replace free occurrences of the quantum variable q by r.

    Capture-avoiding: a binder on r enclosing a free q is renamed first.
    """
    if q == r:
        return e

    def sub(t):
        match t:
            case Nil():
                return t
            case CInput(chan=c, var=x, body=b):
                return CInput(c, x, sub(b))
            case COutput(chan=c, expr=ve, body=b):
                return COutput(c, ve, sub(b))
            case QbitNew(qvar=p, body=b):
                if p == q:
                    return t
                if p == r and q in qv(b):
                    p2 = _fresh_qvar(p, qv(b) | {q, r})
                    return QbitNew(p2, sub(subst_quantum(b, p, p2)))
                return QbitNew(p, sub(b))
            case QInput(chan=c, qvar=p, body=b):
                if p == q:
                    return t
                if p == r and q in qv(b):
                    p2 = _fresh_qvar(p, qv(b) | {q, r})
                    return QInput(c, p2, sub(subst_quantum(b, p, p2)))
                return QInput(c, p, sub(b))
            case QOutput(chan=c, qvar=p, body=b):
                return QOutput(c, r if p == q else p, sub(b))
            case Unitary(gate=g, qvars=qs, body=b):
                return Unitary(g, tuple(r if p == q else p for p in qs), sub(b))
            case Measure(obs=m, qvars=qs, var=x, body=b):
                return Measure(m, tuple(r if p == q else p for p in qs), x, sub(b))
            case Sum(left=l, right=rr):
                return Sum(sub(l), sub(rr))
            case Parallel(left=l, right=rr):
                return Parallel(sub(l), sub(rr))
            case Relabel(body=b, fn=f):
                return Relabel(sub(b), f)
            case Restrict(body=b, chans=ch):
                return Restrict(sub(b), ch)
            case If(cond=c, body=b):
                return If(c, sub(b))
        raise SyntaxError_(f"bad process term {t!r}")

    return sub(e)


def canonical(e: ProcessExpr) -> ProcessExpr:
    """Rename bound variables to position-based names so that alpha-equivalent
    terms become structurally equal.  Free variables are left untouched."""
    counter = [0]

    def walk(t, qenv, cenv):
        def fresh():
            counter[0] += 1
            return f"%{counter[0]}"

        match t:
            case Nil():
                return t
            case CInput(chan=c, var=x, body=b):
                nx = fresh()
                return CInput(c, nx, walk(b, qenv, {**cenv, x: nx}))
            case COutput(chan=c, expr=ve, body=b):
                return COutput(c, _rename_expr(ve, cenv), walk(b, qenv, cenv))
            case QbitNew(qvar=p, body=b):
                np_ = fresh()
                return QbitNew(np_, walk(b, {**qenv, p: np_}, cenv))
            case QInput(chan=c, qvar=p, body=b):
                np_ = fresh()
                return QInput(c, np_, walk(b, {**qenv, p: np_}, cenv))
            case QOutput(chan=c, qvar=p, body=b):
                return QOutput(c, qenv.get(p, p), walk(b, qenv, cenv))
            case Unitary(gate=g, qvars=qs, body=b):
                return Unitary(g, tuple(qenv.get(p, p) for p in qs), walk(b, qenv, cenv))
            case Measure(obs=m, qvars=qs, var=x, body=b):
                nx = fresh()
                return Measure(m, tuple(qenv.get(p, p) for p in qs), nx,
                                     walk(b, qenv, {**cenv, x: nx}))
            case Sum(left=l, right=r):
                return Sum(walk(l, qenv, cenv), walk(r, qenv, cenv))
            case Parallel(left=l, right=r):
                return Parallel(walk(l, qenv, cenv), walk(r, qenv, cenv))
            case Relabel(body=b, fn=f):
                return Relabel(walk(b, qenv, cenv), f)
            case Restrict(body=b, chans=ch):
                return Restrict(walk(b, qenv, cenv), ch)
            case If(cond=c, body=b):
                return If(_rename_expr(c, cenv), walk(b, qenv, cenv))
        raise SyntaxError_(f"bad process term {t!r}")

    return walk(e, {}, {})


def _rename_expr(e, cenv):
    match e:
        case Const():
            return e
        case Var(name=x):
            return Var(cenv.get(x, x))
        case Arith(op=op, left=l, right=r):
            return Arith(op, _rename_expr(l, cenv), _rename_expr(r, cenv))
        case Cmp(op=op, left=l, right=r):
            return Cmp(op, _rename_expr(l, cenv), _rename_expr(r, cenv))
        case BoolOp(op=op, left=l, right=r):
            return BoolOp(op, _rename_expr(l, cenv), _rename_expr(r, cenv))
        case Not(body=b):
            return Not(_rename_expr(b, cenv))
    raise SyntaxError_(f"bad expression {e!r}")
