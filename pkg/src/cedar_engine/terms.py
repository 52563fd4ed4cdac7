"""Typed SMT term trees.

Every term has exactly one sort.  The smart constructors partially evaluate
(literal guards collapse conditionals, `and`/`or`/`implies` drop literal
operands) so that statically-decided subexpressions vanish from the output,
and the printer emits the finite-set theory spellings (`set.member`,
`set.subset`, `set.inter`, `set.singleton`, `as set.empty`).

Option-wrapped sorts carry the error channel: `none` is a runtime error.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .ast import CedarError, I64_MAX, I64_MIN


class InternalSortError(CedarError):
    """An emitted term failed the sort check: a compiler bug."""


# ---------------------------------------------------------------------------
# Sorts
# ---------------------------------------------------------------------------


class Sort:
    __slots__ = ()


@dataclass(frozen=True)
class SBool(Sort):
    pass


@dataclass(frozen=True)
class SBV64(Sort):
    pass


@dataclass(frozen=True)
class SString(Sort):
    pass


@dataclass(frozen=True)
class SSet(Sort):
    elem: Sort


@dataclass(frozen=True)
class SData(Sort):
    name: str


@dataclass(frozen=True)
class SOption(Sort):
    elem: Sort


BOOL_S = SBool()
BV64_S = SBV64()
STRING_S = SString()


def sort_sexpr(s: Sort) -> str:
    if isinstance(s, SBool):
        return "Bool"
    if isinstance(s, SBV64):
        return "(_ BitVec 64)"
    if isinstance(s, SString):
        return "String"
    if isinstance(s, SSet):
        return f"(Set {sort_sexpr(s.elem)})"
    if isinstance(s, SData):
        return s.name
    if isinstance(s, SOption):
        return f"(Option {sort_sexpr(s.elem)})"
    raise TypeError(f"not a sort: {s!r}")


# ---------------------------------------------------------------------------
# Terms
# ---------------------------------------------------------------------------


class Term:
    __slots__ = ()


@dataclass(frozen=True)
class TBoolLit(Term):
    b: bool


@dataclass(frozen=True)
class TBVLit(Term):
    i: int  # signed, within 64-bit range


@dataclass(frozen=True)
class TStrLit(Term):
    s: str


@dataclass(frozen=True)
class TConst(Term):
    name: str
    sort: Sort


@dataclass(frozen=True)
class TApp(Term):
    """Uninterpreted function, datatype constructor, or selector application."""

    fn: str
    args: tuple
    result: Sort


@dataclass(frozen=True)
class TSome(Term):
    arg: Term


@dataclass(frozen=True)
class TNone(Term):
    elem: Sort


@dataclass(frozen=True)
class TVal(Term):
    arg: Term  # Option-sorted


@dataclass(frozen=True)
class TIsSome(Term):
    arg: Term


@dataclass(frozen=True)
class TIte(Term):
    cond: Term
    then: Term
    els: Term


@dataclass(frozen=True)
class TEq(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class TNot(Term):
    arg: Term


@dataclass(frozen=True)
class TAnd(Term):
    args: tuple  # len >= 2


@dataclass(frozen=True)
class TOr(Term):
    args: tuple  # len >= 2


@dataclass(frozen=True)
class TImplies(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class TSetMember(Term):
    elem: Term
    set: Term


@dataclass(frozen=True)
class TSetSubset(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class TSetInter(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class TSetUnion(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class TSetSingleton(Term):
    elem: Term


@dataclass(frozen=True)
class TSetEmpty(Term):
    elem: Sort


_BV_RESULT = {
    "bvadd": BV64_S,
    "bvsub": BV64_S,
    "bvneg": BV64_S,
    "bvmul": BV64_S,
    "bvslt": BOOL_S,
    "bvsle": BOOL_S,
}


@dataclass(frozen=True)
class TBVOp(Term):
    op: str
    args: tuple


class Regex:
    __slots__ = ()


@dataclass(frozen=True)
class RLit(Regex):
    s: str


@dataclass(frozen=True)
class RAll(Regex):
    pass


@dataclass(frozen=True)
class RConcat(Regex):
    parts: tuple


@dataclass(frozen=True)
class TStrInRe(Term):
    s: Term
    re: Regex


TRUE_TERM = TBoolLit(True)
FALSE_TERM = TBoolLit(False)


def sort_of(t: Term) -> Sort:
    if isinstance(t, TBoolLit):
        return BOOL_S
    if isinstance(t, TBVLit):
        return BV64_S
    if isinstance(t, TStrLit):
        return STRING_S
    if isinstance(t, TConst):
        return t.sort
    if isinstance(t, TApp):
        return t.result
    if isinstance(t, TSome):
        return SOption(sort_of(t.arg))
    if isinstance(t, TNone):
        return SOption(t.elem)
    if isinstance(t, TVal):
        s = sort_of(t.arg)
        if not isinstance(s, SOption):
            raise InternalSortError(f"val applied to {sort_sexpr(s)}")
        return s.elem
    if isinstance(t, (TIsSome, TEq, TNot, TAnd, TOr, TImplies, TSetMember, TSetSubset)):
        return BOOL_S
    if isinstance(t, TIte):
        return sort_of(t.then)
    if isinstance(t, (TSetInter, TSetUnion)):
        return sort_of(t.left)
    if isinstance(t, TSetSingleton):
        return SSet(sort_of(t.elem))
    if isinstance(t, TSetEmpty):
        return SSet(t.elem)
    if isinstance(t, TBVOp):
        return _BV_RESULT[t.op]
    if isinstance(t, TStrInRe):
        return BOOL_S
    raise TypeError(f"not a term: {t!r}")


# ---------------------------------------------------------------------------
# Smart constructors
# ---------------------------------------------------------------------------


def is_literal(t: Term) -> bool:
    """Terms whose value is statically known (used for equality folding)."""
    if isinstance(t, (TBoolLit, TBVLit, TStrLit, TNone)):
        return True
    if isinstance(t, TSome):
        return is_literal(t.arg)
    if isinstance(t, TApp):
        # Constructor applications to literals; uninterpreted functions are
        # never literal, but constructor names never collide with them.
        return False
    return False


def mk_not(t: Term) -> Term:
    if isinstance(t, TBoolLit):
        return TBoolLit(not t.b)
    if isinstance(t, TNot):
        return t.arg
    return TNot(t)


def mk_and2(a: Term, b: Term) -> Term:
    if isinstance(a, TBoolLit):
        return b if a.b else FALSE_TERM
    if isinstance(b, TBoolLit):
        return a if b.b else FALSE_TERM
    return TAnd((a, b))


def mk_or2(a: Term, b: Term) -> Term:
    if isinstance(a, TBoolLit):
        return TRUE_TERM if a.b else b
    if isinstance(b, TBoolLit):
        return TRUE_TERM if b.b else a
    return TOr((a, b))


def mk_and(args) -> Term:
    out = []
    for a in args:
        if isinstance(a, TBoolLit):
            if not a.b:
                return FALSE_TERM
            continue
        out.append(a)
    if not out:
        return TRUE_TERM
    if len(out) == 1:
        return out[0]
    return TAnd(tuple(out))


def mk_or(args) -> Term:
    out = []
    for a in args:
        if isinstance(a, TBoolLit):
            if a.b:
                return TRUE_TERM
            continue
        out.append(a)
    if not out:
        return FALSE_TERM
    if len(out) == 1:
        return out[0]
    return TOr(tuple(out))


def mk_implies(a: Term, b: Term) -> Term:
    if isinstance(a, TBoolLit):
        return b if a.b else TRUE_TERM
    if isinstance(b, TBoolLit) and b.b:
        return TRUE_TERM
    return TImplies(a, b)


def mk_eq(a: Term, b: Term) -> Term:
    if a == b:
        return TRUE_TERM
    if isinstance(a, TBoolLit) and isinstance(b, TBoolLit):
        return TBoolLit(a.b == b.b)
    if isinstance(a, TBoolLit):
        return b if a.b else mk_not(b)
    if isinstance(b, TBoolLit):
        return a if b.b else mk_not(a)
    if isinstance(a, (TBVLit, TStrLit)) and isinstance(b, (TBVLit, TStrLit)):
        return FALSE_TERM  # equal literals already matched above
    if isinstance(a, TSome) and isinstance(b, TNone):
        return FALSE_TERM
    if isinstance(a, TNone) and isinstance(b, TSome):
        return FALSE_TERM
    if isinstance(a, TSome) and isinstance(b, TSome):
        return mk_eq(a.arg, b.arg)
    if _is_ctor_literal(a) and _is_ctor_literal(b):
        return TBoolLit(a == b)
    return TEq(a, b)


def _is_ctor_literal(t: Term) -> bool:
    return isinstance(t, TApp) and t.fn == _data_name(t.result) and all(
        isinstance(x, (TStrLit, TBVLit, TBoolLit)) for x in t.args
    )


def _data_name(s: Sort) -> Optional[str]:
    return s.name if isinstance(s, SData) else None


def mk_ite(cond: Term, then: Term, els: Term) -> Term:
    if isinstance(cond, TBoolLit):
        return then if cond.b else els
    if then == els:
        return then
    if isinstance(sort_of(then), SBool):
        if isinstance(then, TBoolLit) and isinstance(els, TBoolLit):
            return cond if then.b else mk_not(cond)
        if isinstance(then, TBoolLit):
            return mk_or2(cond, els) if then.b else mk_and2(mk_not(cond), els)
        if isinstance(els, TBoolLit):
            return mk_and2(cond, then) if not els.b else mk_or2(mk_not(cond), then)
    if isinstance(then, TSome) and isinstance(els, TSome):
        return TSome(mk_ite(cond, then.arg, els.arg))
    return TIte(cond, then, els)


def mk_is_some(t: Term) -> Term:
    if isinstance(t, TSome):
        return TRUE_TERM
    if isinstance(t, TNone):
        return FALSE_TERM
    return TIsSome(t)


def mk_val(t: Term) -> Term:
    if isinstance(t, TSome):
        return t.arg
    return TVal(t)


def opt_elem(t: Term) -> Sort:
    s = sort_of(t)
    if not isinstance(s, SOption):
        raise InternalSortError(f"expected an Option sort, got {sort_sexpr(s)}")
    return s.elem


def mk_ifok(guarded: Term, body: Term) -> Term:
    """Propagate the error channel: none when ``guarded`` is none, else body."""
    b = mk_is_some(guarded)
    if isinstance(b, TBoolLit):
        return body if b.b else TNone(opt_elem(body))
    fallthrough = TNone(opt_elem(body))
    return mk_ite(b, body, fallthrough)


def mk_member(elem: Term, st: Term) -> Term:
    return TSetMember(elem, st)


def mk_set_literal(elems, elem_sort: Sort) -> Term:
    if not elems:
        return TSetEmpty(elem_sort)
    out = TSetSingleton(elems[0])
    for e in elems[1:]:
        out = TSetUnion(out, TSetSingleton(e))
    return out


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------


def _smt_string(s: str) -> str:
    return '"' + s.replace('"', '""') + '"'


def regex_sexpr(r: Regex) -> str:
    if isinstance(r, RLit):
        return f"(str.to_re {_smt_string(r.s)})"
    if isinstance(r, RAll):
        return "re.all"
    if isinstance(r, RConcat):
        if not r.parts:
            return '(str.to_re "")'
        if len(r.parts) == 1:
            return regex_sexpr(r.parts[0])
        return "(re.++ " + " ".join(regex_sexpr(p) for p in r.parts) + ")"
    raise TypeError(f"not a regex: {r!r}")


def term_sexpr(t: Term) -> str:
    if isinstance(t, TBoolLit):
        return "true" if t.b else "false"
    if isinstance(t, TBVLit):
        return f"(_ bv{t.i % (1 << 64)} 64)"
    if isinstance(t, TStrLit):
        return _smt_string(t.s)
    if isinstance(t, TConst):
        return t.name
    if isinstance(t, TApp):
        if not t.args:
            return t.fn
        return f"({t.fn} " + " ".join(term_sexpr(a) for a in t.args) + ")"
    if isinstance(t, TSome):
        return f"(some {term_sexpr(t.arg)})"
    if isinstance(t, TNone):
        return f"(as none (Option {sort_sexpr(t.elem)}))"
    if isinstance(t, TVal):
        return f"(val {term_sexpr(t.arg)})"
    if isinstance(t, TIsSome):
        return f"((_ is some) {term_sexpr(t.arg)})"
    if isinstance(t, TIte):
        return f"(ite {term_sexpr(t.cond)} {term_sexpr(t.then)} {term_sexpr(t.els)})"
    if isinstance(t, TEq):
        return f"(= {term_sexpr(t.left)} {term_sexpr(t.right)})"
    if isinstance(t, TNot):
        return f"(not {term_sexpr(t.arg)})"
    if isinstance(t, TAnd):
        return "(and " + " ".join(term_sexpr(a) for a in t.args) + ")"
    if isinstance(t, TOr):
        return "(or " + " ".join(term_sexpr(a) for a in t.args) + ")"
    if isinstance(t, TImplies):
        return f"(=> {term_sexpr(t.left)} {term_sexpr(t.right)})"
    if isinstance(t, TSetMember):
        return f"(set.member {term_sexpr(t.elem)} {term_sexpr(t.set)})"
    if isinstance(t, TSetSubset):
        return f"(set.subset {term_sexpr(t.left)} {term_sexpr(t.right)})"
    if isinstance(t, TSetInter):
        return f"(set.inter {term_sexpr(t.left)} {term_sexpr(t.right)})"
    if isinstance(t, TSetUnion):
        return f"(set.union {term_sexpr(t.left)} {term_sexpr(t.right)})"
    if isinstance(t, TSetSingleton):
        return f"(set.singleton {term_sexpr(t.elem)})"
    if isinstance(t, TSetEmpty):
        return f"(as set.empty (Set {sort_sexpr(t.elem)}))"
    if isinstance(t, TBVOp):
        return f"({t.op} " + " ".join(term_sexpr(a) for a in t.args) + ")"
    if isinstance(t, TStrInRe):
        return f"(str.in_re {term_sexpr(t.s)} {regex_sexpr(t.re)})"
    raise TypeError(f"not a term: {t!r}")


# ---------------------------------------------------------------------------
# Sort checking
# ---------------------------------------------------------------------------


def sort_check(t: Term, signatures: Optional[dict] = None) -> Sort:
    """Recompute the sort of every node and verify consistency.

    ``signatures`` maps applied function/constructor names to (arg sorts,
    result sort); applications are checked against it when present.
    """

    def go(term: Term) -> Sort:
        if isinstance(term, TApp):
            arg_sorts = tuple(go(a) for a in term.args)
            if signatures is not None and term.fn in signatures:
                want_args, want_res = signatures[term.fn]
                if tuple(want_args) != arg_sorts or want_res != term.result:
                    raise InternalSortError(
                        f"application {term.fn}: got {[sort_sexpr(s) for s in arg_sorts]}"
                    )
            return term.result
        if isinstance(term, TIte):
            if not isinstance(go(term.cond), SBool):
                raise InternalSortError("ite guard is not Bool")
            st, se = go(term.then), go(term.els)
            if st != se:
                raise InternalSortError(f"ite branches {sort_sexpr(st)} vs {sort_sexpr(se)}")
            return st
        if isinstance(term, TEq):
            sl, sr = go(term.left), go(term.right)
            if sl != sr:
                raise InternalSortError(f"= on {sort_sexpr(sl)} vs {sort_sexpr(sr)}")
            return BOOL_S
        if isinstance(term, (TAnd, TOr)):
            for a in term.args:
                if not isinstance(go(a), SBool):
                    raise InternalSortError("boolean connective over non-Bool")
            return BOOL_S
        if isinstance(term, (TImplies,)):
            if not (isinstance(go(term.left), SBool) and isinstance(go(term.right), SBool)):
                raise InternalSortError("=> over non-Bool")
            return BOOL_S
        if isinstance(term, TNot):
            if not isinstance(go(term.arg), SBool):
                raise InternalSortError("not over non-Bool")
            return BOOL_S
        if isinstance(term, TSetMember):
            se, ss = go(term.elem), go(term.set)
            if ss != SSet(se):
                raise InternalSortError("set.member sorts disagree")
            return BOOL_S
        if isinstance(term, (TSetSubset, TSetInter, TSetUnion)):
            sl, sr = go(term.left), go(term.right)
            if sl != sr or not isinstance(sl, SSet):
                raise InternalSortError("set operation sorts disagree")
            return BOOL_S if isinstance(term, TSetSubset) else sl
        if isinstance(term, TSetSingleton):
            return SSet(go(term.elem))
        if isinstance(term, TVal):
            s = go(term.arg)
            if not isinstance(s, SOption):
                raise InternalSortError("val over non-Option")
            return s.elem
        if isinstance(term, TIsSome):
            if not isinstance(go(term.arg), SOption):
                raise InternalSortError("is-some over non-Option")
            return BOOL_S
        if isinstance(term, TSome):
            return SOption(go(term.arg))
        if isinstance(term, TBVOp):
            for a in term.args:
                if not isinstance(go(a), SBV64):
                    raise InternalSortError(f"{term.op} over non-bitvector")
            return _BV_RESULT[term.op]
        if isinstance(term, TStrInRe):
            if not isinstance(go(term.s), SString):
                raise InternalSortError("str.in_re over non-String")
            return BOOL_S
        if isinstance(term, TBVLit):
            if not (I64_MIN <= term.i <= I64_MAX):
                raise InternalSortError("bitvector literal out of range")
            return BV64_S
        return sort_of(term)

    return go(t)
