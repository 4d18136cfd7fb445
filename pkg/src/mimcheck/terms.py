"""Message term algebra.

Terms are the values exchanged in protocol runs: atoms (agent identities,
nonces, key handles, opaque data), flattened concatenations, and encryptions
under a key handle. Everything is immutable and hashable so terms can sit in
knowledge sets and in the global-state vectors of the search.

Encryption is perfect: a ciphertext reveals nothing about its body and can
only be opened with the inverse key. A distinguished NULL term stands for
"never sent" and has size 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Optional, Union


class AtomKind(str, Enum):
    AGENT = "agent"
    NONCE = "nonce"
    SYMKEY = "symkey"
    PUBKEY = "pubkey"
    PRIVKEY = "privkey"
    DATA = "data"


KEY_KINDS = frozenset({AtomKind.SYMKEY, AtomKind.PUBKEY, AtomKind.PRIVKEY})

# rank used for deterministic ordering of atoms of different kinds
_KIND_RANK = {k: i for i, k in enumerate(AtomKind)}


@dataclass(frozen=True)
class Atom:
    """A named indivisible value with a size class (abstract length)."""

    kind: AtomKind
    ident: str
    size_class: int = 1

    def __post_init__(self):
        if self.size_class <= 0:
            raise ValueError("size_class must be positive, got %r" % (self.size_class,))
        if not self.ident:
            raise ValueError("atom needs a non-empty ident")
        object.__setattr__(self, "_h", hash((self.kind, self.ident, self.size_class)))

    def __hash__(self):
        return self._h

    def sort_key(self):
        return (_KIND_RANK[self.kind], self.ident)


@dataclass(frozen=True)
class Key:
    """A usable key: a key-kind atom plus the handle of its inverse.

    Symmetric keys are their own inverse. For asymmetric pairs the inverse of
    the public handle is exactly the private handle and vice versa. owners
    lists the agent identities the key belongs to.
    """

    handle: Atom
    inverse_handle: Atom
    owners: tuple[str, ...] = ()

    def __post_init__(self):
        if self.handle.kind not in KEY_KINDS:
            raise ValueError("key handle must be a key-kind atom, got %s" % self.handle.kind)
        if self.inverse_handle.kind not in KEY_KINDS:
            raise ValueError("inverse handle must be a key-kind atom")
        if (self.handle.kind == AtomKind.SYMKEY) != (self.inverse_handle.kind == AtomKind.SYMKEY):
            raise ValueError("symmetric keys must be self-inverse")
        if self.handle.kind == AtomKind.SYMKEY and self.handle != self.inverse_handle:
            raise ValueError("symmetric keys must be self-inverse")
        object.__setattr__(self, "_h", hash((self.handle, self.inverse_handle, self.owners)))

    def __hash__(self):
        return self._h

    def inverse(self) -> "Key":
        return Key(self.inverse_handle, self.handle, self.owners)


class Term:
    """Base class; concrete terms are AtomTerm, Concat, Enc and NULL."""

    __slots__ = ()


@dataclass(frozen=True)
class AtomTerm(Term):
    atom: Atom

    def __post_init__(self):
        object.__setattr__(self, "_h", hash(("at", self.atom)))

    def __hash__(self):
        return self._h


@dataclass(frozen=True)
class Concat(Term):
    parts: tuple[Term, ...]

    def __post_init__(self):
        if len(self.parts) < 2:
            raise ValueError("Concat needs at least two parts")
        for p in self.parts:
            if isinstance(p, Concat):
                raise ValueError("Concat parts must be flattened")
            if isinstance(p, _Null):
                raise ValueError("NULL cannot appear inside a term")
        object.__setattr__(self, "_h", hash(("cat",) + self.parts))

    def __hash__(self):
        return self._h


@dataclass(frozen=True)
class Enc(Term):
    body: Term
    key: Key

    def __post_init__(self):
        if isinstance(self.body, _Null):
            raise ValueError("NULL cannot appear inside a term")
        object.__setattr__(self, "_h", hash(("enc", self.body, self.key)))

    def __hash__(self):
        return self._h


@dataclass(frozen=True)
class _Null(Term):
    pass


#: the "never sent" placeholder; size 0, contains no encryption
NULL: Term = _Null()


def atom(kind: AtomKind, ident: str, size_class: int = 1) -> AtomTerm:
    return AtomTerm(Atom(kind, ident, size_class))


def cat(*parts: Term) -> Term:
    """Concatenate terms, flattening nested concatenations.

    A single part collapses to itself, so cat is total on non-empty input and
    always returns a canonical term.
    """
    if not parts:
        raise ValueError("cat needs at least one part")
    flat: list[Term] = []
    for p in parts:
        if isinstance(p, Concat):
            flat.extend(p.parts)
        elif isinstance(p, _Null):
            raise ValueError("NULL cannot be concatenated")
        else:
            flat.append(p)
    if len(flat) == 1:
        return flat[0]
    return Concat(tuple(flat))


def encrypt(body: Term, key: Key) -> Enc:
    return Enc(canon(body), key)


def decrypt(term: Term, key: Key) -> Optional[Term]:
    """Open an encryption. Returns the body, or None on any mismatch.

    None is the distinguishable failure value: wrong key and not-an-encryption
    both land there, mirroring an agent that cannot tell why a ciphertext
    refused to open.
    """
    if not isinstance(term, Enc):
        return None
    if key.handle != term.key.inverse_handle:
        return None
    return term.body


def canon(t: Term) -> Term:
    """Canonical form: concatenations flattened, single-part runs collapsed."""
    if isinstance(t, Concat):
        return cat(*[canon(p) for p in t.parts])
    if isinstance(t, Enc):
        return Enc(canon(t.body), t.key)
    return t


def is_canonical(t: Term) -> bool:
    return canon(t) == t


def subterms(t: Term) -> Iterator[Term]:
    """Yield t and every transitive part/body. Keys are not subterms."""
    yield t
    if isinstance(t, Concat):
        for p in t.parts:
            yield from subterms(p)
    elif isinstance(t, Enc):
        yield from subterms(t.body)


def subterm_exists(needle: Term, haystack: Term) -> bool:
    return any(s == needle for s in subterms(haystack))


def contains_enc(t: Term) -> bool:
    return any(isinstance(s, Enc) for s in subterms(t))


def encryption_class(t: Term) -> int:
    """Structural encryption class of a term.

    2 for a single encryption at the root, 0 when no encryption occurs
    anywhere, 1 otherwise (some encrypted part mixed into a concatenation).
    """
    if isinstance(t, Enc):
        return 2
    return 1 if contains_enc(t) else 0


def size_of(t: Term, enc_overhead: int = 0) -> int:
    """Abstract size: additive over concatenation, atoms carry size classes.

    Encryption adds enc_overhead per layer (0 by default, i.e. ciphertexts
    weigh exactly their plaintext). NULL has size 0.
    """
    if isinstance(t, _Null):
        return 0
    if isinstance(t, AtomTerm):
        return t.atom.size_class
    if isinstance(t, Concat):
        return sum(size_of(p, enc_overhead) for p in t.parts)
    if isinstance(t, Enc):
        return size_of(t.body, enc_overhead) + enc_overhead
    raise TypeError("not a term: %r" % (t,))


def sort_key(t: Term):
    """Total deterministic order over terms, used wherever sets get listed."""
    if isinstance(t, _Null):
        return (0,)
    if isinstance(t, AtomTerm):
        return (1, t.atom.sort_key())
    if isinstance(t, Concat):
        return (2, len(t.parts)) + tuple(sort_key(p) for p in t.parts)
    if isinstance(t, Enc):
        return (3, t.key.handle.sort_key(), sort_key(t.body))
    raise TypeError("not a term: %r" % (t,))


def term_str(t: Term) -> str:
    if isinstance(t, _Null):
        return "null"
    if isinstance(t, AtomTerm):
        return t.atom.ident
    if isinstance(t, Concat):
        return ", ".join(term_str(p) for p in t.parts)
    if isinstance(t, Enc):
        return "{%s}%s" % (term_str(t.body), t.key.handle.ident)
    raise TypeError("not a term: %r" % (t,))


def mk_keypair(owner: str, pub_size: int = 1, priv_size: int = 1) -> tuple[Key, Key]:
    """Build the pk/sk pair of an agent. Returns (public, private)."""
    pub = Atom(AtomKind.PUBKEY, "pk(%s)" % owner, pub_size)
    priv = Atom(AtomKind.PRIVKEY, "sk(%s)" % owner, priv_size)
    return Key(pub, priv, (owner,)), Key(priv, pub, (owner,))
