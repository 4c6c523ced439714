"""
Representation specifications: ordered direct sums of (pseudo)tensor representations of O(d).

Wire format: ``term ('+' term)*`` with ``term = <mult>x<order><parity>``, parity ``n`` (tensor) or
``p`` (pseudotensor), e.g. ``8x0p+4x1n``. The canonical string always prints the multiplicity.
"""
import re
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.core.errors import RepSpecParseError

_TERM = re.compile(r"(?P<mult>\d+)x(?P<order>-?\d+)(?P<parity>[a-z]?)")


class Parity(str, Enum):
    TENSOR = "n"
    PSEUDO = "p"


class RepTerm(BaseModel):
    model_config = ConfigDict(frozen=True)

    multiplicity: int = Field(..., gt=0)
    order: int = Field(..., ge=0)
    parity: Parity = Parity.TENSOR

    def width(self, d: int) -> int:
        return self.multiplicity * d ** self.order

    def __str__(self) -> str:
        return f"{self.multiplicity}x{self.order}{self.parity.value}"


class RepSpec(BaseModel):
    """How a feature block transforms; term order is significant and never normalised."""

    model_config = ConfigDict(frozen=True)

    terms: tuple[RepTerm, ...] = Field(..., min_length=1)
    dim_space: int = Field(3, ge=1)

    @property
    def width(self) -> int:
        return sum(term.width(self.dim_space) for term in self.terms)

    @property
    def is_trivial(self) -> bool:
        """True when every term is an ordinary scalar, i.e. rho(R) = id for all R."""
        return all(t.order == 0 and t.parity is Parity.TENSOR for t in self.terms)

    def term_slices(self) -> list[tuple[RepTerm, slice]]:
        out, offset = [], 0
        for term in self.terms:
            size = term.width(self.dim_space)
            out.append((term, slice(offset, offset + size)))
            offset += size
        return out

    def even_scalar_mask(self) -> np.ndarray:
        """Columns invariant under all of O(d): order-0 tensor channels."""
        mask = np.zeros(self.width, dtype=bool)
        for term, cols in self.term_slices():
            if term.order == 0 and term.parity is Parity.TENSOR:
                mask[cols] = True
        return mask

    def __str__(self) -> str:
        return "+".join(str(t) for t in self.terms)


def parse_rep_spec(text: str, d: int = 3) -> RepSpec:
    """Parse ``8x0p+4x1n``-style strings; errors name the offending span."""
    if not text or not text.strip():
        raise RepSpecParseError(text or "", (0, len(text or "")), "empty representation")
    terms: list[RepTerm] = []
    pos = 0
    for chunk in text.split("+"):
        start, end = pos, pos + len(chunk)
        pos = end + 1
        match = _TERM.fullmatch(chunk)
        if match is None:
            raise RepSpecParseError(text, (start, end), "malformed term")
        if match["parity"] not in ("n", "p"):
            raise RepSpecParseError(
                text, (start + match.start("parity"), start + max(match.end("parity"), match.start("parity") + 1)),
                "parity must be 'n' or 'p'",
            )
        multiplicity, order = int(match["mult"]), int(match["order"])
        if multiplicity == 0:
            raise RepSpecParseError(text, (start + match.start("mult"), start + match.end("mult")), "zero multiplicity")
        if order < 0:
            raise RepSpecParseError(text, (start + match.start("order"), start + match.end("order")), "negative order")
        terms.append(RepTerm(multiplicity=multiplicity, order=order, parity=Parity(match["parity"])))
    return RepSpec(terms=tuple(terms), dim_space=d)


def rep_width(spec: RepSpec) -> int:
    return spec.width
