"""Text notation for dual-rate schedules.

Grammar (whitespace-insensitive, case-insensitive keywords)::

    spec    := "etaS=" NUM
             | rate "," rate               (one etaC and one etaI, any order)
    rate    := NAME "=" NUM [vt]
    NAME    := "etaC" | "etaI" | "eta0C" | "eta0I"
    vt      := "VT" INT "-" INT [","] [NUM "%"] ("inc" | "dec" | "increase" | "decrease")

The percentage is the per-trigger change as a percent of the initial rate and
defaults to 0.01 when omitted. Examples::

    etaC=0.05, etaI=0.01 VT175-225 0.01% inc
    etaC=0.05 VT5975-6025 0.01% dec, etaI=0.01 VT395-405 0.01% inc
    etaS=0.03
"""

from __future__ import annotations

import re
from decimal import Decimal, InvalidOperation

from .errors import ConfigError, ParseError
from .scheduler import DECREASE, INCREASE, DualRateConfig, RateSchedule

DEFAULT_PERCENT = "0.01"

_WS = re.compile(r"\s*")
_NAME = re.compile(r"eta\^?0?_?([CIS])\s*=", re.IGNORECASE)
_NUM = re.compile(r"[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?")
_VT = re.compile(r"VT\s*(\d+)\s*-\s*(\d+)", re.IGNORECASE)
_PCT = re.compile(r"(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?\s*%")
_DIR = re.compile(r"(increase|decrease|inc|dec)\b", re.IGNORECASE)


class _Scanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip(self) -> None:
        self.pos = _WS.match(self.text, self.pos).end()

    def take(self, pattern: re.Pattern):
        self.skip()
        m = pattern.match(self.text, self.pos)
        if m:
            self.pos = m.end()
        return m

    def literal(self, ch: str) -> bool:
        self.skip()
        if self.text.startswith(ch, self.pos):
            self.pos += 1
            return True
        return False

    def fail(self, message: str):
        self.skip()
        raise ParseError(message, self.text, self.pos)

    def at_end(self) -> bool:
        self.skip()
        return self.pos >= len(self.text)


def percent_to_fraction(text: str) -> float:
    try:
        return float(Decimal(text) / 100)
    except InvalidOperation as exc:
        raise ConfigError(f"bad percentage {text!r}") from exc


def fraction_to_percent(fraction: float) -> str:
    return format((Decimal(repr(float(fraction))) * 100).normalize(), "f")


def _parse_rate(sc: _Scanner) -> tuple[str, RateSchedule]:
    m = sc.take(_NAME)
    if not m:
        sc.fail("expected etaC=, etaI= or etaS=")
    which = m.group(1).upper()
    start = sc.pos
    num = sc.take(_NUM)
    if not num:
        sc.fail(f"expected a learning rate after eta{which}=")
    value = float(num.group(0))
    if not value > 0:
        raise ParseError(f"learning rate must be positive, got {num.group(0)}", sc.text, start)
    vt_pos = sc.pos
    vt = sc.take(_VT)
    if not vt:
        return which, RateSchedule.static(value)
    if which == "S":
        raise ParseError("etaS is always static", sc.text, vt_pos)
    lo, hi = int(vt.group(1)), int(vt.group(2))
    sc.literal(",")
    pct = sc.take(_PCT)
    pct_text = pct.group(0).rstrip("% \t") if pct else DEFAULT_PERCENT
    d = sc.take(_DIR)
    if not d:
        sc.fail("expected a direction (inc or dec)")
    direction = INCREASE if d.group(1).lower().startswith("inc") else DECREASE
    try:
        sched = RateSchedule.variable(value, lo, hi, direction, percent_to_fraction(pct_text))
    except ConfigError as exc:
        raise ParseError(str(exc), sc.text, vt_pos) from exc
    return which, sched


def parse_schedule_spec(text: str) -> DualRateConfig:
    """Parse the dual-rate notation into a :class:`DualRateConfig`."""
    sc = _Scanner(text)
    rates: dict[str, RateSchedule] = {}
    while True:
        pos = sc.pos
        which, sched = _parse_rate(sc)
        if which in rates:
            raise ParseError(f"eta{which} given twice", text, pos)
        rates[which] = sched
        if sc.at_end():
            break
        if not sc.literal(","):
            sc.fail("expected ',' or end of text")
    if "S" in rates:
        if len(rates) > 1:
            raise ParseError("etaS cannot be combined with etaC/etaI", text, 0)
        return DualRateConfig.single(rates["S"].initial)
    if set(rates) != {"C", "I"}:
        raise ParseError("both etaC and etaI are required", text, len(text))
    return DualRateConfig(correct=rates["C"], incorrect=rates["I"])


def _format_rate(name: str, sched: RateSchedule) -> str:
    out = f"{name}={sched.initial!r}"
    if sched.is_variable:
        word = "inc" if sched.direction == INCREASE else "dec"
        out += (f" VT{sched.threshold_lo}-{sched.threshold_hi}"
                f" {fraction_to_percent(sched.delta_fraction)}% {word}")
    return out


def format_schedule_spec(config: DualRateConfig) -> str:
    """Render a config in the notation accepted by :func:`parse_schedule_spec`.

    Static equal rates render as ``etaS=<v>``.
    """
    c, i = config.correct, config.incorrect
    if not c.is_variable and not i.is_variable and c.initial == i.initial:
        return f"etaS={c.initial!r}"
    return f"{_format_rate('etaC', c)}, {_format_rate('etaI', i)}"
