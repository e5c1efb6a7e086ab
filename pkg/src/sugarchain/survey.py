"""Questionnaire ingestion and exact marginal statistics.

Counts are tabulated as exact rationals, never floats, so the reported
percentages are reproduced digit for digit and a re-run is byte-identical.
The bundled fixture is synthetic: it matches every published marginal but
the per-row combinations carry no survey subject's identity.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence, TextIO

from .errors import BadValue, EmptyFile, EmptyInput, SchemaMismatch

REPORT_HEADER = "sugarchain-survey-report v1"

_YNDK = ("yes", "no", "dont_know")

# Option tuples follow the questionnaire's own listing order.
ENUM_OPTIONS: dict[str, tuple[str, ...]] = {
    "q1": ("y1_5", "y6_10", "gt10"),
    "q2": ("yes", "no"),
    "q4": _YNDK,
    "q6": _YNDK,
    "q7": ("instant", "after"),
    "q8": ("stated", "none"),
    "q9": ("must_find", "easy_sell", "dont_know"),
    "q10": _YNDK,
    "q11": _YNDK,
    "q12": ("farmer", "government", "others"),
    "q13": _YNDK,
    "q14": _YNDK,
    "q15": ("gov_office", "private_shop", "others"),
}

NUMERIC_RANGE: dict[str, tuple[int, int]] = {
    "q3": (8, 11),
    "q5": (300, 1200),
}

QUESTION_IDS = tuple(f"q{i}" for i in range(1, 16))

QUESTION_TITLES: dict[str, str] = {
    "q1": "years farming sugarcane",
    "q2": "sugarcane is the major farm",
    "q3": "months to harvest",
    "q4": "production cost recovered",
    "q5": "mill purchase rate (paise/kg)",
    "q6": "affected by worms or viruses",
    "q7": "payment timing",
    "q8": "one major cultivation problem",
    "q9": "finding a buyer",
    "q10": "weather impact",
    "q11": "fertilizer and seeds easily available",
    "q12": "how cane reaches the factory",
    "q13": "wild animal impact",
    "q14": "other problems (transport, taxes, ...)",
    "q15": "seed source",
}

EXPECTED_HEADER = ("farmer_id",) + QUESTION_IDS


@dataclass(frozen=True)
class SurveyRecord:
    farmer_id: str
    q1_years: str
    q2_major: str
    q2_other_crop: str | None
    q3_harvest_months: int
    q4_cost_recovered: str
    q5_rate_paise_per_kg: int
    q6_worms: str
    q7_payment: str
    q7_delay_days: int | None
    q8_major_problem: str
    q8_problem_text: str | None
    q9_buyer: str
    q10_weather: str
    q11_inputs_easy: str
    q12_transport: str
    q13_wild_animals: str
    q14_other_problems: str
    q15_seed_source: str

    def option(self, question: str) -> str:
        return {
            "q1": self.q1_years,
            "q2": self.q2_major,
            "q4": self.q4_cost_recovered,
            "q6": self.q6_worms,
            "q7": self.q7_payment,
            "q8": self.q8_major_problem,
            "q9": self.q9_buyer,
            "q10": self.q10_weather,
            "q11": self.q11_inputs_easy,
            "q12": self.q12_transport,
            "q13": self.q13_wild_animals,
            "q14": self.q14_other_problems,
            "q15": self.q15_seed_source,
        }[question]

    def numeric(self, question: str) -> int:
        return {"q3": self.q3_harvest_months, "q5": self.q5_rate_paise_per_kg}[question]


def _cell_error(row: int, column: str, message: str) -> BadValue:
    return BadValue(f"row {row}, column {column}: {message}")


def _parse_enum(row: int, column: str, value: str) -> str:
    if value not in ENUM_OPTIONS[column]:
        raise _cell_error(row, column, f"{value!r} is not one of {ENUM_OPTIONS[column]}")
    return value


def _parse_tagged(row: int, column: str, value: str, plain: str, tagged: str) -> tuple[str, str | None]:
    """Values shaped either `plain` or `tagged:<detail>` with detail required."""
    if value == plain:
        return plain, None
    prefix = tagged + ":"
    if value.startswith(prefix) and value[len(prefix):].strip():
        return tagged, value[len(prefix):].strip()
    raise _cell_error(row, column, f"expected {plain!r} or {tagged}:<text>, got {value!r}")


def _parse_int(row: int, column: str, value: str, lo: int, hi: int) -> int:
    try:
        number = int(value)
    except ValueError:
        raise _cell_error(row, column, f"{value!r} is not an integer") from None
    if not lo <= number <= hi:
        raise _cell_error(row, column, f"{number} outside [{lo}, {hi}]")
    return number


def _parse_row(index: int, cells: Sequence[str]) -> SurveyRecord:
    if len(cells) != len(EXPECTED_HEADER):
        raise SchemaMismatch(
            f"row {index}: expected {len(EXPECTED_HEADER)} columns, got {len(cells)}"
        )
    value = dict(zip(EXPECTED_HEADER, (c.strip() for c in cells)))
    if not value["farmer_id"]:
        raise _cell_error(index, "farmer_id", "must be non-empty")

    q2, q2_crop = _parse_tagged(index, "q2", value["q2"], "yes", "no")
    q7, q7_days = value["q7"], None
    if q7 != "instant":
        _, days_text = _parse_tagged(index, "q7", value["q7"], "instant", "after")
        q7 = "after"
        q7_days = _parse_int(index, "q7", days_text or "", 1, 3650)
    q8, q8_text = _parse_tagged(index, "q8", value["q8"], "none", "stated")

    return SurveyRecord(
        farmer_id=value["farmer_id"],
        q1_years=_parse_enum(index, "q1", value["q1"]),
        q2_major=q2,
        q2_other_crop=q2_crop,
        q3_harvest_months=_parse_int(index, "q3", value["q3"], *NUMERIC_RANGE["q3"]),
        q4_cost_recovered=_parse_enum(index, "q4", value["q4"]),
        q5_rate_paise_per_kg=_parse_int(index, "q5", value["q5"], *NUMERIC_RANGE["q5"]),
        q6_worms=_parse_enum(index, "q6", value["q6"]),
        q7_payment=q7,
        q7_delay_days=q7_days,
        q8_major_problem=q8,
        q8_problem_text=q8_text,
        q9_buyer=_parse_enum(index, "q9", value["q9"]),
        q10_weather=_parse_enum(index, "q10", value["q10"]),
        q11_inputs_easy=_parse_enum(index, "q11", value["q11"]),
        q12_transport=_parse_enum(index, "q12", value["q12"]),
        q13_wild_animals=_parse_enum(index, "q13", value["q13"]),
        q14_other_problems=_parse_enum(index, "q14", value["q14"]),
        q15_seed_source=_parse_enum(index, "q15", value["q15"]),
    )


def read_survey(handle: TextIO) -> list[SurveyRecord]:
    reader = csv.reader(handle)
    try:
        header = next(reader)
    except StopIteration:
        raise EmptyFile("survey file has no header row") from None
    if tuple(h.strip() for h in header) != EXPECTED_HEADER:
        raise SchemaMismatch(
            f"header must be exactly {','.join(EXPECTED_HEADER)}"
        )
    records = [_parse_row(index, cells) for index, cells in enumerate(reader, start=1)]
    if not records:
        raise EmptyFile("survey file has a header but no records")
    return records


def load_survey(path: str | Path) -> list[SurveyRecord]:
    with open(path, encoding="utf-8", newline="") as handle:
        return read_survey(handle)


def bundled_fixture_path() -> Path:
    return Path(__file__).parent / "data" / "survey_case_study.csv"


# -- statistics ------------------------------------------------------------

@dataclass(frozen=True)
class Distribution:
    question: str
    options: tuple[str, ...]
    counts: tuple[int, ...]

    @property
    def n(self) -> int:
        return sum(self.counts)

    def count(self, option: str) -> int:
        return self.counts[self.options.index(option)]

    def fraction(self, option: str) -> Fraction:
        return Fraction(self.count(option), self.n)

    @property
    def fractions(self) -> tuple[Fraction, ...]:
        return tuple(Fraction(c, self.n) for c in self.counts)


@dataclass(frozen=True)
class NumericSummary:
    question: str
    n: int
    minimum: int
    maximum: int
    mean: Fraction


@dataclass(frozen=True)
class DelaySummary:
    fraction_delayed: Fraction
    min_days: int | None
    max_days: int | None


def tabulate(records: Sequence[SurveyRecord], question: str) -> Distribution:
    """Exact counts for one enum question, options in questionnaire order."""
    if not records:
        raise EmptyInput("no survey records")
    options = ENUM_OPTIONS.get(question)
    if options is None:
        raise ValueError(f"{question!r} is not an enumerated question")
    counts = dict.fromkeys(options, 0)
    for record in records:
        counts[record.option(question)] += 1
    return Distribution(question=question, options=options, counts=tuple(counts[o] for o in options))


def numeric_summary(records: Sequence[SurveyRecord], question: str) -> NumericSummary:
    if not records:
        raise EmptyInput("no survey records")
    if question not in NUMERIC_RANGE:
        raise ValueError(f"{question!r} is not a numeric question")
    values = [record.numeric(question) for record in records]
    return NumericSummary(
        question=question,
        n=len(values),
        minimum=min(values),
        maximum=max(values),
        mean=Fraction(sum(values), len(values)),
    )


def tabulate_all(records: Sequence[SurveyRecord]) -> list[Distribution | NumericSummary]:
    """All fifteen questions in order; enum and numeric entries interleaved."""
    return [
        numeric_summary(records, q) if q in NUMERIC_RANGE else tabulate(records, q)
        for q in QUESTION_IDS
    ]


def payment_delay_summary(records: Sequence[SurveyRecord]) -> DelaySummary:
    """Share of farmers paid late, and the extreme stated delays in days."""
    if not records:
        raise EmptyInput("no survey records")
    delays = [r.q7_delay_days for r in records if r.q7_payment == "after"]
    fraction = Fraction(len(delays), len(records))
    if not delays:
        return DelaySummary(fraction_delayed=fraction, min_days=None, max_days=None)
    stated = [d for d in delays if d is not None]
    return DelaySummary(
        fraction_delayed=fraction, min_days=min(stated), max_days=max(stated)
    )


# -- report ----------------------------------------------------------------

def format_decimal(value: Fraction, places: int = 6) -> str:
    """Exact decimal when it terminates within `places`, else rounded there."""
    scaled = value * 10**places
    number = scaled.numerator // scaled.denominator
    if 2 * (scaled.numerator % scaled.denominator) >= scaled.denominator:
        number += 1
    sign = "-" if number < 0 else ""
    digits = f"{abs(number):0{places + 1}d}"
    split = len(digits) - places  # not -places: that breaks at places=0
    whole, frac = digits[:split], digits[split:].rstrip("0")
    return f"{sign}{whole}.{frac}" if frac else f"{sign}{whole}"


def format_percent(fraction: Fraction) -> str:
    return format_decimal(fraction * 100) + "%"


def export_report(
    entries: Sequence[Distribution | NumericSummary],
    path: str | Path | None = None,
    delay: DelaySummary | None = None,
) -> str:
    """Stable text report; identical input bytes produce identical output."""
    if not entries:
        raise EmptyInput("nothing to report")
    n = entries[0].n
    lines = [REPORT_HEADER, f"records {n}", ""]
    for entry in entries:
        lines.append(f"[{entry.question}] {QUESTION_TITLES[entry.question]}")
        if isinstance(entry, Distribution):
            for option, count in zip(entry.options, entry.counts):
                lines.append(
                    f"  {option} {count}/{entry.n} {format_percent(Fraction(count, entry.n))}"
                )
        else:
            lines.append(
                f"  min {entry.minimum} max {entry.maximum} mean {format_decimal(entry.mean)}"
            )
        lines.append("")
    if delay is not None:
        extrema = (
            f" min_days {delay.min_days} max_days {delay.max_days}"
            if delay.min_days is not None
            else ""
        )
        lines.append(f"payment delayed {format_percent(delay.fraction_delayed)}{extrema}")
        lines.append("")
    text = "\n".join(lines)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
