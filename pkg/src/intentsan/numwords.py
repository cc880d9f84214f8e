"""English cardinal words for digit runs.

Values 0..999,999 are spelled as space-separated words without "and" or hyphens
("fifty five", "one hundred five"). Longer runs, and runs with a leading zero,
are spelled digit by digit.
"""

ONES = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
    "ten", "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen",
    "seventeen", "eighteen", "nineteen",
]
TENS = ["", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety"]

MAX_SPELLED = 999_999


def _below_thousand(n: int) -> list[str]:
    words = []
    hundreds, rest = divmod(n, 100)
    if hundreds:
        words += [ONES[hundreds], "hundred"]
    if rest >= 20:
        tens, ones = divmod(rest, 10)
        words.append(TENS[tens])
        if ones:
            words.append(ONES[ones])
    elif rest or not hundreds:
        words.append(ONES[rest])
    return words


def number_to_words(n: int) -> list[str]:
    if n < 0 or n > MAX_SPELLED:
        raise ValueError(f"{n} outside 0..{MAX_SPELLED}")
    thousands, rest = divmod(n, 1000)
    if not thousands:
        return _below_thousand(rest)
    words = _below_thousand(thousands) + ["thousand"]
    if rest:
        words += _below_thousand(rest)
    return words


def digits_to_words(run: str) -> list[str]:
    """Spell one maximal run of ASCII digits."""
    if len(run) > 1 and run[0] == "0" or int(run) > MAX_SPELLED:
        return [ONES[int(ch)] for ch in run]
    return number_to_words(int(run))
