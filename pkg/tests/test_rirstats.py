import gzip
from decimal import Decimal
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from inblock.rirstats import (PUBLISHED_FIG2, PUBLISHED_LARGER_THAN_29, UnknownSize,
                              UnreadableInput, economics_report, fee_position,
                              fig2_fixture_path, parse_delegated_extended, round_significant,
                              size_distribution, throughput_requirement, whole_space_cost)

SAMPLE = """\
2|apnic|20180501|5|19850701|20180430|+1000
apnic|*|ipv6|*|3|summary
# a comment
apnic|AU|ipv4|1.0.0.0|256|20110811|assigned
apnic|JP|ipv6|2001:200::|35|19990813|allocated
apnic|CN|ipv6|2001:250::|32|20000426|allocated|A9178D2F|e-stats
apnic|AU|ipv6|2001:db8::|48|20100101|assigned
apnic|ZZ|ipv6|2400::|12||available
apnic|NZ|ipv6|2001:db9::|32|20100101|reserved
apnic|KR|asn|4608|1|19910101|allocated
apnic|XX|ipv6|2001:zz::|32|20100101|allocated
apnic|XX|ipv6|2001:db8::|129|20100101|allocated
apnic|XX|ipv6|2001:db8::|32|2010-01-01|allocated
too|short
"""


def test_parser_filters_and_reports():
    result = parse_delegated_extended(SAMPLE.splitlines())
    assert [(r.country, r.prefix_length) for r in result.records] == [
        ("JP", 35), ("CN", 32), ("AU", 48)]
    assert [d.split(":")[0] for d in result.diagnostics] == [
        "line 11", "line 12", "line 13", "line 14"]
    assert result.records[1].opaque_id == "A9178D2F"
    assert result.records[1].extensions == ("e-stats",)


def test_round_trip_of_kept_rows():
    lines = SAMPLE.splitlines()
    records = parse_delegated_extended(lines).records
    assert [r.to_line() for r in records] == lines[4:7]


def test_reads_gzip_and_plain_files(tmp_path):
    plain = tmp_path / "stats.txt"
    plain.write_text(SAMPLE)
    packed = tmp_path / "stats.txt.gz"
    packed.write_bytes(gzip.compress(SAMPLE.encode()))
    assert parse_delegated_extended(plain) == parse_delegated_extended(packed)
    with pytest.raises(UnreadableInput):
        parse_delegated_extended(tmp_path / "missing.txt")


def test_histogram_total_matches_records():
    records = parse_delegated_extended(SAMPLE.splitlines()).records
    dist = size_distribution(records)
    assert dist.total == len(records) == sum(dist.histogram.values())
    assert dist.histogram == {32: 1, 35: 1, 48: 1}
    assert dist.larger_than == 0


def test_vendored_fixture_matches_published_counts():
    parsed = parse_delegated_extended(fig2_fixture_path())
    assert parsed.diagnostics == []
    dist = size_distribution(parsed.records)
    for length, count in PUBLISHED_FIG2.items():
        assert dist.histogram[length] == count
    assert dist.larger_than == PUBLISHED_LARGER_THAN_29


def test_throughput_exact_and_rounded():
    tps = throughput_requirement(58_700)
    assert tps == Fraction(58_700, 31_536_000)
    assert round_significant(tps, 2) == Decimal("0.0019")
    with pytest.raises(ValueError):
        throughput_requirement(-1)


@given(st.integers(0, 10**9), st.integers(0, 10**9))
def test_throughput_is_linear(a, b):
    assert throughput_requirement(a + b) == throughput_requirement(a) + throughput_requirement(b)


@pytest.mark.parametrize("x, digits, expected", [
    (Fraction(1), 2, "1.0"), (Fraction(999, 1000), 2, "1.0"), (Fraction(1, 400), 1, "0.003"),
    (Fraction(-12345), 3, "-1.23E+4"), (Fraction(0), 2, "0"), (Fraction(1, 1000), 2, "0.0010"),
])
def test_round_significant(x, digits, expected):
    assert round_significant(x, digits) == Decimal(expected)


def test_whole_space_cost():
    assert whole_space_cost(3000, 20) == 12_288_000
    assert whole_space_cost(3000, 32) == 3000
    assert whole_space_cost(3000, 0) == 3000 * 2**32
    with pytest.raises(ValueError):
        whole_space_cost(3000, 33)


def test_fee_positions():
    assert fee_position(3000, 32).position == "above"
    assert fee_position(3000, 32).above_rir_max
    assert fee_position(300, 48).position == "within"
    assert fee_position(50, 48).position == "below"
    with pytest.raises(UnknownSize):
        fee_position(1, 40)


def test_economics_report_shows_both_whole_space_figures():
    report = economics_report()
    ws = report["whole_space"]
    assert ws["computed"] == "12884901888000.00"
    assert ws["published"] == "12600000000000.00"
    assert ws["ratio_computed_to_published"] == "1.0226"
    assert report["pool_cost"]["yearly_cost"] == "12288000.00"
    assert report["throughput"]["tx_per_second"] == "0.0019"
