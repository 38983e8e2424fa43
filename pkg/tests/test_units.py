"""Size parsing and formatting."""

import pytest

from epcsched._units import GIB, KIB, MIB, format_size, parse_size


class TestParseSize:
    @pytest.mark.parametrize("text,want", [
        ("0", 0),
        ("4096", 4096),
        ("4096B", 4096),
        ("1KiB", KIB),
        ("32MiB", 32 * MIB),
        ("93.5MiB", 98_041_856),
        ("8GiB", 8 * GIB),
        ("1.5 GiB", 3 * GIB // 2),
    ])
    def test_accepts(self, text, want):
        assert parse_size(text) == want

    def test_accepts_plain_int(self):
        assert parse_size(4096) == 4096

    @pytest.mark.parametrize("bad", ["", "MiB", "1KB", "-1", "1.2.3MiB", True])
    def test_rejects(self, bad):
        with pytest.raises(ValueError):
            parse_size(bad)


class TestFormatSize:
    @pytest.mark.parametrize("nbytes,want", [
        (0, "0B"),
        (512, "512B"),
        (KIB, "1KiB"),
        (32 * MIB, "32MiB"),
        (98_041_856, "93.5MiB"),
        (8 * GIB, "8GiB"),
    ])
    def test_formats(self, nbytes, want):
        assert format_size(nbytes) == want

    def test_round_trips(self):
        for n in (0, 1, 4096, 98_041_856, 32 * MIB, 7 * GIB):
            assert parse_size(format_size(n)) == n
