"""
测试文件格式：行为表、分布、报告、校准 CSV 与位文件
"""
import json
import os

import numpy as np
import pytest
import sys
from pathlib import Path

# 添加项目根目录到路径
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.core.nonlocality import honest_chsh_behavior, pr_box
from src.core.certification import certify_behavior
from src.core.sources import exact_sv_distribution
from src.models.errors import CalibrationError, ExtractorParameterError, ScenarioError, SourceModelError
from src.models.source import PrefixParity, SvSourceModel
from src.utils.bits import BitString, atomic_write_many, pack_bits, read_bits, unpack_bits, write_bits
from src.utils.formats import (format_behavior_table, format_key_value, parse_behavior_table,
                               parse_distribution, read_behavior_table, read_calibration_csv,
                               read_distribution, write_behavior_table, write_distribution, write_report)


class TestBehaviorTable:
    """测试行为表文本格式"""

    def test_round_trip_exact(self, tmp_path):
        """测试量子行为写出再读入后逐位相等"""
        behavior = honest_chsh_behavior("phi_plus", 0.9)
        path = tmp_path / "behavior.txt"
        write_behavior_table(path, behavior)
        assert np.array_equal(read_behavior_table(path).table, behavior.table)

    def test_header_and_layout(self):
        text = format_behavior_table(pr_box())
        lines = text.splitlines()
        assert lines[0] == "scenario 2 2 2"
        assert len(lines) == 17
        assert lines[1] == "0 0 0 0 0.5"

    def test_missing_cells_are_zero(self):
        """测试未列出的单元按 0 处理"""
        text = "scenario 1 1 2\n# 注释行\n0 1 1.0\n"
        behavior = parse_behavior_table(text)
        assert list(behavior.table[0]) == [0.0, 1.0]

    def test_malformed_tables(self):
        with pytest.raises(ScenarioError):
            parse_behavior_table("0 0 0 0 1.0\n")
        with pytest.raises(ScenarioError):
            parse_behavior_table("scenario 2 2\n")
        with pytest.raises(ScenarioError):
            parse_behavior_table("scenario 1 1 2\n0 0\n")
        with pytest.raises(ScenarioError):
            parse_behavior_table("scenario 1 1 2\n0 2 1.0\n")
        with pytest.raises(ScenarioError):
            parse_behavior_table("scenario 1 1 2\n0 0 0.4\n0 1 0.4\n")


class TestDistributionFile:
    """测试分布文本格式"""

    def test_round_trip(self, tmp_path):
        distribution = exact_sv_distribution(SvSourceModel(epsilon=0.1, strategy=PrefixParity(0.1)), 4)
        path = tmp_path / "dist.txt"
        write_distribution(path, distribution)
        assert np.array_equal(read_distribution(path).probabilities, distribution.probabilities)

    def test_msb_first_and_missing_entries(self):
        distribution = parse_distribution("10 0.75\n01 0.25\n")
        assert list(distribution.probabilities) == [0.0, 0.25, 0.75, 0.0]

    def test_malformed(self):
        with pytest.raises(SourceModelError):
            parse_distribution("")
        with pytest.raises(SourceModelError):
            parse_distribution("0a 1.0\n")
        with pytest.raises(SourceModelError):
            parse_distribution("0 0.5\n11 0.5\n")


class TestReports:
    """测试报告输出"""

    def test_write_report(self, tmp_path):
        """测试同时写出 JSON 与 key = value 文本"""
        report = certify_behavior(honest_chsh_behavior(), 100)
        files = write_report(tmp_path / "chsh-report", report)
        assert [f.name for f in files] == ["chsh-report.json", "chsh-report.txt"]
        data = json.loads(files[0].read_text(encoding="utf-8"))
        assert data["certified_bits"] == 100
        text = files[1].read_text(encoding="utf-8")
        assert "certified_bits = 100\n" in text

    def test_flatten_nested(self):
        text = format_key_value({"a": {"b": 1}, "items": [{"c": "x"}], "plain": [1, 2]})
        assert text == 'a.b = 1\nitems.0.c = "x"\nplain = [1, 2]\n'


class TestCalibrationCsv:
    """测试校准数据读取"""

    def test_read(self, tmp_path):
        path = tmp_path / "calibration.csv"
        path.write_text("mean_current,variance,comment\n1.0,3.1,a\n2.0,5.4,b\n", encoding="utf-8")
        assert read_calibration_csv(path) == [(1.0, 3.1), (2.0, 5.4)]

    def test_missing_column(self, tmp_path):
        path = tmp_path / "calibration.csv"
        path.write_text("current,variance\n1.0,3.1\n", encoding="utf-8")
        with pytest.raises(CalibrationError):
            read_calibration_csv(path)

    def test_non_positive_variance(self, tmp_path):
        path = tmp_path / "calibration.csv"
        path.write_text("mean_current,variance\n1.0,0.0\n", encoding="utf-8")
        with pytest.raises(CalibrationError):
            read_calibration_csv(path)


class TestBits:
    """测试位串与位文件"""

    def test_msb_first_packing(self):
        assert pack_bits(np.array([1, 0, 0, 0, 0, 0, 0, 0])) == b"\x80"
        assert pack_bits(np.array([1, 1, 1])) == b"\xe0"
        assert list(unpack_bits(b"\xa0", 3)) == [1, 0, 1]

    def test_bit_string(self):
        bits = BitString.from_string("10110")
        assert len(bits) == 5
        assert bits.packed == b"\xb0"
        assert str(bits) == "10110"
        assert bits == BitString.from_bits([1, 0, 1, 1, 0])
        assert hash(bits) == hash(BitString.from_bits([1, 0, 1, 1, 0]))

    def test_bit_string_validation(self):
        with pytest.raises(ExtractorParameterError):
            BitString(9, b"\x00")
        with pytest.raises(ExtractorParameterError):
            BitString.from_bits([0, 2])

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "nested" / "bits.bin"
        bits = np.random.default_rng(1).integers(0, 2, size=1001).astype(np.uint8)
        write_bits(path, bits)
        assert path.stat().st_size == 126
        assert np.array_equal(read_bits(path, 1001), bits)
        assert read_bits(path).size == 1008
        assert not [p for p in path.parent.iterdir() if p.name.startswith(".")]

    def test_read_too_many_bits(self, tmp_path):
        path = tmp_path / "bits.bin"
        write_bits(path, np.ones(8, dtype=np.uint8))
        with pytest.raises(ExtractorParameterError):
            read_bits(path, 9)

    def test_write_many(self, tmp_path):
        """测试一组文件全部写出且不留临时文件"""
        files = [(tmp_path / "a.bin", b"\x01"), (tmp_path / "sub" / "b.txt", b"text")]
        atomic_write_many(files)
        assert (tmp_path / "a.bin").read_bytes() == b"\x01"
        assert (tmp_path / "sub" / "b.txt").read_bytes() == b"text"
        assert not [p for p in tmp_path.rglob(".*")]

    def test_write_many_unwritable_target(self, tmp_path):
        """测试第二个目标的父路径是普通文件时，第一个文件也不被写出"""
        (tmp_path / "blocker").write_bytes(b"")
        with pytest.raises(OSError):
            atomic_write_many([(tmp_path / "a.bin", b"\x01"), (tmp_path / "blocker" / "b.bin", b"\x02")])
        assert not (tmp_path / "a.bin").exists()
        assert sorted(p.name for p in tmp_path.iterdir()) == ["blocker"]

    def test_write_many_failed_replace(self, tmp_path, monkeypatch):
        """测试第二次 os.replace 失败时已放置的文件被删除"""
        real_replace = os.replace
        calls = []

        def failing_replace(src, dst):
            calls.append(dst)
            if len(calls) == 2:
                raise OSError("disk full")
            real_replace(src, dst)

        monkeypatch.setattr(os, "replace", failing_replace)
        files = [(tmp_path / name, b"\x00") for name in ("a.bin", "b.bin", "c.bin")]
        with pytest.raises(OSError):
            atomic_write_many(files)
        assert list(tmp_path.iterdir()) == []


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
