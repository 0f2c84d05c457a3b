"""
比特串与文件读写

位文件为打包二进制，每字节内最高位在前；末尾不足 8 位的部分补零
"""
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..models.errors import ExtractorParameterError

PathLike = Union[str, Path]


@dataclass(frozen=True, eq=False)
class BitString:
    """长度为 length 的比特串，以 MSB 优先的字节存储"""
    length: int
    packed: bytes

    def __post_init__(self):
        if self.length < 0:
            raise ExtractorParameterError("Bit string length must be non-negative")
        if len(self.packed) != (self.length + 7) // 8:
            raise ExtractorParameterError(
                f"Packed storage holds {len(self.packed)} bytes, {self.length} bits need {(self.length + 7) // 8}")

    @classmethod
    def from_bits(cls, bits) -> "BitString":
        array = np.asarray(bits, dtype=np.uint8).reshape(-1)
        if np.any(array > 1):
            raise ExtractorParameterError("Bits must be 0 or 1")
        return cls(array.size, pack_bits(array))

    @classmethod
    def from_string(cls, text: str) -> "BitString":
        return cls.from_bits([int(c) for c in text.strip()])

    def to_bits(self) -> np.ndarray:
        return unpack_bits(self.packed, self.length)

    def __len__(self) -> int:
        return self.length

    def __eq__(self, other) -> bool:
        return isinstance(other, BitString) and self.length == other.length and self.packed == other.packed

    def __hash__(self) -> int:
        return hash((self.length, self.packed))

    def __str__(self) -> str:
        return "".join(str(b) for b in self.to_bits())


def pack_bits(bits: np.ndarray) -> bytes:
    return np.packbits(np.asarray(bits, dtype=np.uint8), bitorder="big").tobytes()


def unpack_bits(data: bytes, length: Optional[int] = None) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="big")
    if length is not None:
        if length > bits.size:
            raise ExtractorParameterError(f"Requested {length} bits from {bits.size} stored bits")
        bits = bits[:length]
    return bits


def atomic_write_bytes(path: PathLike, data: bytes):
    """先写临时文件再 os.replace，失败时不留下半成品"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, temp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(temp_name, path)
    except BaseException:
        if os.path.exists(temp_name):
            os.unlink(temp_name)
        raise


def atomic_write_text(path: PathLike, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_many(files: Sequence[Tuple[PathLike, bytes]]):
    """
    一组文件要么全部写出，要么一个都不留

    先把所有内容写入目标目录中的临时文件，再逐个 os.replace；任何一步失败都删除已写出的文件
    """
    staged: List[Tuple[str, Path]] = []
    placed: List[Path] = []
    try:
        for path, data in files:
            path = Path(path)
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, temp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
            staged.append((temp_name, path))
            with os.fdopen(fd, "wb") as f:
                f.write(data)
        for temp_name, path in staged:
            os.replace(temp_name, path)
            placed.append(path)
    except BaseException:
        for temp_name, _ in staged:
            if os.path.exists(temp_name):
                os.unlink(temp_name)
        for path in placed:
            if path.exists():
                path.unlink()
        raise


def read_bits(path: PathLike, length: Optional[int] = None) -> np.ndarray:
    """读取位文件；length 为空时返回全部 8·字节数 个比特"""
    return unpack_bits(Path(path).read_bytes(), length)


def write_bits(path: PathLike, bits: np.ndarray):
    atomic_write_bytes(path, pack_bits(bits))
