"""再現可能な乱数ストリーム

(seed, ラベル, 添字) から独立な numpy Generator を導出する。
同じ組からは常に同じ系列が得られ、実行順序やスレッド数に依存しない。
"""

from __future__ import annotations

import hashlib
from typing import List

import numpy as np


def _label_key(label: str) -> int:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def seeded_rng(seed: int, stream: str, *index: int) -> np.random.Generator:
    """(seed, stream, index...) に対応する乱数ストリームを返す

    Args:
        seed: ユーザー指定のシード (非負整数)
        stream: ストリームのラベル (例: "em-y", "boot")
        index: 反復番号・ブロック番号などの追加キー

    Returns:
        np.random.Generator: PCG64 ベースの独立ストリーム
    """
    if seed < 0:
        raise ValueError("seed は非負整数である必要があります")
    spawn_key = (_label_key(stream),) + tuple(int(i) for i in index)
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=spawn_key)
    return np.random.Generator(np.random.PCG64(sequence))


class RandomStreams:
    """シードを保持し、ラベル付きストリームを払い出す"""

    def __init__(self, seed: int, prefix: str = "") -> None:
        self.seed = int(seed)
        self._prefix = prefix

    def _label(self, label: str) -> str:
        return f"{self._prefix}/{label}" if self._prefix else label

    def stream(self, label: str, *index: int) -> np.random.Generator:
        return seeded_rng(self.seed, self._label(label), *index)

    def spawn(self, label: str, count: int) -> List[np.random.Generator]:
        """label 配下の添字 0..count-1 のストリームを返す"""
        return [self.stream(label, i) for i in range(count)]

    def child(self, label: str) -> "RandomStreams":
        """ラベルを接頭辞に持つ下位ストリーム群"""
        return RandomStreams(self.seed, self._label(label))
