"""Binary per-utterance matrix archives with a plain-text byte index.

One archive file holds concatenated records; the companion ``.idx``
file lists ``utterance-id<TAB>byte-offset`` per record.  A record is
either matrix data (features, representations, embeddings — any D) or
a skip marker carrying a reason code.

Record layout, little endian:
    u16  id_len, utf-8 utterance id
    u8   status: 0 = data, 1 = skipped
    data:    u32 T, u32 D, T*D float32 row-major
    skipped: u16 reason_len, utf-8 reason
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class SkipEntry:
    utt_id: str
    reason: str


def index_path(archive_path) -> Path:
    return Path(str(archive_path) + ".idx")


class ArchiveWriter:
    def __init__(self, path):
        self.path = Path(path)
        self._f = open(self.path, "wb")
        self._offsets: list[tuple[str, int]] = []

    def write(self, utt_id: str, matrix: np.ndarray) -> None:
        matrix = np.asarray(matrix, dtype=np.float32)
        if matrix.ndim != 2:
            raise ValueError(f"archive stores 2-D matrices, got shape {matrix.shape}")
        self._record_header(utt_id, status=0)
        self._f.write(struct.pack("<II", *matrix.shape))
        self._f.write(matrix.astype("<f4").tobytes())

    def write_skip(self, utt_id: str, reason: str) -> None:
        self._record_header(utt_id, status=1)
        raw = reason.encode("utf-8")
        self._f.write(struct.pack("<H", len(raw)))
        self._f.write(raw)

    def _record_header(self, utt_id: str, status: int) -> None:
        self._offsets.append((utt_id, self._f.tell()))
        raw = utt_id.encode("utf-8")
        self._f.write(struct.pack("<H", len(raw)))
        self._f.write(raw)
        self._f.write(struct.pack("<B", status))

    def close(self) -> None:
        self._f.close()
        with open(index_path(self.path), "w", encoding="utf-8") as idx:
            for utt_id, offset in self._offsets:
                idx.write(f"{utt_id}\t{offset}\n")

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


class ArchiveReader:
    """Random access into an archive via its index file."""

    def __init__(self, path):
        self.path = Path(path)
        self._index: dict[str, int] = {}
        with open(index_path(self.path), encoding="utf-8") as idx:
            for line in idx:
                utt_id, offset = line.rstrip("\n").split("\t")
                self._index[utt_id] = int(offset)
        self._f = open(self.path, "rb")

    def keys(self):
        return list(self._index)

    def __contains__(self, utt_id: str) -> bool:
        return utt_id in self._index

    def load(self, utt_id: str):
        """Return the stored matrix, or a SkipEntry for skipped records."""
        self._f.seek(self._index[utt_id])
        (id_len,) = struct.unpack("<H", self._f.read(2))
        stored_id = self._f.read(id_len).decode("utf-8")
        if stored_id != utt_id:
            raise IOError(f"index points at record {stored_id!r}, wanted {utt_id!r}")
        (status,) = struct.unpack("<B", self._f.read(1))
        if status == 1:
            (rlen,) = struct.unpack("<H", self._f.read(2))
            return SkipEntry(utt_id, self._f.read(rlen).decode("utf-8"))
        t, d = struct.unpack("<II", self._f.read(8))
        data = np.frombuffer(self._f.read(4 * t * d), dtype="<f4")
        if data.size != t * d:
            raise IOError(f"truncated record for {utt_id!r}")
        return data.reshape(t, d).astype(np.float64)

    def close(self) -> None:
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def load_all(path) -> dict:
    """Read every record into memory, preserving index order."""
    with ArchiveReader(path) as reader:
        return {utt_id: reader.load(utt_id) for utt_id in reader.keys()}
