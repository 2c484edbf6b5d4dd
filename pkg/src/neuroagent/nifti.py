"""NIfTI-1 header parsing and scan validation (metadata only, no voxel data).

Only the fields needed to type and route an uploaded scan are read:
sizeof_hdr (offset 0), dim (40..55), datatype (70), bitpix (72) and
magic (344..347). Endianness is detected from sizeof_hdr.
"""

from __future__ import annotations

import gzip
import hashlib
import io
import struct
from dataclasses import dataclass
from enum import Enum

from .domain import Modality, ScanRef

HEADER_SIZE = 348
NIFTI2_SIZEOF_HDR = 540
VALID_MAGIC = (b"n+1\x00", b"ni1\x00")
GZIP_MAGIC = b"\x1f\x8b"


class NiftiError(ValueError):
    """Base of the parse/validation error taxonomy; ``code`` is the wire name."""

    code = "NiftiError"


class TooShortError(NiftiError):
    code = "TooShort"


class BadMagicError(NiftiError):
    code = "BadMagic"


class BadSizeofHdrError(NiftiError):
    code = "BadSizeofHdr"


class BadDimsError(NiftiError):
    code = "BadDims"


class NotVolumetricError(NiftiError):
    code = "NotVolumetric"


class Endianness(str, Enum):
    LITTLE = "little"
    BIG = "big"

    @property
    def prefix(self) -> str:
        return "<" if self is Endianness.LITTLE else ">"


@dataclass(frozen=True)
class NiftiHeader:
    """Normalized NIfTI-1 header; multi-byte fields already byte-swapped."""

    sizeof_hdr: int
    dim: tuple[int, ...]
    datatype_code: int
    bitpix: int
    magic: bytes
    endianness: Endianness

    @property
    def ndim(self) -> int:
        return self.dim[0]

    @property
    def spatial_dims(self) -> tuple[int, int, int]:
        return (self.dim[1], self.dim[2], self.dim[3])


def _detect_endianness(raw: bytes) -> Endianness:
    little = struct.unpack("<i", raw[0:4])[0]
    if little == HEADER_SIZE:
        return Endianness.LITTLE
    big = struct.unpack(">i", raw[0:4])[0]
    if big == HEADER_SIZE:
        return Endianness.BIG
    if NIFTI2_SIZEOF_HDR in (little, big):
        raise BadSizeofHdrError(
            "sizeof_hdr is 540: NIfTI-2 headers are not supported, expected NIfTI-1 (348)"
        )
    raise BadSizeofHdrError(
        f"sizeof_hdr reads {little} little-endian / {big} big-endian, expected 348"
    )


def parse_header(data: bytes) -> NiftiHeader:
    """Parse the leading 348-byte NIfTI-1 header out of ``data``.

    Raises TooShortError, BadSizeofHdrError, BadMagicError or BadDimsError;
    never returns a header violating the NIfTI-1 invariants.
    """
    if len(data) < HEADER_SIZE:
        raise TooShortError(f"need at least {HEADER_SIZE} header bytes, got {len(data)}")
    raw = bytes(data[:HEADER_SIZE])

    endianness = _detect_endianness(raw)

    magic = raw[344:348]
    if magic not in VALID_MAGIC:
        raise BadMagicError(f"magic {magic!r} is neither 'n+1\\0' nor 'ni1\\0'")

    p = endianness.prefix
    dim = struct.unpack(f"{p}8h", raw[40:56])
    if not 1 <= dim[0] <= 7:
        raise BadDimsError(f"dim[0] must be in 1..7, got {dim[0]}")
    for i in range(1, dim[0] + 1):
        if dim[i] < 1:
            raise BadDimsError(f"dim[{i}] must be >= 1, got {dim[i]}")

    datatype_code = struct.unpack(f"{p}h", raw[70:72])[0]
    bitpix = struct.unpack(f"{p}h", raw[72:74])[0]

    return NiftiHeader(
        sizeof_hdr=HEADER_SIZE,
        dim=dim,
        datatype_code=datatype_code,
        bitpix=bitpix,
        magic=magic,
        endianness=endianness,
    )


def build_header(header: NiftiHeader) -> bytes:
    """Synthesize a 348-byte header; unused fields are zero-filled.

    Inverse of parse_header for the fields this module reads.
    """
    p = header.endianness.prefix
    buf = bytearray(HEADER_SIZE)
    struct.pack_into(f"{p}i", buf, 0, HEADER_SIZE)
    struct.pack_into(f"{p}8h", buf, 40, *header.dim)
    struct.pack_into(f"{p}h", buf, 70, header.datatype_code)
    struct.pack_into(f"{p}h", buf, 72, header.bitpix)
    buf[344:348] = header.magic
    return bytes(buf)


def read_header_bytes(data: bytes) -> bytes:
    """Return the raw header bytes, transparently decompressing .nii.gz content."""
    if data[:2] == GZIP_MAGIC:
        try:
            with gzip.GzipFile(fileobj=io.BytesIO(data)) as fh:
                return fh.read(HEADER_SIZE)
        except (OSError, EOFError) as exc:
            raise TooShortError(f"gzip stream truncated or corrupt: {exc}") from exc
    return data[:HEADER_SIZE]


def parse_bytes(data: bytes) -> NiftiHeader:
    """Parse an uploaded .nii or .nii.gz payload."""
    return parse_header(read_header_bytes(data))


def validate_scan(
    header: NiftiHeader,
    declared: Modality,
    source_uri: str,
    scan_id: str | None = None,
) -> ScanRef:
    """Turn a parsed header into a validated ScanRef.

    Modality comes from the user's declaration; the header does not carry it.
    Requires at least 3 dimensions; for 4D+ data the three spatial dims are kept.
    """
    if header.ndim < 3:
        raise NotVolumetricError(f"volumetric scan required, header has dim[0]={header.ndim}")
    if scan_id is None:
        digest = hashlib.sha256(source_uri.encode()).hexdigest()[:12]
        scan_id = f"{declared.value}-{digest}"
    return ScanRef(
        id=scan_id,
        modality=declared,
        source_uri=source_uri,
        dims=header.spatial_dims,
        datatype_code=header.datatype_code,
        validated=True,
    )
