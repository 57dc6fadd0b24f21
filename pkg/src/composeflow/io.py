"""Checkpoint and plot files in the FLXD binary format, plus a file comparator.

Layout (all integers and floats little-endian)::

    magic       4 bytes   b"FLXD"
    version     u32       FORMAT_VERSION
    dims        u32
    nblocks     3 x u32   (unused axes are 1)
    ncells      3 x u32   cells per block (unused axes are 1)
    lower       3 x f64
    upper       3 x f64
    step        u64
    time        f64
    counter     u32       file sequence number
    nvars       u32
    nvars x { u16 name length, name (utf-8), u8 centering index, u8 persistence index }
    payload     for each variable in table order, for each block in tile order,
                the guard-free interior as f64 in C order
    crc32       u32       zlib.crc32 of every preceding byte

Face variables store ``ncells + 1`` values along their normal axis in every
block, so shared faces appear in both neighbours.
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from composeflow.grid import CENTERINGS, BlockGrid

MAGIC = b"FLXD"
FORMAT_VERSION = 1
PERSISTENCE = ("checkpoint", "plot", "scratch")

_HEAD = struct.Struct("<4sII3I3I3d3dQdII")


class CheckpointError(ValueError):
    pass


class ChecksumError(CheckpointError):
    pass


class GeometryMismatch(CheckpointError):
    pass


class UnknownVariable(CheckpointError):
    pass


class IncompatibleFiles(CheckpointError):
    pass


@dataclass(frozen=True)
class VarEntry:
    name: str
    centering: str
    persistence: str


@dataclass
class CheckpointFile:
    dims: int
    nblocks: tuple
    ncells: tuple
    lower: tuple
    upper: tuple
    step: int
    time: float
    counter: int
    variables: tuple            # VarEntry, in file order
    blocks: dict = field(default_factory=dict)   # name -> list of per-block interiors

    def block_shape(self, centering: str) -> tuple[int, ...]:
        fa = CENTERINGS.index(centering) - 1
        return tuple(n + (1 if a == fa else 0) for a, n in enumerate(self.ncells[: self.dims]))

    def geometry(self) -> tuple:
        return (self.dims, self.nblocks, self.ncells, self.lower, self.upper)

    def assemble(self, name: str) -> np.ndarray:
        """Global interior array (shared faces from the high-side block)."""
        entry = next(v for v in self.variables if v.name == name)
        bshape = self.block_shape(entry.centering)
        fa = CENTERINGS.index(entry.centering) - 1
        gshape = tuple(nb * n + (1 if a == fa else 0)
                       for a, (nb, n) in enumerate(zip(self.nblocks[: self.dims], self.ncells[: self.dims])))
        out = np.empty(gshape)
        for k, arr in enumerate(self.blocks[name]):
            idx = _block_index(k, self.nblocks[: self.dims])
            win = tuple(slice(i * n, i * n + s) for i, n, s in zip(idx, self.ncells, bshape))
            out[win] = arr
        return out


def _block_index(flat: int, nblocks) -> list[int]:
    idx = []
    for nb in nblocks:
        idx.append(flat % nb)
        flat //= nb
    return idx


def _pad3(seq, fill):
    seq = list(seq)
    return tuple(seq + [fill] * (3 - len(seq)))


def checkpoint_name(basenm: str, counter: int) -> str:
    return f"{basenm}chk_{counter:04d}"


def plot_name(basenm: str, counter: int) -> str:
    return f"{basenm}plt_cnt_{counter:04d}"


def encode(grid: BlockGrid, step: int, time: float, counter: int, names=None) -> bytes:
    """Serialise the interiors of ``names`` (default: checkpoint variables, sorted)."""
    if names is None:
        names = sorted(grid.registry.names("checkpoint"))
    dom = grid.domain
    parts = [_HEAD.pack(MAGIC, FORMAT_VERSION, dom.dims,
                        *_pad3(dom.nblocks, 1), *_pad3(dom.ncells, 1),
                        *_pad3(dom.lower, 0.0), *_pad3(dom.upper, 0.0),
                        int(step), float(time), int(counter), len(names))]
    for name in names:
        spec = grid.registry[name]
        raw = name.encode()
        parts.append(struct.pack("<H", len(raw)) + raw
                     + struct.pack("<BB", CENTERINGS.index(spec.centering), PERSISTENCE.index(spec.persistence)))
    for name in names:
        for t in grid.tiles:
            parts.append(np.ascontiguousarray(t.interior(name), dtype="<f8").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def decode(data: bytes) -> CheckpointFile:
    if len(data) < _HEAD.size + 4:
        raise ChecksumError("file too short to be a checkpoint")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise ChecksumError("checksum mismatch")
    head = _HEAD.unpack_from(body, 0)
    magic, version, dims = head[0], head[1], head[2]
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format version {version}")
    nblocks, ncells = tuple(head[3:6]), tuple(head[6:9])
    lower, upper = tuple(head[9:12]), tuple(head[12:15])
    step, time, counter, nvars = head[15], head[16], head[17], head[18]
    pos = _HEAD.size
    variables = []
    for _ in range(nvars):
        (ln,) = struct.unpack_from("<H", body, pos)
        pos += 2
        name = body[pos:pos + ln].decode()
        pos += ln
        ci, pi = struct.unpack_from("<BB", body, pos)
        pos += 2
        variables.append(VarEntry(name, CENTERINGS[ci], PERSISTENCE[pi]))
    ck = CheckpointFile(dims, nblocks, ncells, lower, upper, step, time, counter, tuple(variables))
    nb = int(np.prod(nblocks[:dims]))
    for v in variables:
        shape = ck.block_shape(v.centering)
        count = int(np.prod(shape))
        arrs = []
        for _ in range(nb):
            end = pos + 8 * count
            if end > len(body):
                raise CheckpointError("payload shorter than the geometry requires")
            arrs.append(np.frombuffer(body, dtype="<f8", count=count, offset=pos).reshape(shape).astype(float))
            pos = end
        ck.blocks[v.name] = arrs
    if pos != len(body):
        raise CheckpointError(f"{len(body) - pos} trailing bytes after the payload")
    return ck


def write_checkpoint(grid: BlockGrid, path, step: int, time: float, counter: int, names=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = encode(grid, step, time, counter, names)
    tmp = path.with_name(path.name + ".part")
    tmp.write_bytes(data)
    tmp.replace(path)
    return path


def write_plotfile(grid: BlockGrid, path, step: int, time: float, counter: int, plot_vars) -> Path:
    names = sorted({v for v in plot_vars if v and v != "none"})
    missing = [n for n in names if n not in grid]
    if missing:
        raise UnknownVariable(f"plot variables not on the grid: {missing}")
    return write_checkpoint(grid, path, step, time, counter, names)


def read_checkpoint(path) -> CheckpointFile:
    return decode(Path(path).read_bytes())


def restore(ck: CheckpointFile, grid: BlockGrid):
    """Copy file interiors into ``grid`` after checking that they describe the same domain."""
    dom = grid.domain
    mine = (dom.dims, _pad3(dom.nblocks, 1), _pad3(dom.ncells, 1), _pad3(dom.lower, 0.0), _pad3(dom.upper, 0.0))
    if ck.geometry() != mine:
        raise GeometryMismatch(f"file geometry {ck.geometry()} does not match the grid {mine}")
    for v in ck.variables:
        if v.name not in grid:
            raise UnknownVariable(f"variable {v.name!r} is not part of this simulation")
        if grid.registry[v.name].centering != v.centering:
            raise GeometryMismatch(f"{v.name} is {v.centering} in the file")
    for v in ck.variables:
        for t, arr in zip(grid.tiles, ck.blocks[v.name]):
            t.interior(v.name)[...] = arr


# -- comparison -----------------------------------------------------------------

@dataclass(frozen=True)
class VarError:
    max_abs: float
    l2: float
    location: tuple


@dataclass
class ComparisonReport:
    errors: dict
    tolerance: float
    verdict: str

    @property
    def ok(self) -> bool:
        return self.verdict == "SUCCESS"

    @property
    def max_error(self) -> float:
        return max((e.max_abs for e in self.errors.values()), default=0.0)

    def format(self) -> str:
        lines = [f"{'variable':<10} {'max abs':>12} {'L2':>12}  location"]
        for name, e in self.errors.items():
            lines.append(f"{name:<10} {e.max_abs:12.4e} {e.l2:12.4e}  {e.location}")
        lines.append(f"tolerance {self.tolerance:g}: {self.verdict}")
        return "\n".join(lines)


def compare(a: CheckpointFile, b: CheckpointFile, tol: float = 0.0) -> ComparisonReport:
    if a.geometry() != b.geometry():
        raise IncompatibleFiles("files describe different geometries")
    if a.variables != b.variables:
        raise IncompatibleFiles("files hold different variable tables")
    errors = {}
    for v in a.variables:
        x, y = a.assemble(v.name), b.assemble(v.name)
        diff = np.abs(x - y)
        # NaN on either side counts as an unbounded error
        diff = np.where(np.isnan(diff), np.inf, diff)
        k = np.unravel_index(int(np.argmax(diff)), diff.shape)
        errors[v.name] = VarError(float(diff[k]), float(np.sqrt(np.mean(np.square(diff)))),
                                  tuple(int(i) for i in k))
    ok = all(e.max_abs <= tol for e in errors.values())
    return ComparisonReport(errors, tol, "SUCCESS" if ok else "FAILURE")


def compare_files(path_a, path_b, tol: float = 0.0) -> ComparisonReport:
    return compare(read_checkpoint(path_a), read_checkpoint(path_b), tol)
