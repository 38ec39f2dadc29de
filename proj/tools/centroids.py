#!/usr/bin/env python3
"""Shape-vs-marker centroid distances for a directory of rendered results.

Pairs gen_NNN.png with struct_NNN.png, thresholds each on max channel > 127
and prints "NNN distance" per pair (inf when either mask is empty).
Standard library only; reads 8-bit non-interlaced RGB/RGBA/grey PNGs.
"""

import math
import struct
import sys
import zlib
from pathlib import Path


def read_png(path):
    data = Path(path).read_bytes()
    if data[:8] != b"\x89PNG\r\n\x1a\n":
        raise ValueError(f"{path}: not a PNG")
    pos, idat = 8, b""
    width = height = channels = None
    while pos < len(data):
        length, kind = struct.unpack(">I4s", data[pos:pos + 8])
        body = data[pos + 8:pos + 8 + length]
        pos += 12 + length
        if kind == b"IHDR":
            width, height, depth, colour, _, _, interlace = struct.unpack(">IIBBBBB", body)
            if depth != 8 or interlace != 0:
                raise ValueError(f"{path}: only 8-bit non-interlaced PNGs are supported")
            channels = {0: 1, 2: 3, 4: 2, 6: 4}[colour]
        elif kind == b"IDAT":
            idat += body
        elif kind == b"IEND":
            break
    raw = zlib.decompress(idat)
    stride = width * channels
    rows, prev = [], bytearray(stride)
    for y in range(height):
        start = y * (stride + 1)
        ftype, line = raw[start], bytearray(raw[start + 1:start + 1 + stride])
        for i in range(stride):
            left = line[i - channels] if i >= channels else 0
            up = prev[i]
            upleft = prev[i - channels] if i >= channels else 0
            if ftype == 1:
                line[i] = (line[i] + left) & 255
            elif ftype == 2:
                line[i] = (line[i] + up) & 255
            elif ftype == 3:
                line[i] = (line[i] + (left + up) // 2) & 255
            elif ftype == 4:
                p = left + up - upleft
                pa, pb, pc = abs(p - left), abs(p - up), abs(p - upleft)
                pred = left if pa <= pb and pa <= pc else (up if pb <= pc else upleft)
                line[i] = (line[i] + pred) & 255
        rows.append(line)
        prev = line
    return width, height, channels, rows


def centroid(path):
    width, height, channels, rows = read_png(path)
    colour = min(channels, 3)
    sx = sy = n = 0
    for y, line in enumerate(rows):
        for x in range(width):
            px = line[x * channels:x * channels + colour]
            if max(px) > 127:
                sx += x
                sy += y
                n += 1
    return None if n == 0 else (sx / n, sy / n)


def main():
    root = Path(sys.argv[1])
    for gen in sorted(root.glob("gen_*.png")):
        tag = gen.stem[len("gen_"):]
        a = centroid(gen)
        b = centroid(root / f"struct_{tag}.png")
        dist = math.inf if a is None or b is None else math.hypot(a[0] - b[0], a[1] - b[1])
        print(f"{tag} {dist:.4f}")


if __name__ == "__main__":
    main()
