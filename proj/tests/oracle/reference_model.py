#!/usr/bin/env python3
# Copyright 2026 The cecollm Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Float64 NumPy re-implementation of the toy decoder, used to cross-check
the C++ model file reader, weight generator and forward pass."""
import argparse
import struct
import subprocess
import sys

import numpy as np

MASK = (1 << 64) - 1


def splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK
    return x ^ (x >> 31)


def fnv1a64(name):
    h = 0xCBF29CE484222325
    for c in name.encode():
        h = ((h ^ c) * 0x100000001B3) & MASK
    return h


def uniform01(seed, name, index):
    key = splitmix64(seed ^ fnv1a64(name))
    bits = splitmix64((key + index * 0xD1B54A32D192ED03) & MASK)
    return np.float32(bits >> 40) * np.float32(2.0 ** -24)


def load(path):
    data = open(path, "rb").read()
    assert data[:4] == b"CELM", "bad magic"
    (version,) = struct.unpack_from("<H", data, 4)
    assert version == 1
    off = 6
    fields = struct.unpack_from("<9I", data, off)
    off += 36
    L, d, heads, ffn, vocab, max_seq, split, pos, n_exits = fields
    exits = list(struct.unpack_from("<%dI" % n_exits, data, off))
    off += 4 * n_exits
    (count,) = struct.unpack_from("<I", data, off)
    off += 4
    manifest = []
    for _ in range(count):
        (n,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off:off + n].decode()
        off += n
        rank = data[off]
        off += 1
        dims = struct.unpack_from("<%dI" % rank, data, off)
        off += 4 * rank
        manifest.append((name, dims))
    tensors = {}
    for name, dims in manifest:
        size = int(np.prod(dims))
        tensors[name] = np.frombuffer(data, dtype="<f4", count=size, offset=off).reshape(dims)
        off += 4 * size
    assert off == len(data), "trailing bytes"
    cfg = dict(L=L, d=d, heads=heads, ffn=ffn, vocab=vocab, max_seq=max_seq, split=split, exits=exits)
    return cfg, tensors


def rms(x, g):
    return x / np.sqrt(np.mean(x * x, axis=-1, keepdims=True) + 1e-5) * g


def forward(cfg, t, tokens, depth):
    d, h = cfg["d"], cfg["heads"]
    hd = d // h
    n = len(tokens)
    pos = np.arange(n, dtype=np.float64)[:, None]
    c = np.arange(d)
    freq = 10000.0 ** (-(c - c % 2) / d)
    pe = np.where(c % 2 == 0, np.sin(pos * freq), np.cos(pos * freq))
    x = np.sqrt(d) * t["embedding"][tokens].astype(np.float64) + pe
    mask = np.triu(np.full((n, n), -np.inf), 1)
    for i in range(depth):
        p = "layers.%d." % i
        a = rms(x, t[p + "attn_norm"])
        q, k, v = (a @ t[p + w].T.astype(np.float64) for w in ("wq", "wk", "wv"))
        out = np.zeros_like(x)
        for j in range(h):
            s = slice(j * hd, (j + 1) * hd)
            sc = q[:, s] @ k[:, s].T / np.sqrt(hd) + mask
            sc = np.exp(sc - sc.max(axis=1, keepdims=True))
            out[:, s] = (sc / sc.sum(axis=1, keepdims=True)) @ v[:, s]
        x = x + out @ t[p + "wo"].T
        f = rms(x, t[p + "ffn_norm"]) @ t[p + "w_up"].T
        x = x + (f / (1.0 + np.exp(-f))) @ t[p + "w_down"].T
    return x


def logits(cfg, t, tokens, head):
    if head == "final":
        x = forward(cfg, t, tokens, cfg["L"])
        return rms(x[-1], t["final.norm"]) @ t["final.head"].T
    j = int(head)
    x = forward(cfg, t, tokens, cfg["exits"][j])
    return rms(x[-1], t["exits.%d.norm" % j]) @ t["exits.%d.head" % j].T


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--tool", required=True, help="path to cecollm-model")
    ap.add_argument("--workdir", required=True)
    args = ap.parse_args()

    path = args.workdir + "/oracle_tiny.celm"
    seed = 42
    subprocess.run([args.tool, "generate", "--seed", str(seed), "--layers", "4", "--hidden", "32", "--heads", "4",
                    "--ffn", "64", "--max-seq", "128", "--split-layer", "2", "--exits", "1,2", "--out", path],
                   check=True, capture_output=True)
    cfg, t = load(path)
    failures = 0

    # Weight generator: every sampled element must match bit for bit.
    for name in ("embedding", "layers.0.wq", "layers.3.w_down", "exits.1.head", "final.head"):
        flat = t[name].reshape(-1)
        for idx in (0, 1, 17, flat.size - 1):
            want = (np.float32(2.0) * uniform01(seed, name, idx) - np.float32(1.0)) * np.float32(0.08)
            if flat[idx] != want:
                print("weight mismatch %s[%d]: %r vs %r" % (name, idx, flat[idx], want))
                failures += 1
    for name in ("layers.0.attn_norm", "layers.2.ffn_norm"):
        if not np.all(t[name] == 1.0):
            print("layer norm gain not 1 in", name)
            failures += 1
    for name in ("exits.0.norm", "final.norm"):
        if not np.all(t[name] == 6.0):
            print("head norm gain not 6 in", name)
            failures += 1

    rng = np.random.default_rng(5)
    worst = 0.0
    for trial in range(6):
        tokens = list(rng.integers(0, 256, size=int(rng.integers(1, 24))))
        for head in ("0", "1", "final"):
            out = subprocess.run([args.tool, "logits", "--model", path, "--tokens", ",".join(map(str, tokens)),
                                  "--head", head], check=True, capture_output=True, text=True).stdout
            got = np.array([float(v) for v in out.split()])
            want = logits(cfg, t, tokens, head)
            err = float(np.max(np.abs(got - want)))
            worst = max(worst, err)
            if err > 1e-3 or int(np.argmax(got)) != int(np.argmax(want)):
                print("logit mismatch trial %d head %s: max err %g" % (trial, head, err))
                failures += 1
    print("max |logit error| vs float64 reference: %.3g" % worst)
    print("FAIL" if failures else "PASS")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
