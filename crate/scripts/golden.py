"""Independent reference implementations used to produce the checked-in
golden files under crates/core/tests/golden and tests/fixtures.

Nothing here imports the Rust code: the generator (splitmix64-seeded
xoshiro256**), the bounded-integer rule, Fisher-Yates, and the frame
encoding are re-implemented from their written definitions.

    python3 scripts/golden.py crates/core/tests
"""
import struct
import sys

M64 = (1 << 64) - 1


def splitmix64(state):
    state = (state + 0x9E3779B97F4A7C15) & M64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M64
    return state, z ^ (z >> 31)


def rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & M64


class Xoshiro256StarStar:
    def __init__(self, seed):
        sm = seed & M64
        self.s = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            self.s.append(out)

    def next_u64(self):
        s = self.s
        result = (rotl((s[1] * 5) & M64, 7) * 9) & M64
        t = (s[1] << 17) & M64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = rotl(s[3], 45)
        return result

    def below(self, n):
        # Lemire's multiply-shift with rejection.
        m = self.next_u64() * n
        low = m & M64
        if low < n:
            threshold = ((1 << 64) - n) % n
            while low < threshold:
                m = self.next_u64() * n
                low = m & M64
        return m >> 64

    def uniform(self):
        return (self.next_u64() >> 11) * (2.0 ** -53)


def permutation(seed, n):
    rng = Xoshiro256StarStar(seed)
    forward = list(range(n))
    for i in range(n - 1, 0, -1):
        j = rng.below(i + 1)
        forward[i], forward[j] = forward[j], forward[i]
    return forward


def tensor_bytes(shape, data):
    out = struct.pack("<Q", len(shape))
    out += b"".join(struct.pack("<Q", d) for d in shape)
    out += b"".join(struct.pack("<d", x) for x in data)
    return out


def field(name, tag, payload):
    raw = name.encode()
    return struct.pack("<B", len(raw)) + raw + struct.pack("<B", tag) + payload


def u64(name, v):
    return field(name, 1, struct.pack("<Q", v))


def text(name, s):
    raw = s.encode()
    return field(name, 3, struct.pack("<I", len(raw)) + raw)


def tensor(name, shape, data):
    t = tensor_bytes(shape, data)
    return field(name, 4, struct.pack("<Q", len(t)) + t)


def u64_list(name, vs):
    return field(name, 5, struct.pack("<I", len(vs)) + b"".join(struct.pack("<Q", v) for v in vs))


def tensor_list(name, ts):
    body = struct.pack("<I", len(ts))
    for shape, data in ts:
        t = tensor_bytes(shape, data)
        body += struct.pack("<Q", len(t)) + t
    return field(name, 6, body)


def frame(kind, fields):
    body = struct.pack("<I", len(fields)) + b"".join(fields)
    return b"PSH1" + struct.pack("<B", kind) + struct.pack("<Q", len(body)) + body


FRAMES = {
    "store.bin": frame(1, [tensor("tensor", [2, 2], [1.0, 2.0, 3.0, 4.0])]),
    "fetch.bin": frame(2, [u64("key", 42)]),
    "exec.bin": frame(4, [u64("round", 7), text("expr", "(matmul (add k:1 k:2) k:3)")]),
    "eval_fn.bin": frame(5, [u64("round", 3), u64("slot", 0), u64("role", 1),
                             text("fns", "sigmoid+sigmoid_prime"),
                             tensor("share", [3], [-0.5, 0.0, 2.25])]),
    "ack.bin": frame(10, [u64_list("keys", [5, 6]), tensor_list("tensors", [([1], [0.5])])]),
    "nack.bin": frame(11, [text("reason", "unknown key 9"), u64("retryable", 0)]),
}


def main(out):
    rng = Xoshiro256StarStar(42)
    with open(f"{out}/golden/rng_seed42.txt", "w") as f:
        for _ in range(100):
            f.write(f"{rng.next_u64()}\n")
    with open(f"{out}/golden/perm_seed42_n10.txt", "w") as f:
        f.write(" ".join(map(str, permutation(42, 10))) + "\n")
    for name, data in FRAMES.items():
        with open(f"{out}/fixtures/{name}", "wb") as f:
            f.write(data)
    # Values frozen directly into unit tests.
    print("perm(seed=7, n=4):", permutation(7, 4))
    print("perm(seed=42, n=10):", permutation(42, 10))
    r = Xoshiro256StarStar(42)
    print("uniform seed 42:", [repr(r.uniform()) for _ in range(3)])
    r = Xoshiro256StarStar(9)
    print("below(10) seed 9:", [r.below(10) for _ in range(8)])


if __name__ == "__main__":
    main(sys.argv[1])
