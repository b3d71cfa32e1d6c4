"""Key=value config files and reproducible RNG streams."""

import zlib

import numpy as np


def parse_config(path):
    """Plain key=value lines; blank lines and # comments skipped; later keys win."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"malformed config line: {raw.rstrip()}")
            key, val = line.split("=", 1)
            out[key.strip()] = val.strip()
    return out


def rng_stream(seed, purpose):
    """Counter-based Philox generator, one independent stream per purpose."""
    key = (int(seed) & 0xFFFFFFFFFFFFFFFF) << 32 | zlib.crc32(purpose.encode())
    return np.random.Generator(np.random.Philox(key=key))


def config_comment(pairs):
    """The `# key=value ...` first line every CSV carries."""
    return "# " + " ".join(f"{k}={v}" for k, v in pairs)
