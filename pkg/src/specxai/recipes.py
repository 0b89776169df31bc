"""Bundled training recipes and the ``--data`` spec parser.

A recipe fixes everything except beta and the seed: image size, architecture,
optimiser settings, accuracy cap and the train/val/test split of a GRF
dataset (or of IDX files when paths are supplied).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from pathlib import Path

from .data import Dataset, GrfConfig, gen_grf, load_idx
from .errors import DataError
from .net import ModelConfig, parse_layers
from .train import TrainConfig

ARCH_28_32 = "conv:8:3, sp, conv:8:3, sp, avgpool:2, conv:16:3, sp, avgpool:2, flatten, dense:{k}"
ARCH_64 = "conv:8:3, sp, avgpool:2, conv:8:3, sp, avgpool:2, conv:16:3, sp, avgpool:2, flatten, dense:{k}"


@dataclass(frozen=True)
class Recipe:
    name: str
    size: int
    cap: float
    arch: str = ARCH_28_32
    alpha: float = 2.0
    data_seed: int = 1000
    n_train: int = 1024
    n_val: int = 256
    n_test: int = 256
    lr: float = 3e-3
    batch_size: int = 64
    max_epochs: int = 30
    optimizer: str = "adam"

    def model_config(self, beta: float, num_classes: int = 2, channels: int = 1) -> ModelConfig:
        layers = parse_layers(self.arch.format(k=num_classes), beta)
        return ModelConfig(layers, num_classes, (channels, self.size, self.size))

    def train_config(self, seed: int, cap: float | None = None) -> TrainConfig:
        return TrainConfig(optimizer=self.optimizer, lr=self.lr, batch_size=self.batch_size,
                           max_epochs=self.max_epochs, accuracy_cap=self.cap if cap is None else cap, seed=seed)

    def grf(self) -> GrfConfig:
        return GrfConfig(H=self.size, W=self.size, alpha=self.alpha, seed=self.data_seed,
                         n=self.n_train + self.n_val + self.n_test)

    def datasets(self, idx_images=None, idx_labels=None) -> tuple[Dataset, Dataset, Dataset]:
        """(train, val, test).  IDX files, when given, replace the GRF source."""
        if idx_images is not None:
            ds = load_idx(idx_images, idx_labels)
            if ds.images.shape[-2:] != (self.size, self.size):
                raise DataError(f"recipe {self.name} expects {self.size}x{self.size} rasters, got {ds.images.shape[-2:]}")
            need = self.n_train + self.n_val + self.n_test
            if len(ds) < need:
                raise DataError(f"recipe {self.name} needs {need} images, IDX source has {len(ds)}")
        else:
            ds = gen_grf(self.grf())
        train, rest = ds.split(self.n_train)
        val, rest = rest.split(self.n_val)
        test, _ = rest.split(self.n_test)
        return train, val, test

    def to_dict(self) -> dict:
        return asdict(self)


RECIPES = {
    "raster28": Recipe("raster28", 28, 0.80),
    "raster32": Recipe("raster32", 32, 0.70),
    "synthetic64": Recipe("synthetic64", 64, 0.60, arch=ARCH_64, n_train=512, n_val=128, n_test=128),
}


def get_recipe(name: str, **overrides) -> Recipe:
    try:
        r = RECIPES[name]
    except KeyError:
        raise ValueError(f"unknown recipe {name!r}; choose from {sorted(RECIPES)}") from None
    return replace(r, **overrides) if overrides else r


def parse_config_file(path) -> dict:
    """Flat ``key = value`` text; ``#`` starts a comment.  Values stay strings."""
    out = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        if not k:
            raise ValueError(f"{path}:{n}: empty key")
        out[k] = v
    return out


_GRF_KEYS = {"H": int, "W": int, "alpha": float, "seed": int, "n": int, "channels": int}


def load_data_spec(spec: str) -> Dataset:
    """Resolve a ``--data`` argument.

    ``recipe:<name>[:train|val|test]``  split of a bundled recipe (default test)
    ``grf:H=32,W=32,alpha=2,seed=0,n=256``  ad-hoc GRF set
    ``idx:<images>,<labels>``  IDX file pair
    """
    kind, _, rest = spec.partition(":")
    if kind == "recipe":
        name, _, part = rest.partition(":")
        parts = dict(zip(("train", "val", "test"), get_recipe(name).datasets()))
        part = part or "test"
        if part not in parts:
            raise ValueError(f"unknown split {part!r}")
        return parts[part]
    if kind == "grf":
        kw = {}
        for item in filter(None, rest.split(",")):
            k, _, v = item.partition("=")
            if k not in _GRF_KEYS:
                raise ValueError(f"unknown grf key {k!r}")
            kw[k] = _GRF_KEYS[k](v)
        return gen_grf(GrfConfig(**kw))
    if kind == "idx":
        paths = rest.split(",")
        if len(paths) != 2:
            raise ValueError("idx data spec needs <images>,<labels>")
        return load_idx(*paths)
    raise ValueError(f"unrecognised data spec {spec!r}")
