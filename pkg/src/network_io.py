#src/network_io.py
"""Network description files, weight directories, datasets and toy data."""
import configparser
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from src.bnn import LayerSpec, NetworkSpec, reference_forward
from src.custom_exception import ConfigurationError, InvalidInputError, SimulationError
from src.logger import get_logger
from src.tensor_io import DTYPE_BITS, DTYPE_INT32, read_tensor, write_tensor

logger = get_logger(__name__)

PathLike = Union[str, Path]
LAYER_PREFIX = "layer "
LABELS_FILE = "labels.csv"

Dataset = List[Tuple[np.ndarray, Optional[int]]]


def _int_list(text: str, what: str) -> Tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.replace(" ", "").split(",") if v)
    except ValueError as e:
        raise ConfigurationError(f"{what}: expected comma-separated integers, got {text!r}", e)


def parse_network(text: str, source: str = "<network>") -> NetworkSpec:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigurationError(f"{source}: malformed network file", e)
    if not parser.has_section("network"):
        raise ConfigurationError(f"{source}: missing [network] section")
    head = parser["network"]
    try:
        shape = _int_list(head["input_shape"], "input_shape")
        classes = head.getint("classes")
        name = head.get("name", Path(source).stem)
    except (KeyError, ValueError) as e:
        raise ConfigurationError(f"{source}: [network] needs input_shape and classes", e)
    if len(shape) != 3:
        raise ConfigurationError(f"{source}: input_shape must be C,H,W")

    layers = []
    for section in parser.sections():
        if section == "network":
            continue
        if not section.startswith(LAYER_PREFIX):
            raise ConfigurationError(f"{source}: unexpected section [{section}]")
        body = parser[section]
        known = {"kind", "k", "in_channels", "out_channels", "stride", "padding", "thresholds", "binarize_output"}
        unknown = set(body) - known
        if unknown:
            raise ConfigurationError(f"{source}: [{section}] has unknown keys {sorted(unknown)}")
        try:
            thresholds = _int_list(body["thresholds"], "thresholds") if "thresholds" in body else None
            layers.append(LayerSpec(
                name=section[len(LAYER_PREFIX):].strip(),
                kind=body.get("kind", ""),
                k=body.getint("k", 1),
                in_channels=body.getint("in_channels", 1),
                out_channels=body.getint("out_channels", 1),
                stride=body.getint("stride", 1),
                padding=body.getint("padding", 0),
                thresholds=thresholds,
                binarize_output=body.getboolean("binarize_output", True),
            ))
        except ValueError as e:
            raise ConfigurationError(f"{source}: bad value in [{section}]", e)
    return NetworkSpec(name, tuple(layers), shape, classes)


def load_network(path: PathLike) -> NetworkSpec:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise InvalidInputError(f"cannot read network file {path}", e)
    network = parse_network(text, str(path))
    logger.info("loaded network %s: %d layers", network.name, len(network.layers))
    return network


def dump_network(network: NetworkSpec) -> str:
    lines = ["[network]", f"name = {network.name}",
             f"input_shape = {','.join(map(str, network.input_shape))}", f"classes = {network.classes}", ""]
    for layer in network.layers:
        lines += [f"[{LAYER_PREFIX}{layer.name}]", f"kind = {layer.kind}"]
        if layer.kind != "pool":
            lines += [f"k = {layer.k}", f"in_channels = {layer.in_channels}",
                      f"out_channels = {layer.out_channels}", f"stride = {layer.stride}",
                      f"padding = {layer.padding}"]
        if layer.thresholds is not None:
            lines.append(f"thresholds = {','.join(map(str, layer.thresholds))}")
        if not layer.binarize_output:
            lines.append("binarize_output = false")
        lines.append("")
    return "\n".join(lines)


def weight_shape(layer: LayerSpec) -> Tuple[int, ...]:
    if layer.kind in ("conv", "host_conv"):
        return layer.out_channels, layer.in_channels, layer.k, layer.k
    return layer.out_channels, layer.in_channels


def load_weights(directory: PathLike, network: NetworkSpec) -> Dict[str, np.ndarray]:
    """Read `<layer>.xrt` for every layer with weights; bits for binarized layers, int32 otherwise."""
    directory = Path(directory)
    weights = {}
    for layer in network.layers:
        if layer.kind == "pool":
            continue
        path = directory / f"{layer.name}.xrt"
        if not path.exists():
            raise InvalidInputError(f"missing weights for layer {layer.name!r}: {path}")
        array, dtype = read_tensor(path)
        expected_dtype = DTYPE_BITS if layer.binarized else DTYPE_INT32
        if dtype != expected_dtype:
            raise InvalidInputError(f"{path}: dtype {dtype}, layer {layer.kind} needs {expected_dtype}")
        shape = weight_shape(layer)
        if array.size != int(np.prod(shape)):
            raise InvalidInputError(f"{path}: shape {array.shape} does not fit {shape}")
        weights[layer.name] = array.reshape(shape)
    return weights


def save_weights(directory: PathLike, network: NetworkSpec, weights: Dict[str, np.ndarray]):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for layer in network.layers:
        if layer.name in weights:
            write_tensor(directory / f"{layer.name}.xrt", weights[layer.name],
                         DTYPE_BITS if layer.binarized else DTYPE_INT32)


def _image(path: Path) -> np.ndarray:
    array, dtype = read_tensor(path)
    if dtype == DTYPE_BITS:
        return array.astype(np.int32) * 2 - 1
    return array


def load_dataset(directory: PathLike) -> Dataset:
    """
    Images of a dataset directory in canonical order.

    With labels.csv (columns file,label) the listed files are used in file
    order; an empty label cell means unlabeled. Without it every *.xrt file is
    loaded unlabeled, sorted by name.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise InvalidInputError(f"dataset directory {directory} does not exist")
    labels_path = directory / LABELS_FILE
    if labels_path.exists():
        try:
            table = pd.read_csv(labels_path, dtype={"file": str}, keep_default_na=True)
        except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise InvalidInputError(f"{labels_path}: malformed labels file", e)
        if "file" not in table.columns or "label" not in table.columns:
            raise InvalidInputError(f"{labels_path}: needs 'file' and 'label' columns")
        entries = [(row.file, None if pd.isna(row.label) else int(row.label)) for row in table.itertuples()]
    else:
        entries = [(p.name, None) for p in sorted(directory.glob("*.xrt"))]
    if not entries:
        raise InvalidInputError(f"dataset {directory} holds no images")
    dataset = [(_image(directory / name), label) for name, label in entries]
    logger.info("loaded %d image(s) from %s", len(dataset), directory)
    return dataset


def save_dataset(directory: PathLike, images: List[np.ndarray], labels: Optional[List[int]] = None):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = [f"img_{i:05d}.xrt" for i in range(len(images))]
    for name, image in zip(names, images):
        write_tensor(directory / name, image, DTYPE_INT32)
    table = pd.DataFrame({"file": names, "label": labels if labels is not None else [None] * len(names)})
    try:
        table.to_csv(directory / LABELS_FILE, index=False)
    except OSError as e:
        raise SimulationError(f"cannot write {directory / LABELS_FILE}", e)


TOY_NETWORK = NetworkSpec(
    name="toy",
    layers=(
        LayerSpec("conv1", "host_conv", k=3, in_channels=3, out_channels=16, padding=1),
        LayerSpec("conv2", "conv", k=3, in_channels=16, out_channels=32, padding=1),
        LayerSpec("pool1", "pool"),
        LayerSpec("fc1", "fc", in_channels=512, out_channels=64),
        LayerSpec("fc2", "host_fc", in_channels=64, out_channels=10, binarize_output=False),
    ),
    input_shape=(3, 8, 8),
    classes=10,
)


def random_weights(network: NetworkSpec, rng: np.random.Generator) -> Dict[str, np.ndarray]:
    weights = {}
    for layer in network.layers:
        if layer.kind == "pool":
            continue
        shape = weight_shape(layer)
        if layer.binarized:
            weights[layer.name] = rng.integers(0, 2, size=shape, dtype=np.uint8)
        else:
            weights[layer.name] = rng.integers(-3, 4, size=shape).astype(np.int32)
    return weights


def random_images(network: NetworkSpec, count: int, rng: np.random.Generator) -> List[np.ndarray]:
    return [rng.integers(-8, 9, size=network.input_shape).astype(np.int32) for _ in range(count)]


def generate_toy_data(out_dir: PathLike, images: int = 16, seed: int = 0,
                      network: NetworkSpec = TOY_NETWORK) -> Dict[str, Path]:
    """
    Write network.net, weights/ and data/ under `out_dir`. Labels are the
    integer-reference predictions, so exact engines score 100%.
    """
    if images < 1:
        raise InvalidInputError(f"images must be >= 1, got {images}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    weights = random_weights(network, rng)
    pictures = random_images(network, images, rng)
    labels = [reference_forward(network, weights, image).predicted_class for image in pictures]

    paths = {"network": out_dir / "network.net", "weights": out_dir / "weights", "data": out_dir / "data"}
    paths["network"].write_text(dump_network(network))
    save_weights(paths["weights"], network, weights)
    save_dataset(paths["data"], pictures, labels)
    logger.info("wrote toy network, weights and %d image(s) to %s", images, out_dir)
    return paths
