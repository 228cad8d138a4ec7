#src/config.py
"""
Run configuration files: configparser text with [run], [geometry], [adc]
and [costs] sections whose keys are the RunConfig / GeometryConfig /
AdcConfig / CostConstants field names. Missing keys take the model defaults.
"""
import configparser
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from pydantic import ValidationError

from models.models import AdcConfig, CostConstants, GeometryConfig, RunConfig
from report_templates.templates import config_echo
from src.custom_exception import ConfigurationError, InvalidInputError
from src.logger import get_logger

logger = get_logger(__name__)

PathLike = Union[str, Path]
NESTED = {"geometry": GeometryConfig, "adc": AdcConfig, "costs": CostConstants}
RUN_KEYS = tuple(k for k in RunConfig.model_fields if k not in NESTED)


def _raw_from_text(text: str, source: str) -> Dict[str, Any]:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigurationError(f"{source}: malformed config file", e)
    raw: Dict[str, Any] = {name: {} for name in NESTED}
    for section in parser.sections():
        values = dict(parser[section])
        if section == "run":
            raw.update(values)
        elif section in NESTED:
            raw[section].update(values)
        else:
            raise ConfigurationError(f"{source}: unknown section [{section}]")
    return raw


def build_run_config(raw: Mapping[str, Any]) -> RunConfig:
    """
    Validate a nested dict (strings allowed) into a RunConfig.

    A proposal_b run that does not set `sections` gets a single section.
    """
    raw = {k: (dict(v) if k in NESTED else v) for k, v in raw.items() if v is not None}
    for name in NESTED:
        raw.setdefault(name, {})
    if raw.get("engine") == "proposal_b" and "sections" not in raw["geometry"]:
        raw["geometry"]["sections"] = 1
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigurationError(f"invalid configuration: {_first_error(e)}", e)


def _first_error(error: ValidationError) -> str:
    first = error.errors()[0]
    where = ".".join(str(p) for p in first.get("loc", ()))
    return f"{where}: {first.get('msg')}" if where else first.get("msg", str(error))


def load_run_config(path: Optional[PathLike] = None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """
    Read a config file (optional) and apply overrides.

    Args:
        path: config file; None uses the defaults only
        overrides: {"engine": ..., "geometry": {"sections": 1}, ...}; None values are ignored
    """
    raw: Dict[str, Any] = {name: {} for name in NESTED}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise InvalidInputError(f"cannot read config file {path}", e)
        raw = _raw_from_text(text, str(path))
    for key, value in (overrides or {}).items():
        if key in NESTED:
            raw[key].update({k: v for k, v in value.items() if v is not None})
        elif value is not None:
            raw[key] = value
    config = build_run_config(raw)
    logger.debug("effective config: %s", config.model_dump())
    return config


def parse_run_config(text: str, source: str = "<config>") -> RunConfig:
    return build_run_config(_raw_from_text(text, source))


def _text(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def render_run_config(config: RunConfig) -> str:
    """Effective-config echo: every key, defaults included."""
    sections = {"run": {k: _text(getattr(config, k)) for k in RUN_KEYS if getattr(config, k) is not None}}
    for name in NESTED:
        model = getattr(config, name)
        sections[name] = {k: _text(v) for k, v in model.model_dump().items()}
    return config_echo(sections)
