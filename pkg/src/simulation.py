#src/simulation.py
"""Run, profile and sweep pipelines producing schema-1 report dicts."""
import io
import json
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import pandas as pd
from tqdm import tqdm

from models.models import CostConstants, RunConfig
from report_templates.templates import explain_block, layer_table, speedup_block, summary_block
from src.bnn import NetworkSpec, binary_mac_fraction, evaluate, profile_network
from src.config import build_run_config
from src.costmodel import CostLedger, CostMode, EventKind, LayerAggregate, layer_report, speedup
from src.custom_exception import ConfigurationError, InvalidInputError, SimulationError
from src.logger import get_logger
from src.network_io import load_dataset, load_network, load_weights

logger = get_logger(__name__)

SCHEMA_VERSION = 1
LAYER_COLUMNS = ("index", "name", "kind", "binarized", "macs", "engine_ops", "pseudo_reads",
                 "adc_conversions", "array_energy_pj", "energy_pj", "latency_ns")
SWEEP_COLUMNS = ("parameter", "value", "accuracy", "error_mean", "error_std", "energy_pj_per_inference",
                 "latency_ns_per_inference", "pseudo_reads", "adc_conversions")
DIGITS = 6
# baseline, host and DRAM constants without a circuit-level source
PLACEHOLDER_COSTS = ("baseline_read_energy_pj", "baseline_read_latency_ns", "sram_write_energy_pj",
                     "sram_write_latency_ns", "host_instr_energy_pj", "host_instr_latency_ns",
                     "dram_access_energy_pj", "dram_access_latency_ns")


def extrapolations(config: RunConfig) -> List[str]:
    """Modes the run uses beyond the measured circuit data."""
    return [] if config.geometry.dual_rwl else ["single_rwl"]


def placeholder_costs(config: RunConfig) -> List[str]:
    defaults = CostConstants()
    return [name for name in PLACEHOLDER_COSTS if getattr(config.costs, name) == getattr(defaults, name)]


def _round(value: Optional[float]) -> Optional[float]:
    return None if value is None else round(float(value), DIGITS)


def engine_ops(ledger: CostLedger, tag: str) -> int:
    """64-bit XNOR+popcount operations of a layer, whatever engine ran them."""
    tally = ledger.tally()
    a = sum(n for (t, k, _), n in tally.items() if t == tag and k == EventKind.ADC_CONVERSION)
    b = tally.get((tag, EventKind.DUAL_READ, CostMode.PROPOSAL_B), 0)
    baseline = tally.get((tag, EventKind.SRAM_READ, CostMode.BASELINE), 0) // 2
    return a + b + baseline


def layer_rows(ledger: CostLedger, explain: bool = False) -> List[Dict]:
    rows = []
    for tag, agg in layer_report(ledger).items():
        info = ledger.layers.get(tag)
        row = {
            "index": info.index if info else None,
            "name": tag,
            "kind": info.kind if info else None,
            "binarized": info.binarized if info else None,
            "macs": agg.macs,
            "engine_ops": engine_ops(ledger, tag),
            "pseudo_reads": agg.event_counts.get(EventKind.PSEUDO_READ_BATCH.value, 0),
            "adc_conversions": agg.event_counts.get(EventKind.ADC_CONVERSION.value, 0),
            "array_energy_pj": _round(agg.array_energy_pj),
            "energy_pj": _round(agg.energy_pj),
            "latency_ns": _round(agg.latency_ns),
        }
        if explain:
            row["events"] = _events(agg)
        rows.append(row)
    return rows


def _events(agg: LayerAggregate) -> Dict[str, Dict]:
    return {kind: {"count": agg.event_counts[kind],
                   "energy_pj": _round(agg.energy_by_kind[kind]),
                   "latency_ns": _round(agg.latency_by_kind[kind])}
            for kind in sorted(agg.event_counts)}


def _speedups(config: RunConfig, network: NetworkSpec) -> Dict[str, Dict]:
    accelerated = layer_report(profile_network(network, config.engine, config.geometry, config.costs))
    baseline = layer_report(profile_network(network, "baseline", config.geometry, config.costs))
    return {tag: {"energy_ratio": _round(s.energy_ratio), "latency_ratio": _round(s.latency_ratio)}
            for tag, s in speedup(accelerated, baseline).items()}


class Simulation:
    def __init__(self, config: RunConfig):
        self.config = config
        self.network: Optional[NetworkSpec] = None
        self.weights = None
        self.dataset = None

    def _warn_about_assumptions(self):
        """Logged once per run, profile or sweep."""
        if extrapolations(self.config):
            logger.warning("single-RWL ADC mode is an extrapolation (sigma doubled to %.4f counts)",
                           2 * self.config.adc.sigma)
        placeholders = placeholder_costs(self.config)
        if placeholders:
            logger.warning("placeholder cost constants in use: %s", ", ".join(placeholders))

    def load_inputs(self, need_data: bool = True):
        """
        Load network, weights and dataset named in the config
        """
        c = self.config
        if c.network is None:
            raise ConfigurationError("no network given (--network or [run] network)")
        self.network = load_network(c.network)
        if not need_data:
            return
        if c.weights is None or c.data is None:
            raise ConfigurationError("run needs --weights and --data")
        self.weights = load_weights(c.weights, self.network)
        self.dataset = load_dataset(c.data)

    def run(self) -> Dict:
        """
        Evaluate the dataset under the configured engine.

        Returns:
            dict: schema-1 report
        """
        if self.network is None:
            self.load_inputs()
        self._warn_about_assumptions()
        c = self.config
        result = evaluate(self.network, self.weights, self.dataset, c.engine, c.geometry, c.adc, c.costs,
                          trials=c.trials, jobs=c.jobs)
        total = result.ledger.aggregate()
        summary = {
            "images": len(self.dataset),
            "trials": c.trials,
            "inferences": result.inferences,
            "accuracy": _round(result.accuracy),
            "trial_accuracies": [_round(a) for a in result.trial_accuracies],
            "popcount_error": {"count": result.error.count, "mean": _round(result.error.mean),
                               "std": _round(result.error.std)},
            "energy_pj": _round(total.energy_pj),
            "latency_ns": _round(total.latency_ns),
            "energy_pj_per_inference": _round(total.energy_pj / result.inferences),
            "latency_ns_per_inference": _round(total.latency_ns / result.inferences),
            "binary_mac_fraction": _round(binary_mac_fraction(result.ledger)),
            "extrapolations": extrapolations(c),
        }
        report = self._report("run", result.ledger, summary)
        report["predictions"] = result.predictions
        return report

    def profile(self) -> Dict:
        """Analytic single-inference report; needs only the network."""
        if self.network is None:
            self.load_inputs(need_data=False)
        self._warn_about_assumptions()
        c = self.config
        ledger = profile_network(self.network, c.engine, c.geometry, c.costs)
        total = ledger.aggregate()
        summary = {
            "images": 0,
            "trials": 0,
            "inferences": 1,
            "accuracy": None,
            "trial_accuracies": [],
            "popcount_error": {"count": 0, "mean": None, "std": None},
            "energy_pj": _round(total.energy_pj),
            "latency_ns": _round(total.latency_ns),
            "energy_pj_per_inference": _round(total.energy_pj),
            "latency_ns_per_inference": _round(total.latency_ns),
            "binary_mac_fraction": _round(binary_mac_fraction(ledger)),
            "extrapolations": extrapolations(c),
        }
        return self._report("profile", ledger, summary)

    def _report(self, mode: str, ledger: CostLedger, summary: Dict) -> Dict:
        c = self.config
        report = {
            "schema": SCHEMA_VERSION,
            "mode": mode,
            "engine": c.engine,
            "network": self.network.name,
            "config": c.model_dump(mode="json"),
            "layers": layer_rows(ledger, c.explain),
            "summary": summary,
        }
        if c.baseline:
            report["speedup"] = _speedups(c, self.network)
        return report

    def sweep(self, parameter: str, values: Sequence[float]) -> List[Dict]:
        """
        Re-run the evaluation once per value of `parameter` (sigma | sections).
        Every run uses the configured seed, so rows are reproducible.
        """
        if not values:
            raise InvalidInputError("sweep needs at least one value")
        if parameter not in ("sigma", "sections"):
            raise InvalidInputError(f"cannot sweep {parameter!r}; expected sigma or sections")
        if parameter == "sections" and self.config.engine == "proposal_b":
            raise ConfigurationError("a sections sweep is not applicable to proposal_b")
        if self.network is None:
            self.load_inputs()
        self._warn_about_assumptions()
        rows = []
        for value in tqdm(values, desc=f"sweep {parameter}", disable=None):
            config = self._with(parameter, value)
            result = evaluate(self.network, self.weights, self.dataset, config.engine, config.geometry,
                              config.adc, config.costs, trials=config.trials, jobs=config.jobs)
            total = result.ledger.aggregate()
            rows.append({
                "parameter": parameter,
                "value": value,
                "accuracy": _round(result.accuracy),
                "error_mean": _round(result.error.mean),
                "error_std": _round(result.error.std),
                "energy_pj_per_inference": _round(total.energy_pj / result.inferences),
                "latency_ns_per_inference": _round(total.latency_ns / result.inferences),
                "pseudo_reads": total.event_counts.get(EventKind.PSEUDO_READ_BATCH.value, 0),
                "adc_conversions": total.event_counts.get(EventKind.ADC_CONVERSION.value, 0),
            })
            logger.info("sweep %s=%s: accuracy=%s", parameter, value, rows[-1]["accuracy"])
        return rows

    def _with(self, parameter: str, value) -> RunConfig:
        raw = self.config.model_dump()
        if parameter == "sigma":
            raw["adc"]["sigma"] = float(value)
        else:
            if float(value) != int(value) or int(value) < 1:
                raise InvalidInputError(f"sections must be a positive integer, got {value}")
            raw["geometry"]["sections"] = int(value)
        return build_run_config(raw)


def render_report(report: Dict, output_format: str) -> str:
    """Deterministic text for a run/profile report."""
    if output_format == "json":
        return json.dumps(report, indent=2) + "\n"
    rows = report["layers"]
    summary = report["summary"]
    if output_format == "csv":
        total = {"index": None, "name": "total", "kind": None, "binarized": None,
                 "macs": sum(r["macs"] for r in rows),
                 "engine_ops": sum(r["engine_ops"] for r in rows),
                 "pseudo_reads": sum(r["pseudo_reads"] for r in rows),
                 "adc_conversions": sum(r["adc_conversions"] for r in rows),
                 "array_energy_pj": _round(sum(r["array_energy_pj"] for r in rows)),
                 "energy_pj": summary["energy_pj"], "latency_ns": summary["latency_ns"],
                 "accuracy": summary["accuracy"]}
        frame = pd.DataFrame([{k: r.get(k) for k in LAYER_COLUMNS} for r in rows] + [total],
                             columns=LAYER_COLUMNS + ("accuracy",), dtype=object)
        if any("events" in r for r in rows):
            frame = pd.concat([frame, _event_columns(rows)], axis=1)
        return _csv(frame)
    if output_format != "table":
        raise InvalidInputError(f"unknown output format {output_format!r}")
    parts = [f"{report['mode']} | engine {report['engine']} | network {report['network']}",
             layer_table(rows, LAYER_COLUMNS), summary_block(summary)]
    if "speedup" in report:
        parts.append(speedup_block(report["speedup"]))
    for r in rows:
        if "events" in r:
            parts.append(explain_block(r["name"], r["events"]))
    return "\n\n".join(parts) + "\n"


def _event_columns(rows: List[Dict]) -> pd.DataFrame:
    records = []
    keys = [f"{kind.value}_{field}" for kind in EventKind for field in ("count", "energy_pj", "latency_ns")]
    for r in rows:
        flat = {}
        for kind in EventKind:
            values = r.get("events", {}).get(kind.value, {})
            for field in ("count", "energy_pj", "latency_ns"):
                flat[f"{kind.value}_{field}"] = values.get(field, 0)
        records.append(flat)
    records.append(dict.fromkeys(keys))
    return pd.DataFrame(records, columns=keys, dtype=object)


def render_sweep(rows: List[Dict], output_format: str) -> str:
    if output_format == "json":
        return json.dumps({"schema": SCHEMA_VERSION, "mode": "sweep", "rows": rows}, indent=2) + "\n"
    if output_format == "table":
        return layer_table(rows, SWEEP_COLUMNS) + "\n"
    return _csv(pd.DataFrame(rows, columns=SWEEP_COLUMNS, dtype=object))


def _csv(frame: pd.DataFrame) -> str:
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, lineterminator="\n")
    return buffer.getvalue()


def write_output(text: str, out: Optional[str]):
    if out is None:
        print(text, end="")
        return
    try:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as e:
        raise SimulationError(f"cannot write report to {out}", e)
    logger.info("report written to %s", out)
